#include "sleepmm/contrastive.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace sleepmm {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

VectorXd row_norms_checked(const MatrixXd& X, const char* what) {
    VectorXd norms = X.rowwise().norm();
    for (Eigen::Index k = 0; k < norms.size(); ++k)
        if (!(norms(k) > 1e-30))
            throw std::invalid_argument(std::string(what) + ": zero-norm row " + std::to_string(k));
    return norms;
}

// Gradient through row-wise unit normalization: given dL/dU, X and U=X/|X|,
// dL/dX_k = (dL/dU_k - (dL/dU_k . U_k) U_k) / |X_k|.
MatrixXd normalize_backward(const MatrixXd& GU, const MatrixXd& U, const VectorXd& norms) {
    MatrixXd GX(GU.rows(), GU.cols());
    for (Eigen::Index k = 0; k < GU.rows(); ++k) {
        const double dot = GU.row(k).dot(U.row(k));
        GX.row(k) = (GU.row(k) - dot * U.row(k)) / norms(k);
    }
    return GX;
}

// InfoNCE term on a precomputed cosine-similarity matrix with positives on
// the diagonal. Adds w * sum_k -log softmax(S(k,:)*exp(tau))_k to the loss,
// returns dL/dS and accumulates dL/dtau.
double info_nce(const MatrixXd& S, double tau, double w, bool with_grad, MatrixXd* GS,
                double* gtau) {
    const double t = std::exp(tau);
    const Eigen::Index n = S.rows();
    double loss = 0.0;
    if (with_grad) GS->setZero(n, n);
    for (Eigen::Index k = 0; k < n; ++k) {
        VectorXd z = S.row(k).transpose() * t;
        const double zmax = z.maxCoeff();
        VectorXd e = (z.array() - zmax).exp();
        const double denom = e.sum();
        loss += w * (std::log(denom) - (z(k) - zmax));
        if (with_grad) {
            VectorXd p = e / denom;
            p(k) -= 1.0;
            GS->row(k) = w * t * p.transpose();
            *gtau += w * t * p.dot(S.row(k).transpose());
        }
    }
    return loss;
}

void check_aligned(const std::vector<MatrixXd>& emb) {
    if (emb.empty()) throw std::invalid_argument("contrastive loss: no modalities given");
    for (const auto& m : emb)
        if (m.rows() != emb[0].rows() || m.cols() != emb[0].cols())
            throw std::invalid_argument("contrastive loss: embedding shapes differ across modalities");
    if (emb[0].rows() < 1) throw std::invalid_argument("contrastive loss: empty batch");
}

}  // namespace

MatrixXd cosine_similarity_matrix(const MatrixXd& A, const MatrixXd& B) {
    const VectorXd na = row_norms_checked(A, "cosine_similarity_matrix: A");
    const VectorXd nb = row_norms_checked(B, "cosine_similarity_matrix: B");
    return (na.cwiseInverse().asDiagonal() * A) * (nb.cwiseInverse().asDiagonal() * B).transpose();
}

MatrixXd leave_one_out_reference(const std::vector<MatrixXd>& emb, int i) {
    check_aligned(emb);
    if (emb.size() < 2)
        throw std::invalid_argument("leave_one_out_reference: needs at least 2 modalities");
    if (i < 0 || i >= static_cast<int>(emb.size()))
        throw std::invalid_argument("leave_one_out_reference: modality index out of range");
    MatrixXd acc = MatrixXd::Zero(emb[0].rows(), emb[0].cols());
    for (int j = 0; j < static_cast<int>(emb.size()); ++j) {
        if (j == i) continue;
        const VectorXd n = row_norms_checked(emb[j], "leave_one_out_reference");
        acc += n.cwiseInverse().asDiagonal() * emb[j];
    }
    return acc / static_cast<double>(emb.size() - 1);
}

LossResult pairwise_loss(const std::vector<MatrixXd>& emb, double tau, Aggregation agg,
                         bool with_grad) {
    check_aligned(emb);
    const int M = static_cast<int>(emb.size());
    if (M < 2) throw std::invalid_argument("pairwise_loss: needs at least 2 modalities");
    const Eigen::Index n = emb[0].rows();

    std::vector<MatrixXd> U(M);
    std::vector<VectorXd> norms(M);
    for (int i = 0; i < M; ++i) {
        norms[i] = row_norms_checked(emb[i], "pairwise_loss");
        U[i] = norms[i].cwiseInverse().asDiagonal() * emb[i];
    }

    const int pairs = M * (M - 1);
    const double w = agg == Aggregation::Mean ? 1.0 / (static_cast<double>(pairs) * n) : 1.0;

    LossResult res;
    std::vector<MatrixXd> GU;
    if (with_grad) GU.assign(M, MatrixXd::Zero(n, emb[0].cols()));
    MatrixXd GS;
    for (int i = 0; i < M; ++i)
        for (int j = 0; j < M; ++j) {
            if (i == j) continue;
            const MatrixXd S = U[i] * U[j].transpose();
            res.value += info_nce(S, tau, w, with_grad, &GS, &res.grad_tau);
            if (with_grad) {
                GU[i].noalias() += GS * U[j];
                GU[j].noalias() += GS.transpose() * U[i];
            }
        }
    if (with_grad) {
        res.grad_emb.resize(M);
        for (int i = 0; i < M; ++i) res.grad_emb[i] = normalize_backward(GU[i], U[i], norms[i]);
    }
    return res;
}

LossResult leave_one_out_loss(const std::vector<MatrixXd>& emb, double tau, Aggregation agg,
                              bool with_grad) {
    check_aligned(emb);
    const int M = static_cast<int>(emb.size());
    if (M < 2) throw std::invalid_argument("leave_one_out_loss: needs at least 2 modalities");
    const Eigen::Index n = emb[0].rows();

    std::vector<MatrixXd> U(M);
    std::vector<VectorXd> norms(M);
    MatrixXd sumU = MatrixXd::Zero(n, emb[0].cols());
    for (int i = 0; i < M; ++i) {
        norms[i] = row_norms_checked(emb[i], "leave_one_out_loss");
        U[i] = norms[i].cwiseInverse().asDiagonal() * emb[i];
        sumU += U[i];
    }

    const double w = agg == Aggregation::Mean ? 1.0 / (static_cast<double>(M) * n) : 1.0;

    LossResult res;
    std::vector<MatrixXd> GU;
    if (with_grad) GU.assign(M, MatrixXd::Zero(n, emb[0].cols()));
    MatrixXd GS;
    for (int i = 0; i < M; ++i) {
        const MatrixXd R = (sumU - U[i]) / static_cast<double>(M - 1);
        const VectorXd rn = row_norms_checked(R, "leave_one_out_loss: reference");
        const MatrixXd V = rn.cwiseInverse().asDiagonal() * R;
        const MatrixXd S = U[i] * V.transpose();
        res.value += info_nce(S, tau, w, with_grad, &GS, &res.grad_tau);
        if (with_grad) {
            GU[i].noalias() += GS * V;
            const MatrixXd GV = GS.transpose() * U[i];
            const MatrixXd GR = normalize_backward(GV, V, rn);
            for (int j = 0; j < M; ++j)
                if (j != i) GU[j] += GR / static_cast<double>(M - 1);
        }
    }
    if (with_grad) {
        res.grad_emb.resize(M);
        for (int i = 0; i < M; ++i) res.grad_emb[i] = normalize_backward(GU[i], U[i], norms[i]);
    }
    return res;
}

LossResult single_modality_temporal_loss(const MatrixXd& emb_cur, const MatrixXd& emb_next,
                                         double tau, Aggregation agg, bool with_grad) {
    return pairwise_loss({emb_cur, emb_next}, tau, agg, with_grad);
}

}  // namespace sleepmm
