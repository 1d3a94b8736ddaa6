#pragma once

#include <Eigen/Dense>
#include <vector>

namespace sleepmm {

enum class Aggregation { Mean, Sum };

struct LossResult {
    double value = 0.0;
    std::vector<Eigen::MatrixXd> grad_emb;  // one per input modality, empty if !with_grad
    double grad_tau = 0.0;
};

// Cosine similarity S[k,m] = <A_k, B_m> / (|A_k||B_m|); rejects zero-norm rows.
Eigen::MatrixXd cosine_similarity_matrix(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B);

// Mean of unit-normalized embeddings over all modalities except i.
Eigen::MatrixXd leave_one_out_reference(const std::vector<Eigen::MatrixXd>& emb, int i);

// Contrastive prediction loss over all ordered modality pairs. Logits are
// cosine similarity scaled by exp(tau); positives are the aligned rows.
LossResult pairwise_loss(const std::vector<Eigen::MatrixXd>& emb, double tau,
                         Aggregation agg = Aggregation::Mean, bool with_grad = true);

// Contrasts each modality against the normalized mean embedding of the others.
LossResult leave_one_out_loss(const std::vector<Eigen::MatrixXd>& emb, double tau,
                              Aggregation agg = Aggregation::Mean, bool with_grad = true);

// Pairwise objective where the two views are time-adjacent clips of one
// modality: row k of emb_next follows row k of emb_cur.
LossResult single_modality_temporal_loss(const Eigen::MatrixXd& emb_cur,
                                         const Eigen::MatrixXd& emb_next, double tau,
                                         Aggregation agg = Aggregation::Mean,
                                         bool with_grad = true);

}  // namespace sleepmm
