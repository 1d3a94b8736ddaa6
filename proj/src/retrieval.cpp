#include "sleepmm/retrieval.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

namespace sleepmm {

namespace {

Eigen::MatrixXf unit_rows(const Eigen::MatrixXf& X, const char* who) {
    Eigen::MatrixXf U = X;
    for (Eigen::Index i = 0; i < U.rows(); ++i) {
        const float n = U.row(i).norm();
        if (n == 0.0f)
            throw std::invalid_argument(std::string(who) + ": zero-norm embedding at row " +
                                        std::to_string(i));
        U.row(i) /= n;
    }
    return U;
}

}  // namespace

std::vector<int> rank_true_mates(const Eigen::MatrixXf& Q, const Eigen::MatrixXf& C) {
    if (Q.rows() != C.rows() || Q.cols() != C.cols())
        throw std::invalid_argument("rank_true_mates: query/candidate shape mismatch");
    if (Q.rows() < 1) throw std::invalid_argument("rank_true_mates: empty query set");
    const Eigen::MatrixXf Qu = unit_rows(Q, "rank_true_mates(query)");
    const Eigen::MatrixXf Cu = unit_rows(C, "rank_true_mates(candidates)");

    const int n = static_cast<int>(Q.rows());
    std::vector<int> ranks(n);
    // Block over queries to bound the similarity matrix footprint.
    const int block = 256;
    for (int b = 0; b < n; b += block) {
        const int m = std::min(block, n - b);
        const Eigen::MatrixXf S = Qu.middleRows(b, m) * Cu.transpose();  // (m, n)
        for (int i = 0; i < m; ++i) {
            const float mate = S(i, b + i);
            int ahead = 0;
            for (int j = 0; j < n; ++j) ahead += j != b + i && S(i, j) >= mate;
            ranks[b + i] = 1 + ahead;
        }
    }
    return ranks;
}

double recall_at_k(const std::vector<int>& ranks, int k) {
    if (k < 1) throw std::invalid_argument("recall_at_k: k must be >= 1");
    if (ranks.empty()) throw std::invalid_argument("recall_at_k: empty ranks");
    int hits = 0;
    for (int r : ranks) hits += r <= k;
    return static_cast<double>(hits) / ranks.size();
}

double median_rank(const std::vector<int>& ranks) {
    if (ranks.empty()) throw std::invalid_argument("median_rank: empty ranks");
    std::vector<int> sorted = ranks;
    std::sort(sorted.begin(), sorted.end());
    const size_t n = sorted.size();
    if (n % 2 == 1) return sorted[n / 2];
    return (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0;
}

std::vector<RetrievalResult> cross_modal_matrix(const EmbeddingSet& embset, int n_candidates,
                                                int k, uint64_t seed) {
    if (n_candidates < 2) throw std::invalid_argument("cross_modal_matrix: pool must hold >= 2");
    if (embset.n() < n_candidates)
        throw std::invalid_argument("cross_modal_matrix: pool of " +
                                    std::to_string(n_candidates) + " exceeds " +
                                    std::to_string(embset.n()) + " clips");
    if (embset.modalities.size() < 2)
        throw std::invalid_argument("cross_modal_matrix: needs >= 2 modalities");

    // One pool shared by every ordered pair so the 6 cells are comparable.
    std::vector<int> pool(embset.n());
    std::iota(pool.begin(), pool.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(n_candidates);

    std::vector<RetrievalResult> out;
    for (size_t a = 0; a < embset.modalities.size(); ++a) {
        for (size_t b = 0; b < embset.modalities.size(); ++b) {
            if (a == b) continue;
            Eigen::MatrixXf Q(n_candidates, embset.emb[a].cols());
            Eigen::MatrixXf C(n_candidates, embset.emb[b].cols());
            for (int i = 0; i < n_candidates; ++i) {
                Q.row(i) = embset.emb[a].row(pool[i]);
                C.row(i) = embset.emb[b].row(pool[i]);
            }
            RetrievalResult r;
            r.query_modality = embset.modalities[a];
            r.target_modality = embset.modalities[b];
            r.ranks = rank_true_mates(Q, C);
            r.recall_at_k = recall_at_k(r.ranks, k);
            r.median_rank = median_rank(r.ranks);
            r.n_candidates = n_candidates;
            out.push_back(std::move(r));
        }
    }
    return out;
}

void write_retrieval_csv(const std::string& path, const std::vector<RetrievalResult>& results,
                         int k) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << "query,target,metric,value,n_candidates\n";
    for (const auto& r : results) {
        os << modality_name(r.query_modality) << ',' << modality_name(r.target_modality)
           << ",recall_at_" << k << ',' << r.recall_at_k << ',' << r.n_candidates << '\n';
        os << modality_name(r.query_modality) << ',' << modality_name(r.target_modality)
           << ",median_rank," << r.median_rank << ',' << r.n_candidates << '\n';
    }
}

}  // namespace sleepmm
