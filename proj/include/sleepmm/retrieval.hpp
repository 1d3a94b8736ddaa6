#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "sleepmm/embedding_set.hpp"

namespace sleepmm {

struct RetrievalResult {
    Modality query_modality;
    Modality target_modality;
    std::vector<int> ranks;  // 1-based rank of each query's true mate
    double recall_at_k = 0.0;
    double median_rank = 0.0;
    int n_candidates = 0;
};

// Rank of row k's true mate (C row k) among all candidate rows, by cosine
// similarity. Ties count as ahead, so reported ranks are conservative.
std::vector<int> rank_true_mates(const Eigen::MatrixXf& Q, const Eigen::MatrixXf& C);

double recall_at_k(const std::vector<int>& ranks, int k = 10);
double median_rank(const std::vector<int>& ranks);

// All 6 ordered modality pairs on one shared candidate pool of n_candidates
// clips, drawn uniformly per seed. Diagonal pairs are excluded.
std::vector<RetrievalResult> cross_modal_matrix(const EmbeddingSet& embset, int n_candidates,
                                                int k, uint64_t seed);

void write_retrieval_csv(const std::string& path, const std::vector<RetrievalResult>& results,
                         int k);

}  // namespace sleepmm
