#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "sleepmm/types.hpp"

namespace sleepmm {

// Aligned per-modality embeddings with clip identity, labels and split tags.
struct EmbeddingSet {
    std::vector<Modality> modalities;
    std::vector<Eigen::MatrixXf> emb;  // per modality, (N x D)
    Eigen::MatrixXf fused;             // concatenation (or mean) of the per-modality rows
    std::vector<std::string> participant_ids;
    std::vector<int> clip_indices, stage_label, sdb_label, age_group, sex, split;

    int n() const { return static_cast<int>(participant_ids.size()); }
    // source: "fused" or a modality name.
    const Eigen::MatrixXf& matrix(const std::string& source) const;

    void save(const std::string& path) const;
    static EmbeddingSet load(const std::string& path);
    // Row-wise concatenation; modalities and dims must match.
    static EmbeddingSet merge(const std::vector<EmbeddingSet>& parts);
};

}  // namespace sleepmm
