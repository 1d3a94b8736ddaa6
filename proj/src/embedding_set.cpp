#include "sleepmm/embedding_set.hpp"

#include <stdexcept>

#include "sleepmm/checkpoint.hpp"

namespace sleepmm {

const Eigen::MatrixXf& EmbeddingSet::matrix(const std::string& source) const {
    if (source == "fused") return fused;
    const Modality m = modality_from_name(source);
    for (size_t i = 0; i < modalities.size(); ++i)
        if (modalities[i] == m) return emb[i];
    throw std::out_of_range("EmbeddingSet: no embeddings for source " + source);
}

namespace {
std::vector<float> flatten(const Eigen::MatrixXf& m) {
    std::vector<float> v(static_cast<size_t>(m.rows()) * m.cols());
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) v[i * m.cols() + j] = m(i, j);
    return v;
}

Eigen::MatrixXf unflatten(const std::vector<float>& v, int rows, int cols) {
    Eigen::MatrixXf m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = v[static_cast<size_t>(i) * cols + j];
    return m;
}
}  // namespace

void EmbeddingSet::save(const std::string& path) const {
    ArrayContainer c;
    c.meta["kind"] = "embeddings";
    std::vector<std::string> mods;
    for (auto m : modalities) mods.push_back(modality_name(m));
    c.meta["modalities"] = mods;
    c.meta["n"] = n();
    c.meta["participant_ids"] = participant_ids;
    c.meta["clip_indices"] = clip_indices;
    c.meta["stage"] = stage_label;
    c.meta["sdb"] = sdb_label;
    c.meta["age_group"] = age_group;
    c.meta["sex"] = sex;
    c.meta["split"] = split;
    c.meta["dims"] = nlohmann::json::object();
    for (size_t i = 0; i < modalities.size(); ++i) {
        c.meta["dims"][modality_name(modalities[i])] = emb[i].cols();
        c.arrays.emplace_back(modality_name(modalities[i]), flatten(emb[i]));
    }
    c.meta["dims"]["fused"] = fused.cols();
    c.arrays.emplace_back("fused", flatten(fused));
    save_container(path, c);
}

EmbeddingSet EmbeddingSet::load(const std::string& path) {
    const ArrayContainer c = load_container(path);
    if (c.meta.value("kind", "") != "embeddings")
        throw std::runtime_error("not an embedding file: " + path);
    EmbeddingSet e;
    const int n = c.meta.at("n");
    for (const auto& ms : c.meta.at("modalities").get<std::vector<std::string>>()) {
        e.modalities.push_back(modality_from_name(ms));
        const int d = c.meta.at("dims").at(ms);
        e.emb.push_back(unflatten(c.at(ms), n, d));
    }
    e.fused = unflatten(c.at("fused"), n, c.meta.at("dims").at("fused"));
    e.participant_ids = c.meta.at("participant_ids").get<std::vector<std::string>>();
    e.clip_indices = c.meta.at("clip_indices").get<std::vector<int>>();
    e.stage_label = c.meta.at("stage").get<std::vector<int>>();
    e.sdb_label = c.meta.at("sdb").get<std::vector<int>>();
    e.age_group = c.meta.at("age_group").get<std::vector<int>>();
    e.sex = c.meta.at("sex").get<std::vector<int>>();
    e.split = c.meta.at("split").get<std::vector<int>>();
    return e;
}

EmbeddingSet EmbeddingSet::merge(const std::vector<EmbeddingSet>& parts) {
    if (parts.empty()) return {};
    EmbeddingSet out;
    out.modalities = parts[0].modalities;
    int total = 0;
    for (const auto& p : parts) {
        if (p.modalities != out.modalities)
            throw std::invalid_argument("EmbeddingSet::merge: modality mismatch");
        total += p.n();
    }
    out.emb.resize(out.modalities.size());
    for (size_t m = 0; m < out.modalities.size(); ++m) {
        out.emb[m].resize(total, parts[0].emb[m].cols());
        int r = 0;
        for (const auto& p : parts) {
            out.emb[m].middleRows(r, p.n()) = p.emb[m];
            r += p.n();
        }
    }
    out.fused.resize(total, parts[0].fused.cols());
    int r = 0;
    for (const auto& p : parts) {
        out.fused.middleRows(r, p.n()) = p.fused;
        r += p.n();
        out.participant_ids.insert(out.participant_ids.end(), p.participant_ids.begin(),
                                   p.participant_ids.end());
        out.clip_indices.insert(out.clip_indices.end(), p.clip_indices.begin(),
                                p.clip_indices.end());
        out.stage_label.insert(out.stage_label.end(), p.stage_label.begin(), p.stage_label.end());
        out.sdb_label.insert(out.sdb_label.end(), p.sdb_label.begin(), p.sdb_label.end());
        out.age_group.insert(out.age_group.end(), p.age_group.begin(), p.age_group.end());
        out.sex.insert(out.sex.end(), p.sex.begin(), p.sex.end());
        out.split.insert(out.split.end(), p.split.begin(), p.split.end());
    }
    return out;
}

}  // namespace sleepmm
