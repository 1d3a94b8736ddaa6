#include "sleepmm/pretrainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>

namespace sleepmm {

const char* objective_name(Objective o) {
    switch (o) {
        case Objective::Pairwise: return "pairwise";
        case Objective::LeaveOneOut: return "leave_one_out";
        case Objective::SingleModality: return "single_modality";
        case Objective::PairSubset: return "pair_subset";
    }
    throw std::invalid_argument("unknown objective");
}

double lr_at_epoch(const TrainConfig& cfg, int epoch) {
    if (epoch < 0) throw std::invalid_argument("lr_at_epoch: negative epoch");
    return cfg.lr0 / std::pow(cfg.lr_decay_factor, epoch / cfg.lr_step_epochs);
}

Pretrainer::Pretrainer(std::vector<ModalitySpec> specs, std::vector<EncoderConfig> configs,
                       TrainConfig cfg)
    : cfg_(std::move(cfg)), specs_(std::move(specs)) {
    if (specs_.size() != configs.size())
        throw std::invalid_argument("Pretrainer: one EncoderConfig per modality required");
    if (cfg_.objective == Objective::SingleModality && specs_.size() != 1)
        throw std::invalid_argument("Pretrainer: single-modality objective takes one modality");
    if (cfg_.objective != Objective::SingleModality && specs_.size() < 2)
        throw std::invalid_argument("Pretrainer: contrastive objectives need >= 2 modalities");
    cfg_.modalities.clear();
    for (size_t i = 0; i < specs_.size(); ++i) {
        cfg_.modalities.push_back(specs_[i].name);
        encoders_.push_back(
            std::make_unique<Encoder>(specs_[i], configs[i], cfg_.seed + 17 * (i + 1)));
    }
    tau_ = cfg_.tau_init;
}

LossResult Pretrainer::objective_loss(const std::vector<Eigen::MatrixXd>& emb,
                                      bool with_grad) const {
    switch (cfg_.objective) {
        case Objective::Pairwise:
        case Objective::PairSubset:
            return pairwise_loss(emb, tau_, cfg_.aggregation, with_grad);
        case Objective::LeaveOneOut:
            return leave_one_out_loss(emb, tau_, cfg_.aggregation, with_grad);
        case Objective::SingleModality:
            return single_modality_temporal_loss(emb.at(0), emb.at(1), tau_, cfg_.aggregation,
                                                 with_grad);
    }
    throw std::logic_error("unreachable");
}

namespace {
Eigen::MatrixXd to_double(const Eigen::MatrixXf& m) { return m.cast<double>(); }
Eigen::MatrixXf to_float(const Eigen::MatrixXd& m) { return m.cast<float>(); }
}  // namespace

double Pretrainer::run_epoch(const ClipStore& clips, int epoch, bool train, double lr) {
    const bool temporal = cfg_.objective == Objective::SingleModality;

    std::vector<int> order;
    for (int i = 0; i < clips.n_clips(); ++i)
        if (!temporal || clips.next_in_recording(i) >= 0) order.push_back(i);
    if (train) {
        std::mt19937_64 rng(cfg_.seed * 1000003ULL + static_cast<uint64_t>(epoch));
        std::shuffle(order.begin(), order.end(), rng);
    }

    double total_loss = 0;
    long total_n = 0;
    for (size_t start = 0; start < order.size(); start += cfg_.batch_size) {
        const size_t bend = std::min(order.size(), start + cfg_.batch_size);
        const int bn = static_cast<int>(bend - start);
        if (bn < 2) continue;  // a single-candidate softmax is uninformative
        std::vector<int> idx(order.begin() + start, order.begin() + bend);

        std::vector<Eigen::MatrixXd> emb;
        if (temporal) {
            std::vector<int> both = idx;
            for (int i : idx) both.push_back(clips.next_in_recording(i));
            const Batch3 x = clips.gather(specs_[0].name, both);
            const Eigen::MatrixXf e = encoders_[0]->forward(x, train);
            emb.push_back(to_double(e.topRows(bn)));
            emb.push_back(to_double(e.bottomRows(bn)));
        } else {
            for (size_t m = 0; m < specs_.size(); ++m) {
                const Batch3 x = clips.gather(specs_[m].name, idx);
                emb.push_back(to_double(encoders_[m]->forward(x, train)));
            }
        }

        const LossResult res = objective_loss(emb, train);
        if (!std::isfinite(res.value)) {
            double gnorm = 0;
            for (const auto& g : res.grad_emb) gnorm += g.squaredNorm();
            throw std::runtime_error(
                "pretrain: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                std::to_string(start / cfg_.batch_size) + ", tau=" + std::to_string(tau_) +
                ", grad_norm=" + std::to_string(std::sqrt(gnorm)));
        }
        total_loss += res.value * bn;
        total_n += bn;

        if (train) {
            if (temporal) {
                Eigen::MatrixXf g(2 * bn, emb[0].cols());
                g.topRows(bn) = to_float(res.grad_emb[0]);
                g.bottomRows(bn) = to_float(res.grad_emb[1]);
                encoders_[0]->zero_grad();
                encoders_[0]->backward(g);
            } else {
                for (size_t m = 0; m < specs_.size(); ++m) {
                    encoders_[m]->zero_grad();
                    encoders_[m]->backward(to_float(res.grad_emb[m]));
                }
            }
            // SGD with momentum: v <- mu v + g, theta <- theta - lr v.
            for (size_t m = 0; m < encoders_.size(); ++m) {
                auto& params = encoders_[m]->parameters();
                for (size_t p = 0; p < params.size(); ++p) {
                    auto& vel = velocities_[m][p];
                    auto& val = *params[p].value;
                    auto& grad = *params[p].grad;
                    for (size_t j = 0; j < val.size(); ++j) {
                        vel[j] = static_cast<float>(cfg_.momentum) * vel[j] + grad[j];
                        val[j] -= static_cast<float>(lr) * vel[j];
                    }
                }
            }
            vel_tau_ = cfg_.momentum * vel_tau_ + res.grad_tau;
            tau_ -= lr * vel_tau_;
        }
    }
    return total_n > 0 ? total_loss / total_n : 0.0;
}

CheckpointSet Pretrainer::pretrain(const ClipStore& pretrain_clips, const ClipStore& valid_clips,
                                   std::ostream* log) {
    if (pretrain_clips.n_clips() == 0)
        throw std::invalid_argument("pretrain: empty pretraining set");

    velocities_.clear();
    for (auto& enc : encoders_) {
        std::vector<std::vector<float>> v;
        for (auto& p : enc->parameters()) v.emplace_back(p.value->size(), 0.0f);
        velocities_.push_back(std::move(v));
    }
    vel_tau_ = 0.0;

    CheckpointSet ckpt;
    double best = std::numeric_limits<double>::infinity();
    int bad = 0;
    for (int epoch = 0; epoch < cfg_.max_epochs; ++epoch) {
        const double lr = lr_at_epoch(cfg_, epoch);
        const double train_loss = run_epoch(pretrain_clips, epoch, true, lr);
        const double valid_loss = run_epoch(valid_clips, epoch, false, 0.0);

        CheckpointSet::EpochState state;
        for (auto& enc : encoders_) state.encoder_states.push_back(enc->snapshot_state());
        state.tau = tau_;
        state.valid_loss = valid_loss;
        ckpt.epochs.push_back(std::move(state));
        ckpt.log.push_back({epoch, train_loss, valid_loss, lr, tau_});
        if (log) {
            char buf[160];
            std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6g,%.6f\n", epoch, train_loss,
                          valid_loss, lr, tau_);
            (*log) << buf << std::flush;
        }

        if (valid_loss < best - cfg_.min_delta) {
            best = valid_loss;
            ckpt.best_epoch = epoch;
            bad = 0;
        } else {
            if (++bad >= cfg_.early_stop_patience) break;
        }
    }
    return ckpt;
}

void Pretrainer::restore(const CheckpointSet& ckpt, int epoch) {
    if (epoch < 0 || epoch >= static_cast<int>(ckpt.epochs.size()))
        throw std::out_of_range("Pretrainer::restore: epoch out of range");
    const auto& state = ckpt.epochs[epoch];
    for (size_t m = 0; m < encoders_.size(); ++m)
        encoders_[m]->restore_state(state.encoder_states.at(m));
    tau_ = state.tau;
}

EmbeddingSet Pretrainer::extract_embeddings(const ClipStore& clips, Split split_tag,
                                            int batch_size) const {
    EmbeddingSet out;
    out.modalities = cfg_.modalities;
    const int n = clips.n_clips();
    const int d = encoders_[0]->config().embed_dim;
    out.emb.assign(specs_.size(), Eigen::MatrixXf(n, d));
    for (size_t m = 0; m < specs_.size(); ++m) {
        for (int start = 0; start < n; start += batch_size) {
            const int bn = std::min(batch_size, n - start);
            std::vector<int> idx(bn);
            std::iota(idx.begin(), idx.end(), start);
            const Batch3 x = clips.gather(specs_[m].name, idx);
            out.emb[m].middleRows(start, bn) = encoders_[m]->forward(x, false);
        }
    }
    if (cfg_.fuse_by_average) {
        out.fused = Eigen::MatrixXf::Zero(n, d);
        for (const auto& e : out.emb) out.fused += e;
        out.fused /= static_cast<float>(out.emb.size());
    } else {
        out.fused.resize(n, d * static_cast<int>(out.emb.size()));
        for (size_t m = 0; m < out.emb.size(); ++m)
            out.fused.middleCols(static_cast<int>(m) * d, d) = out.emb[m];
    }
    out.participant_ids = clips.participant_ids;
    out.clip_indices = clips.clip_indices;
    out.stage_label = clips.stage_label;
    out.sdb_label = clips.sdb_label;
    out.age_group = clips.age_group;
    out.sex = clips.sex;
    out.split.assign(n, static_cast<int>(split_tag));
    return out;
}

void Pretrainer::save_checkpoint(const std::string& path) const {
    ArrayContainer c;
    c.meta["kind"] = "pretrain";
    c.meta["objective"] = objective_name(cfg_.objective);
    c.meta["tau"] = tau_;
    c.meta["fuse_by_average"] = cfg_.fuse_by_average;
    std::vector<std::string> mods;
    for (auto m : cfg_.modalities) mods.push_back(modality_name(m));
    c.meta["modalities"] = mods;
    for (size_t m = 0; m < encoders_.size(); ++m) {
        const std::string name = modality_name(specs_[m].name);
        c.meta["config_" + name] = encoders_[m]->config().to_json();
        c.meta["channels_" + name] = specs_[m].channel_names;
        encoders_[m]->append_to_container(c, name + ".");
    }
    save_container(path, c);
}

Pretrainer Pretrainer::load_checkpoint(const std::string& path) {
    const ArrayContainer c = load_container(path);
    if (c.meta.value("kind", "") != "pretrain")
        throw std::runtime_error("not a pretrain checkpoint: " + path);
    TrainConfig cfg;
    const std::string obj = c.meta.at("objective");
    if (obj == "pairwise") cfg.objective = Objective::Pairwise;
    else if (obj == "leave_one_out") cfg.objective = Objective::LeaveOneOut;
    else if (obj == "single_modality") cfg.objective = Objective::SingleModality;
    else cfg.objective = Objective::PairSubset;
    cfg.fuse_by_average = c.meta.value("fuse_by_average", false);

    std::vector<ModalitySpec> specs;
    std::vector<EncoderConfig> configs;
    for (const auto& ms : c.meta.at("modalities").get<std::vector<std::string>>()) {
        ModalitySpec spec;
        spec.name = modality_from_name(ms);
        spec.channel_names = c.meta.at("channels_" + ms).get<std::vector<std::string>>();
        specs.push_back(spec);
        configs.push_back(EncoderConfig::from_json(c.meta.at("config_" + ms)));
    }
    Pretrainer p(std::move(specs), std::move(configs), cfg);
    for (size_t m = 0; m < p.encoders_.size(); ++m)
        p.encoders_[m]->load_from_container(c, modality_name(p.specs_[m].name) + std::string("."));
    p.tau_ = c.meta.at("tau");
    return p;
}

}  // namespace sleepmm
