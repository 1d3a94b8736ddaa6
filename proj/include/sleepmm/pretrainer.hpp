#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "sleepmm/clip_cache.hpp"
#include "sleepmm/contrastive.hpp"
#include "sleepmm/embedding_set.hpp"
#include "sleepmm/encoder.hpp"

namespace sleepmm {

enum class Objective { Pairwise, LeaveOneOut, SingleModality, PairSubset };

const char* objective_name(Objective o);

struct TrainConfig {
    Objective objective = Objective::LeaveOneOut;
    std::vector<Modality> modalities = {Modality::BAS, Modality::ECG, Modality::RESP};
    double lr0 = 0.01;
    double momentum = 0.9;
    int lr_step_epochs = 5;
    double lr_decay_factor = 10.0;
    int max_epochs = 20;
    int batch_size = 32;
    uint64_t seed = 0;
    int early_stop_patience = 3;
    double min_delta = 0.0;
    double tau_init = 0.0;
    Aggregation aggregation = Aggregation::Mean;
    bool fuse_by_average = false;  // fused embedding: concat (default) or mean
};

// Step-decay schedule: lr0 / decay^floor(epoch / step_epochs).
double lr_at_epoch(const TrainConfig& cfg, int epoch);

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0, valid_loss = 0, lr = 0, tau = 0;
};

struct CheckpointSet {
    struct EpochState {
        std::vector<std::vector<std::vector<float>>> encoder_states;  // per modality
        double tau = 0;
        double valid_loss = 0;
    };
    std::vector<EpochState> epochs;
    int best_epoch = -1;
    std::vector<EpochRecord> log;
};

// Owns the per-modality encoders plus the trainable temperature and runs
// SGD-with-momentum contrastive pretraining with per-epoch validation,
// early stopping and in-memory checkpoints.
class Pretrainer {
public:
    Pretrainer(std::vector<ModalitySpec> specs, std::vector<EncoderConfig> configs,
               TrainConfig cfg);

    // Streams batches from the stores; `log` (optional) receives one
    // "epoch,train_loss,valid_loss,lr,tau" line per epoch.
    CheckpointSet pretrain(const ClipStore& pretrain_clips, const ClipStore& valid_clips,
                           std::ostream* log = nullptr);

    void restore(const CheckpointSet& ckpt, int epoch);

    EmbeddingSet extract_embeddings(const ClipStore& clips, Split split_tag,
                                    int batch_size = 64) const;

    double tau() const { return tau_; }
    void set_tau(double t) { tau_ = t; }
    std::vector<std::unique_ptr<Encoder>>& encoders() { return encoders_; }
    const TrainConfig& config() const { return cfg_; }

    void save_checkpoint(const std::string& path) const;
    static Pretrainer load_checkpoint(const std::string& path);

private:
    TrainConfig cfg_;
    std::vector<ModalitySpec> specs_;
    std::vector<std::unique_ptr<Encoder>> encoders_;
    double tau_ = 0.0;
    std::vector<std::vector<std::vector<float>>> velocities_;  // [encoder][param]
    double vel_tau_ = 0.0;

    double run_epoch(const ClipStore& clips, int epoch, bool train, double lr);
    LossResult objective_loss(const std::vector<Eigen::MatrixXd>& emb, bool with_grad) const;
};

}  // namespace sleepmm
