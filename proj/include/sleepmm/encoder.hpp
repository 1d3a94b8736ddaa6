#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "sleepmm/checkpoint.hpp"
#include "sleepmm/nn.hpp"
#include "sleepmm/types.hpp"

namespace sleepmm {

constexpr int kClipSeconds = 30;
constexpr int kTargetHz = 256;
constexpr int kClipLen = kClipSeconds * kTargetHz;  // 7680

struct EncoderConfig {
    int in_channels = 10;
    std::vector<int> stage_widths{32, 16, 24, 40, 80, 112, 192, 320, 1280};
    std::vector<int> stage_depths{1, 2, 2, 3, 3, 3, 3};
    int expansion = 6;
    float dropout_rate = 0.5f;
    float block_dropout_rate = 0.1f;
    int embed_dim = 512;
    int stem_dilation = 1;

    void validate() const;
    nlohmann::json to_json() const;
    static EncoderConfig from_json(const nlohmann::json& j);
    bool operator==(const EncoderConfig&) const = default;
};

// Quarter-width, depth-1 profile for workstation-scale runs.
EncoderConfig desk_encoder_config(int in_channels, int embed_dim = 128);

// Per-modality 1D embedding network: stem conv + BN, 7 inverted-residual
// stages, max-pool after stage 3, head conv, adaptive average pool, ReLU,
// dropout and a fully connected projection to embed_dim.
class Encoder {
public:
    Encoder(ModalitySpec spec, EncoderConfig config, uint64_t seed);

    // (B, in_channels, 7680) -> (B, embed_dim).
    Eigen::MatrixXf forward(const Batch3& x, bool train);
    // Backprop the embedding gradient; accumulates parameter gradients.
    void backward(const Eigen::MatrixXf& grad_embed);

    void zero_grad();
    int64_t count_parameters() const;

    std::vector<nn::ParamRef>& parameters() { return params_; }
    std::vector<nn::BufferRef>& buffers() { return buffers_; }

    const EncoderConfig& config() const { return config_; }
    const ModalitySpec& spec() const { return spec_; }

    // Parameter + buffer snapshot, restorable on an identically configured encoder.
    std::vector<std::vector<float>> snapshot_state() const;
    void restore_state(const std::vector<std::vector<float>>& state);

    void save(const std::string& path) const;
    static Encoder load(const std::string& path);
    void append_to_container(ArrayContainer& c, const std::string& prefix) const;
    void load_from_container(const ArrayContainer& c, const std::string& prefix);

private:
    ModalitySpec spec_;
    EncoderConfig config_;
    nn::Sequential net_;
    std::mt19937_64 rng_;
    std::vector<nn::ParamRef> params_;
    std::vector<nn::BufferRef> buffers_;
    int last_batch_ = 0;
};

}  // namespace sleepmm
