#include "sleepmm/encoder.hpp"

#include <stdexcept>

namespace sleepmm {

namespace {
// Stem stride 2, then per-stage strides matching the original 1D-adapted
// downsampling schedule (total reduction 32x: 7680 -> 240).
constexpr int kStageStrides[7] = {1, 2, 2, 2, 1, 2, 1};
}  // namespace

void EncoderConfig::validate() const {
    if (stage_widths.size() != 9)
        throw std::invalid_argument("EncoderConfig: stage_widths must have 9 entries");
    if (stage_depths.size() != 7)
        throw std::invalid_argument("EncoderConfig: stage_depths must have 7 entries");
    for (int w : stage_widths)
        if (w <= 0) throw std::invalid_argument("EncoderConfig: widths must be positive");
    for (int d : stage_depths)
        if (d <= 0) throw std::invalid_argument("EncoderConfig: depths must be positive");
    if (in_channels <= 0) throw std::invalid_argument("EncoderConfig: in_channels must be positive");
    if (embed_dim <= 0) throw std::invalid_argument("EncoderConfig: embed_dim must be positive");
    if (dropout_rate < 0.0f || dropout_rate > 1.0f)
        throw std::invalid_argument("EncoderConfig: dropout_rate out of [0,1]");
}

nlohmann::json EncoderConfig::to_json() const {
    return {{"in_channels", in_channels},     {"stage_widths", stage_widths},
            {"stage_depths", stage_depths},   {"expansion", expansion},
            {"dropout_rate", dropout_rate},   {"block_dropout_rate", block_dropout_rate},
            {"embed_dim", embed_dim},         {"stem_dilation", stem_dilation}};
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& j) {
    EncoderConfig c;
    c.in_channels = j.at("in_channels");
    c.stage_widths = j.at("stage_widths").get<std::vector<int>>();
    c.stage_depths = j.at("stage_depths").get<std::vector<int>>();
    c.expansion = j.at("expansion");
    c.dropout_rate = j.at("dropout_rate");
    c.block_dropout_rate = j.at("block_dropout_rate");
    c.embed_dim = j.at("embed_dim");
    c.stem_dilation = j.at("stem_dilation");
    return c;
}

EncoderConfig desk_encoder_config(int in_channels, int embed_dim) {
    EncoderConfig c;
    c.in_channels = in_channels;
    c.stage_widths = {8, 4, 6, 10, 20, 28, 48, 80, 320};
    c.stage_depths = {1, 1, 1, 1, 1, 1, 1};
    c.expansion = 4;
    c.block_dropout_rate = 0.05f;
    c.dropout_rate = 0.2f;
    c.embed_dim = embed_dim;
    return c;
}

Encoder::Encoder(ModalitySpec spec, EncoderConfig config, uint64_t seed)
    : spec_(std::move(spec)), config_(std::move(config)), rng_(seed) {
    config_.validate();
    if (config_.in_channels != spec_.channel_count())
        throw std::invalid_argument("Encoder: config in_channels does not match modality spec");

    using namespace nn;
    net_.add("stem", std::make_unique<Conv1d>(config_.in_channels, config_.stage_widths[0], 3, 2, 1,
                                              config_.stem_dilation, 1, false, rng_));
    net_.add("stem_bn", std::make_unique<BatchNorm1d>(config_.stage_widths[0]));
    net_.add("stem_act", std::make_unique<Swish>());

    int in_w = config_.stage_widths[0];
    for (int s = 0; s < 7; ++s) {
        const int out_w = config_.stage_widths[s + 1];
        for (int d = 0; d < config_.stage_depths[s]; ++d) {
            const int stride = d == 0 ? kStageStrides[s] : 1;
            net_.add("stage" + std::to_string(s + 2) + ".block" + std::to_string(d),
                     std::make_unique<MBConvBlock>(in_w, out_w, stride, config_.expansion,
                                                   config_.block_dropout_rate, rng_));
            in_w = out_w;
        }
        if (s == 1) net_.add("pool3", std::make_unique<MaxPool1d>(3, 1, 1));
    }

    net_.add("head", std::make_unique<Conv1d>(in_w, config_.stage_widths[8], 1, 1, 0, 1, 1, false,
                                              rng_));
    net_.add("head_bn", std::make_unique<BatchNorm1d>(config_.stage_widths[8]));
    net_.add("head_act", std::make_unique<Swish>());
    net_.add("avgpool", std::make_unique<AdaptiveAvgPool1d>());
    net_.add("pool_act", std::make_unique<ReLU>());
    net_.add("drop", std::make_unique<Dropout>(config_.dropout_rate, rng_));
    net_.add("fc", std::make_unique<Linear>(config_.stage_widths[8], config_.embed_dim, rng_));

    net_.collect("", params_, buffers_);
}

Eigen::MatrixXf Encoder::forward(const Batch3& x, bool train) {
    if (x.c != config_.in_channels)
        throw std::invalid_argument("Encoder::forward: expected " +
                                    std::to_string(config_.in_channels) + " channels, got " +
                                    std::to_string(x.c));
    if (x.l != kClipLen)
        throw std::invalid_argument("Encoder::forward: expected clip_len " +
                                    std::to_string(kClipLen) + ", got " + std::to_string(x.l));
    last_batch_ = x.n;
    Batch3 y = net_.forward(x, train);
    Eigen::MatrixXf e(y.n, y.c);
    for (int i = 0; i < y.n; ++i)
        for (int d = 0; d < y.c; ++d) e(i, d) = *y.at(i, d);
    return e;
}

void Encoder::backward(const Eigen::MatrixXf& grad_embed) {
    if (grad_embed.rows() != last_batch_ || grad_embed.cols() != config_.embed_dim)
        throw std::invalid_argument("Encoder::backward: gradient shape mismatch");
    Batch3 g(last_batch_, config_.embed_dim, 1);
    for (int i = 0; i < g.n; ++i)
        for (int d = 0; d < g.c; ++d) *g.at(i, d) = grad_embed(i, d);
    net_.backward(g);
}

void Encoder::zero_grad() {
    for (auto& p : params_) std::fill(p.grad->begin(), p.grad->end(), 0.0f);
}

int64_t Encoder::count_parameters() const {
    int64_t n = 0;
    for (auto& p : params_) n += static_cast<int64_t>(p.value->size());
    return n;
}

std::vector<std::vector<float>> Encoder::snapshot_state() const {
    std::vector<std::vector<float>> state;
    state.reserve(params_.size() + buffers_.size());
    for (auto& p : params_) state.push_back(*p.value);
    for (auto& b : buffers_) state.push_back(*b.value);
    return state;
}

void Encoder::restore_state(const std::vector<std::vector<float>>& state) {
    if (state.size() != params_.size() + buffers_.size())
        throw std::invalid_argument("Encoder::restore_state: snapshot size mismatch");
    size_t i = 0;
    for (auto& p : params_) *p.value = state[i++];
    for (auto& b : buffers_) *b.value = state[i++];
}

void Encoder::append_to_container(ArrayContainer& c, const std::string& prefix) const {
    for (auto& p : params_) c.arrays.emplace_back(prefix + p.name, *p.value);
    for (auto& b : buffers_) c.arrays.emplace_back(prefix + b.name, *b.value);
}

void Encoder::load_from_container(const ArrayContainer& c, const std::string& prefix) {
    const std::string key = "config_" + std::string(modality_name(spec_.name));
    if (c.meta.contains(key)) {
        const EncoderConfig stored = EncoderConfig::from_json(c.meta.at(key));
        if (!(stored == config_))
            throw std::runtime_error("checkpoint config does not match encoder config for " +
                                     std::string(modality_name(spec_.name)));
    }
    for (auto& p : params_) {
        const auto& a = c.at(prefix + p.name);
        if (a.size() != p.value->size())
            throw std::runtime_error("checkpoint array size mismatch: " + prefix + p.name);
        *p.value = a;
    }
    for (auto& b : buffers_) {
        const auto& a = c.at(prefix + b.name);
        if (a.size() != b.value->size())
            throw std::runtime_error("checkpoint array size mismatch: " + prefix + b.name);
        *b.value = a;
    }
}

void Encoder::save(const std::string& path) const {
    ArrayContainer c;
    c.meta["kind"] = "encoder";
    c.meta["modality"] = modality_name(spec_.name);
    c.meta["channel_names"] = spec_.channel_names;
    c.meta["config_" + std::string(modality_name(spec_.name))] = config_.to_json();
    append_to_container(c, "");
    save_container(path, c);
}

Encoder Encoder::load(const std::string& path) {
    ArrayContainer c = load_container(path);
    if (c.meta.value("kind", "") != "encoder")
        throw std::runtime_error("not an encoder checkpoint: " + path);
    ModalitySpec spec;
    spec.name = modality_from_name(c.meta.at("modality"));
    spec.channel_names = c.meta.at("channel_names").get<std::vector<std::string>>();
    const EncoderConfig cfg =
        EncoderConfig::from_json(c.meta.at("config_" + std::string(modality_name(spec.name))));
    Encoder enc(spec, cfg, 0);
    enc.load_from_container(c, "");
    return enc;
}

}  // namespace sleepmm
