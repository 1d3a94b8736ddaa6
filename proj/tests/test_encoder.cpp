#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <random>

#include "sleepmm/encoder.hpp"

using namespace sleepmm;

namespace {

EncoderConfig tiny_config(int in_channels) {
    EncoderConfig c;
    c.in_channels = in_channels;
    c.stage_widths = {4, 2, 3, 4, 6, 8, 10, 12, 32};
    c.stage_depths = {1, 1, 1, 1, 1, 1, 1};
    c.expansion = 2;
    c.embed_dim = 16;
    c.dropout_rate = 0.2f;
    c.block_dropout_rate = 0.0f;
    return c;
}

Batch3 random_batch(int n, int c, uint64_t seed) {
    Batch3 x;
    x.n = n;
    x.c = c;
    x.l = kClipLen;
    x.v.resize(static_cast<size_t>(n) * c * kClipLen);
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> nd;
    for (auto& v : x.v) v = nd(rng);
    return x;
}

ModalitySpec spec_for(Modality m) {
    for (const auto& s : default_modality_specs())
        if (s.name == m) return s;
    throw std::logic_error("spec");
}

}  // namespace

TEST_CASE("default config matches the published architecture constants") {
    EncoderConfig c;
    CHECK(c.stage_widths == std::vector<int>{32, 16, 24, 40, 80, 112, 192, 320, 1280});
    CHECK(c.stage_depths == std::vector<int>{1, 2, 2, 3, 3, 3, 3});
    CHECK(c.expansion == 6);
    CHECK(c.dropout_rate == 0.5f);
    CHECK(kClipLen == 7680);

    EncoderConfig bad = c;
    bad.stage_depths.pop_back();
    CHECK_THROWS(bad.validate());
}

TEST_CASE("first-layer weight shapes per modality") {
    // Stem convolution: (32, in_channels, 3) for the default width.
    for (auto [m, ch] : {std::pair{Modality::BAS, 10}, {Modality::ECG, 2}, {Modality::RESP, 7}}) {
        EncoderConfig c;
        c.in_channels = ch;
        Encoder e(spec_for(m), c, 1);
        CHECK(static_cast<int>(e.parameters()[0].value->size()) == 32 * ch * 3);
    }
}

TEST_CASE("parameter count arithmetic") {
    EncoderConfig bas;
    bas.in_channels = 10;
    EncoderConfig ecg;
    ecg.in_channels = 2;
    Encoder e1(spec_for(Modality::BAS), bas, 1);
    Encoder e2(spec_for(Modality::ECG), ecg, 1);
    CHECK(e1.count_parameters() - e2.count_parameters() == 32 * 3 * (10 - 2));

    Encoder e3(spec_for(Modality::BAS), bas, 99);
    CHECK(e1.count_parameters() == e3.count_parameters());

    EncoderConfig wider = bas;
    for (auto& w : wider.stage_widths) w += 8;
    Encoder e4(spec_for(Modality::BAS), wider, 1);
    CHECK(e4.count_parameters() > e1.count_parameters());
}

TEST_CASE("forward shape, determinism and constant-input behavior") {
    const auto spec = spec_for(Modality::ECG);
    Encoder e(spec, tiny_config(2), 3);
    const Batch3 x = random_batch(4, 2, 17);
    const Eigen::MatrixXf y1 = e.forward(x, false);
    CHECK(y1.rows() == 4);
    CHECK(y1.cols() == 16);
    CHECK(y1.allFinite());
    const Eigen::MatrixXf y2 = e.forward(x, false);
    CHECK(y1 == y2);

    Batch3 z = x;
    std::fill(z.v.begin(), z.v.end(), 0.0f);
    const Eigen::MatrixXf yz = e.forward(z, false);
    for (int i = 1; i < 4; ++i) CHECK(yz.row(i) == yz.row(0));
}

TEST_CASE("shape mismatch is rejected with channel counts") {
    Encoder e(spec_for(Modality::ECG), tiny_config(2), 3);
    const Batch3 bad = random_batch(2, 3, 5);
    CHECK_THROWS_WITH_AS(static_cast<void>(e.forward(bad, false)),
                         doctest::Contains("channel"), std::exception);
}

TEST_CASE("checkpoint round-trip reproduces embeddings bitwise") {
    const auto spec = spec_for(Modality::RESP);
    Encoder e(spec, tiny_config(7), 5);
    const Batch3 x = random_batch(3, 7, 9);
    const Eigen::MatrixXf before = e.forward(x, false);

    const std::string path = "/tmp/enc_roundtrip.smm";
    e.save(path);
    Encoder loaded = Encoder::load(path);
    const Eigen::MatrixXf after = loaded.forward(x, false);
    CHECK(before == after);
    std::remove(path.c_str());

    // Loading into a mismatched configuration must fail.
    ArrayContainer c;
    e.append_to_container(c, "x.");
    c.meta["config_RESP"] = e.config().to_json();
    EncoderConfig different = tiny_config(7);
    different.embed_dim = 8;
    Encoder other(spec, different, 6);
    CHECK_THROWS(other.load_from_container(c, "x."));
}

TEST_CASE("training updates flow back to the input layers") {
    const auto spec = spec_for(Modality::ECG);
    Encoder e(spec, tiny_config(2), 7);
    const Batch3 x = random_batch(2, 2, 21);
    const Eigen::MatrixXf y = e.forward(x, true);
    e.zero_grad();
    e.backward(Eigen::MatrixXf::Ones(2, 16));
    double stem_grad = 0;
    for (float g : *e.parameters()[0].grad) stem_grad += std::abs(g);
    CHECK(stem_grad > 0.0);
}
