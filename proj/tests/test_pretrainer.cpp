#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <sstream>

#include "sleepmm/harness.hpp"
#include "sleepmm/pretrainer.hpp"

using namespace sleepmm;
namespace fs = std::filesystem;

namespace {

EncoderConfig tiny_config(int in_channels) {
    EncoderConfig c;
    c.in_channels = in_channels;
    c.stage_widths = {4, 2, 3, 4, 6, 8, 10, 12, 32};
    c.stage_depths = {1, 1, 1, 1, 1, 1, 1};
    c.expansion = 2;
    c.embed_dim = 16;
    c.dropout_rate = 0.0f;
    c.block_dropout_rate = 0.0f;
    return c;
}

struct Corpus {
    std::string dir = "/tmp/test_pt_corpus";
    std::vector<ManifestEntry> manifest;
    SplitStores stores;

    Corpus() {
        CorpusParams p;
        p.n_participants = 8;
        p.synth.duration_s = 300;
        p.synth.kappa = 1.0;
        p.synth.noise_level = 0.1;
        p.split_fractions = {0.5, 0.25, 0.125, 0.125};
        p.seed = 3;
        manifest = build_synthetic_corpus(dir, p);
        stores = open_split_stores(dir, manifest,
                                   {Modality::BAS, Modality::ECG, Modality::RESP});
    }
};

Pretrainer make_trainer(TrainConfig cfg) {
    std::vector<ModalitySpec> specs;
    std::vector<EncoderConfig> configs;
    for (const auto& s : default_modality_specs()) {
        specs.push_back(s);
        configs.push_back(tiny_config(s.channel_count()));
    }
    return Pretrainer(std::move(specs), std::move(configs), cfg);
}

}  // namespace

TEST_CASE("learning-rate schedule") {
    TrainConfig cfg;
    CHECK(lr_at_epoch(cfg, 0) == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(lr_at_epoch(cfg, 4) == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(lr_at_epoch(cfg, 5) == doctest::Approx(0.001).epsilon(1e-12));
    CHECK(lr_at_epoch(cfg, 10) == doctest::Approx(1e-4).epsilon(1e-12));
    CHECK(lr_at_epoch(cfg, 15) == doctest::Approx(1e-5).epsilon(1e-12));
    CHECK(lr_at_epoch(cfg, 19) == doctest::Approx(1e-5).epsilon(1e-12));
    CHECK_THROWS(lr_at_epoch(cfg, -1));
    // Piecewise-constant and non-increasing.
    for (int e = 1; e < 25; ++e) CHECK(lr_at_epoch(cfg, e) <= lr_at_epoch(cfg, e - 1));
}

TEST_CASE("defaults follow the training recipe") {
    TrainConfig cfg;
    CHECK(cfg.momentum == 0.9);
    CHECK(cfg.lr_step_epochs == 5);
    CHECK(cfg.lr_decay_factor == 10.0);
    CHECK(cfg.max_epochs == 20);
    CHECK(cfg.batch_size == 32);
    CHECK(cfg.tau_init == 0.0);
}

TEST_CASE("smoke pretraining improves validation loss and is deterministic") {
    Corpus corpus;
    TrainConfig cfg;
    cfg.objective = Objective::LeaveOneOut;
    cfg.max_epochs = 3;
    cfg.seed = 1;
    cfg.batch_size = 16;

    std::ostringstream log1, log2;
    Pretrainer p1 = make_trainer(cfg);
    const CheckpointSet c1 = p1.pretrain(corpus.stores.pretrain, corpus.stores.valid, &log1);
    REQUIRE(c1.log.size() >= 2);
    CHECK(c1.log.back().train_loss < c1.log.front().train_loss);
    CHECK(c1.best_epoch >= 0);
    for (const auto& r : c1.log) {
        CHECK(std::isfinite(r.train_loss));
        CHECK(std::isfinite(r.valid_loss));
    }

    Pretrainer p2 = make_trainer(cfg);
    const CheckpointSet c2 = p2.pretrain(corpus.stores.pretrain, corpus.stores.valid, &log2);
    CHECK(log1.str() == log2.str());

    // tau moved away from its 0 initialization.
    CHECK(p1.tau() != 0.0);
    CHECK(p1.tau() == p2.tau());

    SUBCASE("restore rewinds to a recorded epoch") {
        p1.restore(c1, 0);
        CHECK(p1.tau() == c1.epochs[0].tau);
        CHECK_THROWS(p1.restore(c1, 99));
    }

    SUBCASE("embeddings have the contracted shapes and repeat exactly") {
        p1.restore(c1, c1.best_epoch);
        const EmbeddingSet e1 = p1.extract_embeddings(corpus.stores.test, Split::Test);
        const int n = corpus.stores.test.n_clips();
        REQUIRE(e1.n() == n);
        CHECK(e1.emb.size() == 3);
        CHECK(e1.emb[0].rows() == n);
        CHECK(e1.emb[0].cols() == 16);
        CHECK(e1.fused.cols() == 48);  // concatenation of three 16-dim embeddings
        for (int sp : e1.split) CHECK(sp == static_cast<int>(Split::Test));

        const EmbeddingSet e2 = p1.extract_embeddings(corpus.stores.test, Split::Test);
        CHECK(e1.fused == e2.fused);

        SUBCASE("checkpoint file round-trips embeddings bitwise") {
            const std::string path = "/tmp/test_pt_ckpt.smm";
            p1.save_checkpoint(path);
            Pretrainer loaded = Pretrainer::load_checkpoint(path);
            const EmbeddingSet e3 = loaded.extract_embeddings(corpus.stores.test, Split::Test);
            CHECK(e1.fused == e3.fused);
            CHECK(loaded.tau() == p1.tau());
            std::remove(path.c_str());
        }

        SUBCASE("embedding container round-trips through disk") {
            const std::string path = "/tmp/test_pt_emb.smm";
            e1.save(path);
            const EmbeddingSet back = EmbeddingSet::load(path);
            CHECK(back.fused == e1.fused);
            CHECK(back.participant_ids == e1.participant_ids);
            CHECK(back.stage_label == e1.stage_label);
            std::remove(path.c_str());
        }
    }
}

TEST_CASE("averaged fusion halves the fused width") {
    Corpus corpus;
    TrainConfig cfg;
    cfg.max_epochs = 1;
    cfg.fuse_by_average = true;
    Pretrainer p = make_trainer(cfg);
    const EmbeddingSet e = p.extract_embeddings(corpus.stores.valid, Split::Valid);
    CHECK(e.fused.cols() == 16);
    Eigen::MatrixXf mean = (e.emb[0] + e.emb[1] + e.emb[2]) / 3.0f;
    CHECK(e.fused.isApprox(mean, 1e-6f));
}

TEST_CASE("construction guards") {
    TrainConfig cfg;
    cfg.objective = Objective::SingleModality;
    const std::vector<ModalitySpec> all = default_modality_specs();
    std::vector<ModalitySpec> two(all.begin(), all.begin() + 2);
    std::vector<EncoderConfig> cfg2 = {tiny_config(10), tiny_config(2)};
    CHECK_THROWS(Pretrainer(two, cfg2, cfg));

    cfg.objective = Objective::Pairwise;
    std::vector<ModalitySpec> one = {all[0]};
    std::vector<EncoderConfig> cfg1 = {tiny_config(10)};
    CHECK_THROWS(Pretrainer(one, cfg1, cfg));

    Corpus corpus;
    Pretrainer ok = make_trainer(TrainConfig{});
    ClipStore empty;
    CHECK_THROWS(ok.pretrain(empty, corpus.stores.valid));
}

TEST_CASE("single-modality temporal objective trains") {
    Corpus corpus;
    TrainConfig cfg;
    cfg.objective = Objective::SingleModality;
    cfg.max_epochs = 2;
    cfg.batch_size = 8;
    std::vector<ModalitySpec> specs = {default_modality_specs()[0]};
    std::vector<EncoderConfig> configs = {tiny_config(10)};
    Pretrainer p(specs, configs, cfg);
    const CheckpointSet c = p.pretrain(corpus.stores.pretrain, corpus.stores.valid);
    CHECK(c.log.size() == 2);
    for (const auto& r : c.log) CHECK(std::isfinite(r.valid_loss));
}
