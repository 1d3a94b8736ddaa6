#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "edf_builder.hpp"
#include "sleepmm/harness.hpp"

using namespace sleepmm;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream is(p);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("objective selection per modality-subset size") {
    CHECK(objective_for_subset(1) == Objective::SingleModality);
    CHECK(objective_for_subset(2) == Objective::Pairwise);
    CHECK(objective_for_subset(3) == Objective::LeaveOneOut);
    CHECK_THROWS(objective_for_subset(0));

    const auto subsets = ablation_subsets();
    REQUIRE(subsets.size() == 6);
    CHECK(subset_name(subsets[0]) == "BAS+ECG+RESP");
    CHECK(subset_name(subsets[4]) == "BAS");
    std::set<std::string> names;
    for (const auto& s : subsets) names.insert(subset_name(s));
    CHECK(names.size() == 6);
}

TEST_CASE("config hash and run manifest") {
    nlohmann::json a = {{"x", 1}, {"y", "z"}};
    nlohmann::json b = {{"x", 2}, {"y", "z"}};
    CHECK(config_hash(a) == config_hash(a));
    CHECK(config_hash(a) != config_hash(b));
    CHECK(config_hash(a).size() == 16);

    const std::string dir = "/tmp/test_manifest_dir";
    fs::remove_all(dir);
    write_run_manifest(dir, a, 42);
    const auto j = nlohmann::json::parse(slurp(fs::path(dir) / "run_manifest.json"));
    CHECK(j["seed"] == 42);
    CHECK(j["config_hash"] == config_hash(a));
    CHECK(j["config"]["x"] == 1);
    fs::remove_all(dir);
}

TEST_CASE("synthetic corpus layout and determinism") {
    const std::string dir = "/tmp/test_corpus_h";
    fs::remove_all(dir);
    CorpusParams p;
    p.n_participants = 8;
    p.synth.duration_s = 120;
    p.split_fractions = {0.5, 0.25, 0.125, 0.125};
    p.seed = 1;

    const auto m1 = build_synthetic_corpus(dir, p);
    REQUIRE(m1.size() == 8);
    std::array<int, 4> counts{};
    for (const auto& e : m1) counts[static_cast<int>(e.split)]++;
    CHECK(counts == std::array<int, 4>{4, 2, 1, 1});
    for (const auto& e : m1) {
        CHECK(e.age >= 5.0);
        CHECK((e.sex == "M" || e.sex == "F"));
        for (Modality mod : {Modality::BAS, Modality::ECG, Modality::RESP})
            CHECK(clip_cache_exists(dir, e.participant_id, mod));
    }
    const std::string manifest_bytes = slurp(fs::path(dir) / "manifest.csv");
    const auto m2 = build_synthetic_corpus(dir, p);  // idempotent rerun
    CHECK(slurp(fs::path(dir) / "manifest.csv") == manifest_bytes);
    CHECK(m2.size() == m1.size());

    SUBCASE("stores align across splits") {
        const SplitStores s = open_split_stores(dir, m1, {Modality::BAS, Modality::ECG});
        CHECK(s.pretrain.n_clips() == 4 * 4);  // 120 s -> 4 clips per participant
        CHECK(s.valid.n_clips() == 4);
        CHECK(s.test.n_clips() == 4);
        CHECK(s.train.clip_len() == 7680);
        // Demographics flowed through the cache.
        for (int a : s.test.age_group) CHECK(a >= 0);
        for (int x : s.test.sex) CHECK((x == 0 || x == 1));
    }
    fs::remove_all(dir);
}

TEST_CASE("figures from curve tables") {
    const std::string rdir = "/tmp/test_results_h";
    const std::string fdir = rdir + "/figs";
    fs::remove_all(rdir);
    fs::create_directories(rdir);
    {
        std::ofstream os(fs::path(rdir) / "fewshot_A_stage5.csv");
        os << "variant,task,k,replicate,macro_auroc,macro_auprc\n";
        os << "A,stage5,1,0,0.6,0.3\nA,stage5,1,1,0.7,0.4\nA,stage5,4,0,0.8,0.5\n";
        std::ofstream os2(fs::path(rdir) / "fewshot_B_stage5.csv");
        os2 << "variant,task,k,replicate,macro_auroc,macro_auprc\n";
        os2 << "B,stage5,1,0,0.5,0.2\nB,stage5,4,0,0.9,0.6\n";
    }
    const auto written = emit_figures(rdir, fdir);
    CHECK(written.size() == 4);  // auroc/auprc x (csv + svg)
    const std::string csv = slurp(fs::path(fdir) / "fig_stage5_auroc.csv");
    CHECK(csv.find("A,1,0.65") != std::string::npos);
    CHECK(csv.find("B,4,0.9") != std::string::npos);
    const std::string svg = slurp(fs::path(fdir) / "fig_stage5_auroc.svg");
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find(">A<") != std::string::npos);

    // Rerun writes identical data files.
    emit_figures(rdir, fdir);
    CHECK(slurp(fs::path(fdir) / "fig_stage5_auroc.csv") == csv);
    fs::remove_all(rdir);
}

TEST_CASE("supervised baseline trains and reports deterministically") {
    const std::string dir = "/tmp/test_baseline_h";
    fs::remove_all(dir);
    CorpusParams p;
    p.n_participants = 8;
    p.synth.duration_s = 300;
    p.synth.kappa = 1.0;
    p.split_fractions = {0.25, 0.375, 0.125, 0.25};
    p.seed = 2;
    const auto manifest = build_synthetic_corpus(dir, p);
    const SplitStores stores =
        open_split_stores(dir, manifest, {Modality::BAS, Modality::ECG, Modality::RESP});

    HarnessConfig cfg;
    cfg.embed_dim = 16;
    cfg.train.max_epochs = 2;
    cfg.train.batch_size = 8;
    cfg.seed = 5;

    const SupervisedResult r1 = run_supervised_baseline(Task::Stage5, stores, cfg);
    REQUIRE(r1.log.size() == 2);
    CHECK(r1.log[1].train_loss < r1.log[0].train_loss);
    CHECK(!r1.rows.empty());
    for (const auto& row : r1.rows) CHECK(row.task == "stage5");

    const SupervisedResult r2 = run_supervised_baseline(Task::Stage5, stores, cfg);
    REQUIRE(r2.rows.size() == r1.rows.size());
    for (size_t i = 0; i < r1.rows.size(); ++i) {
        const bool both_nan = std::isnan(r1.rows[i].point) && std::isnan(r2.rows[i].point);
        CHECK((both_nan || r1.rows[i].point == r2.rows[i].point));
    }
    fs::remove_all(dir);
}

TEST_CASE("external validation through EDF ingestion") {
    const std::string base = "/tmp/test_external_h";
    fs::remove_all(base);
    fs::create_directories(base);

    // A donor checkpoint from a tiny pretrain run.
    CorpusParams cp;
    cp.n_participants = 6;
    cp.synth.duration_s = 240;
    cp.split_fractions = {0.5, 1.0 / 6, 1.0 / 6, 1.0 / 6};
    cp.seed = 7;
    const auto cm = build_synthetic_corpus(base + "/corpus", cp);
    const SplitStores cs = open_split_stores(base + "/corpus", cm,
                                             {Modality::BAS, Modality::ECG, Modality::RESP});
    std::vector<ModalitySpec> specs = default_modality_specs();
    std::vector<EncoderConfig> configs;
    for (const auto& s : specs) {
        EncoderConfig c;
        c.in_channels = s.channel_count();
        c.stage_widths = {4, 2, 3, 4, 6, 8, 10, 12, 32};
        c.stage_depths = {1, 1, 1, 1, 1, 1, 1};
        c.expansion = 2;
        c.embed_dim = 16;
        c.block_dropout_rate = 0.0f;
        configs.push_back(c);
    }
    TrainConfig tc;
    tc.max_epochs = 1;
    Pretrainer pt(specs, configs, tc);
    pt.pretrain(cs.pretrain, cs.valid);
    const std::string ckpt = base + "/ckpt.smm";
    pt.save_checkpoint(ckpt);

    // External site: nonstandard EEG labels, several channels missing.
    const int secs = 120;
    std::vector<std::string> pids = {"e1", "e2", "e3"};
    for (size_t pi = 0; pi < pids.size(); ++pi) {
        SynthParams sp;
        sp.duration_s = secs;
        const RawRecording rec = synthesize_recording(sp, 100 + pi, pids[pi]);
        std::vector<testedf::TestSignal> sigs;
        for (const auto& ch : rec.channels) {
            if (ch.name == "OralFlow" || ch.name == "Snore") continue;  // absent on site
            testedf::TestSignal s;
            s.label = ch.name == "C3" ? "EEG C3-M2" : ch.name;
            s.hz = 256;
            s.samples = ch.samples;
            s.phys_min = -8.0;
            s.phys_max = 8.0;
            sigs.push_back(std::move(s));
        }
        testedf::write_edf(base + "/" + pids[pi] + ".edf", sigs, rec.annotations, secs);
    }
    {
        std::ofstream os(base + "/external.csv");
        os << "participant_id,path,split,age,sex\n";
        os << "e1," << base << "/e1.edf,train,40,M\n";
        os << "e2," << base << "/e2.edf,train,55,F\n";
        os << "e3," << base << "/e3.edf,test,33,M\n";
        std::ofstream al(base + "/aliases.txt");
        al << "EEG C3-M2 = C3\n";
    }

    HarnessConfig hc;
    hc.probe.l2 = 1.0;
    const ExternalResult res = run_external_validation(ckpt, base + "/external.csv",
                                                       base + "/aliases.txt", base + "/cache",
                                                       hc);
    CHECK(res.skipped.empty());
    CHECK(res.n_train_clips == 8);
    CHECK(res.n_test_clips == 4);
    CHECK(!res.rows.empty());
    bool has_f1 = false, has_macro = false;
    for (const auto& r : res.rows) {
        has_f1 |= r.metric == "f1";
        has_macro |= r.class_name == "macro";
    }
    CHECK(has_f1);
    CHECK(has_macro);

    CHECK_THROWS(run_external_validation(ckpt, base + "/nonexistent.csv", "", base + "/cache2",
                                         hc));
    fs::remove_all(base);
}
