#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "sleepmm/harness.hpp"
#include "sleepmm/retrieval.hpp"

namespace fs = std::filesystem;
using namespace sleepmm;

namespace {

// Flat `key = value` configuration; '#' starts a comment. Unknown keys are
// rejected so typos fail loudly.
struct Config {
    CorpusParams corpus;
    HarnessConfig harness;
    std::vector<Modality> modalities{Modality::BAS, Modality::ECG, Modality::RESP};
    EvalOptions eval;
    int retrieval_pool = 1000;
    int retrieval_k = 10;

    nlohmann::json to_json() const;
};

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (!tok.empty()) out.push_back(tok);
    }
    return out;
}

Objective objective_from_name(const std::string& s) {
    if (s == "pairwise") return Objective::Pairwise;
    if (s == "leave_one_out") return Objective::LeaveOneOut;
    if (s == "single_modality") return Objective::SingleModality;
    if (s == "pair_subset") return Objective::PairSubset;
    throw std::invalid_argument("unknown objective: " + s);
}

void apply_key(Config& c, const std::string& key, const std::string& val) {
    auto d = [&] { return std::stod(val); };
    auto i = [&] { return std::stoi(val); };
    auto b = [&] {
        if (val == "true" || val == "1") return true;
        if (val == "false" || val == "0") return false;
        throw std::invalid_argument("expected boolean for " + key + ", got " + val);
    };
    if (key == "corpus.participants") c.corpus.n_participants = i();
    else if (key == "corpus.duration_s") c.corpus.synth.duration_s = d();
    else if (key == "corpus.kappa") c.corpus.synth.kappa = d();
    else if (key == "corpus.noise") c.corpus.synth.noise_level = d();
    else if (key == "corpus.sdb_per_hour") c.corpus.synth.sdb_events_per_hour = d();
    else if (key == "split.pretrain") c.corpus.split_fractions[0] = d();
    else if (key == "split.train") c.corpus.split_fractions[1] = d();
    else if (key == "split.valid") c.corpus.split_fractions[2] = d();
    else if (key == "split.test") c.corpus.split_fractions[3] = d();
    else if (key == "train.objective") c.harness.train.objective = objective_from_name(val);
    else if (key == "train.lr0") c.harness.train.lr0 = d();
    else if (key == "train.momentum") c.harness.train.momentum = d();
    else if (key == "train.step_epochs") c.harness.train.lr_step_epochs = i();
    else if (key == "train.decay") c.harness.train.lr_decay_factor = d();
    else if (key == "train.max_epochs") c.harness.train.max_epochs = i();
    else if (key == "train.batch_size") c.harness.train.batch_size = i();
    else if (key == "train.patience") c.harness.train.early_stop_patience = i();
    else if (key == "train.tau_init") c.harness.train.tau_init = d();
    else if (key == "train.aggregation")
        c.harness.train.aggregation = val == "sum" ? Aggregation::Sum : Aggregation::Mean;
    else if (key == "train.fuse") c.harness.train.fuse_by_average = val == "average";
    else if (key == "encoder.embed_dim") c.harness.embed_dim = i();
    else if (key == "probe.l2") c.harness.probe.l2 = d();
    else if (key == "probe.max_iterations") c.harness.probe.max_iterations = i();
    else if (key == "probe.tol") c.harness.probe.tol = d();
    else if (key == "probe.balanced") c.harness.probe.balanced_class_weights = b();
    else if (key == "eval.n_boot") c.eval.n_boot = i();
    else if (key == "eval.source") c.eval.source = val;
    else if (key == "eval.strata") c.eval.strata = strata_from_name(val);
    else if (key == "eval.with_f1") c.eval.with_f1 = b();
    else if (key == "fewshot.replicates") c.harness.fewshot_replicates = i();
    else if (key == "fewshot.ks") {
        c.harness.fewshot_ks.clear();
        for (const auto& tok : split_list(val))
            c.harness.fewshot_ks.push_back(tok == "all" ? -1 : std::stoi(tok));
    } else if (key == "retrieval.pool") c.retrieval_pool = i();
    else if (key == "retrieval.k") c.retrieval_k = i();
    else if (key == "modalities") {
        c.modalities.clear();
        for (const auto& tok : split_list(val)) c.modalities.push_back(modality_from_name(tok));
    } else
        throw std::invalid_argument("unknown config key: " + key);
}

Config load_config(const std::string& path) {
    Config c;
    if (path.empty()) return c;
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": expected key = value");
        apply_key(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return c;
}

nlohmann::json Config::to_json() const {
    nlohmann::json j;
    j["corpus"] = {{"participants", corpus.n_participants},
                   {"duration_s", corpus.synth.duration_s},
                   {"kappa", corpus.synth.kappa},
                   {"noise", corpus.synth.noise_level},
                   {"sdb_per_hour", corpus.synth.sdb_events_per_hour},
                   {"fractions", corpus.split_fractions}};
    j["train"] = {{"objective", objective_name(harness.train.objective)},
                  {"lr0", harness.train.lr0},
                  {"momentum", harness.train.momentum},
                  {"step_epochs", harness.train.lr_step_epochs},
                  {"decay", harness.train.lr_decay_factor},
                  {"max_epochs", harness.train.max_epochs},
                  {"batch_size", harness.train.batch_size},
                  {"patience", harness.train.early_stop_patience},
                  {"tau_init", harness.train.tau_init}};
    j["encoder"] = {{"embed_dim", harness.embed_dim}};
    j["probe"] = {{"l2", harness.probe.l2},
                  {"balanced", harness.probe.balanced_class_weights}};
    std::vector<std::string> mods;
    for (auto m : modalities) mods.push_back(modality_name(m));
    j["modalities"] = mods;
    return j;
}

std::string default_cache() {
    const char* env = std::getenv("SLEEPMM_CACHE");
    return env ? env : "cache";
}

std::vector<ManifestEntry> manifest_at(const std::string& data_dir) {
    return load_manifest((fs::path(data_dir) / "manifest.csv").string());
}

Pretrainer make_pretrainer(const Config& c, uint64_t seed) {
    std::vector<ModalitySpec> specs;
    std::vector<EncoderConfig> configs;
    for (const auto& s : default_modality_specs())
        if (std::find(c.modalities.begin(), c.modalities.end(), s.name) != c.modalities.end()) {
            specs.push_back(s);
            configs.push_back(desk_encoder_config(s.channel_count(), c.harness.embed_dim));
        }
    TrainConfig t = c.harness.train;
    t.seed = seed;
    return Pretrainer(std::move(specs), std::move(configs), t);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"contrastive pretraining and evaluation for multi-modal sleep recordings"};
    app.require_subcommand(1);
    app.fallthrough();  // global options may follow the verb

    std::string config_path, out = "out";
    uint64_t seed = 0;
    app.add_option("--config", config_path, "key = value configuration file");
    app.add_option("--seed", seed, "global random seed");
    app.add_option("--out", out, "output directory or file");

    std::string data_dir = default_cache();
    std::string checkpoint, embeddings_path, task_str = "stage5", variant = "model";
    std::string manifest_path, alias_path, results_dir, splits = "train,test";
    int pool_size = -1, topk = -1;

    auto* synth = app.add_subcommand("synth-data", "generate a synthetic labeled corpus");
    synth->add_option("--data", data_dir, "clip-cache directory");

    auto* pretrain = app.add_subcommand("pretrain", "contrastive pretraining");
    pretrain->add_option("--data", data_dir, "clip-cache directory with manifest.csv");

    auto* embed = app.add_subcommand("embed", "extract embeddings with a frozen checkpoint");
    embed->add_option("--checkpoint", checkpoint)->required();
    embed->add_option("--data", data_dir);
    embed->add_option("--splits", splits, "comma list of splits to embed");

    auto* evaluate = app.add_subcommand("evaluate", "linear-probe metrics on embeddings");
    evaluate->add_option("--embeddings", embeddings_path)->required();
    evaluate->add_option("--task", task_str, "stage5|sdb|age4|sex");

    auto* fewshot = app.add_subcommand("fewshot", "few-shot label-efficiency curve");
    fewshot->add_option("--embeddings", embeddings_path)->required();
    fewshot->add_option("--task", task_str);
    fewshot->add_option("--variant", variant, "curve label in the output table");

    auto* retrieval = app.add_subcommand("retrieval", "cross-modal retrieval table");
    retrieval->add_option("--embeddings", embeddings_path)->required();
    retrieval->add_option("--pool-size", pool_size);
    retrieval->add_option("--k", topk);

    auto* ablation = app.add_subcommand("ablation", "modality-subset ablation study");
    ablation->add_option("--data", data_dir);

    auto* baseline = app.add_subcommand("baseline", "end-to-end supervised classifier");
    baseline->add_option("--data", data_dir);
    baseline->add_option("--task", task_str);

    auto* external = app.add_subcommand("external", "frozen-checkpoint external validation");
    external->add_option("--checkpoint", checkpoint)->required();
    external->add_option("--manifest", manifest_path)->required();
    external->add_option("--aliases", alias_path, "channel alias map file");
    external->add_option("--cache", data_dir, "external clip-cache directory");

    auto* figures = app.add_subcommand("figures", "render curve tables as SVG");
    figures->add_option("--results", results_dir)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        Config cfg = load_config(config_path);
        cfg.corpus.seed = seed;
        cfg.harness.seed = seed;
        cfg.eval.seed = seed;
        cfg.eval.probe = cfg.harness.probe;

        if (synth->parsed()) {
            const auto manifest = build_synthetic_corpus(data_dir, cfg.corpus);
            write_run_manifest(data_dir, cfg.to_json(), seed);
            std::cout << "wrote " << manifest.size() << " recordings to " << data_dir << "\n";
        } else if (pretrain->parsed()) {
            fs::create_directories(out);
            const auto manifest = manifest_at(data_dir);
            Pretrainer pt = make_pretrainer(cfg, seed);
            SplitStores stores = open_split_stores(data_dir, manifest, pt.config().modalities);
            std::ofstream log(fs::path(out) / "train_log.csv");
            log << "epoch,train_loss,valid_loss,lr,tau\n";
            CheckpointSet ckpt = pt.pretrain(stores.pretrain, stores.valid, &log);
            pt.restore(ckpt, ckpt.best_epoch >= 0 ? ckpt.best_epoch
                                                  : static_cast<int>(ckpt.epochs.size()) - 1);
            pt.save_checkpoint((fs::path(out) / "checkpoint.smm").string());
            write_run_manifest(out, cfg.to_json(), seed);
            std::cout << "best epoch " << ckpt.best_epoch << ", checkpoint in " << out << "\n";
        } else if (embed->parsed()) {
            Pretrainer pt = Pretrainer::load_checkpoint(checkpoint);
            const auto manifest = manifest_at(data_dir);
            SplitStores stores = open_split_stores(data_dir, manifest, pt.config().modalities);
            std::vector<EmbeddingSet> parts;
            for (const auto& s : split_list(splits)) {
                const Split sp = split_from_name(s);
                const ClipStore& st = sp == Split::Pretrain ? stores.pretrain
                                      : sp == Split::Train  ? stores.train
                                      : sp == Split::Valid  ? stores.valid
                                                            : stores.test;
                if (st.n_clips() > 0) parts.push_back(pt.extract_embeddings(st, sp));
            }
            EmbeddingSet::merge(parts).save(out);
            std::cout << "embeddings saved to " << out << "\n";
        } else if (evaluate->parsed()) {
            const EmbeddingSet e = EmbeddingSet::load(embeddings_path);
            const auto rows = evaluate_task(e, task_from_name(task_str), cfg.eval);
            write_metrics_csv(out, rows);
            std::cout << rows.size() << " metric rows in " << out << "\n";
        } else if (fewshot->parsed()) {
            const EmbeddingSet e = EmbeddingSet::load(embeddings_path);
            const Task task = task_from_name(task_str);
            const auto curve =
                few_shot_curve(e, cfg.harness.fewshot_ks, task, cfg.harness.fewshot_replicates,
                               cfg.eval.source, seed, cfg.harness.probe);
            write_fewshot_csv(out, variant, task, curve);
            std::cout << curve.size() << " few-shot points in " << out << "\n";
        } else if (retrieval->parsed()) {
            const EmbeddingSet e = EmbeddingSet::load(embeddings_path);
            const int pool = pool_size > 0 ? pool_size : cfg.retrieval_pool;
            const int k = topk > 0 ? topk : cfg.retrieval_k;
            const auto results = cross_modal_matrix(e, pool, k, seed);
            write_retrieval_csv(out, results, k);
            std::cout << results.size() << " retrieval cells in " << out << "\n";
        } else if (ablation->parsed()) {
            const auto manifest = manifest_at(data_dir);
            SplitStores stores = open_split_stores(
                data_dir, manifest, {Modality::BAS, Modality::ECG, Modality::RESP});
            write_run_manifest(out, cfg.to_json(), seed);
            const auto outcomes = run_ablation(stores, cfg.harness, out, &std::cout);
            for (const auto& oc : outcomes)
                for (const auto& s : oc.skipped) std::cout << oc.variant << ": " << s << "\n";
            std::cout << outcomes.size() << " variants written to " << out << "\n";
        } else if (baseline->parsed()) {
            const auto manifest = manifest_at(data_dir);
            SplitStores stores = open_split_stores(
                data_dir, manifest, {Modality::BAS, Modality::ECG, Modality::RESP});
            const auto res =
                run_supervised_baseline(task_from_name(task_str), stores, cfg.harness, &std::cout);
            write_metrics_csv(out, res.rows);
            std::cout << res.rows.size() << " metric rows in " << out << "\n";
        } else if (external->parsed()) {
            const auto res = run_external_validation(checkpoint, manifest_path, alias_path,
                                                     data_dir, cfg.harness, &std::cout);
            write_metrics_csv(out, res.rows);
            std::cout << res.n_train_clips << " train / " << res.n_test_clips
                      << " test clips, " << res.skipped.size() << " recordings skipped\n";
        } else if (figures->parsed()) {
            const auto written = emit_figures(results_dir, out);
            for (const auto& f : written) std::cout << f << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
