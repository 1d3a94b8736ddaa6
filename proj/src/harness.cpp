#include "sleepmm/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "sleepmm/clip_cache.hpp"
#include "sleepmm/retrieval.hpp"

namespace fs = std::filesystem;

namespace sleepmm {

// ---------------------------------------------------------------------------
// Synthetic corpus

std::vector<ManifestEntry> build_synthetic_corpus(const std::string& cache_dir,
                                                  const CorpusParams& params) {
    if (params.n_participants < 1)
        throw std::invalid_argument("build_synthetic_corpus: need >= 1 participant");
    fs::create_directories(cache_dir);

    std::vector<std::string> pids;
    for (int i = 0; i < params.n_participants; ++i) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "P%03d", i + 1);
        pids.emplace_back(buf);
    }
    const SplitAssignment splits =
        split_participants(pids, params.split_fractions, params.seed);

    const auto specs = default_modality_specs();
    std::vector<ManifestEntry> manifest;
    for (int i = 0; i < params.n_participants; ++i) {
        const uint64_t rec_seed = params.seed * 1000003ULL + static_cast<uint64_t>(i) + 1;
        std::mt19937_64 demo_rng(rec_seed ^ 0x9e3779b97f4a7c15ULL);
        const double age = std::uniform_real_distribution<double>(5.0, 85.0)(demo_rng);
        const int sex = static_cast<int>(demo_rng() & 1);

        ManifestEntry e;
        e.participant_id = pids[i];
        e.path = cache_dir;
        e.split = splits.at(pids[i]);
        e.age = age;
        e.sex = sex == 0 ? "M" : "F";
        manifest.push_back(e);

        bool cached = true;
        for (const auto& s : specs)
            cached = cached && clip_cache_exists(cache_dir, pids[i], s.name);
        if (cached) continue;

        const RawRecording rec = synthesize_recording(params.synth, rec_seed, pids[i]);
        std::vector<ClipBatch> clips = segment_clips(rec, specs);
        attach_labels(clips, rec.annotations);
        for (auto& cb : clips) {
            std::fill(cb.age_group.begin(), cb.age_group.end(),
                      static_cast<int>(age_group_of(age)));
            std::fill(cb.sex.begin(), cb.sex.end(), sex);
            write_clip_cache(cache_dir, pids[i], cb);
        }
    }
    save_manifest((fs::path(cache_dir) / "manifest.csv").string(), manifest);
    return manifest;
}

SplitStores open_split_stores(const std::string& cache_dir,
                              const std::vector<ManifestEntry>& manifest,
                              const std::vector<Modality>& modalities) {
    std::array<std::vector<std::string>, 4> ids;
    for (const auto& e : manifest) ids[static_cast<int>(e.split)].push_back(e.participant_id);
    SplitStores s;
    auto open = [&](Split sp) {
        const auto& v = ids[static_cast<int>(sp)];
        return v.empty() ? ClipStore() : ClipStore::open(cache_dir, v, modalities);
    };
    s.pretrain = open(Split::Pretrain);
    s.train = open(Split::Train);
    s.valid = open(Split::Valid);
    s.test = open(Split::Test);
    return s;
}

// ---------------------------------------------------------------------------
// Plans and provenance

Objective objective_for_subset(size_t n_modalities) {
    if (n_modalities == 0) throw std::invalid_argument("empty modality subset");
    if (n_modalities == 1) return Objective::SingleModality;
    if (n_modalities == 2) return Objective::Pairwise;
    return Objective::LeaveOneOut;
}

std::string subset_name(const std::vector<Modality>& mods) {
    std::string out;
    for (size_t i = 0; i < mods.size(); ++i) {
        if (i) out += '+';
        out += modality_name(mods[i]);
    }
    return out;
}

std::string config_hash(const nlohmann::json& config) {
    const std::string s = config.dump();
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void write_run_manifest(const std::string& dir, const nlohmann::json& config, uint64_t seed) {
    fs::create_directories(dir);
    nlohmann::json m;
    m["config"] = config;
    m["seed"] = seed;
    m["config_hash"] = config_hash(config);
    m["format_version"] = 1;
    std::ofstream os(fs::path(dir) / "run_manifest.json");
    if (!os) throw std::runtime_error("cannot write run manifest in " + dir);
    os << m.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Ablation

std::vector<std::vector<Modality>> ablation_subsets() {
    using M = Modality;
    return {{M::BAS, M::ECG, M::RESP}, {M::BAS, M::RESP}, {M::BAS, M::ECG},
            {M::ECG, M::RESP},         {M::BAS},          {M::RESP}};
}

namespace {

std::vector<ModalitySpec> specs_for(const std::vector<Modality>& subset) {
    std::vector<ModalitySpec> out;
    for (const auto& s : default_modality_specs())
        if (std::find(subset.begin(), subset.end(), s.name) != subset.end()) out.push_back(s);
    return out;
}

const char* source_modality_for(Task task) {
    // Stage structure lives in the brain channels, breathing events in the
    // respiratory ones.
    return task == Task::Sdb ? "RESP" : "BAS";
}

}  // namespace

std::vector<AblationOutcome> run_ablation(const SplitStores& stores, const HarnessConfig& cfg,
                                          const std::string& out_dir, std::ostream* log) {
    fs::create_directories(out_dir);
    std::vector<AblationOutcome> out;
    for (const auto& subset : ablation_subsets()) {
        AblationOutcome oc;
        oc.variant = subset_name(subset);
        oc.objective = objective_for_subset(subset.size());
        if (log) (*log) << "# variant " << oc.variant << " objective "
                        << objective_name(oc.objective) << "\n";

        const auto specs = specs_for(subset);
        std::vector<EncoderConfig> configs;
        for (const auto& s : specs)
            configs.push_back(desk_encoder_config(s.channel_count(), cfg.embed_dim));
        TrainConfig t = cfg.train;
        t.objective = oc.objective;
        t.seed = cfg.seed;

        Pretrainer pt(specs, configs, t);
        CheckpointSet ckpt = pt.pretrain(stores.pretrain, stores.valid, log);
        pt.restore(ckpt, ckpt.best_epoch >= 0 ? ckpt.best_epoch
                                              : static_cast<int>(ckpt.epochs.size()) - 1);

        EmbeddingSet embset = EmbeddingSet::merge(
            {pt.extract_embeddings(stores.train, Split::Train),
             pt.extract_embeddings(stores.test, Split::Test)});

        for (Task task : {Task::Stage5, Task::Sdb}) {
            const std::string source = source_modality_for(task);
            const Modality want = modality_from_name(source);
            if (std::find(subset.begin(), subset.end(), want) == subset.end()) {
                const std::string reason = std::string(task_name(task)) + ": skipped, no " +
                                           source + " encoder in subset " + oc.variant;
                oc.skipped.push_back(reason);
                if (log) (*log) << "# " << reason << "\n";
                continue;
            }
            auto curve = few_shot_curve(embset, cfg.fewshot_ks, task, cfg.fewshot_replicates,
                                        source, cfg.seed, cfg.probe);
            const std::string path = (fs::path(out_dir) / ("fewshot_" + oc.variant + "_" +
                                                           task_name(task) + ".csv"))
                                         .string();
            write_fewshot_csv(path, oc.variant, task, curve);
            oc.curves[task_name(task)] = std::move(curve);
        }
        out.push_back(std::move(oc));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Supervised baseline

namespace {

const std::vector<int>& store_labels(const ClipStore& s, Task task) {
    switch (task) {
        case Task::Stage5: return s.stage_label;
        case Task::Sdb: return s.sdb_label;
        case Task::Age4: return s.age_group;
        case Task::Sex: return s.sex;
    }
    throw std::invalid_argument("unknown task");
}

std::vector<int> labeled_indices(const ClipStore& s, Task task) {
    const auto& y = store_labels(s, task);
    std::vector<int> idx;
    for (int i = 0; i < s.n_clips(); ++i)
        if (y[i] >= 0) idx.push_back(i);
    return idx;
}

struct Head {
    int k = 0, d = 0;
    std::vector<float> w, b, gw, gb, vw, vb;

    Head(int k_, int d_, uint64_t seed) : k(k_), d(d_) {
        w.assign(static_cast<size_t>(k) * d, 0.0f);
        b.assign(k, 0.0f);
        gw = w;
        gb = b;
        vw = w;
        vb = b;
        std::mt19937_64 rng(seed);
        std::normal_distribution<float> nd(0.0f, 0.01f);
        for (auto& x : w) x = nd(rng);
    }

    // logits (B, k) from features (B, d).
    Eigen::MatrixXd logits(const Eigen::MatrixXf& h) const {
        Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
            W(w.data(), k, d);
        Eigen::MatrixXd out = (h * W.transpose()).cast<double>();
        for (int c = 0; c < k; ++c) out.col(c).array() += b[c];
        return out;
    }
};

double softmax_ce(Eigen::MatrixXd& logits, const std::vector<int>& y) {
    double loss = 0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double m = logits.row(i).maxCoeff();
        logits.row(i) = (logits.row(i).array() - m).exp();
        logits.row(i) /= logits.row(i).sum();
        loss -= std::log(std::max(logits(i, y[i]), 1e-300));
    }
    return loss / logits.rows();
}

void sgd_step(std::vector<nn::ParamRef>& params, std::vector<std::vector<float>>& vel,
              double momentum, double lr) {
    for (size_t p = 0; p < params.size(); ++p) {
        auto& v = vel[p];
        auto& val = *params[p].value;
        auto& g = *params[p].grad;
        for (size_t j = 0; j < val.size(); ++j) {
            v[j] = static_cast<float>(momentum) * v[j] + g[j];
            val[j] -= static_cast<float>(lr) * v[j];
        }
    }
}

}  // namespace

SupervisedResult run_supervised_baseline(Task task, const SplitStores& stores,
                                         const HarnessConfig& cfg, std::ostream* log) {
    const int k = task_class_count(task);
    const auto specs = default_modality_specs();
    const int d = cfg.embed_dim;
    const int dh = d * static_cast<int>(specs.size());

    std::vector<std::unique_ptr<Encoder>> encoders;
    std::vector<std::vector<std::vector<float>>> vel;
    for (size_t m = 0; m < specs.size(); ++m) {
        encoders.push_back(std::make_unique<Encoder>(
            specs[m], desk_encoder_config(specs[m].channel_count(), d),
            cfg.seed + 1000 + 17 * (m + 1)));
        std::vector<std::vector<float>> v;
        for (auto& p : encoders.back()->parameters()) v.emplace_back(p.value->size(), 0.0f);
        vel.push_back(std::move(v));
    }
    Head head(k, dh, cfg.seed + 4242);
    const float head_dropout = 0.5f;
    std::mt19937_64 drop_rng(cfg.seed + 77);

    const std::vector<int> train_idx = labeled_indices(stores.train, task);
    const std::vector<int> valid_idx = labeled_indices(stores.valid, task);
    const std::vector<int> test_idx = labeled_indices(stores.test, task);
    if (train_idx.empty()) throw std::invalid_argument("supervised baseline: no labeled clips");
    if (test_idx.empty()) throw std::invalid_argument("supervised baseline: no labeled test clips");
    const auto& y_train_all = store_labels(stores.train, task);

    auto forward_concat = [&](const ClipStore& s, const std::vector<int>& idx,
                              bool train) -> Eigen::MatrixXf {
        Eigen::MatrixXf h(static_cast<int>(idx.size()), dh);
        for (size_t m = 0; m < specs.size(); ++m) {
            const Batch3 x = s.gather(specs[m].name, idx);
            h.middleCols(static_cast<int>(m) * d, d) = encoders[m]->forward(x, train);
        }
        return h;
    };

    auto set_loss = [&](const ClipStore& s, const std::vector<int>& idx) -> double {
        if (idx.empty()) return std::numeric_limits<double>::quiet_NaN();
        const auto& y_all = store_labels(s, task);
        double total = 0;
        long n = 0;
        const int bs = 64;
        for (size_t start = 0; start < idx.size(); start += bs) {
            std::vector<int> b(idx.begin() + start,
                               idx.begin() + std::min(idx.size(), start + bs));
            std::vector<int> y;
            for (int i : b) y.push_back(y_all[i]);
            Eigen::MatrixXd logits = head.logits(forward_concat(s, b, false));
            total += softmax_ce(logits, y) * static_cast<double>(b.size());
            n += static_cast<long>(b.size());
        }
        return total / n;
    };

    SupervisedResult out;
    TrainConfig sched = cfg.train;
    double best = std::numeric_limits<double>::infinity();
    int bad = 0;
    std::vector<std::vector<std::vector<float>>> best_enc;
    std::vector<float> best_w = head.w, best_b = head.b;

    for (int epoch = 0; epoch < sched.max_epochs; ++epoch) {
        const double lr = lr_at_epoch(sched, epoch);
        std::vector<int> order = train_idx;
        std::mt19937_64 rng(cfg.seed * 1000003ULL + static_cast<uint64_t>(epoch) + 555);
        std::shuffle(order.begin(), order.end(), rng);

        double train_loss = 0;
        long n_seen = 0;
        for (size_t start = 0; start < order.size(); start += sched.batch_size) {
            std::vector<int> idx(order.begin() + start,
                                 order.begin() + std::min(order.size(),
                                                          start + sched.batch_size));
            const int bn = static_cast<int>(idx.size());
            std::vector<int> y;
            for (int i : idx) y.push_back(y_train_all[i]);

            Eigen::MatrixXf h = forward_concat(stores.train, idx, true);
            Eigen::MatrixXf mask(bn, dh);
            std::uniform_real_distribution<float> u(0.0f, 1.0f);
            for (int i = 0; i < bn; ++i)
                for (int j = 0; j < dh; ++j)
                    mask(i, j) = u(drop_rng) < head_dropout ? 0.0f : 1.0f / (1.0f - head_dropout);
            const Eigen::MatrixXf hd = h.cwiseProduct(mask);

            Eigen::MatrixXd p = head.logits(hd);
            train_loss += softmax_ce(p, y) * bn;
            n_seen += bn;
            for (int i = 0; i < bn; ++i) p(i, y[i]) -= 1.0;
            p /= bn;

            const Eigen::MatrixXf pf = p.cast<float>();
            Eigen::Map<Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
                GW(head.gw.data(), k, dh);
            Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic,
                                           Eigen::RowMajor>>
                W(head.w.data(), k, dh);
            GW = pf.transpose() * hd;
            for (int c = 0; c < k; ++c) head.gb[c] = pf.col(c).sum();

            const Eigen::MatrixXf gh = (pf * W).cwiseProduct(mask);
            for (size_t m = 0; m < specs.size(); ++m) {
                encoders[m]->zero_grad();
                encoders[m]->backward(gh.middleCols(static_cast<int>(m) * d, d));
                sgd_step(encoders[m]->parameters(), vel[m], sched.momentum, lr);
            }
            for (size_t j = 0; j < head.w.size(); ++j) {
                head.vw[j] = static_cast<float>(sched.momentum) * head.vw[j] + head.gw[j];
                head.w[j] -= static_cast<float>(lr) * head.vw[j];
            }
            for (int c = 0; c < k; ++c) {
                head.vb[c] = static_cast<float>(sched.momentum) * head.vb[c] + head.gb[c];
                head.b[c] -= static_cast<float>(lr) * head.vb[c];
            }
        }
        train_loss /= std::max<long>(1, n_seen);
        double valid_loss = set_loss(stores.valid, valid_idx);
        if (!std::isfinite(valid_loss)) valid_loss = train_loss;
        out.log.push_back({epoch, train_loss, valid_loss, lr, 0.0});
        if (log) {
            char buf[160];
            std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6g\n", epoch, train_loss, valid_loss,
                          lr);
            (*log) << buf << std::flush;
        }

        if (valid_loss < best) {
            best = valid_loss;
            bad = 0;
            best_enc.clear();
            for (auto& e : encoders) best_enc.push_back(e->snapshot_state());
            best_w = head.w;
            best_b = head.b;
        } else if (++bad >= sched.early_stop_patience) {
            break;
        }
    }

    for (size_t m = 0; m < encoders.size(); ++m) encoders[m]->restore_state(best_enc[m]);
    head.w = best_w;
    head.b = best_b;

    const auto& y_test_all = store_labels(stores.test, task);
    std::vector<int> y_test;
    for (int i : test_idx) y_test.push_back(y_test_all[i]);
    Eigen::MatrixXd proba(static_cast<int>(test_idx.size()), k);
    const int bs = 64;
    for (size_t start = 0; start < test_idx.size(); start += bs) {
        std::vector<int> b(test_idx.begin() + start,
                           test_idx.begin() + std::min(test_idx.size(), start + bs));
        Eigen::MatrixXd logits = head.logits(forward_concat(stores.test, b, false));
        for (Eigen::Index i = 0; i < logits.rows(); ++i) {
            const double mx = logits.row(i).maxCoeff();
            logits.row(i) = (logits.row(i).array() - mx).exp();
            logits.row(i) /= logits.row(i).sum();
        }
        proba.middleRows(static_cast<Eigen::Index>(start), logits.rows()) = logits;
    }
    std::vector<int> preds(test_idx.size());
    for (Eigen::Index i = 0; i < proba.rows(); ++i) {
        Eigen::Index c;
        proba.row(i).maxCoeff(&c);
        preds[i] = static_cast<int>(c);
    }
    EvalOptions eo;
    eo.seed = cfg.seed;
    out.rows = rows_from_scores(task, proba, preds, y_test, eo);
    return out;
}

// ---------------------------------------------------------------------------
// External validation

ExternalResult run_external_validation(const std::string& checkpoint_path,
                                       const std::string& external_manifest_path,
                                       const std::string& alias_path,
                                       const std::string& cache_dir, const HarnessConfig& cfg,
                                       std::ostream* log) {
    const std::vector<ManifestEntry> entries = load_manifest(external_manifest_path);
    if (entries.empty())
        throw std::invalid_argument("external validation: empty manifest " +
                                    external_manifest_path);
    fs::create_directories(cache_dir);

    LoadOptions lo;
    if (!alias_path.empty()) lo.aliases = AliasMap::load(alias_path);
    lo.pad_missing = true;
    const auto specs = default_modality_specs();

    ExternalResult out;
    std::set<std::string> ok;
    for (const auto& e : entries) {
        try {
            bool cached = true;
            for (const auto& s : specs)
                cached = cached && clip_cache_exists(cache_dir, e.participant_id, s.name);
            if (!cached) {
                RawRecording rec = load_recording(e.path, specs, lo);
                rec = resample(rec, kTargetHz);
                std::vector<ClipBatch> clips = segment_clips(rec, specs);
                attach_labels(clips, rec.annotations);
                const int ag =
                    e.age >= 0 ? static_cast<int>(age_group_of(e.age)) : kLabelAbsent;
                const int sx = e.sex == "M" ? 0 : (e.sex == "F" ? 1 : kLabelAbsent);
                for (auto& cb : clips) {
                    std::fill(cb.age_group.begin(), cb.age_group.end(), ag);
                    std::fill(cb.sex.begin(), cb.sex.end(), sx);
                    write_clip_cache(cache_dir, e.participant_id, cb);
                }
            }
            ok.insert(e.participant_id);
        } catch (const std::exception& ex) {
            out.skipped.push_back(e.participant_id + ": " + ex.what());
            if (log) (*log) << "# skip " << e.participant_id << ": " << ex.what() << "\n";
        }
    }
    if (ok.empty()) throw std::runtime_error("external validation: every recording failed");

    Pretrainer pt = Pretrainer::load_checkpoint(checkpoint_path);
    std::vector<std::string> train_ids, test_ids;
    for (const auto& e : entries) {
        if (!ok.count(e.participant_id)) continue;
        if (e.split == Split::Test) test_ids.push_back(e.participant_id);
        else train_ids.push_back(e.participant_id);
    }
    if (train_ids.empty() || test_ids.empty())
        throw std::invalid_argument("external validation: need both train and test recordings");

    const auto mods = pt.config().modalities;
    const ClipStore train_store = ClipStore::open(cache_dir, train_ids, mods);
    const ClipStore test_store = ClipStore::open(cache_dir, test_ids, mods);
    out.n_train_clips = train_store.n_clips();
    out.n_test_clips = test_store.n_clips();

    EmbeddingSet embset =
        EmbeddingSet::merge({pt.extract_embeddings(train_store, Split::Train),
                             pt.extract_embeddings(test_store, Split::Test)});
    EvalOptions eo;
    eo.seed = cfg.seed;
    eo.probe = cfg.probe;
    eo.with_f1 = true;
    out.rows = evaluate_task(embset, Task::Stage5, eo);
    return out;
}

// ---------------------------------------------------------------------------
// Figures

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
    return cols;
}

struct CurveTable {
    // variant -> k -> replicate values.
    std::map<std::string, std::map<int, std::vector<double>>> by_variant;
};

std::string svg_curves(const CurveTable& t, const std::string& title) {
    const int w = 640, h = 420, ml = 60, mr = 170, mt = 40, mb = 50;
    static const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c",
                                    "#d62728", "#9467bd", "#8c564b"};
    std::set<int> ks;
    double lo = 1.0, hi = 0.0;
    for (const auto& [_, curve] : t.by_variant)
        for (const auto& [k, vals] : curve) {
            ks.insert(k);
            for (double v : vals) {
                if (!std::isfinite(v)) continue;
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        }
    if (ks.empty()) return "";
    lo = std::floor(lo * 10) / 10;
    hi = std::min(1.0, std::ceil(hi * 10) / 10);
    if (hi <= lo) hi = lo + 0.1;
    const double x0 = std::log2(*ks.begin()), x1 = std::log2(*ks.rbegin());

    auto px = [&](int k) {
        const double f = x1 > x0 ? (std::log2(k) - x0) / (x1 - x0) : 0.5;
        return ml + f * (w - ml - mr);
    };
    auto py = [&](double v) { return h - mb - (v - lo) / (hi - lo) * (h - mt - mb); };

    std::ostringstream os;
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "'>\n";
    os << "<rect width='100%' height='100%' fill='white'/>\n";
    os << "<text x='" << w / 2 << "' y='22' text-anchor='middle' font-size='15'>" << title
       << "</text>\n";
    // axes
    os << "<line x1='" << ml << "' y1='" << h - mb << "' x2='" << w - mr << "' y2='" << h - mb
       << "' stroke='black'/>\n";
    os << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << h - mb
       << "' stroke='black'/>\n";
    for (int k : ks)
        os << "<text x='" << px(k) << "' y='" << h - mb + 18
           << "' text-anchor='middle' font-size='11'>" << k << "</text>\n";
    for (double v = lo; v <= hi + 1e-9; v += (hi - lo) / 4) {
        char lab[16];
        std::snprintf(lab, sizeof(lab), "%.2f", v);
        os << "<text x='" << ml - 8 << "' y='" << py(v) + 4
           << "' text-anchor='end' font-size='11'>" << lab << "</text>\n";
        os << "<line x1='" << ml << "' y1='" << py(v) << "' x2='" << w - mr << "' y2='" << py(v)
           << "' stroke='#dddddd'/>\n";
    }
    os << "<text x='" << (ml + w - mr) / 2 << "' y='" << h - 12
       << "' text-anchor='middle' font-size='12'>labeled participants</text>\n";

    int ci = 0;
    for (const auto& [variant, curve] : t.by_variant) {
        const char* color = kColors[ci % 6];
        std::ostringstream pts;
        for (const auto& [k, vals] : curve) {
            double sum = 0;
            int n = 0;
            for (double v : vals)
                if (std::isfinite(v)) {
                    sum += v;
                    ++n;
                }
            if (n == 0) continue;
            pts << px(k) << ',' << py(sum / n) << ' ';
        }
        os << "<polyline points='" << pts.str() << "' fill='none' stroke='" << color
           << "' stroke-width='2'/>\n";
        os << "<text x='" << w - mr + 12 << "' y='" << mt + 16 + 18 * ci << "' fill='" << color
           << "' font-size='12'>" << variant << "</text>\n";
        ++ci;
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace

std::vector<std::string> emit_figures(const std::string& results_dir,
                                      const std::string& figures_dir) {
    // task -> metric -> table
    std::map<std::string, std::map<std::string, CurveTable>> tables;
    std::vector<fs::path> files;
    for (const auto& ent : fs::directory_iterator(results_dir)) {
        const std::string name = ent.path().filename().string();
        if (ent.is_regular_file() && name.rfind("fewshot", 0) == 0 &&
            ent.path().extension() == ".csv")
            files.push_back(ent.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        std::ifstream is(f);
        std::string line;
        std::getline(is, line);  // header
        while (std::getline(is, line)) {
            const auto cols = split_csv_line(line);
            if (cols.size() < 6) continue;
            const std::string &variant = cols[0], &task = cols[1];
            const int k = std::stoi(cols[2]);
            tables[task]["auroc"].by_variant[variant][k].push_back(std::stod(cols[4]));
            tables[task]["auprc"].by_variant[variant][k].push_back(std::stod(cols[5]));
        }
    }

    fs::create_directories(figures_dir);
    std::vector<std::string> written;
    for (const auto& [task, by_metric] : tables) {
        for (const auto& [metric, table] : by_metric) {
            const std::string stem = "fig_" + task + "_" + metric;
            const fs::path csv_path = fs::path(figures_dir) / (stem + ".csv");
            std::ofstream csv(csv_path);
            csv << "variant,k,mean_" << metric << ",n_replicates\n";
            for (const auto& [variant, curve] : table.by_variant)
                for (const auto& [k, vals] : curve) {
                    double sum = 0;
                    int n = 0;
                    for (double v : vals)
                        if (std::isfinite(v)) {
                            sum += v;
                            ++n;
                        }
                    csv << variant << ',' << k << ','
                        << (n ? std::to_string(sum / n) : "nan") << ',' << n << '\n';
                }
            written.push_back(csv_path.string());

            const std::string svg = svg_curves(table, task + " macro " + metric);
            if (!svg.empty()) {
                const fs::path svg_path = fs::path(figures_dir) / (stem + ".svg");
                std::ofstream os(svg_path);
                os << svg;
                written.push_back(svg_path.string());
            }
        }
    }
    return written;
}

}  // namespace sleepmm
