#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "sleepmm/data_pipeline.hpp"
#include "sleepmm/pretrainer.hpp"
#include "sleepmm/probe.hpp"
#include "sleepmm/synth.hpp"

namespace sleepmm {

// ---------------------------------------------------------------------------
// Synthetic corpus

struct CorpusParams {
    int n_participants = 40;
    SynthParams synth;
    // pretrain, train, valid, test participant fractions.
    std::array<double, 4> split_fractions{0.5, 0.25, 0.025, 0.225};
    uint64_t seed = 0;
};

// Synthesizes one recording per participant, segments and labels the clips,
// writes the clip caches into cache_dir and returns the manifest (also saved
// as cache_dir/manifest.csv).
std::vector<ManifestEntry> build_synthetic_corpus(const std::string& cache_dir,
                                                  const CorpusParams& params);

struct SplitStores {
    ClipStore pretrain, train, valid, test;
};

SplitStores open_split_stores(const std::string& cache_dir,
                              const std::vector<ManifestEntry>& manifest,
                              const std::vector<Modality>& modalities);

// ---------------------------------------------------------------------------
// Plans and provenance

struct ExperimentPlan {
    std::string name;
    Objective objective = Objective::LeaveOneOut;
    std::vector<Modality> modalities{Modality::BAS, Modality::ECG, Modality::RESP};
    std::vector<Task> tasks{Task::Stage5, Task::Sdb};
    std::string out_dir;
    uint64_t seed = 0;
};

// One modality forces the temporal-adjacent objective; two use pairwise;
// three use leave-one-out.
Objective objective_for_subset(size_t n_modalities);

std::string subset_name(const std::vector<Modality>& mods);

// FNV-1a over the canonical config dump; manifests make a run re-runnable
// bit-identically at the data level.
std::string config_hash(const nlohmann::json& config);
void write_run_manifest(const std::string& dir, const nlohmann::json& config, uint64_t seed);

// ---------------------------------------------------------------------------
// Harness operations

struct HarnessConfig {
    TrainConfig train;
    int embed_dim = 128;
    std::vector<int> fewshot_ks = default_fewshot_grid();
    int fewshot_replicates = kDefaultFewShotReplicates;
    ProbeConfig probe;
    uint64_t seed = 0;
};

// Fig. 3 legend set: every subset retained in the ablation study.
std::vector<std::vector<Modality>> ablation_subsets();

struct AblationOutcome {
    std::string variant;
    Objective objective;
    // task -> few-shot curve; stage probes read BAS embeddings, SDB probes
    // read RESP embeddings.
    std::map<std::string, std::vector<FewShotPoint>> curves;
    std::vector<std::string> skipped;  // "task: reason"
};

std::vector<AblationOutcome> run_ablation(const SplitStores& stores, const HarnessConfig& cfg,
                                          const std::string& out_dir, std::ostream* log = nullptr);

// End-to-end classifier: the three modality encoders feed a concatenated
// embedding, dropout and a linear head, trained with cross-entropy under the
// pretraining recipe.
struct SupervisedResult {
    std::vector<MetricsRow> rows;
    std::vector<EpochRecord> log;
};

SupervisedResult run_supervised_baseline(Task task, const SplitStores& stores,
                                         const HarnessConfig& cfg, std::ostream* log = nullptr);

// Freezes a pretraining checkpoint and probes stage labels on an external
// cohort ingested through the alias map (missing channels zero-padded).
// Recordings that fail to ingest are skipped and summarized in `skipped`.
struct ExternalResult {
    std::vector<MetricsRow> rows;
    std::vector<std::string> skipped;
    int n_train_clips = 0, n_test_clips = 0;
};

ExternalResult run_external_validation(const std::string& checkpoint_path,
                                       const std::string& external_manifest_path,
                                       const std::string& alias_path,
                                       const std::string& cache_dir, const HarnessConfig& cfg,
                                       std::ostream* log = nullptr);

// Renders every few-shot table under results_dir as one SVG per
// (task, metric) with one line per variant, plus the averaged numbers as CSV.
std::vector<std::string> emit_figures(const std::string& results_dir,
                                      const std::string& figures_dir);

}  // namespace sleepmm
