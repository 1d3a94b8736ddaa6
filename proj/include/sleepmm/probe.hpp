#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "sleepmm/embedding_set.hpp"
#include "sleepmm/types.hpp"

namespace sleepmm {

struct ProbeConfig {
    int max_iterations = 10000;
    bool balanced_class_weights = true;
    double tol = 1e-6;
    double l2 = 1.0;
};

// L2-penalized multinomial logistic regression on standardized features,
// fit with L-BFGS.
struct ProbeModel {
    Eigen::MatrixXd W;  // (n_classes, D)
    Eigen::VectorXd b;
    Eigen::VectorXd feat_mean, feat_scale;
    int n_classes = 0;
    bool converged = true;
    int iterations = 0;

    Eigen::MatrixXd predict_proba(const Eigen::MatrixXf& X) const;
    std::vector<int> predict(const Eigen::MatrixXf& X) const;
};

// Per-class weights n/(k*n_c) (the balanced heuristic).
std::vector<double> balanced_class_weights(const std::vector<int>& y, int n_classes);

ProbeModel fit_probe(const Eigen::MatrixXf& X, const std::vector<int>& y,
                     const ProbeConfig& cfg = {});

enum class Task { Stage5, Sdb, Age4, Sex };
const char* task_name(Task t);
Task task_from_name(const std::string& s);
int task_class_count(Task t);
const char* task_class_name(Task t, int c);

enum class Strata { None, Age, Sex };
Strata strata_from_name(const std::string& s);

// Extracts this task's labels from an embedding set; -1 marks unusable rows.
std::vector<int> task_labels(const EmbeddingSet& e, Task t);

struct EvalOptions {
    std::string source = "fused";
    Strata strata = Strata::None;
    ProbeConfig probe;
    int n_boot = 1000;
    uint64_t seed = 0;
    bool with_f1 = false;
};

// Fits a probe on the train-split rows and reports per-class and macro
// AUROC/AUPRC (and optionally F1) with bootstrap CIs on the test split.
std::vector<MetricsRow> evaluate_task(const EmbeddingSet& embset, Task task,
                                      const EvalOptions& opt = {});

// Metric rows for an explicit probability matrix; lets non-probe models
// (e.g. an end-to-end classifier) share the same report format.
std::vector<MetricsRow> rows_from_scores(Task task, const Eigen::MatrixXd& proba,
                                         const std::vector<int>& predictions,
                                         const std::vector<int>& labels, const EvalOptions& opt,
                                         const std::string& stratum = "all");

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);

struct FewShotPoint {
    int k = 0;
    int replicate = 0;
    double macro_auroc = 0, macro_auprc = 0;
};

// {1, 2, 4, ..., 128, -1} where -1 means "all participants".
std::vector<int> default_fewshot_grid();
constexpr int kDefaultFewShotReplicates = 3;

// Samples k train-split participants per replicate, fits a probe on their
// clips and evaluates on the full test split.
std::vector<FewShotPoint> few_shot_curve(const EmbeddingSet& embset, const std::vector<int>& ks,
                                         Task task, int replicates = kDefaultFewShotReplicates,
                                         const std::string& source = "fused", uint64_t seed = 0,
                                         const ProbeConfig& probe = {});

void write_fewshot_csv(const std::string& path, const std::string& variant, Task task,
                       const std::vector<FewShotPoint>& points);

}  // namespace sleepmm
