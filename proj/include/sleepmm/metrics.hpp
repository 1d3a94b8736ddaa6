#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

namespace sleepmm {

// Mann-Whitney AUROC with the tie-as-half convention; both classes required.
double auroc(const std::vector<double>& scores, const std::vector<int>& binary_labels);

// Average precision (step-wise integral of precision over recall); requires
// at least one positive.
double auprc(const std::vector<double>& scores, const std::vector<int>& binary_labels);

double f1_binary(const std::vector<int>& predictions, const std::vector<int>& binary_labels);

using MetricFn = std::function<double(const std::vector<double>&, const std::vector<int>&)>;

// Percentile bootstrap (2.5/97.5). Resamples without both classes are redrawn.
std::pair<double, double> bootstrap_ci(const std::vector<double>& scores,
                                       const std::vector<int>& binary_labels,
                                       const MetricFn& metric, int n_boot = 1000,
                                       uint64_t seed = 0);

}  // namespace sleepmm
