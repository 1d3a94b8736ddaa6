#include "sleepmm/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <stdexcept>

namespace sleepmm {

namespace {
void check_sizes(const std::vector<double>& s, const std::vector<int>& y) {
    if (s.size() != y.size() || s.empty())
        throw std::invalid_argument("metric: scores and labels must be equal-length, non-empty");
}
}  // namespace

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
    check_sizes(scores, labels);
    const size_t n = scores.size();
    size_t n_pos = 0;
    for (int y : labels) n_pos += y != 0;
    const size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw std::invalid_argument("auroc: undefined, only one class present");

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] < scores[b]; });

    // Average ranks over tie groups; U = sum of positive ranks - n1(n1+1)/2.
    double rank_sum_pos = 0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (size_t k = i; k <= j; ++k)
            if (labels[order[k]] != 0) rank_sum_pos += avg_rank;
        i = j + 1;
    }
    const double u = rank_sum_pos - static_cast<double>(n_pos) * (n_pos + 1) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double auprc(const std::vector<double>& scores, const std::vector<int>& labels) {
    check_sizes(scores, labels);
    size_t n_pos = 0;
    for (int y : labels) n_pos += y != 0;
    if (n_pos == 0) throw std::invalid_argument("auprc: undefined, no positives");

    std::vector<size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] > scores[b]; });

    double ap = 0;
    size_t tp = 0, taken = 0, i = 0;
    while (i < order.size()) {
        size_t j = i;
        size_t block_tp = labels[order[i]] != 0;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) {
            ++j;
            block_tp += labels[order[j]] != 0;
        }
        tp += block_tp;
        taken += j - i + 1;
        const double precision = static_cast<double>(tp) / static_cast<double>(taken);
        ap += precision * static_cast<double>(block_tp) / static_cast<double>(n_pos);
        i = j + 1;
    }
    return ap;
}

double f1_binary(const std::vector<int>& predictions, const std::vector<int>& labels) {
    if (predictions.size() != labels.size() || predictions.empty())
        throw std::invalid_argument("f1: predictions and labels must be equal-length, non-empty");
    size_t tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < labels.size(); ++i) {
        const bool p = predictions[i] != 0, y = labels[i] != 0;
        tp += p && y;
        fp += p && !y;
        fn += !p && y;
    }
    const double denom = 2.0 * tp + fp + fn;
    return denom > 0 ? 2.0 * tp / denom : 0.0;
}

std::pair<double, double> bootstrap_ci(const std::vector<double>& scores,
                                       const std::vector<int>& labels, const MetricFn& metric,
                                       int n_boot, uint64_t seed) {
    check_sizes(scores, labels);
    if (n_boot < 100) throw std::invalid_argument("bootstrap_ci: n_boot must be >= 100");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<size_t> pick(0, scores.size() - 1);
    std::vector<double> values;
    values.reserve(n_boot);
    std::vector<double> bs(scores.size());
    std::vector<int> by(labels.size());
    for (int b = 0; b < n_boot; ++b) {
        for (int attempt = 0; attempt < 1000; ++attempt) {
            bool has0 = false, has1 = false;
            for (size_t i = 0; i < scores.size(); ++i) {
                const size_t j = pick(rng);
                bs[i] = scores[j];
                by[i] = labels[j];
                (by[i] != 0 ? has1 : has0) = true;
            }
            if (has0 && has1) break;
            if (attempt == 999)
                throw std::runtime_error("bootstrap_ci: cannot draw a two-class resample");
        }
        values.push_back(metric(bs, by));
    }
    std::sort(values.begin(), values.end());
    auto quantile = [&](double q) {
        const double pos = q * (values.size() - 1);
        const size_t lo = static_cast<size_t>(pos);
        const size_t hi = std::min(values.size() - 1, lo + 1);
        const double frac = pos - lo;
        return values[lo] * (1 - frac) + values[hi] * frac;
    };
    return {quantile(0.025), quantile(0.975)};
}

}  // namespace sleepmm
