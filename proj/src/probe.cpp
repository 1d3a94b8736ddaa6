#include "sleepmm/probe.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include "sleepmm/metrics.hpp"

namespace sleepmm {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Minimal L-BFGS with Armijo backtracking.
struct Lbfgs {
    int max_iter = 10000;
    double tol = 1e-6;
    int history = 10;

    template <typename F>
    std::pair<VectorXd, int> minimize(const F& fg, VectorXd x, bool* converged) const {
        VectorXd g(x.size());
        double f = fg(x, g);
        std::deque<VectorXd> s_hist, y_hist;
        std::deque<double> rho;
        *converged = false;
        int it = 0;
        for (; it < max_iter; ++it) {
            if (g.template lpNorm<Eigen::Infinity>() < tol) {
                *converged = true;
                break;
            }
            // Two-loop recursion.
            VectorXd q = g;
            std::vector<double> alpha(s_hist.size());
            for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
                alpha[i] = rho[i] * s_hist[i].dot(q);
                q -= alpha[i] * y_hist[i];
            }
            if (!s_hist.empty()) {
                const double gamma =
                    s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
                q *= gamma;
            }
            for (size_t i = 0; i < s_hist.size(); ++i) {
                const double beta = rho[i] * y_hist[i].dot(q);
                q += (alpha[i] - beta) * s_hist[i];
            }
            VectorXd dir = -q;
            double dg = dir.dot(g);
            if (dg >= 0) {  // not a descent direction, reset
                dir = -g;
                dg = -g.squaredNorm();
            }
            double step = 1.0;
            VectorXd x_new;
            VectorXd g_new(x.size());
            double f_new = f;
            bool ok = false;
            for (int ls = 0; ls < 40; ++ls) {
                x_new = x + step * dir;
                f_new = fg(x_new, g_new);
                if (std::isfinite(f_new) && f_new <= f + 1e-4 * step * dg) {
                    ok = true;
                    break;
                }
                step *= 0.5;
            }
            if (!ok) break;
            const VectorXd s = x_new - x;
            const double sy = s.dot(g_new - g);
            if (sy > 1e-12) {
                s_hist.push_back(s);
                y_hist.push_back(g_new - g);
                rho.push_back(1.0 / sy);
                if (static_cast<int>(s_hist.size()) > history) {
                    s_hist.pop_front();
                    y_hist.pop_front();
                    rho.pop_front();
                }
            }
            x = x_new;
            f = f_new;
            g = g_new;
        }
        return {x, it};
    }
};

MatrixXd standardized(const Eigen::MatrixXf& X, const VectorXd& mean, const VectorXd& scale) {
    MatrixXd Z = X.cast<double>();
    Z.rowwise() -= mean.transpose();
    Z.array().rowwise() /= scale.transpose().array();
    return Z;
}

MatrixXd softmax_rows(MatrixXd Z) {
    for (Eigen::Index i = 0; i < Z.rows(); ++i) {
        const double m = Z.row(i).maxCoeff();
        Z.row(i) = (Z.row(i).array() - m).exp();
        Z.row(i) /= Z.row(i).sum();
    }
    return Z;
}

}  // namespace

std::vector<double> balanced_class_weights(const std::vector<int>& y, int n_classes) {
    std::vector<double> counts(n_classes, 0.0);
    for (int v : y) counts.at(v) += 1.0;
    std::vector<double> w(n_classes, 0.0);
    for (int c = 0; c < n_classes; ++c)
        if (counts[c] > 0) w[c] = static_cast<double>(y.size()) / (n_classes * counts[c]);
    return w;
}

ProbeModel fit_probe(const Eigen::MatrixXf& X, const std::vector<int>& y, const ProbeConfig& cfg) {
    if (static_cast<size_t>(X.rows()) != y.size())
        throw std::invalid_argument("fit_probe: feature/label row mismatch");
    if (y.empty()) throw std::invalid_argument("fit_probe: empty training set");
    const int k = *std::max_element(y.begin(), y.end()) + 1;
    std::set<int> distinct(y.begin(), y.end());
    if (distinct.size() < 2)
        throw std::invalid_argument("fit_probe: training labels contain a single class");
    const int d = static_cast<int>(X.cols());
    const int n = static_cast<int>(X.rows());

    ProbeModel model;
    model.n_classes = k;
    model.feat_mean = X.cast<double>().colwise().mean();
    VectorXd var = ((X.cast<double>().rowwise() - model.feat_mean.transpose()).array().square())
                       .colwise()
                       .mean();
    model.feat_scale = var.array().sqrt().max(1e-12);

    const MatrixXd Z = standardized(X, model.feat_mean, model.feat_scale);
    std::vector<double> cw(k, 1.0);
    if (cfg.balanced_class_weights) cw = balanced_class_weights(y, k);
    VectorXd w(n);
    double wsum = 0;
    for (int i = 0; i < n; ++i) {
        w(i) = cw[y[i]];
        wsum += w(i);
    }

    auto fg = [&](const VectorXd& theta, VectorXd& grad) -> double {
        Eigen::Map<const MatrixXd> W(theta.data(), k, d);
        Eigen::Map<const VectorXd> b(theta.data() + static_cast<size_t>(k) * d, k);
        MatrixXd logits = Z * W.transpose();
        logits.rowwise() += b.transpose();
        MatrixXd P = softmax_rows(std::move(logits));
        double loss = 0;
        for (int i = 0; i < n; ++i) loss -= w(i) * std::log(std::max(P(i, y[i]), 1e-300));
        loss /= wsum;
        loss += cfg.l2 / (2.0 * wsum) * W.squaredNorm();

        for (int i = 0; i < n; ++i) P(i, y[i]) -= 1.0;
        P.array().colwise() *= w.array();
        grad.resize(theta.size());
        Eigen::Map<MatrixXd> GW(grad.data(), k, d);
        Eigen::Map<VectorXd> Gb(grad.data() + static_cast<size_t>(k) * d, k);
        GW = (P.transpose() * Z) / wsum + (cfg.l2 / wsum) * W;
        Gb = P.colwise().sum().transpose() / wsum;
        return loss;
    };

    Lbfgs opt;
    opt.max_iter = cfg.max_iterations;
    opt.tol = cfg.tol;
    VectorXd theta = VectorXd::Zero(static_cast<Eigen::Index>(k) * d + k);
    bool converged = false;
    auto [sol, iters] = opt.minimize(fg, std::move(theta), &converged);
    model.converged = converged;
    model.iterations = iters;
    model.W = Eigen::Map<const MatrixXd>(sol.data(), k, d);
    model.b = Eigen::Map<const VectorXd>(sol.data() + static_cast<size_t>(k) * d, k);
    return model;
}

MatrixXd ProbeModel::predict_proba(const Eigen::MatrixXf& X) const {
    const MatrixXd Z = standardized(X, feat_mean, feat_scale);
    MatrixXd logits = Z * W.transpose();
    logits.rowwise() += b.transpose();
    return softmax_rows(std::move(logits));
}

std::vector<int> ProbeModel::predict(const Eigen::MatrixXf& X) const {
    const MatrixXd P = predict_proba(X);
    std::vector<int> out(P.rows());
    for (Eigen::Index i = 0; i < P.rows(); ++i) {
        Eigen::Index best;
        P.row(i).maxCoeff(&best);
        out[i] = static_cast<int>(best);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Tasks

const char* task_name(Task t) {
    switch (t) {
        case Task::Stage5: return "stage5";
        case Task::Sdb: return "sdb";
        case Task::Age4: return "age4";
        case Task::Sex: return "sex";
    }
    throw std::invalid_argument("unknown task");
}

Task task_from_name(const std::string& s) {
    if (s == "stage5") return Task::Stage5;
    if (s == "sdb") return Task::Sdb;
    if (s == "age4") return Task::Age4;
    if (s == "sex") return Task::Sex;
    throw std::invalid_argument("unknown task name: " + s);
}

int task_class_count(Task t) {
    switch (t) {
        case Task::Stage5: return 5;
        case Task::Sdb: return 2;
        case Task::Age4: return 4;
        case Task::Sex: return 2;
    }
    return 0;
}

const char* task_class_name(Task t, int c) {
    static const char* kStage[] = {"Wake", "Stage 1", "Stage 2", "Stage 3", "REM"};
    static const char* kSdb[] = {"no_event", "event"};
    static const char* kAge[] = {"0-18", "18-35", "35-50", "50+"};
    static const char* kSex[] = {"male", "female"};
    switch (t) {
        case Task::Stage5: return kStage[c];
        case Task::Sdb: return kSdb[c];
        case Task::Age4: return kAge[c];
        case Task::Sex: return kSex[c];
    }
    return "";
}

Strata strata_from_name(const std::string& s) {
    if (s == "none") return Strata::None;
    if (s == "age") return Strata::Age;
    if (s == "sex") return Strata::Sex;
    throw std::invalid_argument("unknown strata: " + s);
}

std::vector<int> task_labels(const EmbeddingSet& e, Task t) {
    switch (t) {
        case Task::Stage5: return e.stage_label;
        case Task::Sdb: return e.sdb_label;
        case Task::Age4: return e.age_group;
        case Task::Sex: return e.sex;
    }
    return {};
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

std::vector<int> rows_with(const EmbeddingSet& e, const std::vector<int>& y, Split split) {
    std::vector<int> idx;
    for (int i = 0; i < e.n(); ++i)
        if (e.split[i] == static_cast<int>(split) && y[i] >= 0) idx.push_back(i);
    return idx;
}

Eigen::MatrixXf take_rows(const Eigen::MatrixXf& X, const std::vector<int>& idx) {
    Eigen::MatrixXf out(static_cast<int>(idx.size()), X.cols());
    for (size_t i = 0; i < idx.size(); ++i) out.row(static_cast<int>(i)) = X.row(idx[i]);
    return out;
}

// Macro metric over one-vs-rest classes present in the labels.
double macro_metric(const MatrixXd& proba, const std::vector<int>& y, int n_classes,
                    const MetricFn& metric) {
    double sum = 0;
    int used = 0;
    for (int c = 0; c < n_classes; ++c) {
        std::vector<double> s(y.size());
        std::vector<int> b(y.size());
        bool pos = false, neg = false;
        for (size_t i = 0; i < y.size(); ++i) {
            s[i] = proba(static_cast<Eigen::Index>(i), c);
            b[i] = y[i] == c;
            (b[i] ? pos : neg) = true;
        }
        if (!pos || !neg) continue;
        sum += metric(s, b);
        ++used;
    }
    if (used == 0) throw std::invalid_argument("macro metric undefined: single-class labels");
    return sum / used;
}

std::pair<double, double> macro_bootstrap_ci(const MatrixXd& proba, const std::vector<int>& y,
                                             int n_classes, const MetricFn& metric, int n_boot,
                                             uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<size_t> pick(0, y.size() - 1);
    std::vector<double> vals;
    vals.reserve(n_boot);
    MatrixXd bp(proba.rows(), proba.cols());
    std::vector<int> by(y.size());
    for (int b = 0; b < n_boot; ++b) {
        double v = std::numeric_limits<double>::quiet_NaN();
        for (int attempt = 0; attempt < 100; ++attempt) {
            for (size_t i = 0; i < y.size(); ++i) {
                const size_t j = pick(rng);
                bp.row(static_cast<Eigen::Index>(i)) = proba.row(static_cast<Eigen::Index>(j));
                by[i] = y[j];
            }
            try {
                v = macro_metric(bp, by, n_classes, metric);
                break;
            } catch (const std::invalid_argument&) {
                continue;
            }
        }
        if (std::isfinite(v)) vals.push_back(v);
    }
    if (vals.empty()) return {std::numeric_limits<double>::quiet_NaN(),
                              std::numeric_limits<double>::quiet_NaN()};
    std::sort(vals.begin(), vals.end());
    auto q = [&](double p) { return vals[static_cast<size_t>(p * (vals.size() - 1))]; };
    return {q(0.025), q(0.975)};
}

void emit_rows(std::vector<MetricsRow>& rows, Task task, const std::string& stratum,
               const MatrixXd& proba, const std::vector<int>& preds, const std::vector<int>& y,
               const EvalOptions& opt) {
    const int k = task_class_count(task);
    const int n = static_cast<int>(y.size());
    const double nan = std::numeric_limits<double>::quiet_NaN();

    struct M {
        const char* name;
        MetricFn fn;
    };
    std::vector<M> metrics = {{"auroc", auroc}, {"auprc", auprc}};

    // Binary tasks report the positive class only; multi-class adds a macro row.
    const int c_begin = k == 2 ? 1 : 0;
    for (int c = c_begin; c < k; ++c) {
        std::vector<double> s(n);
        std::vector<int> b(n);
        int n_pos = 0;
        for (int i = 0; i < n; ++i) {
            s[i] = proba(i, c);
            b[i] = y[i] == c;
            n_pos += b[i];
        }
        const double prev = n > 0 ? static_cast<double>(n_pos) / n : 0.0;
        for (auto& m : metrics) {
            MetricsRow row{task_name(task), task_class_name(task, c), stratum, m.name,
                           nan,             nan,                      nan,     n,
                           prev};
            if (n_pos > 0 && n_pos < n) {
                row.point = m.fn(s, b);
                std::tie(row.ci_low, row.ci_high) =
                    bootstrap_ci(s, b, m.fn, opt.n_boot, opt.seed + 101 * c);
            }
            rows.push_back(std::move(row));
        }
        if (opt.with_f1) {
            std::vector<int> pred_b(n);
            for (int i = 0; i < n; ++i) pred_b[i] = preds[i] == c;
            MetricsRow row{task_name(task), task_class_name(task, c), stratum, "f1",
                           nan,             nan,                      nan,     n,
                           prev};
            if (n > 0) {
                row.point = f1_binary(pred_b, b);
                row.ci_low = row.ci_high = row.point;
            }
            rows.push_back(std::move(row));
        }
    }
    if (k > 2) {
        for (auto& m : metrics) {
            MetricsRow row{task_name(task), "macro", stratum, m.name, nan, nan, nan, n, 0.0};
            try {
                row.point = macro_metric(proba, y, k, m.fn);
                std::tie(row.ci_low, row.ci_high) =
                    macro_bootstrap_ci(proba, y, k, m.fn, opt.n_boot, opt.seed + 7);
            } catch (const std::invalid_argument&) {
            }
            rows.push_back(std::move(row));
        }
        if (opt.with_f1) {
            double sum = 0;
            for (int c = 0; c < k; ++c) {
                std::vector<int> pb(n), bb(n);
                for (int i = 0; i < n; ++i) {
                    pb[i] = preds[i] == c;
                    bb[i] = y[i] == c;
                }
                sum += f1_binary(pb, bb);
            }
            MetricsRow row{task_name(task), "macro", stratum, "f1", sum / k, sum / k, sum / k,
                           n,               0.0};
            rows.push_back(std::move(row));
        }
    }
}

}  // namespace

std::vector<MetricsRow> rows_from_scores(Task task, const MatrixXd& proba,
                                         const std::vector<int>& predictions,
                                         const std::vector<int>& labels, const EvalOptions& opt,
                                         const std::string& stratum) {
    std::vector<MetricsRow> rows;
    emit_rows(rows, task, stratum, proba, predictions, labels, opt);
    return rows;
}

std::vector<MetricsRow> evaluate_task(const EmbeddingSet& embset, Task task,
                                      const EvalOptions& opt) {
    const std::vector<int> y_all = task_labels(embset, task);
    const std::vector<int> train_idx = rows_with(embset, y_all, Split::Train);
    const std::vector<int> test_idx = rows_with(embset, y_all, Split::Test);
    if (train_idx.empty()) throw std::invalid_argument("evaluate_task: no labeled train rows");
    if (test_idx.empty()) throw std::invalid_argument("evaluate_task: no labeled test rows");

    const Eigen::MatrixXf& X = embset.matrix(opt.source);
    std::vector<int> y_train, y_test;
    for (int i : train_idx) y_train.push_back(y_all[i]);
    for (int i : test_idx) y_test.push_back(y_all[i]);

    ProbeModel model = fit_probe(take_rows(X, train_idx), y_train, opt.probe);
    const Eigen::MatrixXf X_test = take_rows(X, test_idx);
    MatrixXd proba = model.predict_proba(X_test);
    // Pad probabilities to the task's class count if a class was absent in train.
    const int k = task_class_count(task);
    if (proba.cols() < k) {
        MatrixXd padded = MatrixXd::Zero(proba.rows(), k);
        padded.leftCols(proba.cols()) = proba;
        proba = std::move(padded);
    }
    const std::vector<int> preds = model.predict(X_test);

    std::vector<MetricsRow> rows;
    emit_rows(rows, task, "all", proba, preds, y_test, opt);

    if (opt.strata != Strata::None) {
        const std::vector<int>& strat_all =
            opt.strata == Strata::Age ? embset.age_group : embset.sex;
        std::set<int> groups;
        for (int i : test_idx)
            if (strat_all[i] >= 0) groups.insert(strat_all[i]);
        for (int g : groups) {
            std::vector<int> sub;
            std::vector<int> y_sub;
            for (size_t i = 0; i < test_idx.size(); ++i)
                if (strat_all[test_idx[i]] == g) sub.push_back(static_cast<int>(i));
            MatrixXd p_sub(sub.size(), proba.cols());
            std::vector<int> preds_sub;
            for (size_t i = 0; i < sub.size(); ++i) {
                p_sub.row(static_cast<Eigen::Index>(i)) = proba.row(sub[i]);
                y_sub.push_back(y_test[sub[i]]);
                preds_sub.push_back(preds[sub[i]]);
            }
            const std::string label =
                opt.strata == Strata::Age
                    ? std::string("age:") + task_class_name(Task::Age4, g)
                    : std::string("sex:") + task_class_name(Task::Sex, g);
            emit_rows(rows, task, label, p_sub, preds_sub, y_sub, opt);
        }
    }
    return rows;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << "task,class,stratum,metric,point,ci_low,ci_high,n,prevalence\n";
    for (const auto& r : rows)
        os << r.task << ',' << r.class_name << ',' << r.stratum << ',' << r.metric << ','
           << r.point << ',' << r.ci_low << ',' << r.ci_high << ',' << r.n << ',' << r.prevalence
           << '\n';
}

// ---------------------------------------------------------------------------
// Few-shot

std::vector<int> default_fewshot_grid() { return {1, 2, 4, 8, 16, 32, 64, 128, -1}; }

std::vector<FewShotPoint> few_shot_curve(const EmbeddingSet& embset, const std::vector<int>& ks,
                                         Task task, int replicates, const std::string& source,
                                         uint64_t seed, const ProbeConfig& probe) {
    if (replicates < 1) throw std::invalid_argument("few_shot_curve: replicates must be >= 1");
    const std::vector<int> y_all = task_labels(embset, task);
    const std::vector<int> train_idx = rows_with(embset, y_all, Split::Train);
    const std::vector<int> test_idx = rows_with(embset, y_all, Split::Test);
    if (train_idx.empty() || test_idx.empty())
        throw std::invalid_argument("few_shot_curve: missing labeled train or test rows");

    std::vector<std::string> participants;
    for (int i : train_idx) participants.push_back(embset.participant_ids[i]);
    std::sort(participants.begin(), participants.end());
    participants.erase(std::unique(participants.begin(), participants.end()), participants.end());
    const int available = static_cast<int>(participants.size());

    const Eigen::MatrixXf& X = embset.matrix(source);
    const Eigen::MatrixXf X_test = take_rows(X, test_idx);
    std::vector<int> y_test;
    for (int i : test_idx) y_test.push_back(y_all[i]);
    const int kclasses = task_class_count(task);

    std::vector<FewShotPoint> out;
    for (int kv : ks) {
        const int k = kv < 0 ? available : kv;
        if (k > available)
            throw std::invalid_argument("few_shot_curve: k=" + std::to_string(k) + " exceeds " +
                                        std::to_string(available) + " available participants");
        for (int rep = 0; rep < replicates; ++rep) {
            std::mt19937_64 rng(seed * 7919ULL + static_cast<uint64_t>(k) * 131 + rep);
            std::vector<std::string> chosen = participants;
            std::shuffle(chosen.begin(), chosen.end(), rng);
            chosen.resize(k);
            std::set<std::string> chosen_set(chosen.begin(), chosen.end());

            std::vector<int> fit_idx;
            for (int i : train_idx)
                if (chosen_set.count(embset.participant_ids[i])) fit_idx.push_back(i);
            std::vector<int> y_fit;
            for (int i : fit_idx) y_fit.push_back(y_all[i]);

            FewShotPoint pt{kv < 0 ? available : kv, rep,
                            std::numeric_limits<double>::quiet_NaN(),
                            std::numeric_limits<double>::quiet_NaN()};
            try {
                ProbeModel model = fit_probe(take_rows(X, fit_idx), y_fit, probe);
                MatrixXd proba = model.predict_proba(X_test);
                if (proba.cols() < kclasses) {
                    MatrixXd padded = MatrixXd::Zero(proba.rows(), kclasses);
                    padded.leftCols(proba.cols()) = proba;
                    proba = std::move(padded);
                }
                pt.macro_auroc = macro_metric(proba, y_test, kclasses, auroc);
                pt.macro_auprc = macro_metric(proba, y_test, kclasses, auprc);
            } catch (const std::invalid_argument&) {
                // Single-class draw at tiny k: leave the replicate undefined.
            }
            out.push_back(pt);
        }
    }
    return out;
}

void write_fewshot_csv(const std::string& path, const std::string& variant, Task task,
                       const std::vector<FewShotPoint>& points) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << "variant,task,k,replicate,macro_auroc,macro_auprc\n";
    for (const auto& p : points)
        os << variant << ',' << task_name(task) << ',' << p.k << ',' << p.replicate << ','
           << p.macro_auroc << ',' << p.macro_auprc << '\n';
}

}  // namespace sleepmm
