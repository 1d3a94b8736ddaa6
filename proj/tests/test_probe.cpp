#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "sleepmm/metrics.hpp"
#include "sleepmm/probe.hpp"

using namespace sleepmm;

namespace {

// Concordant-pair oracle: (wins + ties/2) / (n1 * n0).
double auroc_pairs(const std::vector<double>& s, const std::vector<int>& y) {
    double num = 0;
    long pairs = 0;
    for (size_t i = 0; i < s.size(); ++i)
        for (size_t j = 0; j < s.size(); ++j) {
            if (!(y[i] != 0 && y[j] == 0)) continue;
            ++pairs;
            if (s[i] > s[j]) num += 1.0;
            else if (s[i] == s[j]) num += 0.5;
        }
    return num / pairs;
}

EmbeddingSet toy_embset(int n_per_split, int n_classes, uint64_t seed) {
    EmbeddingSet e;
    e.modalities = {Modality::BAS};
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> nd;
    const int d = 6;
    const int n = 2 * n_per_split;
    e.fused.resize(n, d);
    e.emb.push_back(e.fused);
    for (int i = 0; i < n; ++i) {
        const int c = i % n_classes;
        e.participant_ids.push_back("p" + std::to_string(i % 10 + (i < n_per_split ? 0 : 10)));
        e.clip_indices.push_back(i);
        e.stage_label.push_back(c);
        e.sdb_label.push_back(c % 2);
        e.age_group.push_back(i % 4);
        e.sex.push_back(i % 2);
        e.split.push_back(static_cast<int>(i < n_per_split ? Split::Train : Split::Test));
        for (int j = 0; j < d; ++j)
            e.fused(i, j) = nd(rng) * 0.4f + (j == c ? 2.0f : 0.0f);
    }
    e.emb[0] = e.fused;
    return e;
}

}  // namespace

TEST_CASE("auroc oracle values") {
    CHECK(auroc({0.9, 0.1}, {1, 0}) == 1.0);
    CHECK(auroc({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0}) == 0.5);
    CHECK(auroc({0.8, 0.6, 0.4, 0.2}, {1, 0, 1, 0}) == 0.75);
    CHECK_THROWS(auroc({0.1, 0.2}, {1, 1}));

    std::mt19937_64 rng(2);
    std::uniform_int_distribution<int> nd(2, 50), vals(0, 9);
    for (int c = 0; c < 100; ++c) {
        const int n = nd(rng);
        std::vector<double> s(n);
        std::vector<int> y(n);
        bool pos = false, neg = false;
        for (int i = 0; i < n; ++i) {
            s[i] = vals(rng) / 10.0;  // deliberate ties
            y[i] = static_cast<int>(rng() & 1);
            (y[i] ? pos : neg) = true;
        }
        if (!pos || !neg) {
            --c;
            continue;
        }
        CHECK(std::abs(auroc(s, y) - auroc_pairs(s, y)) < 1e-12);
    }

    // Random scores on a large sample sit at chance.
    std::vector<double> s(5000);
    std::vector<int> y(5000);
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < 5000; ++i) {
        s[i] = u(rng);
        y[i] = static_cast<int>(rng() & 1);
    }
    const double a = auroc(s, y);
    CHECK(a > 0.48);
    CHECK(a < 0.52);
}

TEST_CASE("auprc staircase") {
    CHECK(auprc({0.8, 0.6, 0.4}, {1, 0, 1}) == doctest::Approx(5.0 / 6).epsilon(1e-12));
    CHECK(auprc({0.9, 0.8, 0.1}, {1, 1, 0}) == doctest::Approx(1.0));
    CHECK_THROWS(auprc({0.1, 0.2}, {0, 0}));

    // Random scores approach prevalence for large N.
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<double> s(20000);
    std::vector<int> y(20000);
    for (size_t i = 0; i < s.size(); ++i) {
        s[i] = u(rng);
        y[i] = u(rng) < 0.3;
    }
    CHECK(auprc(s, y) == doctest::Approx(0.3).epsilon(0.05));

    // Exhaustive tie-block oracle on small instances.
    std::uniform_int_distribution<int> nd(2, 20), vals(0, 4);
    for (int c = 0; c < 100; ++c) {
        const int n = nd(rng);
        std::vector<double> sc(n);
        std::vector<int> yy(n);
        int npos = 0;
        for (int i = 0; i < n; ++i) {
            sc[i] = vals(rng) / 4.0;
            yy[i] = static_cast<int>(rng() & 1);
            npos += yy[i];
        }
        if (npos == 0) {
            --c;
            continue;
        }
        // Oracle: group by descending unique score, accumulate precision mass.
        std::vector<double> uniq = sc;
        std::sort(uniq.begin(), uniq.end(), std::greater<>());
        uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
        double ap = 0;
        int tp = 0, taken = 0;
        for (double t : uniq) {
            int btp = 0, bn = 0;
            for (int i = 0; i < n; ++i)
                if (sc[i] == t) {
                    ++bn;
                    btp += yy[i];
                }
            tp += btp;
            taken += bn;
            ap += (static_cast<double>(tp) / taken) * btp / npos;
        }
        CHECK(std::abs(auprc(sc, yy) - ap) < 1e-12);
    }
}

TEST_CASE("f1") {
    CHECK(f1_binary({1, 1, 0, 0}, {1, 1, 0, 0}) == 1.0);
    CHECK(f1_binary({1, 0, 0}, {1, 1, 0}) == doctest::Approx(2.0 / 3).epsilon(1e-12));
    CHECK(f1_binary({0, 0}, {0, 0}) == 0.0);
}

TEST_CASE("bootstrap confidence intervals") {
    std::vector<double> s = {0.9, 0.8, 0.7, 0.3, 0.2, 0.1};
    std::vector<int> y = {1, 1, 1, 0, 0, 0};
    const auto [lo, hi] = bootstrap_ci(s, y, auroc, 200, 5);
    CHECK(lo == 1.0);  // perfectly separated: every resample scores 1
    CHECK(hi == 1.0);
    const auto again = bootstrap_ci(s, y, auroc, 200, 5);
    CHECK(again.first == lo);
    CHECK(again.second == hi);
    CHECK_THROWS(bootstrap_ci(s, y, auroc, 50, 5));

    // Width shrinks roughly as 1/sqrt(N).
    std::mt19937_64 rng(8);
    std::normal_distribution<double> nd;
    auto width_at = [&](int n) {
        std::vector<double> sc(n);
        std::vector<int> yy(n);
        for (int i = 0; i < n; ++i) {
            yy[i] = i % 2;
            sc[i] = nd(rng) + (yy[i] ? 1.0 : 0.0);
        }
        const auto [l, h] = bootstrap_ci(sc, yy, auroc, 400, 9);
        return h - l;
    };
    const double w1 = width_at(400), w2 = width_at(1600);
    CHECK(w2 < w1);
    CHECK(w2 > w1 / 2 / 1.5);
}

TEST_CASE("balanced class weights") {
    std::vector<int> y(100, 0);
    y[0] = 1;
    const auto w = balanced_class_weights(y, 2);
    CHECK(w[0] == doctest::Approx(100.0 / (2 * 99)).epsilon(1e-12));
    CHECK(w[1] == doctest::Approx(100.0 / (2 * 1)).epsilon(1e-12));
    CHECK(w[1] / w[0] == doctest::Approx(99.0).epsilon(1e-12));
}

TEST_CASE("probe fits separable data and rejects degenerate labels") {
    std::mt19937_64 rng(4);
    std::normal_distribution<float> nd;
    const int n = 80;
    Eigen::MatrixXf x(n, 3);
    std::vector<int> y(n);
    for (int i = 0; i < n; ++i) {
        y[i] = i % 2;
        for (int j = 0; j < 3; ++j) x(i, j) = nd(rng) * 0.1f + (y[i] ? 3.0f : -3.0f);
    }
    const ProbeModel m = fit_probe(x, y);
    CHECK(m.converged);
    const auto pred = m.predict(x);
    CHECK(pred == y);

    std::vector<int> same(n, 1);
    CHECK_THROWS(fit_probe(x, same));
}

TEST_CASE("task metadata") {
    CHECK(task_from_name("stage5") == Task::Stage5);
    CHECK(task_class_count(Task::Stage5) == 5);
    CHECK(task_class_count(Task::Sdb) == 2);
    CHECK(task_class_count(Task::Age4) == 4);
    CHECK(std::string(task_name(Task::Sex)) == "sex");
    CHECK_THROWS(task_from_name("zodiac"));
}

TEST_CASE("evaluate_task report shape") {
    const EmbeddingSet e = toy_embset(400, 5, 11);
    EvalOptions opt;
    opt.n_boot = 150;
    const auto rows = evaluate_task(e, Task::Stage5, opt);
    // 5 per-class rows + 1 macro row, for auroc and auprc each.
    CHECK(rows.size() == 12);
    int macro = 0;
    for (const auto& r : rows) {
        CHECK(r.task == "stage5");
        CHECK(r.stratum == "all");
        if (r.class_name == "macro") ++macro;
        if (std::isfinite(r.point)) {
            CHECK(r.ci_low <= r.point + 1e-9);
            CHECK(r.ci_high >= r.point - 1e-9);
            CHECK(r.point >= 0.0);
            CHECK(r.point <= 1.0);
        }
    }
    CHECK(macro == 2);

    // The planted structure is linearly separable, so the probe scores high.
    for (const auto& r : rows)
        if (r.class_name == "macro" && r.metric == "auroc") CHECK(r.point > 0.9);

    SUBCASE("binary task reports the positive class only") {
        const auto b = evaluate_task(e, Task::Sdb, opt);
        CHECK(b.size() == 2);
        CHECK(b[0].class_name == "event");
    }

    SUBCASE("stratified report covers each stratum separately") {
        EvalOptions so = opt;
        so.strata = Strata::Sex;
        const auto rs = evaluate_task(e, Task::Stage5, so);
        int strata_rows = 0;
        for (const auto& r : rs)
            if (r.stratum != "all") ++strata_rows;
        CHECK(strata_rows == 24);  // two sexes x 12 rows
    }
}

TEST_CASE("few-shot grid and sampling") {
    CHECK(default_fewshot_grid() == std::vector<int>{1, 2, 4, 8, 16, 32, 64, 128, -1});

    const EmbeddingSet e = toy_embset(300, 2, 13);
    const auto pts = few_shot_curve(e, {1, 4, -1}, Task::Sdb, 3, "fused", 7);
    CHECK(pts.size() == 9);
    for (const auto& p : pts) CHECK(p.replicate < 3);

    const auto again = few_shot_curve(e, {1, 4, -1}, Task::Sdb, 3, "fused", 7);
    for (size_t i = 0; i < pts.size(); ++i) {
        const bool both_nan = std::isnan(pts[i].macro_auroc) && std::isnan(again[i].macro_auroc);
        CHECK((both_nan || pts[i].macro_auroc == again[i].macro_auroc));
    }

    CHECK_THROWS(few_shot_curve(e, {5000}, Task::Sdb, 1, "fused", 7));
}
