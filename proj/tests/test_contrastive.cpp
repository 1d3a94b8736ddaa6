#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "sleepmm/contrastive.hpp"

using namespace sleepmm;
using Eigen::MatrixXd;

namespace {

// Direct scalar transcriptions of the two objectives, used as oracles.

double cosd(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
    return a.dot(b) / (a.norm() * b.norm());
}

double scalar_pairwise(const std::vector<MatrixXd>& emb, double tau, bool mean) {
    const int m_count = static_cast<int>(emb.size());
    const int n = static_cast<int>(emb[0].rows());
    const double et = std::exp(tau);
    double total = 0;
    int terms = 0;
    for (int i = 0; i < m_count; ++i)
        for (int j = 0; j < m_count; ++j) {
            if (i == j) continue;
            for (int k = 0; k < n; ++k) {
                double den = 0;
                for (int m = 0; m < n; ++m)
                    den += std::exp(cosd(emb[i].row(k), emb[j].row(m)) * et);
                const double num = std::exp(cosd(emb[i].row(k), emb[j].row(k)) * et);
                total += -std::log(num / den);
                ++terms;
            }
        }
    return mean ? total / terms : total;
}

double scalar_loo(const std::vector<MatrixXd>& emb, double tau, bool mean) {
    const int m_count = static_cast<int>(emb.size());
    const int n = static_cast<int>(emb[0].rows());
    const int d = static_cast<int>(emb[0].cols());
    const double et = std::exp(tau);
    double total = 0;
    int terms = 0;
    for (int i = 0; i < m_count; ++i) {
        MatrixXd ref = MatrixXd::Zero(n, d);
        for (int j = 0; j < m_count; ++j) {
            if (j == i) continue;
            for (int k = 0; k < n; ++k) ref.row(k) += emb[j].row(k) / emb[j].row(k).norm();
        }
        ref /= (m_count - 1);
        for (int k = 0; k < n; ++k) {
            double den = 0;
            for (int m = 0; m < n; ++m) den += std::exp(cosd(emb[i].row(k), ref.row(m)) * et);
            const double num = std::exp(cosd(emb[i].row(k), ref.row(k)) * et);
            total += -std::log(num / den);
            ++terms;
        }
    }
    return mean ? total / terms : total;
}

std::vector<MatrixXd> random_embeddings(int m_count, int n, int d, std::mt19937_64& rng) {
    std::normal_distribution<double> nd;
    std::vector<MatrixXd> emb;
    for (int i = 0; i < m_count; ++i) {
        MatrixXd x(n, d);
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < d; ++c) x(r, c) = nd(rng);
        emb.push_back(x);
    }
    return emb;
}

}  // namespace

TEST_CASE("cosine similarity basics") {
    MatrixXd eye = MatrixXd::Identity(3, 3);
    CHECK(cosine_similarity_matrix(eye, eye).isApprox(MatrixXd::Identity(3, 3), 1e-12));

    MatrixXd a(1, 2), b(1, 2);
    a << 1, 0;
    b << 1 / std::sqrt(2.0), 1 / std::sqrt(2.0);
    CHECK(cosine_similarity_matrix(a, b)(0, 0) == doctest::Approx(std::sqrt(2.0) / 2).epsilon(1e-12));

    // Positive row scaling leaves the diagonal at 1.
    MatrixXd c = 3.7 * eye;
    const MatrixXd s = cosine_similarity_matrix(c, eye);
    for (int i = 0; i < 3; ++i) CHECK(s(i, i) == doctest::Approx(1.0).epsilon(1e-12));

    MatrixXd z = MatrixXd::Zero(2, 2);
    CHECK_THROWS(cosine_similarity_matrix(z, eye.topRows(2)));
}

TEST_CASE("hand-computed pairwise values") {
    MatrixXd x(2, 2);
    x << 1, 0, 0, 1;
    std::vector<MatrixXd> emb = {x, x};
    const double expect = std::log(1.0 + std::exp(-1.0));  // 0.313261...
    CHECK(pairwise_loss(emb, 0.0).value == doctest::Approx(expect).epsilon(1e-9));

    // Single sample: softmax over one candidate.
    std::vector<MatrixXd> one = {x.topRows(1), x.topRows(1)};
    CHECK(pairwise_loss(one, 0.0).value == doctest::Approx(0.0));

    // All rows identical: uniform softmax, per-term loss log N.
    MatrixXd same(3, 2);
    same << 1, 1, 1, 1, 1, 1;
    std::vector<MatrixXd> u = {same, same};
    CHECK(pairwise_loss(u, 0.0).value == doctest::Approx(std::log(3.0)).epsilon(1e-9));
}

TEST_CASE("leave-one-out reference") {
    MatrixXd j1(1, 2), j2(1, 2);
    j1 << 1, 0;
    j2 << 0, 1;
    MatrixXd self(1, 2);
    self << 5, 5;
    std::vector<MatrixXd> emb = {self, j1, j2};
    const MatrixXd ref = leave_one_out_reference(emb, 0);
    CHECK(ref(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(ref(0, 1) == doctest::Approx(0.5).epsilon(1e-12));

    // Two modalities: the reference is the other one, normalized.
    std::vector<MatrixXd> two = {self, 4.0 * j1};
    CHECK(leave_one_out_reference(two, 0).isApprox(j1, 1e-12));

    CHECK_THROWS(leave_one_out_reference({self}, 0));
}

TEST_CASE("hand-computed leave-one-out values") {
    MatrixXd x(2, 2);
    x << 1, 0, 0, 1;
    std::vector<MatrixXd> emb = {x, x, x};
    const double expect = std::log(1.0 + std::exp(-1.0));
    CHECK(leave_one_out_loss(emb, 0.0).value == doctest::Approx(expect).epsilon(1e-9));

    std::vector<MatrixXd> one = {x.topRows(1), x.topRows(1), x.topRows(1)};
    CHECK(leave_one_out_loss(one, 0.0).value == doctest::Approx(0.0));
}

TEST_CASE("temperature sharpening drives aligned loss toward zero") {
    MatrixXd x = MatrixXd::Identity(4, 4);
    std::vector<MatrixXd> emb = {x, x};
    double prev = pairwise_loss(emb, 0.0, Aggregation::Mean, false).value;
    for (double tau : {1.0, 2.0, 3.0}) {
        const double v = pairwise_loss(emb, tau, Aggregation::Mean, false).value;
        CHECK(v < prev);
        prev = v;
    }
    CHECK(prev < 1e-6);
}

TEST_CASE("scalar transcription oracle") {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> nd(2, 8), dd(2, 4), md(2, 3);
    std::uniform_real_distribution<double> td(-1.0, 1.0);
    for (int c = 0; c < 60; ++c) {
        const int m = md(rng), n = nd(rng), d = dd(rng);
        const double tau = td(rng);
        const auto emb = random_embeddings(m, n, d, rng);
        const double pw = pairwise_loss(emb, tau, Aggregation::Mean, false).value;
        CHECK(pw == doctest::Approx(scalar_pairwise(emb, tau, true)).epsilon(1e-9));
        const double lo = leave_one_out_loss(emb, tau, Aggregation::Mean, false).value;
        CHECK(lo == doctest::Approx(scalar_loo(emb, tau, true)).epsilon(1e-9));
        // Sum aggregation is the same total without the term average.
        const double pws = pairwise_loss(emb, tau, Aggregation::Sum, false).value;
        CHECK(pws == doctest::Approx(scalar_pairwise(emb, tau, false)).epsilon(1e-9));
    }
}

TEST_CASE("batch permutation and per-row scale invariance") {
    std::mt19937_64 rng(11);
    auto emb = random_embeddings(3, 5, 4, rng);
    const double base_pw = pairwise_loss(emb, 0.3, Aggregation::Mean, false).value;
    const double base_lo = leave_one_out_loss(emb, 0.3, Aggregation::Mean, false).value;

    std::vector<int> perm = {3, 0, 4, 1, 2};
    std::vector<MatrixXd> permuted;
    for (const auto& e : emb) {
        MatrixXd p(e.rows(), e.cols());
        for (int i = 0; i < 5; ++i) p.row(i) = e.row(perm[i]);
        permuted.push_back(p);
    }
    CHECK(pairwise_loss(permuted, 0.3, Aggregation::Mean, false).value ==
          doctest::Approx(base_pw).epsilon(1e-12));
    CHECK(leave_one_out_loss(permuted, 0.3, Aggregation::Mean, false).value ==
          doctest::Approx(base_lo).epsilon(1e-12));

    for (double c : {0.1, 10.0}) {
        auto scaled = emb;
        scaled[1].row(2) *= c;
        CHECK(std::abs(pairwise_loss(scaled, 0.3, Aggregation::Mean, false).value - base_pw) <
              1e-9);
        CHECK(std::abs(leave_one_out_loss(scaled, 0.3, Aggregation::Mean, false).value -
                       base_lo) < 1e-9);
    }
}

TEST_CASE("analytic gradients match finite differences") {
    std::mt19937_64 rng(23);
    const double h = 1e-4;
    for (int c = 0; c < 6; ++c) {
        const int m = 2 + c % 2, n = 4, d = 3;
        auto emb = random_embeddings(m, n, d, rng);
        const double tau = 0.2;
        for (int which = 0; which < 2; ++which) {
            auto loss = [&](const std::vector<MatrixXd>& e, double t) {
                return which == 0 ? pairwise_loss(e, t, Aggregation::Mean, false).value
                                  : leave_one_out_loss(e, t, Aggregation::Mean, false).value;
            };
            const LossResult res = which == 0
                                       ? pairwise_loss(emb, tau, Aggregation::Mean, true)
                                       : leave_one_out_loss(emb, tau, Aggregation::Mean, true);
            for (int i = 0; i < m; ++i)
                for (int r = 0; r < n; ++r)
                    for (int col = 0; col < d; ++col) {
                        auto ep = emb, em = emb;
                        ep[i](r, col) += h;
                        em[i](r, col) -= h;
                        const double fd = (loss(ep, tau) - loss(em, tau)) / (2 * h);
                        const double an = res.grad_emb[i](r, col);
                        CHECK(std::abs(fd - an) <
                              1e-4 * std::max({1.0, std::abs(fd), std::abs(an)}));
                    }
            const double fd_tau = (loss(emb, tau + h) - loss(emb, tau - h)) / (2 * h);
            CHECK(std::abs(fd_tau - res.grad_tau) <
                  1e-4 * std::max({1.0, std::abs(fd_tau), std::abs(res.grad_tau)}));
            CHECK(res.grad_tau != 0.0);
        }
    }
}

TEST_CASE("temporal objective matches pairwise on two views") {
    std::mt19937_64 rng(31);
    auto views = random_embeddings(2, 6, 4, rng);
    const double a = single_modality_temporal_loss(views[0], views[1], 0.1,
                                                   Aggregation::Mean, false)
                         .value;
    const double b = pairwise_loss(views, 0.1, Aggregation::Mean, false).value;
    CHECK(a == doctest::Approx(b).epsilon(1e-12));

    // When the two views are correlated, shuffling the second costs more.
    const MatrixXd next = views[0] + 0.1 * views[1];
    const double aligned =
        single_modality_temporal_loss(views[0], next, 0.1, Aggregation::Mean, false).value;
    MatrixXd shuffled(next.rows(), next.cols());
    for (int i = 0; i < 6; ++i) shuffled.row(i) = next.row((i + 1) % 6);
    const double mis =
        single_modality_temporal_loss(views[0], shuffled, 0.1, Aggregation::Mean, false).value;
    CHECK(aligned < mis);
}
