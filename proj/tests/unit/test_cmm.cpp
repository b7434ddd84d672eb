#include "cal/cmm.hpp"

#include "testkit.hpp"

#include <doctest.h>

#include <numeric>

using namespace cal;

namespace {

std::shared_ptr<const MixtureModel> two_component() {
    return testkit::gaussian_mixture({{0.5, {-2.0, 0.0}, {}}, {0.5, {2.0, 0.0}, {}}});
}

}  // namespace

TEST_CASE("fit_assignments without labels is uniform") {
    auto c = fit_assignments(two_component(), RowMatrix(0, 2), {}, 3);
    for (Eigen::Index j = 0; j < 2; ++j) {
        for (Eigen::Index k = 0; k < 3; ++k) {
            CHECK(c.assignments()(k, j) == doctest::Approx(1.0 / 3.0));
        }
    }
    CHECK(c.smoothing() == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("fit_assignments: smoothed counts") {
    RowMatrix resp{{1.0, 0.0}, {1.0, 0.0}, {1.0, 0.0}, {1.0, 0.0}};
    std::vector<int> labels{0, 0, 0, 1};
    auto c = fit_assignments(two_component(), resp, labels, 2, 0.5);
    CHECK(c.assignments()(0, 0) == doctest::Approx(3.5 / 5.0));
    CHECK(c.assignments()(1, 1) == doctest::Approx(0.5));

    auto lim = fit_assignments(two_component(), RowMatrix{{1.0, 0.0}}, std::vector<int>{0}, 2, 1e-12);
    CHECK(lim.assignments()(0, 0) == doctest::Approx(1.0));
    CHECK(lim.assignments()(0, 1) == doctest::Approx(0.5));
}

TEST_CASE("posterior composition") {
    auto m = two_component();
    Eigen::MatrixXd onehot = Eigen::MatrixXd::Identity(2, 2);
    CmmClassifier c(m, onehot, 0.0);
    auto p = c.posterior_from_responsibilities(std::vector<double>{0.8, 0.2});
    CHECK(p[0] == doctest::Approx(0.8));
    CHECK(p[1] == doctest::Approx(0.2));

    Eigen::MatrixXd P(2, 2);
    P << 0.7, 0.2, 0.3, 0.8;
    CmmClassifier c2(m, P, 0.0);
    CHECK(c2.posterior_from_responsibilities(std::vector<double>{0.5, 0.5})[0] == doctest::Approx(0.45));

    CmmClassifier uni(m, Eigen::MatrixXd::Constant(2, 2, 0.5), 0.0);
    auto u = uni.posterior(std::vector<double>{0.3, -1.0});
    CHECK(u[0] == doctest::Approx(0.5));
    CHECK(uni.margin(std::vector<double>{0.3, -1.0}) == doctest::Approx(0.0));
}

TEST_CASE("predict and margin") {
    CHECK(argmax_lowest(std::vector<double>{0.45, 0.55}) == 1);
    CHECK(top_two_margin(std::vector<double>{0.45, 0.55}) == doctest::Approx(0.10));
    CHECK(top_two_margin(std::vector<double>{0.0, 1.0, 0.0}) == doctest::Approx(1.0));
    CHECK(argmax_lowest(std::vector<double>{0.5, 0.5}) == 0);
}

TEST_CASE("property: posterior normalization on random inputs") {
    testkit::for_all(20, 0xc1, [](testkit::Gen& g, std::size_t) {
        std::size_t J = 1 + g.index(5);
        std::size_t K = 2 + g.index(3);
        std::vector<testkit::GaussianSpec> spec;
        for (std::size_t j = 0; j < J; ++j) {
            spec.push_back({g.uniform(0.1, 1.0), {g.normal(0, 3), g.normal(0, 3)}, g.spd(2)});
        }
        auto m = testkit::gaussian_mixture(spec);
        Eigen::MatrixXd P(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(J));
        for (std::size_t j = 0; j < J; ++j) {
            auto col = g.simplex(K);
            for (std::size_t k = 0; k < K; ++k) {
                P(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = col[k];
            }
        }
        CmmClassifier c(m, P, 0.0);
        for (int t = 0; t < 50; ++t) {
            auto p = c.posterior(std::vector<double>{g.normal(0, 8), g.normal(0, 8)});
            CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-9));
        }
    });
}

TEST_CASE("property: columns stay stochastic and positive") {
    testkit::for_all(30, 0xc2, [](testkit::Gen& g, std::size_t) {
        std::size_t n = g.index(20);
        std::size_t K = 2 + g.index(3);
        RowMatrix resp(static_cast<Eigen::Index>(n), 2);
        std::vector<int> labels;
        for (std::size_t i = 0; i < n; ++i) {
            auto r = g.simplex(2);
            resp(static_cast<Eigen::Index>(i), 0) = r[0];
            resp(static_cast<Eigen::Index>(i), 1) = r[1];
            labels.push_back(g.integer(0, static_cast<int>(K) - 1));
        }
        auto c = fit_assignments(two_component(), resp, labels, K);
        for (Eigen::Index j = 0; j < 2; ++j) {
            CHECK(c.assignments().col(j).sum() == doctest::Approx(1.0).epsilon(1e-9));
            CHECK(c.assignments().col(j).minCoeff() > 0.0);
        }
    });
}

TEST_CASE("property: a new labeled sample reinforces its class") {
    testkit::for_all(50, 0xc3, [](testkit::Gen& g, std::size_t) {
        std::size_t n = g.index(10);
        RowMatrix resp(static_cast<Eigen::Index>(n + 1), 2);
        std::vector<int> labels;
        for (std::size_t i = 0; i <= n; ++i) {
            auto r = g.simplex(2);
            resp(static_cast<Eigen::Index>(i), 0) = r[0];
            resp(static_cast<Eigen::Index>(i), 1) = r[1];
            labels.push_back(g.integer(0, 2));
        }
        RowMatrix before = resp.topRows(static_cast<Eigen::Index>(n));
        std::vector<int> lb(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n));
        auto c0 = fit_assignments(two_component(), before, lb, 3, 0.5);
        auto c1 = fit_assignments(two_component(), resp, labels, 3, 0.5);
        int c = labels.back();
        auto r = resp.row(static_cast<Eigen::Index>(n));
        double s0 = c0.assignments().row(c).dot(r);
        double s1 = c1.assignments().row(c).dot(r);
        CHECK(s1 >= s0 - 1e-12);
    });
}

TEST_CASE("property: predict is invariant under a monotone transform of the posterior") {
    testkit::for_all(100, 0xc4, [](testkit::Gen& g, std::size_t) {
        auto p = g.simplex(2 + g.index(4));
        auto q = p;
        for (auto& x : q) {
            x = std::exp(3.0 * x) + 2.0;
        }
        CHECK(argmax_lowest(p) == argmax_lowest(q));
    });
}

TEST_CASE("set_column and JSON round trip") {
    auto m = two_component();
    auto c = fit_assignments(m, RowMatrix(0, 2), {}, 2);
    Vector col(2);
    col << 0.9, 0.1;
    c.set_column(1, col);
    CHECK(c.assignments()(0, 1) == doctest::Approx(0.9));
    CHECK_THROWS(c.set_column(1, Vector::Zero(2)));
    CHECK_THROWS(c.set_column(2, col));
    auto back = CmmClassifier::from_json(c.to_json(), m);
    CHECK(back.assignments().isApprox(c.assignments()));
}
