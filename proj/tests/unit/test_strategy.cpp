#include "cal/evalx.hpp"
#include "cal/strategy.hpp"

#include "testkit.hpp"

#include <doctest.h>

#include <numeric>
#include <set>

using namespace cal;

namespace {

CmmClassifier identity_cmm() {
    auto m = testkit::gaussian_mixture({{0.5, {-2.0}, {}}, {0.5, {2.0}, {}}});
    return CmmClassifier(m, Eigen::MatrixXd::Identity(2, 2), 0.0);
}

CriterionScores random_scores(testkit::Gen& g, std::size_t n) {
    CriterionScores s;
    for (std::size_t i = 0; i < n; ++i) {
        s.ids.push_back(i);
        s.density.push_back(g.uniform());
        s.distance.push_back(g.uniform());
        s.distribution.push_back(g.uniform());
    }
    return s;
}

}  // namespace

TEST_CASE("weight schedule endpoints") {
    auto w0 = adapt_weights(0, 100, 0.5, 1);
    CHECK(w0.distribution + w0.density == doctest::Approx(0.8));
    CHECK(w0.distance == doctest::Approx(0.2));
    CHECK(w0.diversity == 0.0);
    auto wT = adapt_weights(100, 100, 0.5, 1);
    CHECK(wT.distance / (wT.distance + wT.density + wT.distribution) >= 0.97);
    auto w3 = adapt_weights(0, 100, 0.5, 1, StrategyKind::three_ds);
    CHECK(w3.distribution == 0.0);
    auto us = adapt_weights(10, 100, 0.5, 4, StrategyKind::us);
    CHECK(us.distance == 1.0);
    CHECK(us.sum() == 1.0);
}

TEST_CASE("property: weights are a probability vector, diversity zero for q = 1") {
    testkit::for_all(200, 0x3a, [](testkit::Gen& g, std::size_t) {
        auto kind = static_cast<StrategyKind>(g.integer(0, 2));
        std::size_t q = 1 + g.index(5);
        auto w = adapt_weights(g.index(300), 1 + g.index(200), g.uniform(-0.5, 1.5), q, kind);
        CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-9));
        for (double x : {w.density, w.distance, w.diversity, w.distribution}) {
            CHECK(x >= 0.0);
            CHECK(x <= 1.0);
        }
        if (q == 1) {
            CHECK(w.diversity == 0.0);
        }
    });
}

TEST_CASE("density criterion") {
    auto s = score_density(std::vector<double>{-3.0, -1.0, -2.0});
    CHECK(s[1] == 1.0);
    CHECK(s[0] == doctest::Approx(std::exp(-2.0)));
    auto flat = score_density(std::vector<double>{-5.0, -5.0});
    CHECK(flat == std::vector<double>{1.0, 1.0});

    auto m = testkit::gaussian_mixture({{0.5, {-3.0}, {}}, {0.5, {3.0}, {}}});
    RowMatrix pool{{-3.0}, {-4.8}, {3.0}, {5.0}};
    auto d = score_density(*m, pool);
    CHECK(d[0] > d[1]);
    CHECK(d[2] > d[3]);
}

TEST_CASE("distance criterion") {
    auto s = score_distance(std::vector<double>{0.0, 1.0, 0.25});
    CHECK(s[0] == 1.0);
    CHECK(s[1] == 0.0);
    CHECK(s[2] == doctest::Approx(0.75));
}

TEST_CASE("diversity criterion on a line") {
    auto schema = testkit::continuous_schema(1);
    RowMatrix pool{{0.0}, {1.0}, {0.5}, {3.0}, {-2.0}};
    std::vector<std::size_t> chosen{0, 1};
    auto s = score_diversity(schema, pool, chosen);
    CHECK(s[0] == 0.0);
    CHECK(s[1] == 0.0);
    CHECK(s[2] < s[3]);
    CHECK(s[2] < s[4]);
    CHECK(s[3] == doctest::Approx(1.0));
    CHECK(score_diversity(schema, pool, {}) == std::vector<double>(5, 1.0));
}

TEST_CASE("distribution criterion") {
    auto c = identity_cmm();
    RowMatrix resp{{1.0, 0.0}, {0.0, 1.0}};
    auto matched = score_distribution(c, resp, std::vector<int>{0, 1});
    CHECK(matched == std::vector<double>{0.0, 0.0});
    auto missing = score_distribution(c, resp, std::vector<int>{0});
    CHECK(missing[0] == 0.0);
    CHECK(missing[1] == 1.0);
}

TEST_CASE("property: distribution scores follow brute-force mismatch reductions") {
    testkit::for_all(30, 0x3d, [](testkit::Gen& g, std::size_t) {
        auto c = identity_cmm();
        RowMatrix resp(5, 2);
        for (Eigen::Index i = 0; i < 5; ++i) {
            auto r = g.simplex(2);
            resp(i, 0) = r[0];
            resp(i, 1) = r[1];
        }
        std::vector<int> labels(1 + g.index(6));
        for (auto& l : labels) {
            l = g.integer(0, 1);
        }
        auto s = score_distribution(c, resp, labels);
        std::vector<double> ref{resp.col(0).mean(), resp.col(1).mean()};
        double n1 = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
        double m = static_cast<double>(labels.size());
        std::vector<double> cur{(m - n1) / m, n1 / m};
        double base = cdm(cur, ref);
        std::vector<double> delta(5);
        for (Eigen::Index i = 0; i < 5; ++i) {
            std::vector<double> nx{(m - n1 + resp(i, 0)) / (m + 1), (n1 + resp(i, 1)) / (m + 1)};
            delta[static_cast<std::size_t>(i)] = std::max(0.0, base - cdm(nx, ref));
        }
        double mx = *std::max_element(delta.begin(), delta.end());
        for (std::size_t i = 0; i < 5; ++i) {
            CHECK(s[i] >= 0.0);
            CHECK(s[i] <= 1.0);
            CHECK(s[i] == doctest::Approx(mx > 0 ? delta[i] / mx : 0.0).epsilon(1e-12));
        }
    });
}

TEST_CASE("select_batch reductions") {
    auto schema = testkit::continuous_schema(1);
    testkit::for_all(50, 0x3b, [&](testkit::Gen& g, std::size_t) {
        std::size_t n = 2 + g.index(20);
        auto s = random_scores(g, n);
        auto pool = g.matrix(n, 1);
        SelectionWeights us;
        auto pick = select_batch(s, us, 1, schema, pool);
        auto best = std::max_element(s.distance.begin(), s.distance.end()) - s.distance.begin();
        CHECK(pick[0] == static_cast<std::size_t>(best));

        auto w = adapt_weights(g.index(50), 50, 0.5, 3);
        auto all = select_batch(s, w, n, schema, pool);
        CHECK(std::set<std::size_t>(all.begin(), all.end()).size() == n);

        std::size_t q = 1 + g.index(n);
        auto a = select_batch(s, w, q, schema, pool);
        SelectionWeights scaled{w.density * 7, w.distance * 7, w.diversity * 7, w.distribution * 7};
        CHECK(select_batch(s, scaled, q, schema, pool) == a);
        CHECK(select_batch(s, w, q, schema, pool) == a);
        CHECK(std::set<std::size_t>(a.begin(), a.end()).size() == q);
    });
    CriterionScores tiny;
    tiny.ids = {0};
    tiny.distance = {0.2};
    CHECK_THROWS(select_batch(tiny, SelectionWeights{}, 2, schema, RowMatrix::Zero(1, 1)));
}

TEST_CASE("ties go to the lowest position") {
    auto schema = testkit::continuous_schema(1);
    CriterionScores s;
    s.ids = {0, 1, 2};
    s.distance = {0.5, 0.9, 0.9};
    CHECK(select_batch(s, SelectionWeights{}, 1, schema, RowMatrix::Zero(3, 1))[0] == 1);
}
