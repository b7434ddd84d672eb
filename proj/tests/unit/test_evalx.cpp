#include "cal/evalx.hpp"

#include "reference_results.hpp"
#include "testkit.hpp"

#include <doctest.h>

using namespace cal;

TEST_CASE("area under the learning curve") {
    LearningCurve a{{10, 20}, {0.5, 1.0}};
    LearningCurve b{{10, 20}, {0.5, 0.5}};
    CHECK(mean_area(a) == doctest::Approx(75.0));
    CHECK(aulc(a, b) == doctest::Approx(25.0));
    CHECK(aulc(b, b) == 0.0);
    LearningCurve other{{10, 30}, {0.5, 0.5}};
    CHECK_THROWS(aulc(a, other));
}

TEST_CASE("data utilization rate") {
    LearningCurve base{{10, 20, 30, 40}, {0.5, 0.6, 0.7, 0.8}};
    auto same = dur(base, base);
    CHECK(same.value == 1.0);
    CHECK(same.reached);
    LearningCurve fast{{10, 20, 30, 40}, {0.5, 0.9, 0.9, 0.9}};
    CHECK(dur(fast, base).value == doctest::Approx(0.5));
    LearningCurve slow{{10, 20, 30, 40}, {0.5, 0.5, 0.5, 0.5}};
    auto s = dur(slow, base);
    CHECK_FALSE(s.reached);
    CHECK(s.value == doctest::Approx(1.0));
}

TEST_CASE("class distribution mismatch") {
    CHECK(cdm(std::vector<double>{1, 0}, std::vector<double>{0.5, 0.5}) == doctest::Approx(0.5));
    CHECK(cdm(std::vector<double>{0.2, 0.8}, std::vector<double>{0.2, 0.8}) == 0.0);
    CHECK_THROWS(cdm(std::vector<double>{1}, std::vector<double>{0.5, 0.5}));
}

TEST_CASE("property: aulc is antisymmetric and cdm is a bounded metric") {
    testkit::for_all(100, 0xe1, [](testkit::Gen& g, std::size_t) {
        std::size_t n = 2 + g.index(10);
        LearningCurve a;
        LearningCurve b;
        double x = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            x += 1.0 + g.index(5);
            a.n_labeled.push_back(x);
            b.n_labeled.push_back(x);
            a.accuracy.push_back(g.uniform());
            b.accuracy.push_back(g.uniform());
        }
        CHECK(aulc(a, b) == doctest::Approx(-aulc(b, a)).epsilon(1e-12));
        CHECK(aulc(a, a) == 0.0);
        std::size_t k = 2 + g.index(4);
        auto p = g.simplex(k);
        auto q = g.simplex(k);
        auto r = g.simplex(k);
        CHECK(cdm(p, q) >= 0.0);
        CHECK(cdm(p, q) <= 1.0 + 1e-12);
        CHECK(cdm(p, q) == doctest::Approx(cdm(q, p)));
        CHECK(cdm(p, r) <= cdm(p, q) + cdm(q, r) + 1e-12);
    });
}

TEST_CASE("ranks with ties") {
    auto r = rank_methods({{1, 0}, {0, 1}});
    CHECK(r.average_ranks[0] == 1.5);
    CHECK(r.average_ranks[1] == 1.5);
    CHECK(r.wins[0] == 1.0);
    CHECK(r.wins[1] == 1.0);
    auto t = rank_methods({{0.5, 0.5, 0.1}});
    CHECK(t.ranks[0] == std::vector<double>{1.5, 1.5, 3.0});
    CHECK(t.wins == std::vector<double>{0.5, 0.5, 0.0});
    auto asc = rank_methods_ascending({{0.2, 0.1}});
    CHECK(asc.ranks[0] == std::vector<double>{2.0, 1.0});
}

TEST_CASE("property: ranks on a dataset sum to k(k+1)/2") {
    testkit::for_all(50, 0xe2, [](testkit::Gen& g, std::size_t) {
        std::size_t k = 2 + g.index(5);
        std::vector<std::vector<double>> acc(1 + g.index(6));
        for (auto& row : acc) {
            for (std::size_t m = 0; m < k; ++m) {
                row.push_back(static_cast<double>(g.index(4)));
            }
        }
        auto r = rank_methods(acc);
        double wins = 0.0;
        for (const auto& row : r.ranks) {
            double s = 0.0;
            for (double x : row) {
                s += x;
            }
            CHECK(s == doctest::Approx(static_cast<double>(k * (k + 1)) / 2.0));
        }
        for (double w : r.wins) {
            wins += w;
        }
        CHECK(wins == doctest::Approx(static_cast<double>(acc.size())));
    });
}

TEST_CASE("result table ranks, Friedman test and critical difference") {
    auto r = rank_methods(testkit::reference_accuracy, testkit::reference_methods, testkit::reference_datasets);
    CHECK(r.average_ranks[0] == doctest::Approx(2.2));
    CHECK(r.average_ranks[1] == doctest::Approx(2.6));
    CHECK(r.average_ranks[2] == doctest::Approx(1.2));
    CHECK(r.wins == std::vector<double>{3.0, 1.0, 16.0});

    auto f = friedman(r.average_ranks, 20, 0.01);
    CHECK(f.statistic == doctest::Approx(20.8));
    CHECK(f.df == 2);
    CHECK(f.critical_value == doctest::Approx(9.210).epsilon(1e-3));
    CHECK(f.reject);

    CHECK(nemenyi_cd(3, 20, 0.01) == doctest::Approx(0.921).epsilon(1e-3));
    CHECK(nemenyi_cd(3, 20, 0.05) == doctest::Approx(0.741).epsilon(1e-3));

    auto cd = cd_plot_data(r, nemenyi_cd(3, 20, 0.01));
    bool rbf_cmm = false;
    for (const auto& g : cd.groups) {
        bool has_rbf = std::find(g.begin(), g.end(), "RBF-US") != g.end();
        bool has_cmm = std::find(g.begin(), g.end(), "CMM-4DS") != g.end();
        bool has_rwm = std::find(g.begin(), g.end(), "RWM-4DS") != g.end();
        rbf_cmm = rbf_cmm || (has_rbf && has_cmm);
        CHECK_FALSE((has_rwm && has_rbf));
    }
    CHECK(rbf_cmm);
}

TEST_CASE("statistical tables") {
    CHECK(chi_square_critical(1, 0.05) == doctest::Approx(3.841).epsilon(1e-3));
    CHECK(chi_square_critical(2, 0.05) == doctest::Approx(5.991).epsilon(1e-3));
    CHECK(nemenyi_q(2, 0.05) == doctest::Approx(1.960).epsilon(1e-3));
    CHECK(nemenyi_q(3, 0.05) == doctest::Approx(2.343).epsilon(1e-3));
    CHECK_THROWS(chi_square_critical(1, 0.2));
    CHECK_THROWS(nemenyi_q(11, 0.05));
}
