#include "cal/kernels.hpp"
#include "cal/svm.hpp"
#include "cal/synth.hpp"

#include "testkit.hpp"

#include <doctest.h>

#include <numeric>

using namespace cal;

namespace {

std::vector<double> v(std::initializer_list<double> x) { return x; }

KernelSpec rbf(double gamma) {
    KernelSpec k;
    k.gamma = gamma;
    return k;
}

KernelSpec rwm(double gamma, std::shared_ptr<const MixtureModel> m) {
    KernelSpec k;
    k.kind = KernelKind::rwm;
    k.gamma = gamma;
    k.mixture = std::move(m);
    return k;
}

void check_dual(const SvmModel& m, double C) {
    for (const auto& mach : m.machines()) {
        double eq = 0.0;
        for (std::size_t i = 0; i < mach.alpha.size(); ++i) {
            CHECK(mach.alpha[i] >= -1e-12);
            CHECK(mach.alpha[i] <= C + 1e-9);
            eq += mach.coef[i];
        }
        CHECK(std::abs(eq) < 1e-6);
    }
}

}  // namespace

TEST_CASE("RBF kernel values") {
    auto s = testkit::continuous_schema(2);
    CHECK(kernel_rbf(s, v({0, 0}), v({1, 0}), 0.5) == doctest::Approx(0.60653).epsilon(1e-5));
    CHECK(kernel_rbf(s, v({3, -2}), v({3, -2}), 7.0) == 1.0);
    CHECK(kernel_rbf(s, v({0, 0}), v({5, 5}), 1e-12) == doctest::Approx(1.0));
}

TEST_CASE("RWM kernel values") {
    auto m = testkit::gaussian_mixture({{0.5, {-1.0, 0.0}, {}}, {0.5, {1.0, 0.0}, {}}});
    // logistic in the log-density ratio (4 - 0) / 2 = 2
    auto r = m->responsibilities(v({-1, 0}));
    auto r2 = m->responsibilities(v({1, 0}));
    CHECK(r[0] == doctest::Approx(0.88080).epsilon(1e-5));
    CHECK(r2[1] == doctest::Approx(r[0]));
    CHECK((r[0] + r2[0]) / 2 == doctest::Approx(0.5));
    CHECK(kernel_rwm(v({-1, 0}), v({1, 0}), 1.0, *m) == doctest::Approx(0.01832).epsilon(1e-4));
    CHECK(kernel_rwm(v({0.3, 2}), v({0.3, 2}), 1.0, *m) == 1.0);
}

TEST_CASE("property: RWM reduces to RBF under one unit-covariance component") {
    auto s = testkit::continuous_schema(3);
    auto m = testkit::gaussian_mixture({{1.0, {0.0, 0.0, 0.0}, {}}});
    testkit::for_all(30, 0x4b, [&](testkit::Gen& g, std::size_t) {
        auto rows = g.matrix(10, 3, 2.0);
        double gamma = g.uniform(0.05, 2.0);
        auto kr = kernels::reference::gram(rbf(gamma), s, rows);
        auto kw = kernels::reference::gram(rwm(gamma, m), s, rows);
        CHECK((kr - kw).cwiseAbs().maxCoeff() < 1e-12);
    });
}

TEST_CASE("property: Gram matrices are symmetric with unit diagonal, RBF is PSD") {
    auto s = testkit::continuous_schema(2);
    testkit::for_all(20, 0x4c, [&](testkit::Gen& g, std::size_t) {
        auto m = testkit::gaussian_mixture({{g.uniform(0.2, 1), {g.normal(), g.normal()}, g.spd(2)},
                                            {g.uniform(0.2, 1), {g.normal(2), g.normal()}, g.spd(2)}});
        auto rows = g.matrix(20, 2, 2.0);
        for (const auto& k : {rbf(g.uniform(0.1, 2)), rwm(g.uniform(0.1, 2), m)}) {
            auto p = kernels::prepare(k, rows);
            auto K = kernels::gram(k, s, p);
            CHECK((K - K.transpose()).cwiseAbs().maxCoeff() < 1e-12);
            CHECK((K.diagonal().array() - 1.0).abs().maxCoeff() < 1e-12);
            auto ref = kernels::reference::gram(k, s, rows);
            CHECK((K - ref).cwiseAbs().maxCoeff() < 1e-12);
            if (k.kind == KernelKind::rbf) {
                Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es{Eigen::MatrixXd(K)};
                CHECK(es.eigenvalues().minCoeff() >= -1e-8);
            }
        }
    });
}

TEST_CASE("SMO on two 1-D points") {
    auto s = testkit::continuous_schema(1);
    RowMatrix rows{{-1.0}, {1.0}};
    std::vector<int> labels{0, 1};
    std::vector<RowId> ids{0, 1};
    auto m = train_svm(rows, labels, ids, 2, 10.0, rbf(1.0), s);
    CHECK(m.predict(rows) == labels);
    REQUIRE(m.machines().size() == 1);
    const auto& mach = m.machines()[0];
    REQUIRE(mach.alpha.size() == 2);
    CHECK(mach.alpha[0] == doctest::Approx(mach.alpha[1]));
    check_dual(m, 10.0);
}

TEST_CASE("SMO terminates on contradictory duplicates") {
    auto s = testkit::continuous_schema(1);
    RowMatrix rows{{0.5}, {0.5}};
    std::vector<int> labels{0, 1};
    std::vector<RowId> ids{0, 1};
    auto m = train_svm(rows, labels, ids, 2, 1.0, rbf(1.0), s);
    CHECK(m.machines()[0].training_error > 0.0);
}

TEST_CASE("property: trained models are dual feasible and self-consistent") {
    testkit::for_all(8, 0x5a, [](testkit::Gen& g, std::size_t i) {
        auto d = i % 2 ? synth::two_moons(60, 0.2, g.engine()()) : synth::clouds(60, g.engine()());
        std::vector<RowId> ids(d.size());
        std::iota(ids.begin(), ids.end(), 0);
        double C = std::pow(10.0, g.integer(-1, 2));
        KernelSpec k = rbf(g.uniform(0.2, 2.0));
        if (i % 3 == 0) {
            auto m = std::make_shared<const MixtureModel>(fit_vi(d.rows, d.schema, VIConfig{}));
            k = rwm(g.uniform(0.2, 2.0), m);
        }
        auto model = train_svm(d.rows, d.labels, ids, 2, C, k, d.schema);
        check_dual(model, C);
        for (const auto& mach : model.machines()) {
            for (std::size_t t = 0; t < mach.support.size(); ++t) {
                auto x = row_span(model.support_rows(), static_cast<Eigen::Index>(mach.support[t]));
                auto dv = model.decision(x);
                CHECK(dv[0] == doctest::Approx(mach.support_decision[t]).epsilon(1e-9));
            }
        }
        // serialization keeps the decision function
        auto back = SvmModel::from_json(model.to_json(), d.schema, k.mixture);
        auto a = model.decision(d.rows);
        auto b = back.decision(d.rows);
        CHECK((a - b).cwiseAbs().maxCoeff() < 1e-9);
    });
}

TEST_CASE("appending a zero-alpha duplicate support leaves predictions unchanged") {
    auto d = synth::two_moons(80, 0.15, 3);
    std::vector<RowId> ids(d.size());
    std::iota(ids.begin(), ids.end(), 0);
    auto model = train_svm(d.rows, d.labels, ids, 2, 10.0, rbf(1.0), d.schema);
    auto j = model.to_json();
    auto rows = j["support"]["rows"];
    rows.push_back(rows[0]);
    j["support"]["rows"] = rows;
    j["support"]["ids"].push_back(9999);
    auto& mach = j["machines"][0];
    mach["support"].push_back(rows.size() - 1);
    mach["alpha"].push_back(0.0);
    mach["coef"].push_back(0.0);
    mach["support_decision"].push_back(0.0);
    auto padded = SvmModel::from_json(j, d.schema, nullptr);
    CHECK(padded.predict(d.rows) == model.predict(d.rows));
}

TEST_CASE("multiclass one-vs-one") {
    auto d = synth::blobs({{{-4, 0}, 0.5, 30, 0}, {{4, 0}, 0.5, 30, 1}, {{0, 5}, 0.5, 30, 2}}, 1);
    std::vector<RowId> ids(d.size());
    std::iota(ids.begin(), ids.end(), 0);
    auto model = train_svm(d.rows, d.labels, ids, 3, 10.0, rbf(0.5), d.schema);
    CHECK(model.machines().size() == 3);
    CHECK(model.predict(d.rows) == d.labels);
    // a single class trains a constant model
    std::vector<int> same(d.size(), 2);
    auto c = train_svm(d.rows, same, ids, 3, 1.0, rbf(0.5), d.schema);
    CHECK(c.constant_class() == 2);
    CHECK(c.predict(std::span<const double>(d.rows.data(), 2)) == 2);
}

TEST_CASE("margin_norm") {
    RowMatrix dec{{2.0}, {-1.0}, {0.5}};
    auto m = margin_norm(dec);
    CHECK(m[0] == doctest::Approx(1.0));
    CHECK(m[1] == doctest::Approx(0.5));
    CHECK(m[2] == doctest::Approx(0.25));
    RowMatrix scaled = dec * 3.7;
    CHECK(margin_norm(scaled) == m);
    auto zero = margin_norm(RowMatrix::Zero(3, 1));
    CHECK(zero == std::vector<double>{0.0, 0.0, 0.0});
    auto us = std::min_element(m.begin(), m.end()) - m.begin();
    CHECK(us == 2);
}

TEST_CASE("parameter heuristics") {
    auto s = testkit::continuous_schema(2);
    CHECK(median_heuristic_gamma(RowMatrix{{0, 0}, {2, 0}}, s, 0) == doctest::Approx(0.125));
    CHECK(median_heuristic_gamma(RowMatrix{{1, 1}, {1, 1}, {1, 1}}, s, 0) == 1.0);
    auto d = synth::two_moons(40, 0.1, 2);
    RowMatrix few = d.rows.topRows(10);
    std::vector<int> labels(d.labels.begin(), d.labels.begin() + 10);
    auto p = heuristic_params(d.rows, few, labels, 2, rbf(1.0), d.schema, 0);
    CHECK(p.C == 1.0);
    auto many = heuristic_params(d.rows, d.rows, d.labels, 2, rbf(1.0), d.schema, 0);
    CHECK((many.C == 0.1 || many.C == 1.0 || many.C == 10.0 || many.C == 100.0));
    CHECK(heuristic_params(d.rows, d.rows, d.labels, 2, rbf(1.0), d.schema, 0).C == many.C);
}
