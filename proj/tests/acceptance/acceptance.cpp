// Acceptance checks A1-A9. Prints one PASS/FAIL line per criterion and exits
// non-zero when any fails. Pass criterion ids (e.g. `A4 A6`) to run a subset.

#include "cal/cmm.hpp"
#include "cal/evalx.hpp"
#include "cal/kernels.hpp"
#include "cal/learner.hpp"
#include "cal/rules.hpp"
#include "cal/server.hpp"
#include "cal/strategy.hpp"
#include "cal/synth.hpp"

#include "reference_results.hpp"
#include "session_kit.hpp"
#include "testkit.hpp"

#include <httplib.h>

#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

using namespace cal;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v, int prec = 3) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(prec) << v;
    return s.str();
}

std::string sci(double v) {
    std::ostringstream s;
    s << std::scientific << std::setprecision(2) << v;
    return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// A1

Outcome ranks_reproduced() {
    auto t0 = std::chrono::steady_clock::now();
    auto r = rank_methods(testkit::reference_accuracy, testkit::reference_methods, testkit::reference_datasets);
    const double want[] = {2.2, 2.6, 1.2};
    const double wins[] = {3, 1, 16};
    bool ok = true;
    for (std::size_t m = 0; m < 3; ++m) {
        ok = ok && std::abs(r.average_ranks[m] - want[m]) <= 1e-3 && r.wins[m] == wins[m];
    }
    double t = seconds_since(t0);
    ok = ok && t < 1.0;
    return {ok, "ranks (" + fmt(r.average_ranks[0]) + ", " + fmt(r.average_ranks[1]) + ", " + fmt(r.average_ranks[2]) +
                    ") wins (" + fmt(r.wins[0], 0) + ", " + fmt(r.wins[1], 0) + ", " + fmt(r.wins[2], 0) + ")"};
}

// A2

Outcome friedman_nemenyi() {
    auto r = rank_methods(testkit::reference_accuracy, testkit::reference_methods, testkit::reference_datasets);
    auto f = friedman(r.average_ranks, 20, 0.01);
    double cd01 = nemenyi_cd(3, 20, 0.01);
    double cd05 = nemenyi_cd(3, 20, 0.05);
    bool ok = std::abs(f.statistic - 20.8) <= 0.01 && f.reject && std::abs(cd01 - 0.921) <= 1e-3 &&
              std::abs(cd05 - 0.741) <= 1e-3;
    return {ok, "chi2_F " + fmt(f.statistic, 2) + " (critical " + fmt(f.critical_value) + ", reject " +
                    (f.reject ? "yes" : "no") + "), CD(0.01) " + fmt(cd01) + ", CD(0.05) " + fmt(cd05) +
                    "; printed CD 0.980 not reproduced"};
}

// A3

Outcome baseline_identities() {
    bool ok = true;
    testkit::for_all(100, 0xa3, [&](testkit::Gen& g, std::size_t) {
        LearningCurve b;
        double n = 8.0;
        for (std::size_t i = 0, len = 2 + g.index(120); i < len; ++i) {
            b.n_labeled.push_back(n++);
            b.accuracy.push_back(g.uniform(0.4, 1.0));
        }
        auto d = dur(b, b);
        ok = ok && aulc(b, b) == 0.0 && d.value == 1.0 && d.reached;
    });
    return {ok, "aulc(b, b) = 0.000 and dur(b, b) = 1.000 on 100 curves"};
}

// A4

Outcome kernel_reduction() {
    auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    double asym = 0.0;
    double diag = 0.0;
    testkit::for_all(100, 0xa4, [&](testkit::Gen& g, std::size_t) {
        std::size_t d = 1 + g.index(4);
        auto schema = testkit::continuous_schema(d);
        auto rows = g.matrix(10, d, 2.0);
        std::vector<double> mu(d);
        for (auto& x : mu) {
            x = g.normal();
        }
        KernelSpec rbf;
        rbf.gamma = g.uniform(0.05, 2.0);
        KernelSpec one = rbf;
        one.kind = KernelKind::rwm;
        one.mixture = testkit::gaussian_mixture({{1.0, mu, {}}});
        auto kr = kernels::gram(rbf, schema, kernels::prepare(rbf, rows));
        auto kw = kernels::gram(one, schema, kernels::prepare(one, rows));
        worst = std::max(worst, (kr - kw).cwiseAbs().maxCoeff());

        std::vector<testkit::GaussianSpec> spec;
        for (std::size_t j = 0, J = 1 + g.index(4); j < J; ++j) {
            std::vector<double> m(d);
            for (auto& x : m) {
                x = g.normal(0.0, 2.0);
            }
            spec.push_back({g.uniform(0.1, 1.0), m, g.spd(d)});
        }
        KernelSpec many = one;
        many.mixture = testkit::gaussian_mixture(spec);
        auto K = kernels::gram(many, schema, kernels::prepare(many, rows));
        asym = std::max(asym, (K - K.transpose()).cwiseAbs().maxCoeff());
        diag = std::max(diag, (K.diagonal().array() - 1.0).abs().maxCoeff());
    });
    double t = seconds_since(t0);
    bool ok = worst < 1e-12 && asym == 0.0 && diag < 1e-12 && t < 10.0;
    return {ok, "max |RWM - RBF| " + sci(worst) + ", asymmetry " + sci(asym) + ", |diag - 1| " + sci(diag)};
}

// A5

struct MethodStats {
    LearningCurve curve;
    double final_accuracy = 0.0;
    std::size_t runs = 0;
};

void accumulate(MethodStats& s, const RunRecord& r) {
    if (s.curve.accuracy.empty()) {
        s.curve.n_labeled.assign(r.cycles.size(), 0.0);
        s.curve.accuracy.assign(r.cycles.size(), 0.0);
    }
    if (r.cycles.size() != s.curve.accuracy.size()) {
        throw Error("runs of different length");
    }
    for (std::size_t i = 0; i < r.cycles.size(); ++i) {
        s.curve.n_labeled[i] += static_cast<double>(r.cycles[i].n_labeled);
        s.curve.accuracy[i] += r.cycles[i].accuracy;
    }
    s.final_accuracy += r.cycles.back().accuracy;
    ++s.runs;
}

void finish(MethodStats& s) {
    auto k = static_cast<double>(s.runs);
    for (std::size_t i = 0; i < s.curve.accuracy.size(); ++i) {
        s.curve.n_labeled[i] /= k;
        s.curve.accuracy[i] /= k;
    }
    s.final_accuracy /= k;
}

LearnerConfig desk_config(ModelKind model, StrategyKind strategy, std::uint64_t seed) {
    LearnerConfig c;
    c.model = model;
    c.strategy = strategy;
    c.n_init = 8;
    c.query_size = 1;
    c.max_cycles = 120;
    c.seed = seed;
    return c;
}

Dataset desk_dataset(const std::string& kind, std::uint64_t seed) {
    return kind == "two_moons" ? synth::two_moons(1000, 0.1, seed) : synth::clouds(1000, seed);
}

Outcome directional_result() {
    auto t0 = std::chrono::steady_clock::now();
    bool ok = true;
    std::string detail;
    for (const std::string kind : {"two_moons", "clouds"}) {
        MethodStats rwm;
        MethodStats rbf;
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            auto data = desk_dataset(kind, seed);
            auto split = stratified_kfold(data, 5, seed);
            for (std::size_t f = 0; f < 5; ++f) {
                auto fold = make_fold(data, split, f);
                auto a = desk_config(ModelKind::svm_rwm, StrategyKind::four_ds, seed);
                auto b = desk_config(ModelKind::svm_rbf, StrategyKind::us, seed);
                // both methods see the same fold mixture
                auto mixture = fit_fold_mixture(fold, a);
                accumulate(rwm, run(fold, a, {OracleSpec{}}, {}, mixture));
                accumulate(rbf, run(fold, b, {OracleSpec{}}, {}, mixture));
            }
        }
        finish(rwm);
        finish(rbf);
        double diff = aulc(rwm.curve, rbf.curve);
        ok = ok && rwm.final_accuracy >= rbf.final_accuracy && diff > 0.0;
        if (kind == "two_moons") {
            ok = ok && rwm.final_accuracy >= 0.98;
        }
        detail += kind + ": RWM+4DS " + fmt(rwm.final_accuracy, 4) + " vs RBF+US " + fmt(rbf.final_accuracy, 4) +
                  ", AULC diff " + fmt(diff, 3) + "; ";
    }
    double t = seconds_since(t0);
    ok = ok && t < 600.0;
    return {ok, detail + "runtime " + fmt(t, 1) + " s"};
}

// A6

bool elbo_monotone(const FitDiagnostics& d) {
    auto seg = d.segment_starts;
    seg.push_back(d.elbo_trace.size());
    for (std::size_t s = 0; s + 1 < seg.size(); ++s) {
        for (std::size_t i = seg[s] + 1; i < seg[s + 1]; ++i) {
            if (d.elbo_trace[i] < d.elbo_trace[i - 1] - 1e-8) {
                return false;
            }
        }
    }
    return true;
}

Outcome vi_pruning() {
    std::size_t hits = 0;
    bool monotone = true;
    std::string sizes;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto d = synth::blobs({{{-5.0, -5.0}, 0.6, 100, 0}, {{5.0, -5.0}, 0.6, 100, 1}, {{0.0, 5.0}, 0.6, 100, 2}},
                              100 + seed);
        VIConfig cfg;
        cfg.max_components = 10;
        cfg.seed = seed;
        auto m = fit_vi(d.rows, d.schema, cfg);
        hits += m.size() == 3;
        monotone = monotone && elbo_monotone(m.diagnostics());
        sizes += (sizes.empty() ? "" : ",") + std::to_string(m.size());
    }
    return {hits >= 8 && monotone, "J = 3 in " + std::to_string(hits) + "/10 seeds (J: " + sizes +
                                       "), ELBO monotone " + (monotone ? "yes" : "no")};
}

// A7

OracleSpec noisy(const std::string& id, double p, std::uint64_t seed) {
    OracleSpec o;
    o.id = id;
    o.kind = OracleKind::uniform_noise;
    o.noise = p;
    o.seed = seed;
    return o;
}

Outcome oracle_statistics() {
    bool ok = true;
    std::string detail;
    for (double p : {0.1, 0.3}) {
        auto o = noisy("n", p, 71);
        std::size_t wrong = 0;
        const std::size_t n = 100000;
        for (RowId r = 0; r < n; ++r) {
            wrong += answer(o, r, static_cast<int>(r % 2), 2, 1.0, 0).label != static_cast<int>(r % 2);
        }
        double rate = static_cast<double>(wrong) / n;
        ok = ok && std::abs(rate - p) <= 0.01;
        detail += "rate(" + fmt(p, 1) + ") " + fmt(rate, 4) + ", ";
    }

    std::vector<OracleSpec> roster{noisy("a", 0.3, 11), noisy("b", 0.3, 12), noisy("c", 0.3, 13)};
    PolicyConfig one;
    PolicyConfig three;
    three.committee = 3;
    std::size_t single_err = 0;
    std::size_t fused_err = 0;
    CostLedger ledger;
    for (RowId r = 0; r < 1000; ++r) {
        int truth = static_cast<int>(r % 2);
        single_err += acquire_label(r, truth, truth, 1.0, QueryType::sample, roster, one, 2, 0, ledger, std::nullopt)
                          .fused->label != truth;
        fused_err += acquire_label(r, truth, truth, 1.0, QueryType::sample, roster, three, 2, 0, ledger, std::nullopt)
                         .fused->label != truth;
    }
    ok = ok && fused_err < single_err;
    detail += "committee error " + fmt(fused_err / 1000.0) + " vs single " + fmt(single_err / 1000.0) + ", ";

    std::vector<double> acc;
    for (double p : {0.0, 0.3, 0.6}) {
        double sum = 0.0;
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            auto data = desk_dataset("two_moons", seed);
            auto fold = make_fold(data, stratified_kfold(data, 5, seed), 0);
            auto cfg = desk_config(ModelKind::svm_rwm, StrategyKind::four_ds, seed);
            auto oracle = p == 0.0 ? OracleSpec{} : noisy("n", p, 700 + seed);
            sum += run(fold, cfg, {oracle}).cycles.back().accuracy;
        }
        acc.push_back(sum / 5.0);
    }
    ok = ok && acc[0] >= acc[1] && acc[1] >= acc[2];
    detail += "accuracy at p = 0/0.3/0.6: " + fmt(acc[0], 4) + "/" + fmt(acc[1], 4) + "/" + fmt(acc[2], 4);
    return {ok, detail};
}

// A8

Outcome invariant_suites() {
    std::string detail;

    double worst = 0.0;
    std::size_t inputs = 0;
    testkit::for_all(100, 0xa81, [&](testkit::Gen& g, std::size_t) {
        std::size_t J = 1 + g.index(6);
        std::size_t K = 2 + g.index(4);
        std::vector<testkit::GaussianSpec> spec;
        for (std::size_t j = 0; j < J; ++j) {
            spec.push_back({g.uniform(0.05, 1.0), {g.normal(0, 3), g.normal(0, 3)}, g.spd(2)});
        }
        Eigen::MatrixXd P(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(J));
        for (Eigen::Index j = 0; j < P.cols(); ++j) {
            auto col = g.simplex(K);
            for (Eigen::Index k = 0; k < P.rows(); ++k) {
                P(k, j) = col[static_cast<std::size_t>(k)];
            }
        }
        CmmClassifier c(testkit::gaussian_mixture(spec), P, 0.0);
        for (int t = 0; t < 100; ++t, ++inputs) {
            auto p = c.posterior(std::vector<double>{g.normal(0, 10), g.normal(0, 10)});
            worst = std::max(worst, std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0));
        }
    });
    bool normalized = worst <= 1e-9 && inputs == 10000;
    detail += "posterior |sum - 1| " + sci(worst) + " over " + std::to_string(inputs) + " inputs; ";

    bool deterministic = true;
    testkit::for_all(100, 0xa82, [&](testkit::Gen& g, std::size_t) {
        std::size_t n = 2 + g.index(30);
        CriterionScores s;
        for (std::size_t i = 0; i < n; ++i) {
            s.ids.push_back(i);
            s.density.push_back(g.uniform());
            s.distance.push_back(g.uniform());
            s.distribution.push_back(g.uniform());
        }
        auto schema = testkit::continuous_schema(2);
        auto pool = g.matrix(n, 2);
        auto w = adapt_weights(g.index(40), 40, g.uniform(), 1 + g.index(4));
        std::size_t q = 1 + g.index(n);
        deterministic = deterministic && select_batch(s, w, q, schema, pool) == select_batch(s, w, q, schema, pool);
    });
    {
        auto d = synth::two_moons(120, 0.1, 3);
        auto fold = make_fold(d, stratified_kfold(d, 3, 3), 0);
        auto cfg = desk_config(ModelKind::svm_rwm, StrategyKind::four_ds, 9);
        cfg.query_size = 3;
        cfg.max_cycles = 6;
        deterministic = deterministic && run(fold, cfg, {OracleSpec{}}).to_jsonl() ==
                                             run(fold, cfg, {OracleSpec{}}).to_jsonl();
    }
    detail += std::string("selection deterministic ") + (deterministic ? "yes" : "no") + "; ";

    bool additive = true;
    testkit::for_all(100, 0xa83, [&](testkit::Gen& g, std::size_t) {
        CostLedger l;
        double sum = 0.0;
        for (std::size_t i = 0, n = g.index(60); i < n; ++i) {
            double c = g.uniform(0.0, 10.0);
            sum += c;
            l.charge(i, "o" + std::to_string(g.index(3)), g.coin() ? QueryType::sample : QueryType::rule, c);
        }
        double entries = 0.0;
        for (const auto& e : l.entries()) {
            entries += e.cost;
        }
        additive = additive && std::abs(l.total() - sum) <= 1e-9 && std::abs(entries - l.total()) <= 1e-9;
    });
    detail += std::string("ledger additive ") + (additive ? "yes" : "no") + "; ";

    bool balanced = true;
    testkit::for_all(100, 0xa84, [&](testkit::Gen& g, std::size_t) {
        std::size_t k = 2 + g.index(9);
        std::size_t classes = 2 + g.index(4);
        std::vector<int> labels;
        std::vector<std::string> names;
        for (std::size_t c = 0; c < classes; ++c) {
            labels.insert(labels.end(), k + g.index(60), static_cast<int>(c));
            names.push_back("c" + std::to_string(c));
        }
        auto d = testkit::make_dataset(RowMatrix::Zero(static_cast<Eigen::Index>(labels.size()), 1), labels, names);
        auto split = stratified_kfold(d, k, g.engine()());
        auto counts = d.class_counts();
        for (std::size_t f = 0; f < k; ++f) {
            std::vector<double> have(classes, 0.0);
            for (auto id : split.test_ids(f)) {
                have[static_cast<std::size_t>(labels[id])] += 1.0;
            }
            for (std::size_t c = 0; c < classes; ++c) {
                balanced = balanced && std::abs(have[c] - static_cast<double>(counts[c]) / static_cast<double>(k)) <= 1.0;
            }
        }
    });
    detail += std::string("folds balanced ") + (balanced ? "yes" : "no") + "; ";

    auto schema = FeatureSchema::from_json(nlohmann::json::parse(R"({"columns": [
        {"name": "x1"}, {"name": "x2"}, {"name": "x3", "kind": "categorical", "categories": ["A", "B", "C"]}]})"));
    std::vector<MixtureComponent> comps(3);
    const double means[3][2] = {{-2.0, 2.0}, {0.0, 0.0}, {2.0, -2.0}};
    const std::vector<double> thetas[3] = {{0.45, 0.45, 0.1}, {1.0 / 3, 1.0 / 3, 1.0 / 3}, {0.1, 0.1, 0.8}};
    for (std::size_t j = 0; j < 3; ++j) {
        comps[j].weight = 1.0 / 3;
        comps[j].mean = Vector::Zero(2);
        comps[j].mean << means[j][0], means[j][1];
        comps[j].covariance = Eigen::MatrixXd::Identity(2, 2) * 0.5;
        comps[j].categorical = {thetas[j]};
    }
    auto mixture = std::make_shared<const MixtureModel>(schema, comps);
    RowMatrix samples(300, 3);
    testkit::Gen g(0xa85);
    for (Eigen::Index i = 0; i < 300; ++i) {
        const auto& c = comps[static_cast<std::size_t>(i % 3)];
        samples(i, 0) = g.normal(c.mean(0), 0.7);
        samples(i, 1) = g.normal(c.mean(1), 0.7);
        samples(i, 2) = static_cast<double>(g.index(3));
    }
    auto rules = extract_rules(fit_assignments(mixture, RowMatrix(0, 3), {}, 2), term_boundaries(samples, schema));
    std::string premise = rules.empty() ? "" : rules[0].premise();
    bool shape = premise == "x1 is low and x2 is high and (x3 is A or x3 is B)";
    detail += "premise \"" + premise + "\"";

    return {normalized && deterministic && additive && balanced && shape, detail};
}

// A9

// Structure of a JSON value: object keys with nested structure, arrays by
// their first element, scalars by type (all numbers alike, null matches any).
nlohmann::json shape_of(const nlohmann::json& j) {
    if (j.is_object()) {
        nlohmann::json out = nlohmann::json::object();
        for (const auto& [k, v] : j.items()) {
            out[k] = shape_of(v);
        }
        return out;
    }
    if (j.is_array()) {
        return j.empty() ? nlohmann::json::array() : nlohmann::json::array({shape_of(j.front())});
    }
    if (j.is_number()) {
        return "number";
    }
    if (j.is_null()) {
        return nullptr;
    }
    return j.type_name();
}

bool same_shape(const nlohmann::json& a, const nlohmann::json& b, std::string& where, const std::string& at = "") {
    if (a.is_null() || b.is_null()) {
        return true;
    }
    if (a.is_object() && b.is_object()) {
        std::set<std::string> keys;
        for (const auto& [k, v] : a.items()) {
            keys.insert(k);
        }
        for (const auto& [k, v] : b.items()) {
            keys.insert(k);
        }
        for (const auto& k : keys) {
            if (!a.contains(k) || !b.contains(k)) {
                where = at + "/" + k;
                return false;
            }
            if (!same_shape(a[k], b[k], where, at + "/" + k)) {
                return false;
            }
        }
        return true;
    }
    if (a.is_array() && b.is_array()) {
        return a.empty() || b.empty() || same_shape(a.front(), b.front(), where, at + "/0");
    }
    if (a != b) {
        where = at;
        return false;
    }
    return true;
}

// Merged structure of all cycle lines, queries and responses of a record.
nlohmann::json record_shape(const RunRecord& r) {
    nlohmann::json cycles = nlohmann::json::object();
    nlohmann::json queries = nlohmann::json::object();
    for (const auto& c : r.cycles) {
        auto j = c.to_json();
        for (const auto& q : j["queries"]) {
            queries.merge_patch(shape_of(q));
        }
        j.erase("queries");
        cycles.merge_patch(shape_of(j));
    }
    return {{"cycle", cycles}, {"query", queries}, {"footer", shape_of(r.footer)}};
}

Outcome headless_api() {
    testkit::TempDir tmp("accept");
    auto data = testkit::write_moons(tmp.path(), "moons50", 50, 5);
    testkit::TruthAnnotator human(data, 5, 0, 0);
    nlohmann::json body = {{"dataset", "moons50"},
                           {"folds", 5},
                           {"fold", 0},
                           {"learner", {{"model", "rwm"}, {"strategy", "4ds"}, {"n_init", 4}, {"max_cycles", 12}}}};

    SessionService service(tmp.path());
    httplib::Server server;
    mount_api(server, service);
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    Outcome out;
    std::string detail;
    try {
        httplib::Client client("127.0.0.1", port);
        auto created = client.Post("/api/v1/sessions", body.dump(), "application/json");
        if (!created || created->status != 201) {
            throw Error("session creation failed");
        }
        auto id = nlohmann::json::parse(created->body)["id"].get<std::string>();
        std::string base = "/api/v1/sessions/" + id;

        std::size_t answered = 0;
        int stale_status = 0;
        while (true) {
            auto q = client.Get(base + "/query");
            if (!q || q->status != 200) {
                throw Error("query failed");
            }
            auto query = nlohmann::json::parse(q->body);
            if (query["type"] == "none") {
                break;
            }
            auto reply = human.answer(query).dump();
            auto l = client.Post(base + "/label", reply, "application/json");
            if (!l || l->status != 200) {
                throw Error("label rejected");
            }
            if (answered++ == 0) {
                auto again = client.Post(base + "/label", reply, "application/json");
                stale_status = again ? again->status : 0;
            }
            if (answered > 500) {
                throw Error("session does not finish");
            }
        }
        auto status = nlohmann::json::parse(client.Get(base + "/status")->body);
        auto rec = client.Get(base + "/record");
        if (!rec || rec->status != 200) {
            throw Error("record unavailable");
        }
        auto session_run = RunRecord::from_jsonl(rec->body);

        auto cli_cfg = LearnerConfig::from_json(body["learner"]);
        auto cli_run = run(human.fold(), cli_cfg, {OracleSpec{}});
        std::string where;
        bool schema = same_shape(record_shape(session_run), record_shape(cli_run), where);

        out.pass = status["stopped"] == true && status["stop_reason"] == "max_cycles" && schema && stale_status == 409 &&
                   session_run.cycles.size() == cli_run.cycles.size();
        detail = std::to_string(answered) + " answers, " + std::to_string(session_run.cycles.size()) +
                 " cycles, stop " + status["stop_reason"].get<std::string>() + ", record schema " +
                 (schema ? "matches CLI" : "differs at " + where) + ", stale token -> " + std::to_string(stale_status);
    } catch (const std::exception& e) {
        detail = e.what();
    }
    server.stop();
    thread.join();
    out.detail = detail;
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"A1", ranks_reproduced},  {"A2", friedman_nemenyi}, {"A3", baseline_identities},
        {"A4", kernel_reduction},  {"A5", directional_result}, {"A6", vi_pruning},
        {"A7", oracle_statistics}, {"A8", invariant_suites}, {"A9", headless_api},
    };
    std::set<std::string> only(argv + 1, argv + argc);
    int failed = 0;
    for (const auto& [id, check] : criteria) {
        if (!only.empty() && !only.contains(id)) {
            continue;
        }
        auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS " : "FAIL ") << id << "  " << o.detail << "  [" << fmt(seconds_since(t0), 2)
                  << " s]" << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
