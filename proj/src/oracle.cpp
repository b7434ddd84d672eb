#include "cal/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace cal {

std::string to_string(QueryType t) { return t == QueryType::sample ? "sample" : "rule"; }

std::string to_string(OracleKind k) {
    switch (k) {
        case OracleKind::truth:
            return "truth";
        case OracleKind::uniform_noise:
            return "uniform_noise";
        case OracleKind::expert:
            return "expert";
    }
    return "?";
}

double CostModel::cost(int cls, double margin_norm, QueryType type) const {
    double c = base;
    if (cls >= 0 && static_cast<std::size_t>(cls) < class_surcharge.size()) {
        c += class_surcharge[static_cast<std::size_t>(cls)];
    }
    c += boundary * (1.0 - std::clamp(margin_norm, 0.0, 1.0));
    c += type == QueryType::sample ? sample : rule;
    return c;
}

double CostModel::min_cost(QueryType type) const {
    double c = base;
    if (!class_surcharge.empty()) {
        c += *std::min_element(class_surcharge.begin(), class_surcharge.end());
    }
    c += type == QueryType::sample ? sample : rule;
    return c;
}

void CostModel::validate() const {
    bool ok = base >= 0.0 && boundary >= 0.0 && sample >= 0.0 && rule >= 0.0;
    for (double s : class_surcharge) {
        ok = ok && s >= 0.0;
    }
    if (!ok) {
        throw Error("cost model: all components must be non-negative");
    }
}

nlohmann::json CostModel::to_json() const {
    return {{"base", base},
            {"class_surcharge", class_surcharge},
            {"boundary", boundary},
            {"query_type", {{"sample", sample}, {"rule", rule}}}};
}

CostModel CostModel::from_json(const nlohmann::json& j) {
    CostModel c;
    c.base = j.value("base", c.base);
    c.class_surcharge = j.value("class_surcharge", std::vector<double>{});
    c.boundary = j.value("boundary", c.boundary);
    if (j.contains("query_type")) {
        c.sample = j["query_type"].value("sample", 0.0);
        c.rule = j["query_type"].value("rule", 0.0);
    }
    c.validate();
    return c;
}

double OracleSpec::expertise(int cls) const {
    switch (kind) {
        case OracleKind::truth:
            return 1.0;
        case OracleKind::uniform_noise:
            return 1.0 - noise;
        case OracleKind::expert:
            if (cls >= 0 && cls < confusion.rows()) {
                return confusion(cls, cls);
            }
            return 0.0;
    }
    return 0.0;
}

void OracleSpec::validate(std::size_t n_classes) const {
    if (!(noise >= 0.0 && noise <= 1.0)) {
        throw Error("oracle '" + id + "': noise must be in [0,1]");
    }
    if (!(availability > 0.0 && availability <= 1.0)) {
        throw Error("oracle '" + id + "': availability must be in (0,1]");
    }
    cost.validate();
    // an empty confusion matrix marks an expert of unknown reliability (a human annotator)
    if (kind == OracleKind::expert && confusion.size() > 0) {
        if (static_cast<std::size_t>(confusion.rows()) != n_classes || confusion.rows() != confusion.cols()) {
            throw Error("oracle '" + id + "': confusion matrix must be " + std::to_string(n_classes) + "x" +
                        std::to_string(n_classes));
        }
        for (Eigen::Index r = 0; r < confusion.rows(); ++r) {
            if ((confusion.row(r).array() < 0.0).any() || std::abs(confusion.row(r).sum() - 1.0) > 1e-9) {
                throw Error("oracle '" + id + "': confusion rows must be probability vectors");
            }
        }
    }
}

nlohmann::json OracleSpec::to_json() const {
    nlohmann::json j{{"id", id},
                     {"kind", to_string(kind)},
                     {"availability", availability},
                     {"cost", cost.to_json()},
                     {"seed", seed}};
    if (kind == OracleKind::uniform_noise) {
        j["p"] = noise;
    }
    if (kind == OracleKind::expert) {
        std::vector<std::vector<double>> rows;
        for (Eigen::Index r = 0; r < confusion.rows(); ++r) {
            rows.emplace_back(confusion.row(r).data(), confusion.row(r).data() + confusion.cols());
            for (Eigen::Index c = 0; c < confusion.cols(); ++c) {
                rows.back()[static_cast<std::size_t>(c)] = confusion(r, c);
            }
        }
        j["confusion"] = rows;
    }
    return j;
}

OracleSpec OracleSpec::from_json(const nlohmann::json& j) {
    OracleSpec o;
    o.id = j.value("id", o.id);
    auto kind = j.value("kind", std::string("truth"));
    if (kind == "truth") {
        o.kind = OracleKind::truth;
    } else if (kind == "uniform_noise") {
        o.kind = OracleKind::uniform_noise;
        o.noise = j.value("p", 0.0);
    } else if (kind == "expert") {
        o.kind = OracleKind::expert;
        auto rows = j.value("confusion", std::vector<std::vector<double>>{});
        o.confusion.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (rows[r].size() != rows.size()) {
                throw Error("oracle '" + o.id + "': confusion matrix must be square");
            }
            for (std::size_t c = 0; c < rows.size(); ++c) {
                o.confusion(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
            }
        }
    } else {
        throw Error("oracle '" + o.id + "': unknown kind '" + kind + "'");
    }
    o.availability = j.value("availability", 1.0);
    if (j.contains("cost")) {
        o.cost = CostModel::from_json(j["cost"]);
    }
    o.seed = j.value("seed", std::uint64_t{0});
    return o;
}

std::vector<OracleSpec> roster_from_json(const nlohmann::json& j) {
    if (!j.is_array()) {
        throw Error("oracle roster must be a JSON array");
    }
    std::vector<OracleSpec> out;
    for (const auto& e : j) {
        out.push_back(OracleSpec::from_json(e));
    }
    if (out.empty()) {
        throw Error("oracle roster is empty");
    }
    return out;
}

std::vector<OracleSpec> load_roster(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IngestionError("cannot open oracle roster '" + path.string() + "'");
    }
    try {
        return roster_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw IngestionError("oracle roster '" + path.string() + "': " + e.what());
    }
}

nlohmann::json LabelResponse::to_json() const {
    return {{"oracle", oracle_id}, {"row", row},   {"label", label},
            {"confidence", confidence}, {"cost", cost}, {"answered", answered}};
}

LabelResponse answer(const OracleSpec& oracle, RowId row, int true_label, std::size_t n_classes, double margin_norm,
                     std::size_t cycle, QueryType type, std::uint64_t draw) {
    std::mt19937_64 rng(derive_seed(oracle.seed, row, cycle, draw));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    LabelResponse r;
    r.oracle_id = oracle.id;
    r.row = row;
    if (u(rng) >= oracle.availability) {
        return r;
    }
    r.answered = true;
    switch (oracle.kind) {
        case OracleKind::truth:
            r.label = true_label;
            r.confidence = 1.0;
            break;
        case OracleKind::uniform_noise: {
            r.label = true_label;
            if (n_classes > 1 && u(rng) < oracle.noise) {
                std::uniform_int_distribution<int> other(0, static_cast<int>(n_classes) - 2);
                int o = other(rng);
                r.label = o >= true_label ? o + 1 : o;
            }
            r.confidence = 1.0 - oracle.noise;
            break;
        }
        case OracleKind::expert: {
            if (oracle.confusion.size() == 0) {
                throw Error("oracle '" + oracle.id + "': expert without a confusion matrix cannot be simulated");
            }
            double x = u(rng);
            const auto& row_p = oracle.confusion.row(true_label);
            int emitted = static_cast<int>(row_p.size()) - 1;
            double acc = 0.0;
            for (Eigen::Index c = 0; c < row_p.size(); ++c) {
                acc += row_p(c);
                if (x < acc) {
                    emitted = static_cast<int>(c);
                    break;
                }
            }
            r.label = emitted;
            r.confidence = oracle.confusion.row(emitted).maxCoeff();
            break;
        }
    }
    r.cost = oracle.cost.cost(true_label, margin_norm, type);
    return r;
}

nlohmann::json PolicyConfig::to_json() const {
    return {{"policy", policy == OraclePolicy::best_expertise ? "best-expertise" : "cheapest-adequate"},
            {"threshold", threshold},
            {"committee", committee}};
}

PolicyConfig PolicyConfig::from_json(const nlohmann::json& j) {
    PolicyConfig p;
    auto name = j.value("policy", std::string("best-expertise"));
    if (name == "best-expertise") {
        p.policy = OraclePolicy::best_expertise;
    } else if (name == "cheapest-adequate") {
        p.policy = OraclePolicy::cheapest_adequate;
    } else {
        throw Error("unknown oracle policy '" + name + "'");
    }
    p.threshold = j.value("threshold", p.threshold);
    p.committee = j.value("committee", p.committee);
    if (p.committee < 1) {
        throw Error("oracle policy: committee size must be >= 1");
    }
    return p;
}

std::vector<std::size_t> rank_oracles(std::span<const OracleSpec> oracles, int predicted_class, QueryType type,
                                      const PolicyConfig& policy, double margin_norm) {
    std::vector<std::size_t> order(oracles.size());
    std::iota(order.begin(), order.end(), 0);
    auto by_expertise = [&](std::size_t a, std::size_t b) {
        double ea = oracles[a].expertise(predicted_class);
        double eb = oracles[b].expertise(predicted_class);
        if (ea != eb) {
            return ea > eb;
        }
        return oracles[a].id < oracles[b].id;
    };
    if (policy.policy == OraclePolicy::best_expertise) {
        std::sort(order.begin(), order.end(), by_expertise);
        return order;
    }
    std::vector<std::size_t> adequate;
    std::vector<std::size_t> rest;
    for (auto i : order) {
        (oracles[i].expertise(predicted_class) >= policy.threshold ? adequate : rest).push_back(i);
    }
    std::sort(adequate.begin(), adequate.end(), [&](std::size_t a, std::size_t b) {
        double ca = oracles[a].cost.cost(predicted_class, margin_norm, type);
        double cb = oracles[b].cost.cost(predicted_class, margin_norm, type);
        if (ca != cb) {
            return ca < cb;
        }
        return oracles[a].id < oracles[b].id;
    });
    std::sort(rest.begin(), rest.end(), by_expertise);
    adequate.insert(adequate.end(), rest.begin(), rest.end());
    return adequate;
}

OracleChoice choose_oracle(std::span<const OracleSpec> oracles, int predicted_class, QueryType type,
                           const PolicyConfig& policy, double margin_norm) {
    if (oracles.empty()) {
        throw Error("choose_oracle: no oracle available");
    }
    auto order = rank_oracles(oracles, predicted_class, type, policy, margin_norm);
    OracleChoice c;
    c.index = order.front();
    c.fallback = policy.policy == OraclePolicy::cheapest_adequate &&
                 oracles[c.index].expertise(predicted_class) < policy.threshold;
    return c;
}

FusedLabel fuse(std::span<const LabelResponse> responses) {
    int max_label = -1;
    std::size_t answered = 0;
    for (const auto& r : responses) {
        if (r.answered) {
            if (r.label < 0) {
                throw Error("fuse: answered response without a label");
            }
            max_label = std::max(max_label, r.label);
            ++answered;
        }
    }
    if (answered == 0) {
        throw Error("no label acquired");
    }
    std::vector<double> mass(static_cast<std::size_t>(max_label) + 1, 0.0);
    double total = 0.0;
    for (const auto& r : responses) {
        if (r.answered) {
            mass[static_cast<std::size_t>(r.label)] += r.confidence;
            total += r.confidence;
        }
    }
    if (!(total > 0.0)) {
        // every answer carried zero confidence: plain majority vote
        std::fill(mass.begin(), mass.end(), 0.0);
        for (const auto& r : responses) {
            if (r.answered) {
                mass[static_cast<std::size_t>(r.label)] += 1.0;
            }
        }
        total = static_cast<double>(answered);
    }
    FusedLabel f;
    f.label = 0;
    for (std::size_t c = 1; c < mass.size(); ++c) {
        if (mass[c] > mass[static_cast<std::size_t>(f.label)]) {
            f.label = static_cast<int>(c);
        }
    }
    f.confidence = mass[static_cast<std::size_t>(f.label)] / total;
    return f;
}

void CostLedger::charge(std::size_t cycle, const std::string& oracle_id, QueryType type, double cost) {
    if (cost < 0.0) {
        throw Error("ledger: negative cost");
    }
    entries_.push_back({cycle, oracle_id, type, cost});
    total_ += cost;
}

std::string CostLedger::to_csv() const {
    std::ostringstream out;
    out.precision(17);
    out << "cycle,oracle,type,cost\n";
    for (const auto& e : entries_) {
        out << e.cycle << ',' << e.oracle_id << ',' << to_string(e.type) << ',' << e.cost << '\n';
    }
    return out.str();
}

nlohmann::json CostLedger::to_json() const {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : entries_) {
        entries.push_back({{"cycle", e.cycle}, {"oracle", e.oracle_id}, {"type", to_string(e.type)}, {"cost", e.cost}});
    }
    return {{"entries", entries}, {"total", total_}};
}

}  // namespace cal
