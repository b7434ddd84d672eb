#include "cal/rules.hpp"

#include <algorithm>
#include <cmath>

namespace cal {

std::string to_string(Term t) {
    switch (t) {
        case Term::low:
            return "low";
        case Term::medium:
            return "medium";
        case Term::high:
            return "high";
    }
    return "?";
}

double percentile(std::vector<double> values, double p) {
    if (values.empty()) {
        throw Error("percentile of an empty sample");
    }
    std::sort(values.begin(), values.end());
    double pos = std::clamp(p, 0.0, 1.0) * static_cast<double>(values.size() - 1);
    auto lo = static_cast<std::size_t>(std::floor(pos));
    auto hi = std::min(lo + 1, values.size() - 1);
    double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

Term TermBoundaries::classify(std::size_t dim, double value) const {
    if (value < lower.at(dim)) {
        return Term::low;
    }
    if (value > upper.at(dim)) {
        return Term::high;
    }
    return Term::medium;
}

nlohmann::json TermBoundaries::to_json() const { return {{"p33", lower}, {"p67", upper}}; }

TermBoundaries term_boundaries(const RowMatrix& rows, const FeatureSchema& schema) {
    TermBoundaries b;
    for (auto c : schema.continuous_columns()) {
        std::vector<double> col(static_cast<std::size_t>(rows.rows()));
        for (Eigen::Index i = 0; i < rows.rows(); ++i) {
            col[static_cast<std::size_t>(i)] = rows(i, static_cast<Eigen::Index>(c));
        }
        b.lower.push_back(percentile(col, 0.33));
        b.upper.push_back(percentile(col, 0.67));
    }
    return b;
}

std::string Rule::premise() const {
    std::vector<std::string> parts;
    for (const auto& t : continuous) {
        parts.push_back(t.column + " is " + to_string(t.term));
    }
    for (const auto& s : categorical) {
        if (s.categories.size() == 1) {
            parts.push_back(s.column + " is " + s.categories.front());
            continue;
        }
        std::string alt = "(";
        for (std::size_t i = 0; i < s.categories.size(); ++i) {
            alt += (i ? " or " : "") + s.column + " is " + s.categories[i];
        }
        parts.push_back(alt + ")");
    }
    if (parts.empty()) {
        return "true";
    }
    std::string out = parts.front();
    for (std::size_t i = 1; i < parts.size(); ++i) {
        out += " and " + parts[i];
    }
    return out;
}

std::string Rule::text(const std::vector<std::string>& class_names) const {
    std::string concl = conclusion >= 0 && static_cast<std::size_t>(conclusion) < class_names.size()
                            ? class_names[static_cast<std::size_t>(conclusion)]
                            : "unlabeled";
    return "if " + premise() + " then class = " + concl;
}

nlohmann::json Rule::to_json(const std::vector<std::string>& class_names) const {
    nlohmann::json terms = nlohmann::json::array();
    for (const auto& t : continuous) {
        terms.push_back({{"column", t.column}, {"term", to_string(t.term)}});
    }
    nlohmann::json sets = nlohmann::json::array();
    for (const auto& s : categorical) {
        sets.push_back({{"column", s.column}, {"categories", s.categories}});
    }
    nlohmann::json concl = nullptr;
    if (conclusion >= 0 && static_cast<std::size_t>(conclusion) < class_names.size()) {
        concl = class_names[static_cast<std::size_t>(conclusion)];
    }
    return {{"component", component},
            {"weight", weight},
            {"premise", premise()},
            {"text", text(class_names)},
            {"continuous", terms},
            {"categorical", sets},
            {"conclusion", concl},
            {"confidence", confidence}};
}

std::vector<Rule> extract_rules(const CmmClassifier& cmm, const TermBoundaries& bounds) {
    const auto& mix = *cmm.mixture();
    const auto& schema = mix.schema();
    const auto& cont = mix.continuous_columns();
    const auto& cat = mix.categorical_columns();
    if (bounds.lower.size() != cont.size()) {
        throw Error("extract_rules: term boundaries do not match the mixture");
    }
    std::vector<Rule> rules;
    for (std::size_t j = 0; j < mix.size(); ++j) {
        const auto& comp = mix.component(j);
        Rule r;
        r.component = j;
        r.weight = comp.weight;
        for (std::size_t d = 0; d < cont.size(); ++d) {
            r.continuous.push_back({schema.columns[cont[d]].name, bounds.classify(d, comp.mean(static_cast<Eigen::Index>(d)))});
        }
        for (std::size_t d = 0; d < cat.size(); ++d) {
            const auto& spec = schema.columns[cat[d]];
            const auto& theta = comp.categorical[d];
            double uniform = 1.0 / static_cast<double>(theta.size());
            RuleSet s{spec.name, {}};
            for (std::size_t v = 0; v < theta.size(); ++v) {
                if (theta[v] > uniform) {
                    s.categories.push_back(spec.categories[v]);
                }
            }
            if (!s.categories.empty()) {
                r.categorical.push_back(std::move(s));
            }
        }
        Eigen::VectorXd col = cmm.assignments().col(static_cast<Eigen::Index>(j));
        std::vector<double> v(col.data(), col.data() + col.size());
        int best = argmax_lowest(v);
        r.confidence = v[static_cast<std::size_t>(best)];
        r.conclusion = r.confidence > 0.5 ? best : -1;
        rules.push_back(std::move(r));
    }
    return rules;
}

std::optional<Rule> next_rule_query(const std::vector<Rule>& rules) {
    std::optional<Rule> best;
    for (const auto& r : rules) {
        if (r.conclusion < 0 && (!best || r.weight > best->weight)) {
            best = r;
        }
    }
    return best;
}

CmmClassifier apply_conclusion(const CmmClassifier& cmm, std::size_t component, int cls, double gamma) {
    if (component >= cmm.n_components()) {
        throw Error("apply_conclusion: component out of range");
    }
    if (cls < 0 || static_cast<std::size_t>(cls) >= cmm.n_classes()) {
        throw Error("apply_conclusion: class out of range");
    }
    if (!(gamma >= 0.0 && gamma <= 1.0)) {
        throw Error("apply_conclusion: confidence must be in [0,1]");
    }
    Vector col = (1.0 - gamma) * cmm.assignments().col(static_cast<Eigen::Index>(component));
    col(cls) += gamma;
    CmmClassifier out = cmm;
    out.set_column(component, col);
    return out;
}

std::string confirmation_prompt(const Rule& rule, const std::vector<std::string>& class_names) {
    return "Can you confirm the following rule: " + rule.text(class_names) + "?";
}

}  // namespace cal
