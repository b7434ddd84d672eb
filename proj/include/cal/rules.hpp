#pragma once

#include "cal/cmm.hpp"
#include "cal/common.hpp"
#include "cal/data.hpp"
#include "cal/mixture.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace cal {

enum class Term { low, medium, high };
std::string to_string(Term t);

// 33rd and 67th percentiles (linear interpolation) of every continuous column
// of the training rows; indexed like MixtureModel::continuous_columns().
struct TermBoundaries {
    std::vector<double> lower;
    std::vector<double> upper;
    [[nodiscard]] Term classify(std::size_t dim, double value) const;
    [[nodiscard]] nlohmann::json to_json() const;
};

double percentile(std::vector<double> values, double p);
TermBoundaries term_boundaries(const RowMatrix& rows, const FeatureSchema& schema);

struct RuleTerm {
    std::string column;
    Term term = Term::medium;
};

struct RuleSet {
    std::string column;
    std::vector<std::string> categories;
};

struct Rule {
    std::size_t component = 0;
    double weight = 0.0;  // mixing weight of the component
    std::vector<RuleTerm> continuous;
    std::vector<RuleSet> categorical;
    int conclusion = -1;  // -1: unlabeled
    double confidence = 0.0;

    [[nodiscard]] std::string premise() const;
    [[nodiscard]] std::string text(const std::vector<std::string>& class_names) const;
    [[nodiscard]] nlohmann::json to_json(const std::vector<std::string>& class_names) const;
};

// One rule per component: mean terms, categories above the uniform level,
// conclusion = argmax_c P[c][j] when it exceeds 0.5.
std::vector<Rule> extract_rules(const CmmClassifier& cmm, const TermBoundaries& bounds);

// The unlabeled rule of the heaviest component, if any.
std::optional<Rule> next_rule_query(const std::vector<Rule>& rules);

// Column j becomes gamma * onehot(c) + (1 - gamma) * old column.
CmmClassifier apply_conclusion(const CmmClassifier& cmm, std::size_t component, int cls, double gamma);

std::string confirmation_prompt(const Rule& rule, const std::vector<std::string>& class_names);

}  // namespace cal
