#pragma once

#include "cal/common.hpp"

#include <nlohmann/json.hpp>

#include <span>
#include <string>
#include <vector>

namespace cal {

// Accuracy (0..1) on a grid of labeled-set sizes.
struct LearningCurve {
    std::vector<double> n_labeled;
    std::vector<double> accuracy;
};

// Trapezoidal mean accuracy over the grid, in percentage points.
double mean_area(const LearningCurve& c);
// mean_area(curve) - mean_area(baseline); both curves must share their grid.
double aulc(const LearningCurve& curve, const LearningCurve& baseline);

struct DurResult {
    double value = 1.0;
    bool reached = true;
};
// Labels the method needs to reach the baseline's final accuracy, relative to
// the labels the baseline needs.
DurResult dur(const LearningCurve& curve, const LearningCurve& baseline);

// Total-variation distance between two class distributions.
double cdm(std::span<const double> estimate, std::span<const double> reference);

struct RankReport {
    std::vector<std::string> methods;
    std::vector<std::string> datasets;
    std::vector<std::vector<double>> accuracy;  // datasets x methods
    std::vector<std::vector<double>> ranks;     // datasets x methods, 1 = best
    std::vector<double> average_ranks;
    std::vector<double> wins;

    [[nodiscard]] nlohmann::json to_json() const;
};

// Rank 1 = highest value; ties share the averaged rank and split the win.
RankReport rank_methods(const std::vector<std::vector<double>>& accuracy, std::vector<std::string> methods = {},
                        std::vector<std::string> datasets = {});

// Same as rank_methods but rank 1 = lowest value (for DUR and CDM wins).
RankReport rank_methods_ascending(const std::vector<std::vector<double>>& values, std::vector<std::string> methods = {},
                                  std::vector<std::string> datasets = {});

struct FriedmanResult {
    double statistic = 0.0;
    double critical_value = 0.0;
    std::size_t df = 0;
    double alpha = 0.0;
    bool reject = false;
};

FriedmanResult friedman(std::span<const double> average_ranks, std::size_t n_datasets, double alpha);

// Upper-tail chi-square critical value, df 1..10, alpha in {0.10, 0.05, 0.01}.
double chi_square_critical(std::size_t df, double alpha);
// Studentized-range based Nemenyi constant q_alpha = Q_{alpha,k,inf} / sqrt(2), k 2..10.
double nemenyi_q(std::size_t k, double alpha);
double nemenyi_cd(std::size_t k, std::size_t n_datasets, double alpha);

struct CdPlotData {
    double cd = 0.0;
    double axis_min = 1.0;
    double axis_max = 1.0;
    std::vector<std::string> methods;
    std::vector<double> positions;
    std::vector<std::vector<std::string>> groups;  // connected (not significantly different) sets
    [[nodiscard]] nlohmann::json to_json() const;
};

CdPlotData cd_plot_data(const RankReport& report, double cd);

}  // namespace cal
