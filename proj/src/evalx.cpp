#include "cal/evalx.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <optional>
#include <sstream>

namespace cal {

namespace {

void check_grid(const LearningCurve& c) {
    if (c.n_labeled.empty() || c.n_labeled.size() != c.accuracy.size()) {
        throw Error("learning curve: grid and accuracy must be non-empty and equally long");
    }
}

void check_same_grid(const LearningCurve& a, const LearningCurve& b) {
    check_grid(a);
    check_grid(b);
    if (a.n_labeled != b.n_labeled) {
        throw Error("learning curve: grids differ");
    }
}

std::size_t alpha_index(double alpha) {
    if (std::abs(alpha - 0.10) < 1e-12) {
        return 0;
    }
    if (std::abs(alpha - 0.05) < 1e-12) {
        return 1;
    }
    if (std::abs(alpha - 0.01) < 1e-12) {
        return 2;
    }
    std::ostringstream msg;
    msg << "alpha " << alpha << " not supported (supported: 0.10, 0.05, 0.01)";
    throw Error(msg.str());
}

// chi-square upper critical values for df = 1..10
constexpr std::array<std::array<double, 10>, 3> chi2_table{{
    {2.706, 4.605, 6.251, 7.779, 9.236, 10.645, 12.017, 13.362, 14.684, 15.987},
    {3.841, 5.991, 7.815, 9.488, 11.070, 12.592, 14.067, 15.507, 16.919, 18.307},
    {6.635, 9.210, 11.345, 13.277, 15.086, 16.812, 18.475, 20.090, 21.666, 23.209},
}};

// q_alpha for k = 2..10 methods
constexpr std::array<std::array<double, 9>, 3> nemenyi_table{{
    {1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920},
    {1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164},
    {2.576, 2.913, 3.113, 3.255, 3.364, 3.452, 3.526, 3.591, 3.646},
}};

RankReport rank_impl(const std::vector<std::vector<double>>& values, std::vector<std::string> methods,
                     std::vector<std::string> datasets, bool higher_is_better) {
    if (values.empty()) {
        throw Error("rank_methods: no datasets");
    }
    const auto k = values.front().size();
    if (k < 2) {
        throw Error("rank_methods: need at least 2 methods");
    }
    if (methods.empty()) {
        for (std::size_t m = 0; m < k; ++m) {
            methods.push_back("m" + std::to_string(m));
        }
    }
    if (datasets.empty()) {
        for (std::size_t d = 0; d < values.size(); ++d) {
            datasets.push_back("d" + std::to_string(d));
        }
    }
    if (methods.size() != k || datasets.size() != values.size()) {
        throw Error("rank_methods: name lists do not match the matrix");
    }
    RankReport r;
    r.methods = std::move(methods);
    r.datasets = std::move(datasets);
    r.accuracy = values;
    r.average_ranks.assign(k, 0.0);
    r.wins.assign(k, 0.0);
    for (const auto& row : values) {
        if (row.size() != k) {
            throw Error("rank_methods: ragged matrix");
        }
        std::vector<std::size_t> order(k);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return higher_is_better ? row[a] > row[b] : row[a] < row[b];
        });
        std::vector<double> ranks(k);
        std::size_t pos = 0;
        while (pos < k) {
            std::size_t end = pos;
            while (end + 1 < k && row[order[end + 1]] == row[order[pos]]) {
                ++end;
            }
            double avg = (static_cast<double>(pos + 1) + static_cast<double>(end + 1)) / 2.0;
            for (std::size_t t = pos; t <= end; ++t) {
                ranks[order[t]] = avg;
            }
            if (pos == 0) {
                double share = 1.0 / static_cast<double>(end - pos + 1);
                for (std::size_t t = pos; t <= end; ++t) {
                    r.wins[order[t]] += share;
                }
            }
            pos = end + 1;
        }
        for (std::size_t m = 0; m < k; ++m) {
            r.average_ranks[m] += ranks[m];
        }
        r.ranks.push_back(std::move(ranks));
    }
    for (auto& a : r.average_ranks) {
        a /= static_cast<double>(values.size());
    }
    return r;
}

}  // namespace

double mean_area(const LearningCurve& c) {
    check_grid(c);
    if (c.n_labeled.size() == 1) {
        return 100.0 * c.accuracy.front();
    }
    double area = 0.0;
    for (std::size_t i = 1; i < c.n_labeled.size(); ++i) {
        area += 0.5 * (c.accuracy[i] + c.accuracy[i - 1]) * (c.n_labeled[i] - c.n_labeled[i - 1]);
    }
    double width = c.n_labeled.back() - c.n_labeled.front();
    if (!(width > 0.0)) {
        throw Error("learning curve: grid must be increasing");
    }
    return 100.0 * area / width;
}

double aulc(const LearningCurve& curve, const LearningCurve& baseline) {
    check_same_grid(curve, baseline);
    return mean_area(curve) - mean_area(baseline);
}

DurResult dur(const LearningCurve& curve, const LearningCurve& baseline) {
    check_same_grid(curve, baseline);
    double target = baseline.accuracy.back();
    auto first_reaching = [&](const LearningCurve& c) -> std::optional<double> {
        for (std::size_t i = 0; i < c.accuracy.size(); ++i) {
            if (c.accuracy[i] >= target) {
                return c.n_labeled[i];
            }
        }
        return std::nullopt;
    };
    double n_base = *first_reaching(baseline);
    if (!(n_base > 0.0)) {
        throw Error("dur: baseline reaches its target at a non-positive label count");
    }
    auto n_method = first_reaching(curve);
    if (!n_method) {
        return {curve.n_labeled.back() / n_base, false};
    }
    return {*n_method / n_base, true};
}

double cdm(std::span<const double> estimate, std::span<const double> reference) {
    if (estimate.size() != reference.size()) {
        throw Error("cdm: distributions differ in length");
    }
    double s = 0.0;
    for (std::size_t c = 0; c < estimate.size(); ++c) {
        s += std::abs(estimate[c] - reference[c]);
    }
    return 0.5 * s;
}

nlohmann::json RankReport::to_json() const {
    return {{"methods", methods}, {"datasets", datasets},         {"accuracy", accuracy},
            {"ranks", ranks},     {"average_ranks", average_ranks}, {"wins", wins}};
}

RankReport rank_methods(const std::vector<std::vector<double>>& accuracy, std::vector<std::string> methods,
                        std::vector<std::string> datasets) {
    return rank_impl(accuracy, std::move(methods), std::move(datasets), true);
}

RankReport rank_methods_ascending(const std::vector<std::vector<double>>& values, std::vector<std::string> methods,
                                  std::vector<std::string> datasets) {
    return rank_impl(values, std::move(methods), std::move(datasets), false);
}

double chi_square_critical(std::size_t df, double alpha) {
    auto a = alpha_index(alpha);
    if (df < 1 || df > 10) {
        throw Error("chi-square table covers 1..10 degrees of freedom, got " + std::to_string(df));
    }
    return chi2_table[a][df - 1];
}

double nemenyi_q(std::size_t k, double alpha) {
    auto a = alpha_index(alpha);
    if (k < 2 || k > 10) {
        throw Error("Nemenyi table covers 2..10 methods, got " + std::to_string(k));
    }
    return nemenyi_table[a][k - 2];
}

FriedmanResult friedman(std::span<const double> average_ranks, std::size_t n_datasets, double alpha) {
    if (n_datasets < 2) {
        throw Error("friedman: need at least 2 datasets");
    }
    const auto k = average_ranks.size();
    if (k < 2) {
        throw Error("friedman: need at least 2 methods");
    }
    auto kd = static_cast<double>(k);
    auto N = static_cast<double>(n_datasets);
    double sum_sq = 0.0;
    for (double r : average_ranks) {
        sum_sq += r * r;
    }
    FriedmanResult f;
    f.statistic = 12.0 * N / (kd * (kd + 1.0)) * (sum_sq - kd * (kd + 1.0) * (kd + 1.0) / 4.0);
    if (std::abs(f.statistic) < 1e-12) {
        f.statistic = 0.0;
    }
    f.df = k - 1;
    f.alpha = alpha;
    f.critical_value = chi_square_critical(f.df, alpha);
    f.reject = f.statistic > f.critical_value;
    return f;
}

double nemenyi_cd(std::size_t k, std::size_t n_datasets, double alpha) {
    if (n_datasets == 0) {
        throw Error("nemenyi_cd: need at least one dataset");
    }
    auto kd = static_cast<double>(k);
    return nemenyi_q(k, alpha) * std::sqrt(kd * (kd + 1.0) / (6.0 * static_cast<double>(n_datasets)));
}

nlohmann::json CdPlotData::to_json() const {
    nlohmann::json ms = nlohmann::json::array();
    for (std::size_t i = 0; i < methods.size(); ++i) {
        ms.push_back({{"method", methods[i]}, {"average_rank", positions[i]}});
    }
    return {{"format", "cdplot-v1"}, {"cd", cd},         {"axis", {axis_min, axis_max}},
            {"methods", ms},         {"groups", groups}};
}

CdPlotData cd_plot_data(const RankReport& report, double cd) {
    CdPlotData p;
    p.cd = cd;
    p.methods = report.methods;
    p.positions = report.average_ranks;
    p.axis_min = 1.0;
    p.axis_max = static_cast<double>(std::max<std::size_t>(report.methods.size(), 1));
    std::vector<std::size_t> order(report.methods.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return p.positions[a] < p.positions[b]; });
    // Maximal runs of methods (in rank order) spanning at most CD.
    std::size_t last_end = 0;
    bool have_group = false;
    for (std::size_t i = 0; i < order.size(); ++i) {
        std::size_t end = i;
        while (end + 1 < order.size() && p.positions[order[end + 1]] - p.positions[order[i]] <= cd + 1e-12) {
            ++end;
        }
        if (have_group && end <= last_end) {
            continue;
        }
        std::vector<std::string> g;
        for (std::size_t t = i; t <= end; ++t) {
            g.push_back(report.methods[order[t]]);
        }
        p.groups.push_back(std::move(g));
        last_end = end;
        have_group = true;
    }
    return p;
}

}  // namespace cal
