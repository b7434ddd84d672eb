#include "cal/strategy.hpp"

#include "cal/evalx.hpp"
#include "cal/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cal {

std::string to_string(StrategyKind k) {
    switch (k) {
        case StrategyKind::us:
            return "us";
        case StrategyKind::three_ds:
            return "3ds";
        case StrategyKind::four_ds:
            return "4ds";
    }
    return "?";
}

StrategyKind strategy_from_string(const std::string& s) {
    if (s == "us" || s == "US") {
        return StrategyKind::us;
    }
    if (s == "3ds" || s == "3DS") {
        return StrategyKind::three_ds;
    }
    if (s == "4ds" || s == "4DS") {
        return StrategyKind::four_ds;
    }
    throw Error("unknown strategy '" + s + "' (expected us, 3ds or 4ds)");
}

nlohmann::json SelectionWeights::to_json() const {
    return {{"density", density}, {"distance", distance}, {"diversity", diversity}, {"distribution", distribution}};
}

SelectionWeights adapt_weights(std::size_t cycle, std::size_t total_cycles, double diversity_user, std::size_t query_size,
                               StrategyKind kind, const ScheduleConstants& sc) {
    SelectionWeights w;
    if (kind == StrategyKind::us) {
        return w;
    }
    double rho = std::min(static_cast<double>(cycle) / static_cast<double>(std::max<std::size_t>(total_cycles, 1)), 1.0);
    w.distribution = sc.distribution_start * std::exp(-sc.distribution_decay * rho);
    w.density = sc.density_start * std::exp(-sc.density_decay * rho);
    w.distance = 1.0 - w.distribution - w.density;
    if (kind == StrategyKind::three_ds) {
        double rest = w.density + w.distance;
        w.distribution = 0.0;
        w.density /= rest;
        w.distance /= rest;
    }
    double div = query_size > 1 ? std::clamp(diversity_user, 0.0, 1.0) : 0.0;
    w.density *= 1.0 - div;
    w.distance *= 1.0 - div;
    w.distribution *= 1.0 - div;
    w.diversity = div;
    double s = w.sum();
    w.density /= s;
    w.distance /= s;
    w.diversity /= s;
    w.distribution /= s;
    return w;
}

nlohmann::json CriterionScores::row_json(std::size_t pos) const {
    return {{"density", density.at(pos)}, {"distance", distance.at(pos)}, {"distribution", distribution.at(pos)}};
}

std::vector<double> score_density(std::span<const double> log_density) {
    if (log_density.empty()) {
        throw Error("score_density: empty pool");
    }
    double mx = *std::max_element(log_density.begin(), log_density.end());
    std::vector<double> out;
    out.reserve(log_density.size());
    for (double l : log_density) {
        out.push_back(std::isfinite(mx) ? std::exp(l - mx) : 1.0);
    }
    return out;
}

std::vector<double> score_density(const MixtureModel& mixture, const RowMatrix& pool_rows) {
    auto ld = kernels::log_densities(mixture, pool_rows);
    return score_density(ld);
}

std::vector<double> score_distance(std::span<const double> margin_norm) {
    std::vector<double> out;
    out.reserve(margin_norm.size());
    for (double m : margin_norm) {
        out.push_back(1.0 - std::clamp(m, 0.0, 1.0));
    }
    return out;
}

std::vector<double> score_diversity(const FeatureSchema& schema, const RowMatrix& pool_rows,
                                    std::span<const std::size_t> chosen) {
    const auto n = static_cast<std::size_t>(pool_rows.rows());
    std::vector<double> out(n, 1.0);
    if (chosen.empty()) {
        return out;
    }
    double mx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (auto c : chosen) {
            best = std::min(best, row_distance_sq(schema, row_span(pool_rows, static_cast<Eigen::Index>(i)),
                                                  row_span(pool_rows, static_cast<Eigen::Index>(c))));
        }
        out[i] = std::sqrt(best);
        mx = std::max(mx, out[i]);
    }
    for (auto& v : out) {
        v = mx > 0.0 ? v / mx : 0.0;
    }
    return out;
}

std::vector<double> score_distribution(const CmmClassifier& cmm, const RowMatrix& pool_resp,
                                       std::span<const int> labeled_labels) {
    const auto n = static_cast<std::size_t>(pool_resp.rows());
    if (labeled_labels.empty()) {
        return std::vector<double>(n, 1.0);
    }
    const auto K = cmm.n_classes();
    std::vector<std::vector<double>> post(n);
    std::vector<double> reference(K, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        post[i] = cmm.posterior_from_responsibilities(
            std::span<const double>(pool_resp.data() + static_cast<Eigen::Index>(i) * pool_resp.cols(),
                                    static_cast<std::size_t>(pool_resp.cols())));
        for (std::size_t c = 0; c < K; ++c) {
            reference[c] += post[i][c];
        }
    }
    for (auto& r : reference) {
        r /= static_cast<double>(std::max<std::size_t>(n, 1));
    }
    std::vector<double> counts(K, 0.0);
    for (int l : labeled_labels) {
        counts[static_cast<std::size_t>(l)] += 1.0;
    }
    auto m = static_cast<double>(labeled_labels.size());
    std::vector<double> current(K);
    for (std::size_t c = 0; c < K; ++c) {
        current[c] = counts[c] / m;
    }
    double base = cdm(current, reference);
    std::vector<double> out(n, 0.0);
    std::vector<double> next(K);
    double mx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < K; ++c) {
            next[c] = (counts[c] + post[i][c]) / (m + 1.0);
        }
        out[i] = std::max(0.0, base - cdm(next, reference));
        mx = std::max(mx, out[i]);
    }
    for (auto& v : out) {
        v = mx > 0.0 ? v / mx : 0.0;
    }
    return out;
}

std::vector<std::size_t> select_batch(const CriterionScores& scores, const SelectionWeights& weights, std::size_t q,
                                      const FeatureSchema& schema, const RowMatrix& pool_rows) {
    const auto n = scores.size();
    if (q > n) {
        throw Error("select_batch: query size " + std::to_string(q) + " exceeds pool size " + std::to_string(n));
    }
    double total = weights.sum();
    if (!(total > 0.0)) {
        throw Error("select_batch: weights must have positive sum");
    }
    const double wd = weights.density / total;
    const double wt = weights.distance / total;
    const double wv = weights.diversity / total;
    const double wc = weights.distribution / total;
    auto at = [](const std::vector<double>& v, std::size_t i) { return v.empty() ? 0.0 : v[i]; };

    std::vector<double> fixed(n);
    for (std::size_t i = 0; i < n; ++i) {
        fixed[i] = wd * at(scores.density, i) + wt * at(scores.distance, i) + wc * at(scores.distribution, i);
    }
    std::vector<std::size_t> chosen;
    std::vector<char> taken(n, 0);
    while (chosen.size() < q) {
        std::vector<double> div;
        if (wv > 0.0) {
            div = score_diversity(schema, pool_rows, chosen);
        }
        std::size_t best = n;
        double best_v = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            if (taken[i]) {
                continue;
            }
            double v = fixed[i] + (wv > 0.0 ? wv * div[i] : 0.0);
            if (v > best_v) {
                best_v = v;
                best = i;
            }
        }
        taken[best] = 1;
        chosen.push_back(best);
    }
    return chosen;
}

}  // namespace cal
