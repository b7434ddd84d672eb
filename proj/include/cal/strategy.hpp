#pragma once

#include "cal/cmm.hpp"
#include "cal/common.hpp"
#include "cal/data.hpp"
#include "cal/mixture.hpp"

#include <nlohmann/json.hpp>

#include <span>
#include <string>
#include <vector>

namespace cal {

enum class StrategyKind { us, three_ds, four_ds };

std::string to_string(StrategyKind k);
StrategyKind strategy_from_string(const std::string& s);

struct SelectionWeights {
    double density = 0.0;
    double distance = 1.0;
    double diversity = 0.0;
    double distribution = 0.0;

    [[nodiscard]] double sum() const noexcept { return density + distance + diversity + distribution; }
    [[nodiscard]] nlohmann::json to_json() const;
};

// Constants of the self-adaptation schedule; with rho = min(t/T, 1):
//   w_distribution = distribution_start * exp(-distribution_decay * rho)
//   w_density      = density_start * exp(-density_decay * rho)
//   w_distance     = 1 - w_distribution - w_density
struct ScheduleConstants {
    double distribution_start = 0.4;
    double distribution_decay = 5.0;
    double density_start = 0.4;
    double density_decay = 3.0;
};

SelectionWeights adapt_weights(std::size_t cycle, std::size_t total_cycles, double diversity_user, std::size_t query_size,
                               StrategyKind kind = StrategyKind::four_ds, const ScheduleConstants& sc = {});

// Per pool row criteria, each in [0,1]. Rows are in ascending row-id order.
struct CriterionScores {
    std::vector<RowId> ids;
    std::vector<double> density;
    std::vector<double> distance;
    std::vector<double> distribution;

    [[nodiscard]] std::size_t size() const noexcept { return ids.size(); }
    [[nodiscard]] nlohmann::json row_json(std::size_t pos) const;
};

// density(x) / max over the pool, computed from log densities.
std::vector<double> score_density(std::span<const double> log_density);
std::vector<double> score_density(const MixtureModel& mixture, const RowMatrix& pool_rows);

// 1 - margin_norm.
std::vector<double> score_distance(std::span<const double> margin_norm);

// Minimum distance to the chosen rows (positions into `pool_rows`) divided by
// its pool maximum; all ones for an empty batch.
std::vector<double> score_diversity(const FeatureSchema& schema, const RowMatrix& pool_rows,
                                    std::span<const std::size_t> chosen);

// Normalized reduction of the class distribution mismatch obtained by adding
// each pool row's responsibility-implied class mass to the labeled counts.
// The reference distribution is the mean CMM posterior over the pool.
std::vector<double> score_distribution(const CmmClassifier& cmm, const RowMatrix& pool_resp,
                                       std::span<const int> labeled_labels);

// Greedy batch: q times pick the argmax of the weighted criteria, recomputing
// diversity against the picks so far. Returns positions into the pool; ties go
// to the lowest position (= lowest row id).
std::vector<std::size_t> select_batch(const CriterionScores& scores, const SelectionWeights& weights, std::size_t q,
                                      const FeatureSchema& schema, const RowMatrix& pool_rows);

}  // namespace cal
