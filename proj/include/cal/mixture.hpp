#pragma once

#include "cal/common.hpp"
#include "cal/data.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <span>
#include <vector>

namespace cal {

enum class CovarianceType { full, diagonal };

struct VIConfig {
    std::size_t max_components = 10;
    double dirichlet_alpha0 = 1e-3;      // concentration of the mixing-weight prior
    double mean_precision_beta0 = 1.0;   // strength of the prior on component means
    double categorical_prior = 1.0;      // Dirichlet pseudo-count for categorical tables
    double rel_tolerance = 1e-5;
    std::size_t max_iterations = 200;
    double prune_threshold = 1e-2;       // on the expected component count N_j
    std::size_t restarts = 3;
    std::uint64_t seed = 0;
    CovarianceType covariance = CovarianceType::full;
    double jitter_scale = 1e-6;          // times the mean feature variance

    void validate() const;
    [[nodiscard]] nlohmann::json to_json() const;
    static VIConfig from_json(const nlohmann::json& j);
};

struct MixtureComponent {
    double weight = 0.0;
    Vector mean;                                   // continuous dims
    Eigen::MatrixXd covariance;                    // continuous dims
    std::vector<std::vector<double>> categorical;  // [categorical dim][category]
    double effective_count = 0.0;                  // N_j at convergence
};

struct FitDiagnostics {
    double final_elbo = 0.0;
    std::size_t iterations = 0;
    std::size_t pruned = 0;
    std::size_t initial_components = 0;
    std::size_t best_restart = 0;
    // ELBO after every iteration of the returned restart; a new segment starts
    // after each pruning step (index into `elbo_trace`).
    std::vector<double> elbo_trace;
    std::vector<std::size_t> segment_starts;
};

struct ModelSummary {
    std::size_t components = 0;
    std::vector<double> weights;
    std::vector<double> effective_counts;
    double elbo = 0.0;
    std::size_t pruned = 0;
    std::size_t iterations = 0;
    [[nodiscard]] nlohmann::json to_json() const;
};

// Fitted mixture over the feature space of a schema. Immutable once built.
class MixtureModel {
  public:
    MixtureModel() = default;
    MixtureModel(FeatureSchema schema, std::vector<MixtureComponent> components, FitDiagnostics diag = {});

    [[nodiscard]] std::size_t size() const noexcept { return components_.size(); }
    [[nodiscard]] const std::vector<MixtureComponent>& components() const noexcept { return components_; }
    [[nodiscard]] const MixtureComponent& component(std::size_t j) const { return components_.at(j); }
    [[nodiscard]] const FeatureSchema& schema() const noexcept { return schema_; }
    [[nodiscard]] const std::vector<std::size_t>& continuous_columns() const noexcept { return cont_; }
    [[nodiscard]] const std::vector<std::size_t>& categorical_columns() const noexcept { return cat_; }
    [[nodiscard]] const FitDiagnostics& diagnostics() const noexcept { return diag_; }

    // log(pi_j) + log p(x | component j) for every component.
    void log_joint(std::span<const double> x, std::span<double> out) const;
    [[nodiscard]] std::vector<double> responsibilities(std::span<const double> x) const;
    [[nodiscard]] double log_density(std::span<const double> x) const;
    [[nodiscard]] double density(std::span<const double> x) const;

    // Lower Cholesky factor of component j's covariance.
    [[nodiscard]] const Eigen::MatrixXd& chol(std::size_t j) const { return chol_.at(j); }

    [[nodiscard]] ModelSummary summary() const;
    [[nodiscard]] nlohmann::json to_json() const;
    static MixtureModel from_json(const nlohmann::json& j);

  private:
    void prepare();

    FeatureSchema schema_;
    std::vector<MixtureComponent> components_;
    FitDiagnostics diag_;
    std::vector<std::size_t> cont_;
    std::vector<std::size_t> cat_;
    std::vector<Eigen::MatrixXd> chol_;
    std::vector<double> log_norm_;  // log pi_j - 0.5 log|2 pi Sigma_j|
    std::vector<std::vector<std::vector<double>>> log_theta_;
};

constexpr double probability_floor = 1e-12;

// Variational Bayesian fit of a Gaussian / multinomial mixture with automatic
// component pruning. Deterministic for a fixed `cfg.seed`.
MixtureModel fit_vi(const RowMatrix& rows, const FeatureSchema& schema, const VIConfig& cfg);

}  // namespace cal
