#pragma once

#include "cal/common.hpp"
#include "cal/mixture.hpp"

#include <nlohmann/json.hpp>

#include <memory>
#include <span>
#include <vector>

namespace cal {

// Classifier built on a shared mixture: each component is assigned to the
// classes probabilistically through p(c|j), and p(c|x) = sum_j p(c|j) r_j(x).
class CmmClassifier {
  public:
    CmmClassifier() = default;
    CmmClassifier(std::shared_ptr<const MixtureModel> mixture, Eigen::MatrixXd class_given_component, double smoothing);

    [[nodiscard]] std::size_t n_classes() const noexcept { return static_cast<std::size_t>(p_.rows()); }
    [[nodiscard]] std::size_t n_components() const noexcept { return static_cast<std::size_t>(p_.cols()); }
    // P(c, j) = p(c | component j); every column sums to one.
    [[nodiscard]] const Eigen::MatrixXd& assignments() const noexcept { return p_; }
    [[nodiscard]] double smoothing() const noexcept { return delta_; }
    [[nodiscard]] const std::shared_ptr<const MixtureModel>& mixture() const noexcept { return mixture_; }

    [[nodiscard]] std::vector<double> posterior(std::span<const double> x) const;
    [[nodiscard]] std::vector<double> posterior_from_responsibilities(std::span<const double> resp) const;
    [[nodiscard]] int predict(std::span<const double> x) const;
    [[nodiscard]] double margin(std::span<const double> x) const;

    // Replaces column j (used by rule conclusions).
    void set_column(std::size_t j, const Vector& column);

    [[nodiscard]] nlohmann::json to_json(const std::string& mixture_ref = "mixture") const;
    static CmmClassifier from_json(const nlohmann::json& j, std::shared_ptr<const MixtureModel> mixture);

  private:
    std::shared_ptr<const MixtureModel> mixture_;
    Eigen::MatrixXd p_;
    double delta_ = 0.0;
};

// P[c][j] proportional to delta + sum of r_j(x) over labeled rows with label c.
// `labeled_resp` is |labeled| x J; a negative delta selects the default 1/n_classes.
CmmClassifier fit_assignments(std::shared_ptr<const MixtureModel> mixture, const RowMatrix& labeled_resp,
                              std::span<const int> labels, std::size_t n_classes, double delta = -1.0);

// Index of the largest entry; ties go to the lowest index.
int argmax_lowest(std::span<const double> v);
// Largest minus second-largest entry (0 for fewer than two entries).
double top_two_margin(std::span<const double> v);

}  // namespace cal
