#pragma once

#include "cal/common.hpp"
#include "cal/kernels.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <span>
#include <vector>

namespace cal {

struct SmoOptions {
    double tolerance = 1e-3;       // maximal KKT violation at termination
    std::size_t max_iterations = 100000;
};

// Result of the dual two-variable decomposition for one binary problem:
//   min 1/2 a^T Q a - e^T a,  y^T a = 0,  0 <= a_i <= C,  Q_ij = y_i y_j K_ij.
struct SmoResult {
    std::vector<double> alpha;
    double bias = 0.0;  // decision(x) = sum_i y_i a_i K(x_i, x) + bias
    std::size_t iterations = 0;
    double max_violation = 0.0;
    double ridge = 0.0;  // lambda added to the Gram diagonal, 0 when none was needed
    bool converged = false;
};

// `gram` is the kernel matrix of the training rows, `y` holds +1/-1.
SmoResult smo_solve(const RowMatrix& gram, std::span<const int> y, double C, const SmoOptions& opt = {});

// One one-vs-one machine: a positive decision votes for `positive_class`.
struct BinaryMachine {
    int positive_class = 0;
    int negative_class = 1;
    std::vector<std::size_t> support;  // indices into SvmModel::support_rows()
    std::vector<double> coef;          // y_i * alpha_i
    std::vector<double> alpha;
    std::vector<double> support_decision;  // decision values of the supports at training time
    double bias = 0.0;
    std::size_t iterations = 0;
    double max_violation = 0.0;
    double ridge = 0.0;
    bool converged = false;
    double training_error = 0.0;
};

class SvmModel {
  public:
    SvmModel() = default;

    [[nodiscard]] std::size_t n_classes() const noexcept { return n_classes_; }
    [[nodiscard]] const std::vector<BinaryMachine>& machines() const noexcept { return machines_; }
    [[nodiscard]] const RowMatrix& support_rows() const noexcept { return support_rows_; }
    [[nodiscard]] const std::vector<RowId>& support_ids() const noexcept { return support_ids_; }
    [[nodiscard]] const KernelSpec& kernel() const noexcept { return kernel_; }
    [[nodiscard]] double C() const noexcept { return C_; }
    // Class predicted when fewer than two classes were present in training.
    [[nodiscard]] int constant_class() const noexcept { return constant_class_; }

    // rows x machines decision values.
    [[nodiscard]] RowMatrix decision(const RowMatrix& rows) const;
    // Rows prepared with a kernel that shares this model's mixture.
    [[nodiscard]] RowMatrix decision(const PreparedRows& rows) const;
    [[nodiscard]] std::vector<int> predict(const PreparedRows& rows) const;
    [[nodiscard]] std::vector<double> decision(std::span<const double> x) const;
    [[nodiscard]] std::vector<int> predict(const RowMatrix& rows) const;
    [[nodiscard]] int predict(std::span<const double> x) const;
    [[nodiscard]] int vote(std::span<const double> decisions) const;

    [[nodiscard]] nlohmann::json to_json() const;
    static SvmModel from_json(const nlohmann::json& j, const FeatureSchema& schema,
                              std::shared_ptr<const MixtureModel> mixture);

  private:
    friend SvmModel train_svm(const PreparedRows&, std::span<const int>, std::span<const RowId>, std::size_t, double,
                              const KernelSpec&, const FeatureSchema&, const SmoOptions&);

    std::size_t n_classes_ = 0;
    int constant_class_ = 0;
    double C_ = 1.0;
    KernelSpec kernel_;
    FeatureSchema schema_;
    RowMatrix support_rows_;
    std::vector<RowId> support_ids_;
    std::vector<BinaryMachine> machines_;
    PreparedRows prepared_support_;
};

// One-vs-one C-SVM over the classes present in `labels`. `ids` names each
// training row (e.g. its pool row id) and is stored for the support set.
SvmModel train_svm(const RowMatrix& rows, std::span<const int> labels, std::span<const RowId> ids,
                   std::size_t n_classes, double C, const KernelSpec& kernel, const FeatureSchema& schema,
                   const SmoOptions& opt = {});
SvmModel train_svm(const PreparedRows& rows, std::span<const int> labels, std::span<const RowId> ids,
                   std::size_t n_classes, double C, const KernelSpec& kernel, const FeatureSchema& schema,
                   const SmoOptions& opt = {});

// Per row: min over machines of |d(x)| / max over rows |d|; 0 on the boundary.
std::vector<double> margin_norm(const RowMatrix& decisions);

struct SvmParams {
    double C = 1.0;
    double gamma = 1.0;
};

// gamma = 1 / (2 median^2) of pairwise Euclidean distances (for either kernel) over a <= 500 row subsample of
// `rows`; C from {0.1, 1, 10, 100} by stratified 3-fold CV on the labeled rows
// when at least 12 are labeled, otherwise 1.
SvmParams heuristic_params(const RowMatrix& rows, const RowMatrix& labeled_rows, std::span<const int> labels,
                           std::size_t n_classes, const KernelSpec& kernel, const FeatureSchema& schema,
                           std::uint64_t seed);

// C alone, for a fixed gamma in `kernel`; `labeled` prepared with the same kernel.
double select_C(const PreparedRows& labeled, std::span<const int> labels, std::size_t n_classes,
                const KernelSpec& kernel, const FeatureSchema& schema, std::uint64_t seed);

double median_heuristic_gamma(const RowMatrix& rows, const FeatureSchema& schema, std::uint64_t seed,
                              std::size_t max_rows = 500);

}  // namespace cal
