#pragma once

// Data-parallel kernels over row sets: mixture responsibilities and log
// densities, and RBF / responsibility-weighted Mahalanobis (RWM) Gram
// matrices. The functions in `cal::kernels` are OpenMP-parallel; those in
// `cal::kernels::reference` are straightforward serial versions kept as test
// oracles and benchmark baselines.

#include "cal/common.hpp"
#include "cal/data.hpp"
#include "cal/mixture.hpp"

#include <nlohmann/json.hpp>

#include <memory>
#include <span>
#include <vector>

namespace cal {

enum class KernelKind { rbf, rwm };

struct KernelSpec {
    KernelKind kind = KernelKind::rbf;
    double gamma = 1.0;
    std::shared_ptr<const MixtureModel> mixture;  // RWM only

    void validate() const;
    [[nodiscard]] nlohmann::json to_json() const;  // mixture is serialized separately
};

// exp(-gamma * d^2) with d the row distance of `row_distance_sq`.
double kernel_rbf(const FeatureSchema& schema, std::span<const double> x, std::span<const double> y, double gamma);

// exp(-gamma * sum_j rbar_j (x-y)^T Sigma_j^{-1} (x-y)) over continuous columns,
// rbar_j the mean of both rows' responsibilities. Evaluated directly from the
// covariance inverse.
double kernel_rwm(std::span<const double> x, std::span<const double> y, double gamma, const MixtureModel& mixture);

// Rows prepared for repeated kernel evaluation: RWM needs per-row
// responsibilities and per-component whitened coordinates.
struct PreparedRows {
    RowMatrix rows;
    RowMatrix resp;                   // n x J (RWM)
    std::vector<RowMatrix> whitened;  // J matrices n x Dc, L_j^{-1} x (RWM)
    [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(rows.rows()); }
};

namespace kernels {

RowMatrix responsibilities(const MixtureModel& m, const RowMatrix& rows);
std::vector<double> log_densities(const MixtureModel& m, const RowMatrix& rows);

PreparedRows prepare(const KernelSpec& k, const RowMatrix& rows);
// Rows `positions` of an already prepared set, in the given order.
PreparedRows select_rows(const PreparedRows& p, std::span<const std::size_t> positions);
double evaluate(const KernelSpec& k, const FeatureSchema& schema, const PreparedRows& a, std::size_t i,
                const PreparedRows& b, std::size_t j);

// The squared distance inside the exponent (independent of gamma).
double distance_sq(const KernelSpec& k, const FeatureSchema& schema, const PreparedRows& a, std::size_t i,
                   const PreparedRows& b, std::size_t j);

RowMatrix gram(const KernelSpec& k, const FeatureSchema& schema, const PreparedRows& a);
RowMatrix cross_gram(const KernelSpec& k, const FeatureSchema& schema, const PreparedRows& a, const PreparedRows& b);

// Squared Euclidean distances between all pairs of rows (continuous + categorical mismatch).
RowMatrix pairwise_distance_sq(const FeatureSchema& schema, const RowMatrix& rows);

namespace reference {

RowMatrix responsibilities(const MixtureModel& m, const RowMatrix& rows);
std::vector<double> log_densities(const MixtureModel& m, const RowMatrix& rows);
RowMatrix gram(const KernelSpec& k, const FeatureSchema& schema, const RowMatrix& rows);
RowMatrix cross_gram(const KernelSpec& k, const FeatureSchema& schema, const RowMatrix& a, const RowMatrix& b);
RowMatrix pairwise_distance_sq(const FeatureSchema& schema, const RowMatrix& rows);

}  // namespace reference

}  // namespace kernels

}  // namespace cal
