#include "cal/kernels.hpp"

#include <cmath>

namespace cal {

void KernelSpec::validate() const {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) {
        throw Error("kernel: gamma must be positive");
    }
    if (kind == KernelKind::rwm && !mixture) {
        throw Error("kernel: RWM kernel requires a fitted mixture");
    }
}

nlohmann::json KernelSpec::to_json() const {
    return {{"kind", kind == KernelKind::rbf ? "rbf" : "rwm"}, {"gamma", gamma}};
}

double kernel_rbf(const FeatureSchema& schema, std::span<const double> x, std::span<const double> y, double gamma) {
    return std::exp(-gamma * row_distance_sq(schema, x, y));
}

double kernel_rwm(std::span<const double> x, std::span<const double> y, double gamma, const MixtureModel& mixture) {
    const auto& cont = mixture.continuous_columns();
    auto rx = mixture.responsibilities(x);
    auto ry = mixture.responsibilities(y);
    Vector d(static_cast<Eigen::Index>(cont.size()));
    for (std::size_t c = 0; c < cont.size(); ++c) {
        d(static_cast<Eigen::Index>(c)) = x[cont[c]] - y[cont[c]];
    }
    double delta = 0.0;
    for (std::size_t j = 0; j < mixture.size(); ++j) {
        if (cont.empty()) {
            break;
        }
        Eigen::MatrixXd inv = mixture.component(j).covariance.inverse();
        delta += 0.5 * (rx[j] + ry[j]) * d.dot(inv * d);
    }
    return std::exp(-gamma * delta);
}

namespace kernels {

namespace {

double rwm_delta(const PreparedRows& a, std::size_t i, const PreparedRows& b, std::size_t j) {
    double delta = 0.0;
    auto ii = static_cast<Eigen::Index>(i);
    auto jj = static_cast<Eigen::Index>(j);
    for (std::size_t c = 0; c < a.whitened.size(); ++c) {
        const auto& wa = a.whitened[c];
        const auto& wb = b.whitened[c];
        double s = 0.0;
        for (Eigen::Index d = 0; d < wa.cols(); ++d) {
            double diff = wa(ii, d) - wb(jj, d);
            s += diff * diff;
        }
        auto cc = static_cast<Eigen::Index>(c);
        delta += 0.5 * (a.resp(ii, cc) + b.resp(jj, cc)) * s;
    }
    return delta;
}

double rwm_from_prepared(const KernelSpec& k, const PreparedRows& a, std::size_t i, const PreparedRows& b,
                         std::size_t j) {
    return std::exp(-k.gamma * rwm_delta(a, i, b, j));
}

}  // namespace

RowMatrix responsibilities(const MixtureModel& m, const RowMatrix& rows) {
    RowMatrix out(rows.rows(), static_cast<Eigen::Index>(m.size()));
    const auto n = rows.rows();
#pragma omp parallel for schedule(static)
    for (Eigen::Index i = 0; i < n; ++i) {
        auto r = m.responsibilities(row_span(rows, i));
        for (std::size_t j = 0; j < r.size(); ++j) {
            out(i, static_cast<Eigen::Index>(j)) = r[j];
        }
    }
    return out;
}

std::vector<double> log_densities(const MixtureModel& m, const RowMatrix& rows) {
    std::vector<double> out(static_cast<std::size_t>(rows.rows()));
    const auto n = rows.rows();
#pragma omp parallel for schedule(static)
    for (Eigen::Index i = 0; i < n; ++i) {
        out[static_cast<std::size_t>(i)] = m.log_density(row_span(rows, i));
    }
    return out;
}

PreparedRows prepare(const KernelSpec& k, const RowMatrix& rows) {
    k.validate();
    PreparedRows p;
    p.rows = rows;
    if (k.kind != KernelKind::rwm) {
        return p;
    }
    const auto& m = *k.mixture;
    p.resp = responsibilities(m, rows);
    const auto& cont = m.continuous_columns();
    auto Dc = static_cast<Eigen::Index>(cont.size());
    RowMatrix xc(rows.rows(), Dc);
    for (Eigen::Index c = 0; c < Dc; ++c) {
        xc.col(c) = rows.col(static_cast<Eigen::Index>(cont[static_cast<std::size_t>(c)]));
    }
    p.whitened.resize(m.size());
    const auto J = static_cast<std::ptrdiff_t>(m.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t j = 0; j < J; ++j) {
        // rows of xc are points; whiten each with L^{-1}: (L^{-1} X^T)^T = X L^{-T}
        Eigen::MatrixXd t = xc.transpose();
        if (Dc > 0) {
            m.chol(static_cast<std::size_t>(j)).triangularView<Eigen::Lower>().solveInPlace(t);
        }
        p.whitened[static_cast<std::size_t>(j)] = t.transpose();
    }
    return p;
}

PreparedRows select_rows(const PreparedRows& p, std::span<const std::size_t> positions) {
    PreparedRows out;
    auto n = static_cast<Eigen::Index>(positions.size());
    out.rows.resize(n, p.rows.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        out.rows.row(i) = p.rows.row(static_cast<Eigen::Index>(positions[static_cast<std::size_t>(i)]));
    }
    if (p.resp.size() > 0 || p.resp.cols() > 0) {
        out.resp.resize(n, p.resp.cols());
        for (Eigen::Index i = 0; i < n; ++i) {
            out.resp.row(i) = p.resp.row(static_cast<Eigen::Index>(positions[static_cast<std::size_t>(i)]));
        }
    }
    out.whitened.reserve(p.whitened.size());
    for (const auto& w : p.whitened) {
        RowMatrix s(n, w.cols());
        for (Eigen::Index i = 0; i < n; ++i) {
            s.row(i) = w.row(static_cast<Eigen::Index>(positions[static_cast<std::size_t>(i)]));
        }
        out.whitened.push_back(std::move(s));
    }
    return out;
}

double evaluate(const KernelSpec& k, const FeatureSchema& schema, const PreparedRows& a, std::size_t i,
                const PreparedRows& b, std::size_t j) {
    if (k.kind == KernelKind::rbf) {
        return kernel_rbf(schema, row_span(a.rows, static_cast<Eigen::Index>(i)),
                          row_span(b.rows, static_cast<Eigen::Index>(j)), k.gamma);
    }
    return rwm_from_prepared(k, a, i, b, j);
}

double distance_sq(const KernelSpec& k, const FeatureSchema& schema, const PreparedRows& a, std::size_t i,
                   const PreparedRows& b, std::size_t j) {
    if (k.kind == KernelKind::rbf) {
        return row_distance_sq(schema, row_span(a.rows, static_cast<Eigen::Index>(i)),
                               row_span(b.rows, static_cast<Eigen::Index>(j)));
    }
    return rwm_delta(a, i, b, j);
}

RowMatrix gram(const KernelSpec& k, const FeatureSchema& schema, const PreparedRows& a) {
    const auto n = static_cast<Eigen::Index>(a.size());
    RowMatrix K(n, n);
#pragma omp parallel for schedule(dynamic, 16)
    for (Eigen::Index i = 0; i < n; ++i) {
        K(i, i) = 1.0;
        for (Eigen::Index j = i + 1; j < n; ++j) {
            double v = evaluate(k, schema, a, static_cast<std::size_t>(i), a, static_cast<std::size_t>(j));
            K(i, j) = v;
            K(j, i) = v;
        }
    }
    return K;
}

RowMatrix cross_gram(const KernelSpec& k, const FeatureSchema& schema, const PreparedRows& a, const PreparedRows& b) {
    const auto n = static_cast<Eigen::Index>(a.size());
    const auto m = static_cast<Eigen::Index>(b.size());
    RowMatrix K(n, m);
#pragma omp parallel for schedule(static)
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < m; ++j) {
            K(i, j) = evaluate(k, schema, a, static_cast<std::size_t>(i), b, static_cast<std::size_t>(j));
        }
    }
    return K;
}

RowMatrix pairwise_distance_sq(const FeatureSchema& schema, const RowMatrix& rows) {
    const auto n = rows.rows();
    RowMatrix D(n, n);
#pragma omp parallel for schedule(dynamic, 16)
    for (Eigen::Index i = 0; i < n; ++i) {
        D(i, i) = 0.0;
        for (Eigen::Index j = i + 1; j < n; ++j) {
            double v = row_distance_sq(schema, row_span(rows, i), row_span(rows, j));
            D(i, j) = v;
            D(j, i) = v;
        }
    }
    return D;
}

namespace reference {

RowMatrix responsibilities(const MixtureModel& m, const RowMatrix& rows) {
    RowMatrix out(rows.rows(), static_cast<Eigen::Index>(m.size()));
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        auto r = m.responsibilities(row_span(rows, i));
        for (std::size_t j = 0; j < r.size(); ++j) {
            out(i, static_cast<Eigen::Index>(j)) = r[j];
        }
    }
    return out;
}

std::vector<double> log_densities(const MixtureModel& m, const RowMatrix& rows) {
    std::vector<double> out;
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        out.push_back(m.log_density(row_span(rows, i)));
    }
    return out;
}

RowMatrix gram(const KernelSpec& k, const FeatureSchema& schema, const RowMatrix& rows) {
    return cross_gram(k, schema, rows, rows);
}

RowMatrix cross_gram(const KernelSpec& k, const FeatureSchema& schema, const RowMatrix& a, const RowMatrix& b) {
    k.validate();
    RowMatrix K(a.rows(), b.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < b.rows(); ++j) {
            K(i, j) = k.kind == KernelKind::rbf ? kernel_rbf(schema, row_span(a, i), row_span(b, j), k.gamma)
                                                : kernel_rwm(row_span(a, i), row_span(b, j), k.gamma, *k.mixture);
        }
    }
    return K;
}

RowMatrix pairwise_distance_sq(const FeatureSchema& schema, const RowMatrix& rows) {
    RowMatrix D(rows.rows(), rows.rows());
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        for (Eigen::Index j = 0; j < rows.rows(); ++j) {
            D(i, j) = row_distance_sq(schema, row_span(rows, i), row_span(rows, j));
        }
    }
    return D;
}

}  // namespace reference

}  // namespace kernels

}  // namespace cal
