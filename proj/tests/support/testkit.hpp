#pragma once

// Hand-rolled generators for property tests and small model builders.

#include "cal/common.hpp"
#include "cal/data.hpp"
#include "cal/mixture.hpp"

#include <cmath>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace testkit {

class Gen {
  public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    double uniform(double a = 0.0, double b = 1.0) { return std::uniform_real_distribution<double>(a, b)(rng_); }
    double normal(double mu = 0.0, double sd = 1.0) { return std::normal_distribution<double>(mu, sd)(rng_); }
    std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
    bool coin(double p = 0.5) { return uniform() < p; }

    std::vector<double> simplex(std::size_t n) {
        std::vector<double> v(n);
        double s = 0.0;
        for (auto& x : v) {
            x = -std::log(uniform(1e-12, 1.0));
            s += x;
        }
        for (auto& x : v) {
            x /= s;
        }
        return v;
    }

    cal::RowMatrix matrix(std::size_t rows, std::size_t cols, double sd = 1.0) {
        cal::RowMatrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            m.data()[i] = normal(0.0, sd);
        }
        return m;
    }

    // Well-conditioned random covariance.
    Eigen::MatrixXd spd(std::size_t d, double floor = 0.2) {
        Eigen::MatrixXd a(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
        for (Eigen::Index i = 0; i < a.size(); ++i) {
            a.data()[i] = normal(0.0, 0.6);
        }
        Eigen::MatrixXd s = a * a.transpose();
        s.diagonal().array() += floor;
        return s;
    }

    std::mt19937_64& engine() { return rng_; }

  private:
    std::mt19937_64 rng_;
};

// Runs `body(gen, case_index)` over independent deterministic cases.
template <class F>
void for_all(std::size_t cases, std::uint64_t seed, F body) {
    for (std::size_t i = 0; i < cases; ++i) {
        Gen g(cal::derive_seed(seed, i));
        body(g, i);
    }
}

inline cal::FeatureSchema continuous_schema(std::size_t d, std::vector<std::string> classes = {"a", "b"}) {
    cal::FeatureSchema s;
    for (std::size_t i = 0; i < d; ++i) {
        s.columns.push_back({"x" + std::to_string(i + 1), cal::ColumnKind::continuous, {}});
    }
    s.label_categories = std::move(classes);
    return s;
}

inline cal::Dataset make_dataset(cal::RowMatrix rows, std::vector<int> labels, std::vector<std::string> classes = {"a", "b"}) {
    cal::Dataset d;
    d.name = "test";
    d.schema = continuous_schema(static_cast<std::size_t>(rows.cols()), classes);
    d.rows = std::move(rows);
    d.labels = std::move(labels);
    d.class_names = std::move(classes);
    return d;
}

struct GaussianSpec {
    double weight;
    std::vector<double> mean;
    Eigen::MatrixXd cov;  // empty = identity
};

inline std::shared_ptr<const cal::MixtureModel> gaussian_mixture(const std::vector<GaussianSpec>& spec) {
    const auto d = spec.front().mean.size();
    std::vector<cal::MixtureComponent> comps;
    for (const auto& g : spec) {
        cal::MixtureComponent c;
        c.weight = g.weight;
        c.mean = Eigen::Map<const cal::Vector>(g.mean.data(), static_cast<Eigen::Index>(d));
        c.covariance = g.cov.size() ? g.cov : Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
        c.effective_count = g.weight * 100.0;
        comps.push_back(c);
    }
    return std::make_shared<const cal::MixtureModel>(continuous_schema(d), comps);
}

// Scratch directory removed on destruction.
class TempDir {
  public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("cal-" + tag + "-" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    [[nodiscard]] const std::filesystem::path& path() const { return path_; }

  private:
    std::filesystem::path path_;
};

}  // namespace testkit
