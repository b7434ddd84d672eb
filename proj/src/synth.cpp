#include "cal/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace cal::synth {

namespace {

FeatureSchema xy_schema(std::size_t dims) {
    FeatureSchema s;
    for (std::size_t d = 0; d < dims; ++d) {
        s.columns.push_back({"x" + std::to_string(d + 1), ColumnKind::continuous, {}});
    }
    s.label = "class";
    return s;
}

Dataset from_points(std::string name, const std::vector<std::vector<double>>& pts, const std::vector<int>& labels,
                    std::vector<std::string> class_names) {
    Dataset d;
    d.name = std::move(name);
    d.schema = xy_schema(pts.empty() ? 0 : pts.front().size());
    d.schema.label_categories = class_names;
    d.class_names = std::move(class_names);
    d.rows.resize(static_cast<Eigen::Index>(pts.size()), static_cast<Eigen::Index>(d.schema.dims()));
    for (std::size_t i = 0; i < pts.size(); ++i) {
        for (std::size_t c = 0; c < pts[i].size(); ++c) {
            d.rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = pts[i][c];
        }
    }
    d.labels = labels;
    return d;
}

}  // namespace

Dataset two_moons(std::size_t n, double noise, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, noise);
    std::size_t n0 = n / 2;
    std::size_t n1 = n - n0;
    std::vector<std::vector<double>> pts;
    std::vector<int> labels;
    for (std::size_t i = 0; i < n0; ++i) {
        double t = n0 > 1 ? std::numbers::pi * static_cast<double>(i) / static_cast<double>(n0 - 1) : 0.0;
        pts.push_back({std::cos(t) + gauss(rng), std::sin(t) + gauss(rng)});
        labels.push_back(0);
    }
    for (std::size_t i = 0; i < n1; ++i) {
        double t = n1 > 1 ? std::numbers::pi * static_cast<double>(i) / static_cast<double>(n1 - 1) : 0.0;
        pts.push_back({1.0 - std::cos(t) + gauss(rng), 0.5 - std::sin(t) + gauss(rng)});
        labels.push_back(1);
    }
    return from_points("two_moons", pts, labels, {"upper", "lower"});
}

Dataset clouds(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    std::size_t na = n / 2;
    std::vector<std::vector<double>> pts;
    std::vector<int> labels;
    for (std::size_t i = 0; i < na; ++i) {
        if (i % 2 == 0) {
            pts.push_back({-1.0 + 0.35 * z(rng), 0.2 + 0.6 * z(rng)});
        } else {
            pts.push_back({1.1 + 0.45 * z(rng), 0.9 + 0.35 * z(rng)});
        }
        labels.push_back(0);
    }
    for (std::size_t i = na; i < n; ++i) {
        double u = z(rng);
        double v = z(rng);
        // elongated along a tilted axis through the gap between the class-a clouds
        pts.push_back({0.3 + 0.75 * u + 0.15 * v, -0.5 + 0.25 * u + 0.35 * v});
        labels.push_back(1);
    }
    return from_points("clouds", pts, labels, {"a", "b"});
}

Dataset blobs(const std::vector<Blob>& spec, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::vector<double>> pts;
    std::vector<int> labels;
    int max_label = 0;
    for (const auto& b : spec) {
        std::normal_distribution<double> g(0.0, b.stddev);
        for (std::size_t i = 0; i < b.count; ++i) {
            std::vector<double> p;
            for (double m : b.mean) {
                p.push_back(m + g(rng));
            }
            pts.push_back(std::move(p));
            labels.push_back(b.label);
        }
        max_label = std::max(max_label, b.label);
    }
    std::vector<std::string> names;
    for (int c = 0; c <= max_label; ++c) {
        names.push_back("c" + std::to_string(c));
    }
    return from_points("blobs", pts, labels, names);
}

Dataset generate(const std::string& kind, std::size_t n, double noise, std::uint64_t seed) {
    if (kind == "two_moons") {
        return two_moons(n, noise, seed);
    }
    if (kind == "clouds") {
        return clouds(n, seed);
    }
    throw Error("unknown synthetic dataset kind '" + kind + "' (expected two_moons or clouds)");
}

}  // namespace cal::synth
