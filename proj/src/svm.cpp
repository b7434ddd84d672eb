#include "cal/svm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>

namespace cal {

SmoResult smo_solve(const RowMatrix& gram, std::span<const int> y, double C, const SmoOptions& opt) {
    const auto n = y.size();
    if (static_cast<std::size_t>(gram.rows()) != n || static_cast<std::size_t>(gram.cols()) != n) {
        throw Error("smo: Gram matrix does not match label count");
    }
    if (!(C > 0.0)) {
        throw Error("smo: C must be positive");
    }
    SmoResult res;
    res.alpha.assign(n, 0.0);
    std::vector<double> G(n, -1.0);
    auto& a = res.alpha;
    double lambda = 0.0;
    auto K = [&](std::size_t i, std::size_t j) {
        return gram(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    };
    auto in_up = [&](std::size_t t) { return (y[t] == 1 && a[t] < C) || (y[t] == -1 && a[t] > 0.0); };
    auto in_low = [&](std::size_t t) { return (y[t] == 1 && a[t] > 0.0) || (y[t] == -1 && a[t] < C); };

    constexpr auto none = std::numeric_limits<std::size_t>::max();
    while (res.iterations < opt.max_iterations) {
        double gmax = -std::numeric_limits<double>::infinity();
        std::size_t i = none;
        for (std::size_t t = 0; t < n; ++t) {
            if (in_up(t) && -y[t] * G[t] > gmax) {
                gmax = -y[t] * G[t];
                i = t;
            }
        }
        double gmax2 = -std::numeric_limits<double>::infinity();
        double obj_min = std::numeric_limits<double>::infinity();
        std::size_t j = none;
        bool needs_ridge = false;
        for (std::size_t t = 0; t < n; ++t) {
            if (!in_low(t)) {
                continue;
            }
            double v = y[t] * G[t];
            gmax2 = std::max(gmax2, v);
            if (i == none) {
                continue;
            }
            double b = gmax + v;
            if (b > 0.0) {
                double quad = K(i, i) + K(t, t) - 2.0 * K(i, t) + 2.0 * lambda;
                if (quad <= 0.0) {
                    needs_ridge = true;
                    continue;
                }
                double obj = -(b * b) / quad;
                if (obj < obj_min) {
                    obj_min = obj;
                    j = t;
                }
            }
        }
        res.max_violation = (i == none) ? 0.0 : std::max(0.0, gmax + gmax2);
        if (i == none || gmax + gmax2 < opt.tolerance) {
            res.converged = true;
            break;
        }
        if (needs_ridge) {
            double step = lambda == 0.0 ? 1e-10 : lambda;
            lambda += step;
            for (std::size_t t = 0; t < n; ++t) {
                G[t] += step * a[t];
            }
            continue;
        }
        if (j == none) {
            res.converged = true;
            break;
        }
        ++res.iterations;

        const double old_ai = a[i];
        const double old_aj = a[j];
        if (y[i] != y[j]) {
            double quad = K(i, i) + K(j, j) - 2.0 * K(i, j) + 2.0 * lambda;
            double delta = (-G[i] - G[j]) / quad;
            double diff = a[i] - a[j];
            a[i] += delta;
            a[j] += delta;
            if (diff > 0.0) {
                if (a[j] < 0.0) {
                    a[j] = 0.0;
                    a[i] = diff;
                }
            } else if (a[i] < 0.0) {
                a[i] = 0.0;
                a[j] = -diff;
            }
            if (diff > 0.0) {
                if (a[i] > C) {
                    a[i] = C;
                    a[j] = C - diff;
                }
            } else if (a[j] > C) {
                a[j] = C;
                a[i] = C + diff;
            }
        } else {
            double quad = K(i, i) + K(j, j) - 2.0 * K(i, j) + 2.0 * lambda;
            double delta = (G[i] - G[j]) / quad;
            double sum = a[i] + a[j];
            a[i] -= delta;
            a[j] += delta;
            if (sum > C) {
                if (a[i] > C) {
                    a[i] = C;
                    a[j] = sum - C;
                }
            } else if (a[j] < 0.0) {
                a[j] = 0.0;
                a[i] = sum;
            }
            if (sum > C) {
                if (a[j] > C) {
                    a[j] = C;
                    a[i] = sum - C;
                }
            } else if (a[i] < 0.0) {
                a[i] = 0.0;
                a[j] = sum;
            }
        }
        double dai = a[i] - old_ai;
        double daj = a[j] - old_aj;
        for (std::size_t t = 0; t < n; ++t) {
            double qti = y[t] * y[i] * (K(t, i) + (t == i ? lambda : 0.0));
            double qtj = y[t] * y[j] * (K(t, j) + (t == j ? lambda : 0.0));
            G[t] += qti * dai + qtj * daj;
        }
    }
    res.ridge = lambda;

    double ub = std::numeric_limits<double>::infinity();
    double lb = -std::numeric_limits<double>::infinity();
    double sum_free = 0.0;
    std::size_t n_free = 0;
    for (std::size_t t = 0; t < n; ++t) {
        double yg = y[t] * G[t];
        if (a[t] >= C) {
            if (y[t] == -1) {
                ub = std::min(ub, yg);
            } else {
                lb = std::max(lb, yg);
            }
        } else if (a[t] <= 0.0) {
            if (y[t] == 1) {
                ub = std::min(ub, yg);
            } else {
                lb = std::max(lb, yg);
            }
        } else {
            ++n_free;
            sum_free += yg;
        }
    }
    double rho = 0.0;
    if (n_free > 0) {
        rho = sum_free / static_cast<double>(n_free);
    } else if (std::isfinite(ub) && std::isfinite(lb)) {
        rho = (ub + lb) / 2.0;
    } else if (std::isfinite(ub)) {
        rho = ub;
    } else if (std::isfinite(lb)) {
        rho = lb;
    }
    res.bias = -rho;
    return res;
}

namespace {

// Machine solved on a subset of a shared Gram matrix; indices are positions in that matrix.
struct RawMachine {
    int positive_class = 0;
    int negative_class = 1;
    std::vector<std::size_t> members;  // positions in the Gram matrix
    SmoResult result;
    std::vector<int> y;
};

std::vector<int> present_classes(std::span<const int> labels, std::span<const std::size_t> subset) {
    std::set<int> s;
    for (auto i : subset) {
        s.insert(labels[i]);
    }
    return {s.begin(), s.end()};
}

std::vector<RawMachine> solve_ovo(const RowMatrix& K, std::span<const int> labels, std::span<const std::size_t> subset,
                                  double C, const SmoOptions& opt) {
    auto classes = present_classes(labels, subset);
    std::vector<RawMachine> out;
    for (std::size_t p = 0; p < classes.size(); ++p) {
        for (std::size_t q = p + 1; q < classes.size(); ++q) {
            RawMachine m;
            m.positive_class = classes[p];
            m.negative_class = classes[q];
            for (auto i : subset) {
                if (labels[i] == m.positive_class || labels[i] == m.negative_class) {
                    m.members.push_back(i);
                    m.y.push_back(labels[i] == m.positive_class ? 1 : -1);
                }
            }
            auto sz = static_cast<Eigen::Index>(m.members.size());
            RowMatrix sub(sz, sz);
            for (Eigen::Index r = 0; r < sz; ++r) {
                for (Eigen::Index c = 0; c < sz; ++c) {
                    sub(r, c) = K(static_cast<Eigen::Index>(m.members[static_cast<std::size_t>(r)]),
                                  static_cast<Eigen::Index>(m.members[static_cast<std::size_t>(c)]));
                }
            }
            m.result = smo_solve(sub, m.y, C, opt);
            out.push_back(std::move(m));
        }
    }
    return out;
}

double raw_decision(const RowMatrix& K, std::size_t row, const RawMachine& m) {
    double d = m.result.bias;
    for (std::size_t s = 0; s < m.members.size(); ++s) {
        double a = m.result.alpha[s];
        if (a > 0.0) {
            d += m.y[s] * a * K(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(m.members[s]));
        }
    }
    return d;
}

int vote_impl(std::span<const double> decisions, std::span<const std::pair<int, int>> pairs, std::size_t n_classes,
              int constant_class) {
    if (pairs.empty()) {
        return constant_class;
    }
    std::vector<int> votes(n_classes, 0);
    std::vector<double> mass(n_classes, 0.0);
    for (std::size_t m = 0; m < pairs.size(); ++m) {
        auto [pos, neg] = pairs[m];
        double d = decisions[m];
        if (d > 0.0) {
            ++votes[static_cast<std::size_t>(pos)];
        } else {
            ++votes[static_cast<std::size_t>(neg)];
        }
        mass[static_cast<std::size_t>(pos)] += d;
        mass[static_cast<std::size_t>(neg)] -= d;
    }
    int best = -1;
    for (std::size_t c = 0; c < n_classes; ++c) {
        if (best < 0 || votes[c] > votes[static_cast<std::size_t>(best)] ||
            (votes[c] == votes[static_cast<std::size_t>(best)] && mass[c] > mass[static_cast<std::size_t>(best)])) {
            best = static_cast<int>(c);
        }
    }
    return best;
}

}  // namespace

SvmModel train_svm(const RowMatrix& rows, std::span<const int> labels, std::span<const RowId> ids,
                   std::size_t n_classes, double C, const KernelSpec& kernel, const FeatureSchema& schema,
                   const SmoOptions& opt) {
    kernel.validate();
    return train_svm(kernels::prepare(kernel, rows), labels, ids, n_classes, C, kernel, schema, opt);
}

SvmModel train_svm(const PreparedRows& prepared, std::span<const int> labels, std::span<const RowId> ids,
                   std::size_t n_classes, double C, const KernelSpec& kernel, const FeatureSchema& schema,
                   const SmoOptions& opt) {
    kernel.validate();
    const RowMatrix& rows = prepared.rows;
    if (static_cast<std::size_t>(rows.rows()) != labels.size() || ids.size() != labels.size()) {
        throw Error("svm: rows, labels and ids differ in length");
    }
    if (!(C > 0.0)) {
        throw Error("svm: C must be positive");
    }
    SvmModel model;
    model.n_classes_ = n_classes;
    model.C_ = C;
    model.kernel_ = kernel;
    model.schema_ = schema;
    std::vector<std::size_t> all(labels.size());
    std::iota(all.begin(), all.end(), 0);
    auto classes = present_classes(labels, all);
    for (int c : classes) {
        if (c < 0 || static_cast<std::size_t>(c) >= n_classes) {
            throw Error("svm: label out of range");
        }
    }
    model.constant_class_ = classes.empty() ? 0 : classes.front();
    if (classes.size() < 2) {
        model.support_rows_.resize(0, rows.cols());
        model.prepared_support_ = kernels::prepare(kernel, model.support_rows_);
        return model;
    }
    auto K = kernels::gram(kernel, schema, prepared);
    auto raw = solve_ovo(K, labels, all, C, opt);

    std::set<std::size_t> support_set;
    for (const auto& m : raw) {
        for (std::size_t s = 0; s < m.members.size(); ++s) {
            if (m.result.alpha[s] > 0.0) {
                support_set.insert(m.members[s]);
            }
        }
    }
    std::vector<std::size_t> support(support_set.begin(), support_set.end());
    std::map<std::size_t, std::size_t> position;
    model.support_rows_.resize(static_cast<Eigen::Index>(support.size()), rows.cols());
    for (std::size_t s = 0; s < support.size(); ++s) {
        position[support[s]] = s;
        model.support_rows_.row(static_cast<Eigen::Index>(s)) = rows.row(static_cast<Eigen::Index>(support[s]));
        model.support_ids_.push_back(ids[support[s]]);
    }
    for (const auto& m : raw) {
        BinaryMachine bm;
        bm.positive_class = m.positive_class;
        bm.negative_class = m.negative_class;
        bm.bias = m.result.bias;
        bm.iterations = m.result.iterations;
        bm.max_violation = m.result.max_violation;
        bm.ridge = m.result.ridge;
        bm.converged = m.result.converged;
        std::size_t wrong = 0;
        for (std::size_t s = 0; s < m.members.size(); ++s) {
            double d = raw_decision(K, m.members[s], m);
            if ((d > 0.0 ? 1 : -1) != m.y[s]) {
                ++wrong;
            }
            if (m.result.alpha[s] > 0.0) {
                bm.support.push_back(position.at(m.members[s]));
                bm.alpha.push_back(m.result.alpha[s]);
                bm.coef.push_back(m.y[s] * m.result.alpha[s]);
                bm.support_decision.push_back(d);
            }
        }
        bm.training_error = static_cast<double>(wrong) / static_cast<double>(m.members.size());
        model.machines_.push_back(std::move(bm));
    }
    model.prepared_support_ = kernels::select_rows(prepared, support);
    return model;
}

RowMatrix SvmModel::decision(const RowMatrix& rows) const {
    if (machines_.empty()) {
        return RowMatrix(rows.rows(), 0);
    }
    return decision(kernels::prepare(kernel_, rows));
}

RowMatrix SvmModel::decision(const PreparedRows& prepared) const {
    const RowMatrix& rows = prepared.rows;
    RowMatrix out(rows.rows(), static_cast<Eigen::Index>(machines_.size()));
    if (machines_.empty()) {
        return out;
    }
    auto Kx = kernels::cross_gram(kernel_, schema_, prepared, prepared_support_);
    for (std::size_t m = 0; m < machines_.size(); ++m) {
        const auto& bm = machines_[m];
        for (Eigen::Index i = 0; i < rows.rows(); ++i) {
            double d = bm.bias;
            for (std::size_t s = 0; s < bm.support.size(); ++s) {
                d += bm.coef[s] * Kx(i, static_cast<Eigen::Index>(bm.support[s]));
            }
            out(i, static_cast<Eigen::Index>(m)) = d;
        }
    }
    return out;
}

std::vector<double> SvmModel::decision(std::span<const double> x) const {
    RowMatrix r(1, static_cast<Eigen::Index>(x.size()));
    for (std::size_t c = 0; c < x.size(); ++c) {
        r(0, static_cast<Eigen::Index>(c)) = x[c];
    }
    auto d = decision(r);
    return {d.data(), d.data() + d.size()};
}

int SvmModel::vote(std::span<const double> decisions) const {
    std::vector<std::pair<int, int>> pairs;
    for (const auto& m : machines_) {
        pairs.emplace_back(m.positive_class, m.negative_class);
    }
    return vote_impl(decisions, pairs, n_classes_, constant_class_);
}

std::vector<int> SvmModel::predict(const RowMatrix& rows) const {
    std::vector<int> out(static_cast<std::size_t>(rows.rows()), constant_class_);
    if (machines_.empty()) {
        return out;
    }
    auto d = decision(rows);
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        out[static_cast<std::size_t>(i)] = vote(std::span<const double>(d.data() + i * d.cols(), static_cast<std::size_t>(d.cols())));
    }
    return out;
}

std::vector<int> SvmModel::predict(const PreparedRows& rows) const {
    std::vector<int> out(rows.size(), constant_class_);
    if (machines_.empty()) {
        return out;
    }
    auto d = decision(rows);
    for (Eigen::Index i = 0; i < d.rows(); ++i) {
        out[static_cast<std::size_t>(i)] = vote(std::span<const double>(d.data() + i * d.cols(), static_cast<std::size_t>(d.cols())));
    }
    return out;
}

int SvmModel::predict(std::span<const double> x) const {
    auto d = decision(x);
    return vote(d);
}

nlohmann::json SvmModel::to_json() const {
    nlohmann::json machines = nlohmann::json::array();
    for (const auto& m : machines_) {
        machines.push_back({{"positive_class", m.positive_class},
                            {"negative_class", m.negative_class},
                            {"support", m.support},
                            {"alpha", m.alpha},
                            {"coef", m.coef},
                            {"bias", m.bias},
                            {"support_decision", m.support_decision},
                            {"iterations", m.iterations},
                            {"max_violation", m.max_violation},
                            {"ridge", m.ridge},
                            {"converged", m.converged},
                            {"training_error", m.training_error}});
    }
    std::vector<std::vector<double>> srows;
    for (Eigen::Index i = 0; i < support_rows_.rows(); ++i) {
        auto r = row_span(support_rows_, i);
        srows.emplace_back(r.begin(), r.end());
    }
    return {{"format", "svm-v1"},
            {"C", C_},
            {"n_classes", n_classes_},
            {"constant_class", constant_class_},
            {"kernel", kernel_.to_json()},
            {"support", {{"ids", support_ids_}, {"rows", srows}}},
            {"machines", machines}};
}

SvmModel SvmModel::from_json(const nlohmann::json& j, const FeatureSchema& schema,
                             std::shared_ptr<const MixtureModel> mixture) {
    if (j.value("format", std::string()) != "svm-v1") {
        throw Error("svm: expected format 'svm-v1'");
    }
    SvmModel m;
    m.C_ = j.at("C").get<double>();
    m.n_classes_ = j.at("n_classes").get<std::size_t>();
    m.constant_class_ = j.value("constant_class", 0);
    m.schema_ = schema;
    const auto& jk = j.at("kernel");
    m.kernel_.kind = jk.at("kind").get<std::string>() == "rwm" ? KernelKind::rwm : KernelKind::rbf;
    m.kernel_.gamma = jk.at("gamma").get<double>();
    if (m.kernel_.kind == KernelKind::rwm) {
        m.kernel_.mixture = std::move(mixture);
    }
    m.support_ids_ = j.at("support").at("ids").get<std::vector<RowId>>();
    auto srows = j.at("support").at("rows").get<std::vector<std::vector<double>>>();
    m.support_rows_.resize(static_cast<Eigen::Index>(srows.size()), static_cast<Eigen::Index>(schema.dims()));
    for (std::size_t i = 0; i < srows.size(); ++i) {
        if (srows[i].size() != schema.dims()) {
            throw Error("svm: support row width does not match schema");
        }
        for (std::size_t c = 0; c < srows[i].size(); ++c) {
            m.support_rows_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = srows[i][c];
        }
    }
    for (const auto& jm : j.at("machines")) {
        BinaryMachine bm;
        bm.positive_class = jm.at("positive_class").get<int>();
        bm.negative_class = jm.at("negative_class").get<int>();
        bm.support = jm.at("support").get<std::vector<std::size_t>>();
        bm.alpha = jm.at("alpha").get<std::vector<double>>();
        bm.coef = jm.at("coef").get<std::vector<double>>();
        bm.bias = jm.at("bias").get<double>();
        bm.support_decision = jm.value("support_decision", std::vector<double>{});
        bm.iterations = jm.value("iterations", std::size_t{0});
        bm.max_violation = jm.value("max_violation", 0.0);
        bm.ridge = jm.value("ridge", 0.0);
        bm.converged = jm.value("converged", true);
        bm.training_error = jm.value("training_error", 0.0);
        m.machines_.push_back(std::move(bm));
    }
    m.prepared_support_ = kernels::prepare(m.kernel_, m.support_rows_);
    return m;
}

std::vector<double> margin_norm(const RowMatrix& decisions) {
    const auto n = static_cast<std::size_t>(decisions.rows());
    std::vector<double> out(n, 0.0);
    if (decisions.cols() == 0 || n == 0) {
        return out;
    }
    std::fill(out.begin(), out.end(), std::numeric_limits<double>::infinity());
    for (Eigen::Index m = 0; m < decisions.cols(); ++m) {
        double max_abs = decisions.col(m).cwiseAbs().maxCoeff();
        for (std::size_t i = 0; i < n; ++i) {
            double v = max_abs > 0.0 ? std::abs(decisions(static_cast<Eigen::Index>(i), m)) / max_abs : 0.0;
            out[i] = std::min(out[i], v);
        }
    }
    return out;
}

double median_heuristic_gamma(const RowMatrix& rows, const FeatureSchema& schema, std::uint64_t seed,
                              std::size_t max_rows) {
    std::vector<std::size_t> ids(static_cast<std::size_t>(rows.rows()));
    std::iota(ids.begin(), ids.end(), 0);
    if (ids.size() > max_rows) {
        std::mt19937_64 rng(seed);
        std::shuffle(ids.begin(), ids.end(), rng);
        ids.resize(max_rows);
        std::sort(ids.begin(), ids.end());
    }
    std::vector<double> dist;
    dist.reserve(ids.size() * (ids.size() - (ids.empty() ? 0 : 1)) / 2);
    for (std::size_t a = 0; a < ids.size(); ++a) {
        for (std::size_t b = a + 1; b < ids.size(); ++b) {
            dist.push_back(std::sqrt(row_distance_sq(schema, row_span(rows, static_cast<Eigen::Index>(ids[a])),
                                                     row_span(rows, static_cast<Eigen::Index>(ids[b])))));
        }
    }
    if (dist.empty()) {
        return 1.0;
    }
    auto mid = dist.size() / 2;
    std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(mid), dist.end());
    double med = dist[mid];
    if (dist.size() % 2 == 0) {
        double lower = *std::max_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(mid));
        med = 0.5 * (med + lower);
    }
    if (!(med > 0.0)) {
        return 1.0;
    }
    return 1.0 / (2.0 * med * med);
}

SvmParams heuristic_params(const RowMatrix& rows, const RowMatrix& labeled_rows, std::span<const int> labels,
                           std::size_t n_classes, const KernelSpec& kernel, const FeatureSchema& schema,
                           std::uint64_t seed) {
    SvmParams p;
    KernelSpec k = kernel;
    p.gamma = median_heuristic_gamma(rows, schema, seed);
    k.gamma = p.gamma;
    p.C = labels.size() < 12 ? 1.0 : select_C(kernels::prepare(k, labeled_rows), labels, n_classes, k, schema, seed);
    return p;
}

double select_C(const PreparedRows& labeled, std::span<const int> labels, std::size_t n_classes,
                const KernelSpec& kernel, const FeatureSchema& schema, std::uint64_t seed) {
    if (labels.size() < 12) {
        return 1.0;
    }
    // stratified 3-fold assignment on the labeled rows
    constexpr std::size_t folds = 3;
    std::vector<std::size_t> fold(labels.size());
    std::mt19937_64 rng(derive_seed(seed, 0xc5));
    std::size_t offset = 0;
    for (std::size_t c = 0; c < n_classes; ++c) {
        std::vector<std::size_t> ids;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (static_cast<std::size_t>(labels[i]) == c) {
                ids.push_back(i);
            }
        }
        std::shuffle(ids.begin(), ids.end(), rng);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            fold[ids[i]] = (offset + i) % folds;
        }
        offset = (offset + ids.size()) % folds;
    }
    auto K = kernels::gram(kernel, schema, labeled);

    double best_C = 1.0;
    double best_acc = -1.0;
    for (double C : {0.1, 1.0, 10.0, 100.0}) {
        std::size_t correct = 0;
        for (std::size_t f = 0; f < folds; ++f) {
            std::vector<std::size_t> train;
            std::vector<std::size_t> test;
            for (std::size_t i = 0; i < labels.size(); ++i) {
                (fold[i] == f ? test : train).push_back(i);
            }
            if (test.empty()) {
                continue;
            }
            auto machines = solve_ovo(K, labels, train, C, {});
            std::vector<std::pair<int, int>> pairs;
            for (const auto& m : machines) {
                pairs.emplace_back(m.positive_class, m.negative_class);
            }
            auto classes = present_classes(labels, train);
            int fallback = classes.empty() ? 0 : classes.front();
            std::vector<double> d(machines.size());
            for (auto t : test) {
                for (std::size_t m = 0; m < machines.size(); ++m) {
                    d[m] = raw_decision(K, t, machines[m]);
                }
                if (vote_impl(d, pairs, n_classes, fallback) == labels[t]) {
                    ++correct;
                }
            }
        }
        double acc = static_cast<double>(correct) / static_cast<double>(labels.size());
        if (acc > best_acc) {
            best_acc = acc;
            best_C = C;
        }
    }
    return best_C;
}

}  // namespace cal
