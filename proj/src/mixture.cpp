#include "cal/mixture.hpp"

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace cal {

namespace {

constexpr double log_2pi = 1.8378770664093454835606594728112;

double digamma(double x) { return boost::math::digamma(x); }
double lgamma(double x) { return boost::math::lgamma(x); }

double log_sum_exp(std::span<const double> v) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : v) {
        m = std::max(m, x);
    }
    if (!std::isfinite(m)) {
        return m;
    }
    double s = 0.0;
    for (double x : v) {
        s += std::exp(x - m);
    }
    return m + std::log(s);
}

// ln C(a) for a Dirichlet with parameters a.
double log_dirichlet_norm(std::span<const double> a) {
    double sum = 0.0;
    double lg = 0.0;
    for (double x : a) {
        sum += x;
        lg += lgamma(x);
    }
    return lgamma(sum) - lg;
}

// ln B(W, nu) for a D-dimensional Wishart, given ln|W|.
double log_wishart_norm(double log_det_w, double nu, std::size_t dim) {
    auto D = static_cast<double>(dim);
    double s = nu * D / 2.0 * std::numbers::ln2 + D * (D - 1.0) / 4.0 * std::log(std::numbers::pi);
    for (std::size_t i = 1; i <= dim; ++i) {
        s += lgamma((nu + 1.0 - static_cast<double>(i)) / 2.0);
    }
    return -nu / 2.0 * log_det_w - s;
}

double expected_log_det_precision(double log_det_w, double nu, std::size_t dim) {
    double s = 0.0;
    for (std::size_t i = 1; i <= dim; ++i) {
        s += digamma((nu + 1.0 - static_cast<double>(i)) / 2.0);
    }
    return s + static_cast<double>(dim) * std::numbers::ln2 + log_det_w;
}

// A group of continuous columns sharing one Gaussian-Wishart factor. Full
// covariance uses one block over all continuous columns; diagonal covariance
// uses one single-column block per continuous column.
struct Block {
    std::vector<std::size_t> cols;
    Vector m0;
    Eigen::MatrixXd w0_inv;
    double log_det_w0 = 0.0;
    double nu0 = 0.0;
};

struct BlockPosterior {
    double beta = 0.0;
    double nu = 0.0;
    Vector m;
    Eigen::MatrixXd w_inv;
    Eigen::MatrixXd w_inv_chol;  // lower factor of w_inv
    double log_det_w = 0.0;
    double e_log_det = 0.0;
    // sufficient statistics of the responsibilities used for this posterior
    Vector xbar;
    Eigen::MatrixXd scatter;  // N_k S_k
};

struct CategoricalDim {
    std::size_t col = 0;
    std::size_t levels = 0;
};

struct Problem {
    const RowMatrix* rows = nullptr;
    std::size_t n = 0;
    std::vector<Block> blocks;
    std::vector<CategoricalDim> cats;
    double alpha0 = 0.0;
    double beta0 = 0.0;
    double cat_prior = 1.0;
    double jitter = 0.0;
};

struct State {
    std::size_t K = 0;
    Eigen::MatrixXd resp;  // n x K
    Vector counts;         // N_k
    std::vector<double> alpha;
    std::vector<std::vector<BlockPosterior>> post;          // [k][block]
    std::vector<std::vector<std::vector<double>>> eta;      // [k][cat dim][level]
    std::vector<std::vector<std::vector<double>>> cat_cnt;  // [k][cat dim][level]
};

Eigen::LLT<Eigen::MatrixXd> robust_llt(Eigen::MatrixXd& m, double jitter) {
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    double add = jitter > 0.0 ? jitter : 1e-12;
    while (llt.info() != Eigen::Success) {
        m.diagonal().array() += add;
        llt.compute(m);
        add *= 2.0;
    }
    return llt;
}

void m_step(const Problem& p, State& s) {
    const auto& X = *p.rows;
    s.counts = s.resp.colwise().sum().transpose();
    s.alpha.assign(s.K, 0.0);
    s.post.assign(s.K, std::vector<BlockPosterior>(p.blocks.size()));
    s.eta.assign(s.K, {});
    s.cat_cnt.assign(s.K, {});
    for (std::size_t k = 0; k < s.K; ++k) {
        double Nk = s.counts(static_cast<Eigen::Index>(k));
        s.alpha[k] = p.alpha0 + Nk;
        auto rk = s.resp.col(static_cast<Eigen::Index>(k));
        for (std::size_t b = 0; b < p.blocks.size(); ++b) {
            const auto& blk = p.blocks[b];
            auto D = static_cast<Eigen::Index>(blk.cols.size());
            auto& bp = s.post[k][b];
            Vector sum = Vector::Zero(D);
            for (std::size_t i = 0; i < p.n; ++i) {
                double r = rk(static_cast<Eigen::Index>(i));
                if (r == 0.0) {
                    continue;
                }
                for (Eigen::Index d = 0; d < D; ++d) {
                    sum(d) += r * X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(blk.cols[d]));
                }
            }
            bp.xbar = Nk > 1e-300 ? Vector(sum / Nk) : blk.m0;
            bp.scatter = Eigen::MatrixXd::Zero(D, D);
            Vector diff(D);
            for (std::size_t i = 0; i < p.n; ++i) {
                double r = rk(static_cast<Eigen::Index>(i));
                if (r == 0.0) {
                    continue;
                }
                for (Eigen::Index d = 0; d < D; ++d) {
                    diff(d) = X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(blk.cols[d])) - bp.xbar(d);
                }
                bp.scatter.selfadjointView<Eigen::Lower>().rankUpdate(diff, r);
            }
            bp.scatter = bp.scatter.selfadjointView<Eigen::Lower>();
            bp.beta = p.beta0 + Nk;
            bp.nu = blk.nu0 + Nk;
            bp.m = (p.beta0 * blk.m0 + Nk * bp.xbar) / bp.beta;
            Vector dm = bp.xbar - blk.m0;
            bp.w_inv = blk.w0_inv + bp.scatter + (p.beta0 * Nk / (p.beta0 + Nk)) * dm * dm.transpose();
            auto llt = robust_llt(bp.w_inv, p.jitter);
            bp.w_inv_chol = llt.matrixL();
            bp.log_det_w = -2.0 * bp.w_inv_chol.diagonal().array().log().sum();
            bp.e_log_det = expected_log_det_precision(bp.log_det_w, bp.nu, blk.cols.size());
        }
        s.eta[k].resize(p.cats.size());
        s.cat_cnt[k].resize(p.cats.size());
        for (std::size_t c = 0; c < p.cats.size(); ++c) {
            std::vector<double> cnt(p.cats[c].levels, 0.0);
            for (std::size_t i = 0; i < p.n; ++i) {
                auto v = static_cast<std::size_t>(X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p.cats[c].col)));
                cnt[v] += rk(static_cast<Eigen::Index>(i));
            }
            s.eta[k][c].resize(cnt.size());
            for (std::size_t v = 0; v < cnt.size(); ++v) {
                s.eta[k][c][v] = p.cat_prior + cnt[v];
            }
            s.cat_cnt[k][c] = std::move(cnt);
        }
    }
}

// Quadratic form (x - m)^T W (x - m) with W = w_inv^{-1}.
double quad_w(const BlockPosterior& bp, const Vector& v) {
    Vector y = bp.w_inv_chol.triangularView<Eigen::Lower>().solve(v);
    return y.squaredNorm();
}

// Trace(A W) with W = w_inv^{-1}.
double trace_aw(const BlockPosterior& bp, const Eigen::MatrixXd& a) {
    Eigen::MatrixXd w = Eigen::MatrixXd::Identity(a.rows(), a.cols());
    bp.w_inv_chol.triangularView<Eigen::Lower>().solveInPlace(w);
    bp.w_inv_chol.transpose().triangularView<Eigen::Upper>().solveInPlace(w);
    return (a * w).trace();
}

double elbo(const Problem& p, const State& s) {
    double alpha_sum = 0.0;
    for (double a : s.alpha) {
        alpha_sum += a;
    }
    std::vector<double> e_log_pi(s.K);
    for (std::size_t k = 0; k < s.K; ++k) {
        e_log_pi[k] = digamma(s.alpha[k]) - digamma(alpha_sum);
    }
    double L = 0.0;
    // mixing weights
    std::vector<double> alpha0_vec(s.K, p.alpha0);
    double sum_e_log_pi = 0.0;
    for (std::size_t k = 0; k < s.K; ++k) {
        L += s.counts(static_cast<Eigen::Index>(k)) * e_log_pi[k];  // E[ln p(Z|pi)]
        sum_e_log_pi += e_log_pi[k];
        L -= (s.alpha[k] - 1.0) * e_log_pi[k];  // -E[ln q(pi)] (part)
    }
    L += log_dirichlet_norm(alpha0_vec) + (p.alpha0 - 1.0) * sum_e_log_pi;
    L -= log_dirichlet_norm(s.alpha);
    // -E[ln q(Z)]
    for (Eigen::Index i = 0; i < s.resp.rows(); ++i) {
        for (Eigen::Index k = 0; k < s.resp.cols(); ++k) {
            double r = s.resp(i, k);
            if (r > 0.0) {
                L -= r * std::log(r);
            }
        }
    }
    for (std::size_t k = 0; k < s.K; ++k) {
        double Nk = s.counts(static_cast<Eigen::Index>(k));
        for (std::size_t b = 0; b < p.blocks.size(); ++b) {
            const auto& blk = p.blocks[b];
            const auto& bp = s.post[k][b];
            auto D = static_cast<double>(blk.cols.size());
            // E[ln p(X|Z,mu,Lambda)]
            Vector dx = bp.xbar - bp.m;
            L += 0.5 * (Nk * (bp.e_log_det - D / bp.beta - D * log_2pi) - bp.nu * trace_aw(bp, bp.scatter) -
                        Nk * bp.nu * quad_w(bp, dx));
            // E[ln p(mu,Lambda)]
            Vector dm = bp.m - blk.m0;
            L += 0.5 * (D * std::log(p.beta0 / (2.0 * std::numbers::pi)) + bp.e_log_det - D * p.beta0 / bp.beta -
                        p.beta0 * bp.nu * quad_w(bp, dm));
            L += log_wishart_norm(blk.log_det_w0, blk.nu0, blk.cols.size()) +
                 (blk.nu0 - D - 1.0) / 2.0 * bp.e_log_det - 0.5 * bp.nu * trace_aw(bp, blk.w0_inv);
            // -E[ln q(mu,Lambda)]
            double entropy = -log_wishart_norm(bp.log_det_w, bp.nu, blk.cols.size()) -
                             (bp.nu - D - 1.0) / 2.0 * bp.e_log_det + bp.nu * D / 2.0;
            L -= 0.5 * bp.e_log_det + D / 2.0 * std::log(bp.beta / (2.0 * std::numbers::pi)) - D / 2.0 - entropy;
        }
        for (std::size_t c = 0; c < p.cats.size(); ++c) {
            const auto& eta = s.eta[k][c];
            double eta_sum = 0.0;
            for (double e : eta) {
                eta_sum += e;
            }
            double dg_sum = digamma(eta_sum);
            std::vector<double> prior(eta.size(), p.cat_prior);
            L += log_dirichlet_norm(prior) - log_dirichlet_norm(eta);
            for (std::size_t v = 0; v < eta.size(); ++v) {
                double e_log_theta = digamma(eta[v]) - dg_sum;
                L += (s.cat_cnt[k][c][v] + p.cat_prior - eta[v]) * e_log_theta;
            }
        }
    }
    return L;
}

void e_step(const Problem& p, State& s) {
    const auto& X = *p.rows;
    double alpha_sum = 0.0;
    for (double a : s.alpha) {
        alpha_sum += a;
    }
    std::vector<double> base(s.K);
    std::vector<std::vector<std::vector<double>>> e_log_theta(s.K);
    for (std::size_t k = 0; k < s.K; ++k) {
        base[k] = digamma(s.alpha[k]) - digamma(alpha_sum);
        for (std::size_t b = 0; b < p.blocks.size(); ++b) {
            const auto& bp = s.post[k][b];
            auto D = static_cast<double>(p.blocks[b].cols.size());
            base[k] += 0.5 * bp.e_log_det - 0.5 * D * log_2pi - 0.5 * D / bp.beta;
        }
        e_log_theta[k].resize(p.cats.size());
        for (std::size_t c = 0; c < p.cats.size(); ++c) {
            const auto& eta = s.eta[k][c];
            double eta_sum = 0.0;
            for (double e : eta) {
                eta_sum += e;
            }
            double dg = digamma(eta_sum);
            for (double e : eta) {
                e_log_theta[k][c].push_back(digamma(e) - dg);
            }
        }
    }
    std::vector<double> lr(s.K);
    for (std::size_t i = 0; i < p.n; ++i) {
        auto ii = static_cast<Eigen::Index>(i);
        for (std::size_t k = 0; k < s.K; ++k) {
            double v = base[k];
            for (std::size_t b = 0; b < p.blocks.size(); ++b) {
                const auto& blk = p.blocks[b];
                const auto& bp = s.post[k][b];
                Vector d(static_cast<Eigen::Index>(blk.cols.size()));
                for (std::size_t j = 0; j < blk.cols.size(); ++j) {
                    d(static_cast<Eigen::Index>(j)) = X(ii, static_cast<Eigen::Index>(blk.cols[j])) - bp.m(static_cast<Eigen::Index>(j));
                }
                v -= 0.5 * bp.nu * quad_w(bp, d);
            }
            for (std::size_t c = 0; c < p.cats.size(); ++c) {
                auto lvl = static_cast<std::size_t>(X(ii, static_cast<Eigen::Index>(p.cats[c].col)));
                v += e_log_theta[k][c][lvl];
            }
            lr[k] = v;
        }
        double lse = log_sum_exp(lr);
        for (std::size_t k = 0; k < s.K; ++k) {
            s.resp(ii, static_cast<Eigen::Index>(k)) = std::exp(lr[k] - lse);
        }
    }
}

// k-means++ seeding followed by a hard assignment to the nearest seed.
Eigen::MatrixXd initial_responsibilities(const RowMatrix& X, const FeatureSchema& schema, std::size_t K,
                                         std::mt19937_64& rng) {
    auto n = static_cast<std::size_t>(X.rows());
    std::vector<RowId> centers;
    std::uniform_int_distribution<std::size_t> first(0, n - 1);
    centers.push_back(first(rng));
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    while (centers.size() < K) {
        auto c = centers.back();
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], row_distance_sq(schema, row_span(X, static_cast<Eigen::Index>(i)),
                                                     row_span(X, static_cast<Eigen::Index>(c))));
            total += d2[i];
        }
        RowId next = 0;
        if (total <= 0.0) {
            std::uniform_int_distribution<std::size_t> u(0, n - 1);
            next = u(rng);
        } else {
            std::uniform_real_distribution<double> u(0.0, total);
            double target = u(rng);
            double acc = 0.0;
            next = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc >= target && d2[i] > 0.0) {
                    next = i;
                    break;
                }
            }
        }
        centers.push_back(next);
    }
    Eigen::MatrixXd resp = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(K));
    for (std::size_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t arg = 0;
        for (std::size_t k = 0; k < K; ++k) {
            double d = row_distance_sq(schema, row_span(X, static_cast<Eigen::Index>(i)),
                                       row_span(X, static_cast<Eigen::Index>(centers[k])));
            if (d < best) {
                best = d;
                arg = k;
            }
        }
        resp(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(arg)) = 1.0;
    }
    return resp;
}

struct RestartResult {
    State state;
    FitDiagnostics diag;
};

bool prune(const Problem& p, State& s, double threshold) {
    std::vector<Eigen::Index> keep;
    for (std::size_t k = 0; k < s.K; ++k) {
        if (s.counts(static_cast<Eigen::Index>(k)) >= threshold) {
            keep.push_back(static_cast<Eigen::Index>(k));
        }
    }
    if (keep.empty()) {
        Eigen::Index best = 0;
        s.counts.maxCoeff(&best);
        keep.push_back(best);
    }
    if (keep.size() == s.K) {
        return false;
    }
    Eigen::MatrixXd resp(static_cast<Eigen::Index>(p.n), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t j = 0; j < keep.size(); ++j) {
        resp.col(static_cast<Eigen::Index>(j)) = s.resp.col(keep[j]);
    }
    for (Eigen::Index i = 0; i < resp.rows(); ++i) {
        double sum = resp.row(i).sum();
        if (sum > 0.0) {
            resp.row(i) /= sum;
        } else {
            resp.row(i).setConstant(1.0 / static_cast<double>(keep.size()));
        }
    }
    s.K = keep.size();
    s.resp = std::move(resp);
    return true;
}

// Coordinate ascent until the relative ELBO change drops below tolerance.
double converge(const Problem& p, State& s, const VIConfig& cfg, std::size_t& iter, std::vector<double>& trace) {
    double prev = elbo(p, s);
    trace.push_back(prev);
    while (iter < cfg.max_iterations) {
        e_step(p, s);
        m_step(p, s);
        ++iter;
        double cur = elbo(p, s);
        trace.push_back(cur);
        double change = std::abs(cur - prev) / std::max(1.0, std::abs(cur));
        prev = cur;
        if (change < cfg.rel_tolerance) {
            break;
        }
    }
    return prev;
}

// Drops component k and hands its responsibility to the others.
void remove_component(const Problem& p, State& s, Eigen::Index k) {
    Eigen::MatrixXd resp(static_cast<Eigen::Index>(p.n), static_cast<Eigen::Index>(s.K - 1));
    for (Eigen::Index j = 0, o = 0; j < static_cast<Eigen::Index>(s.K); ++j) {
        if (j != k) {
            resp.col(o++) = s.resp.col(j);
        }
    }
    for (Eigen::Index i = 0; i < resp.rows(); ++i) {
        double sum = resp.row(i).sum();
        if (sum > 0.0) {
            resp.row(i) /= sum;
        } else {
            resp.row(i).setConstant(1.0 / static_cast<double>(resp.cols()));
        }
    }
    s.K -= 1;
    s.resp = std::move(resp);
    m_step(p, s);
}

RestartResult run_restart(const Problem& p, const FeatureSchema& schema, const VIConfig& cfg, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    State s;
    s.K = cfg.max_components;
    s.resp = initial_responsibilities(*p.rows, schema, s.K, rng);
    RestartResult res;
    res.diag.initial_components = s.K;
    res.diag.segment_starts.push_back(0);
    std::size_t iter = 0;
    m_step(p, s);
    double cur = converge(p, s, cfg, iter, res.diag.elbo_trace);
    while (iter < cfg.max_iterations && prune(p, s, cfg.prune_threshold)) {
        m_step(p, s);
        res.diag.segment_starts.push_back(res.diag.elbo_trace.size());
        cur = converge(p, s, cfg, iter, res.diag.elbo_trace);
    }
    // Delete moves: a lighter component that only splits a cluster lowers the
    // ELBO; coordinate ascent cannot merge it away, so try removing it.
    while (s.K > 1) {
        Eigen::Index lightest = 0;
        s.counts.minCoeff(&lightest);
        State trial = s;
        remove_component(p, trial, lightest);
        std::size_t trial_iter = 0;
        std::vector<double> trial_trace;
        double e = converge(p, trial, cfg, trial_iter, trial_trace);
        if (!(e > cur)) {
            break;
        }
        s = std::move(trial);
        cur = e;
        iter += trial_iter;
        res.diag.segment_starts.push_back(res.diag.elbo_trace.size());
        res.diag.elbo_trace.insert(res.diag.elbo_trace.end(), trial_trace.begin(), trial_trace.end());
    }
    res.diag.iterations = iter;
    res.diag.final_elbo = cur;
    res.diag.pruned = cfg.max_components - s.K;
    res.state = std::move(s);
    return res;
}

}  // namespace

void VIConfig::validate() const {
    if (max_components < 1) {
        throw Error("VIConfig: max_components must be >= 1");
    }
    if (!(rel_tolerance > 0.0)) {
        throw Error("VIConfig: tolerance must be > 0");
    }
    if (!(dirichlet_alpha0 > 0.0) || !(mean_precision_beta0 > 0.0) || !(categorical_prior > 0.0)) {
        throw Error("VIConfig: prior parameters must be positive");
    }
    if (restarts < 1) {
        throw Error("VIConfig: restarts must be >= 1");
    }
}

nlohmann::json VIConfig::to_json() const {
    return {{"max_components", max_components},
            {"alpha0", dirichlet_alpha0},
            {"beta0", mean_precision_beta0},
            {"categorical_prior", categorical_prior},
            {"tolerance", rel_tolerance},
            {"max_iterations", max_iterations},
            {"prune_threshold", prune_threshold},
            {"restarts", restarts},
            {"seed", seed},
            {"covariance", covariance == CovarianceType::full ? "full" : "diagonal"},
            {"jitter_scale", jitter_scale}};
}

VIConfig VIConfig::from_json(const nlohmann::json& j) {
    VIConfig c;
    c.max_components = j.value("max_components", c.max_components);
    c.dirichlet_alpha0 = j.value("alpha0", c.dirichlet_alpha0);
    c.mean_precision_beta0 = j.value("beta0", c.mean_precision_beta0);
    c.categorical_prior = j.value("categorical_prior", c.categorical_prior);
    c.rel_tolerance = j.value("tolerance", c.rel_tolerance);
    c.max_iterations = j.value("max_iterations", c.max_iterations);
    c.prune_threshold = j.value("prune_threshold", c.prune_threshold);
    c.restarts = j.value("restarts", c.restarts);
    c.seed = j.value("seed", c.seed);
    auto cov = j.value("covariance", std::string("full"));
    if (cov == "full") {
        c.covariance = CovarianceType::full;
    } else if (cov == "diagonal") {
        c.covariance = CovarianceType::diagonal;
    } else {
        throw Error("VIConfig: covariance must be 'full' or 'diagonal'");
    }
    c.jitter_scale = j.value("jitter_scale", c.jitter_scale);
    c.validate();
    return c;
}

nlohmann::json ModelSummary::to_json() const {
    return {{"components", components}, {"weights", weights}, {"effective_counts", effective_counts},
            {"elbo", elbo},             {"pruned", pruned},   {"iterations", iterations}};
}

MixtureModel::MixtureModel(FeatureSchema schema, std::vector<MixtureComponent> components, FitDiagnostics diag)
    : schema_(std::move(schema)), components_(std::move(components)), diag_(std::move(diag)) {
    prepare();
}

void MixtureModel::prepare() {
    cont_ = schema_.continuous_columns();
    cat_ = schema_.categorical_columns();
    if (components_.empty()) {
        throw Error("mixture: no components");
    }
    double wsum = 0.0;
    for (const auto& c : components_) {
        wsum += c.weight;
    }
    if (!(wsum > 0.0)) {
        throw Error("mixture: weights must sum to a positive value");
    }
    chol_.clear();
    log_norm_.clear();
    log_theta_.clear();
    for (auto& c : components_) {
        c.weight /= wsum;
        if (static_cast<std::size_t>(c.mean.size()) != cont_.size() ||
            static_cast<std::size_t>(c.covariance.rows()) != cont_.size()) {
            throw Error("mixture: component dimension does not match schema");
        }
        Eigen::MatrixXd cov = c.covariance;
        auto llt = robust_llt(cov, 1e-12);
        Eigen::MatrixXd L = llt.matrixL();
        double log_det = 2.0 * L.diagonal().array().log().sum();
        chol_.push_back(std::move(L));
        log_norm_.push_back(std::log(std::max(c.weight, probability_floor)) -
                            0.5 * (static_cast<double>(cont_.size()) * log_2pi + log_det));
        if (c.categorical.size() != cat_.size()) {
            throw Error("mixture: categorical table count does not match schema");
        }
        std::vector<std::vector<double>> lt;
        for (std::size_t d = 0; d < cat_.size(); ++d) {
            if (c.categorical[d].size() != schema_.columns[cat_[d]].categories.size()) {
                throw Error("mixture: categorical table size does not match schema");
            }
            std::vector<double> row;
            for (double t : c.categorical[d]) {
                row.push_back(std::log(std::max(t, probability_floor)));
            }
            lt.push_back(std::move(row));
        }
        log_theta_.push_back(std::move(lt));
    }
}

void MixtureModel::log_joint(std::span<const double> x, std::span<double> out) const {
    Vector diff(static_cast<Eigen::Index>(cont_.size()));
    for (std::size_t j = 0; j < components_.size(); ++j) {
        const auto& c = components_[j];
        for (std::size_t d = 0; d < cont_.size(); ++d) {
            diff(static_cast<Eigen::Index>(d)) = x[cont_[d]] - c.mean(static_cast<Eigen::Index>(d));
        }
        double q = 0.0;
        if (!cont_.empty()) {
            chol_[j].triangularView<Eigen::Lower>().solveInPlace(diff);
            q = diff.squaredNorm();
        }
        double v = log_norm_[j] - 0.5 * q;
        for (std::size_t d = 0; d < cat_.size(); ++d) {
            v += log_theta_[j][d][static_cast<std::size_t>(x[cat_[d]])];
        }
        out[j] = v;
    }
}

std::vector<double> MixtureModel::responsibilities(std::span<const double> x) const {
    std::vector<double> lj(components_.size());
    log_joint(x, lj);
    double lse = log_sum_exp(lj);
    for (auto& v : lj) {
        v = std::exp(v - lse);
    }
    return lj;
}

double MixtureModel::log_density(std::span<const double> x) const {
    std::vector<double> lj(components_.size());
    log_joint(x, lj);
    return log_sum_exp(lj);
}

double MixtureModel::density(std::span<const double> x) const { return std::exp(log_density(x)); }

ModelSummary MixtureModel::summary() const {
    ModelSummary s;
    s.components = components_.size();
    for (const auto& c : components_) {
        s.weights.push_back(c.weight);
        s.effective_counts.push_back(c.effective_count);
    }
    s.elbo = diag_.final_elbo;
    s.pruned = diag_.pruned;
    s.iterations = diag_.iterations;
    return s;
}

nlohmann::json MixtureModel::to_json() const {
    nlohmann::json comps = nlohmann::json::array();
    for (const auto& c : components_) {
        std::vector<double> mean(c.mean.data(), c.mean.data() + c.mean.size());
        std::vector<double> cov;
        for (Eigen::Index r = 0; r < c.covariance.rows(); ++r) {
            for (Eigen::Index k = 0; k < c.covariance.cols(); ++k) {
                cov.push_back(c.covariance(r, k));
            }
        }
        comps.push_back({{"weight", c.weight},
                         {"mean", mean},
                         {"covariance", cov},
                         {"categorical", c.categorical},
                         {"effective_count", c.effective_count}});
    }
    return {{"format", "mixture-v1"},
            {"schema", schema_.to_json()},
            {"components", comps},
            {"diagnostics",
             {{"final_elbo", diag_.final_elbo},
              {"iterations", diag_.iterations},
              {"pruned", diag_.pruned},
              {"initial_components", diag_.initial_components}}}};
}

MixtureModel MixtureModel::from_json(const nlohmann::json& j) {
    if (j.value("format", std::string()) != "mixture-v1") {
        throw Error("mixture: expected format 'mixture-v1'");
    }
    auto schema = FeatureSchema::from_json(j.at("schema"));
    auto D = static_cast<Eigen::Index>(schema.continuous_columns().size());
    std::vector<MixtureComponent> comps;
    for (const auto& jc : j.at("components")) {
        MixtureComponent c;
        c.weight = jc.at("weight").get<double>();
        auto mean = jc.at("mean").get<std::vector<double>>();
        auto cov = jc.at("covariance").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(mean.size()) != D || static_cast<Eigen::Index>(cov.size()) != D * D) {
            throw Error("mixture: component dimension does not match schema");
        }
        c.mean = Eigen::Map<Vector>(mean.data(), D);
        c.covariance.resize(D, D);
        for (Eigen::Index r = 0; r < D; ++r) {
            for (Eigen::Index k = 0; k < D; ++k) {
                c.covariance(r, k) = cov[static_cast<std::size_t>(r * D + k)];
            }
        }
        c.categorical = jc.at("categorical").get<std::vector<std::vector<double>>>();
        c.effective_count = jc.value("effective_count", 0.0);
        comps.push_back(std::move(c));
    }
    FitDiagnostics diag;
    if (j.contains("diagnostics")) {
        const auto& jd = j["diagnostics"];
        diag.final_elbo = jd.value("final_elbo", 0.0);
        diag.iterations = jd.value("iterations", std::size_t{0});
        diag.pruned = jd.value("pruned", std::size_t{0});
        diag.initial_components = jd.value("initial_components", std::size_t{0});
    }
    return MixtureModel(std::move(schema), std::move(comps), std::move(diag));
}

MixtureModel fit_vi(const RowMatrix& rows, const FeatureSchema& schema, const VIConfig& cfg) {
    cfg.validate();
    auto n = static_cast<std::size_t>(rows.rows());
    if (n < 2) {
        throw Error("fit_vi: need at least 2 rows");
    }
    if (cfg.max_components > n) {
        throw Error("fit_vi: max_components exceeds row count");
    }
    if (static_cast<std::size_t>(rows.cols()) != schema.dims()) {
        throw Error("fit_vi: row width does not match schema");
    }
    auto cont = schema.continuous_columns();
    auto cats = schema.categorical_columns();

    Problem p;
    p.rows = &rows;
    p.n = n;
    p.alpha0 = cfg.dirichlet_alpha0;
    p.beta0 = cfg.mean_precision_beta0;
    p.cat_prior = cfg.categorical_prior;

    double mean_var = 0.0;
    Vector mu = Vector::Zero(static_cast<Eigen::Index>(cont.size()));
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(mu.size(), mu.size());
    if (!cont.empty()) {
        Eigen::MatrixXd Xc(static_cast<Eigen::Index>(n), mu.size());
        for (std::size_t d = 0; d < cont.size(); ++d) {
            Xc.col(static_cast<Eigen::Index>(d)) = rows.col(static_cast<Eigen::Index>(cont[d]));
        }
        mu = Xc.colwise().mean().transpose();
        Eigen::MatrixXd centered = Xc.rowwise() - mu.transpose();
        cov = centered.transpose() * centered / static_cast<double>(n);
        mean_var = cov.diagonal().mean();
    }
    p.jitter = cfg.jitter_scale * (mean_var > 0.0 ? mean_var : 1.0);

    auto make_block = [&](std::vector<std::size_t> local) {
        Block b;
        auto D = static_cast<Eigen::Index>(local.size());
        b.m0.resize(D);
        b.w0_inv.resize(D, D);
        for (Eigen::Index r = 0; r < D; ++r) {
            b.cols.push_back(cont[local[static_cast<std::size_t>(r)]]);
            b.m0(r) = mu(static_cast<Eigen::Index>(local[static_cast<std::size_t>(r)]));
            for (Eigen::Index c = 0; c < D; ++c) {
                b.w0_inv(r, c) = cov(static_cast<Eigen::Index>(local[static_cast<std::size_t>(r)]),
                                     static_cast<Eigen::Index>(local[static_cast<std::size_t>(c)]));
            }
        }
        b.w0_inv.diagonal().array() += p.jitter;
        auto llt = robust_llt(b.w0_inv, p.jitter);
        Eigen::MatrixXd L = llt.matrixL();
        b.log_det_w0 = -2.0 * L.diagonal().array().log().sum();
        b.nu0 = static_cast<double>(D);
        return b;
    };
    if (!cont.empty()) {
        if (cfg.covariance == CovarianceType::full) {
            std::vector<std::size_t> all(cont.size());
            for (std::size_t d = 0; d < cont.size(); ++d) {
                all[d] = d;
            }
            p.blocks.push_back(make_block(all));
        } else {
            for (std::size_t d = 0; d < cont.size(); ++d) {
                p.blocks.push_back(make_block({d}));
            }
        }
    }
    for (auto c : cats) {
        p.cats.push_back({c, schema.columns[c].categories.size()});
    }

    std::vector<RestartResult> results(cfg.restarts);
#pragma omp parallel for schedule(dynamic) if (cfg.restarts > 1)
    for (std::size_t r = 0; r < cfg.restarts; ++r) {
        results[r] = run_restart(p, schema, cfg, derive_seed(cfg.seed, r));
    }
    std::size_t best = 0;
    for (std::size_t r = 1; r < results.size(); ++r) {
        if (results[r].diag.final_elbo > results[best].diag.final_elbo) {
            best = r;
        }
    }
    auto& res = results[best];
    res.diag.best_restart = best;
    const auto& s = res.state;

    double alpha_sum = 0.0;
    for (double a : s.alpha) {
        alpha_sum += a;
    }
    std::vector<MixtureComponent> comps;
    for (std::size_t k = 0; k < s.K; ++k) {
        MixtureComponent c;
        c.weight = s.alpha[k] / alpha_sum;
        c.effective_count = s.counts(static_cast<Eigen::Index>(k));
        c.mean = Vector::Zero(static_cast<Eigen::Index>(cont.size()));
        c.covariance = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(cont.size()), static_cast<Eigen::Index>(cont.size()));
        std::size_t offset = 0;
        for (std::size_t b = 0; b < p.blocks.size(); ++b) {
            const auto& bp = s.post[k][b];
            auto D = static_cast<Eigen::Index>(p.blocks[b].cols.size());
            auto o = static_cast<Eigen::Index>(offset);
            c.mean.segment(o, D) = bp.m;
            c.covariance.block(o, o, D, D) = bp.w_inv / bp.nu;
            offset += p.blocks[b].cols.size();
        }
        c.covariance.diagonal().array() += p.jitter;
        for (std::size_t d = 0; d < p.cats.size(); ++d) {
            const auto& eta = s.eta[k][d];
            double sum = 0.0;
            for (double e : eta) {
                sum += e;
            }
            std::vector<double> theta;
            for (double e : eta) {
                theta.push_back(e / sum);
            }
            c.categorical.push_back(std::move(theta));
        }
        comps.push_back(std::move(c));
    }
    return MixtureModel(schema, std::move(comps), std::move(res.diag));
}

}  // namespace cal
