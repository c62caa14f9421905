#pragma once

// Elastic-net logistic regression fitted by proximal Newton: an IRLS quadratic
// model of the negative log-likelihood, minimised with the penalty by cyclic
// coordinate descent, followed by a backtracking line search on the exact
// penalized objective.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "dropout/common.hpp"
#include "dropout/features.hpp"

namespace dropout {

struct ElasticNetConfig {
    double lambda = 0.0;  // overall penalty weight, >= 0
    double alpha = 1.0;   // 1 = lasso, 0 = ridge
    int max_iterations = 100;
    double tolerance = 1e-7;  // on max |delta beta| between outer iterations
    bool penalize_intercept = false;

    void validate() const {
        if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("elastic net: lambda must be >= 0");
        if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("elastic net: alpha must lie in [0,1]");
        if (max_iterations < 1) throw ConfigError("elastic net: max_iterations must be >= 1");
        if (!(tolerance > 0.0)) throw ConfigError("elastic net: tolerance must be > 0");
    }
};

struct LogisticModel {
    std::vector<double> beta;  // beta[0] is the intercept
    std::vector<FeatureDescriptor> descriptors;
    ElasticNetConfig config;
    std::vector<double> objective_trace;  // PNLL at start and after each accepted step
    int iterations = 0;

    std::size_t width() const noexcept { return beta.empty() ? 0 : beta.size() - 1; }
};

// ---------------------------------------------------------------------------
// Elementwise pieces

/// Logistic function kept strictly inside (0, 1).
inline double logistic(double eta) noexcept {
    constexpr double lo = std::numeric_limits<double>::min();
    constexpr double hi = 1.0 - 0x1.0p-53;
    double p;
    if (eta >= 0.0) {
        p = 1.0 / (1.0 + std::exp(-eta));
    } else {
        const double e = std::exp(eta);
        p = e / (1.0 + e);
    }
    return std::clamp(p, lo, hi);
}

/// log(1 + e^z) without overflow.
inline double softplus(double z) noexcept { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

inline double linear_predictor(std::span<const double> beta, std::span<const double> x) {
    double eta = beta[0];
    for (std::size_t k = 0; k < x.size(); ++k) eta += beta[k + 1] * x[k];
    return eta;
}

inline void check_width(std::span<const double> beta, const Matrix& X, const char* where) {
    if (beta.size() != X.cols() + 1)
        throw ModelError(std::string(where) + ": coefficient count " + std::to_string(beta.size()) +
                         " does not match " + std::to_string(X.cols()) + " columns + intercept");
}

inline std::vector<double> predict_proba(std::span<const double> beta, const Matrix& X) {
    check_width(beta, X, "predict_proba");
    std::vector<double> out(X.rows());
    for (std::size_t i = 0; i < X.rows(); ++i) out[i] = logistic(linear_predictor(beta, X.row(i)));
    return out;
}

inline std::vector<double> predict_proba(const LogisticModel& m, const Matrix& X) { return predict_proba(m.beta, X); }

/// sum_i y_i log(pi_i) + (1 - y_i) log(1 - pi_i), evaluated as y*eta - softplus(eta).
inline double log_likelihood(std::span<const double> beta, const Matrix& X, std::span<const int> y) {
    check_width(beta, X, "log_likelihood");
    if (y.size() != X.rows()) throw ModelError("log_likelihood: label count mismatch");
    double ll = 0.0;
    for (std::size_t i = 0; i < X.rows(); ++i) {
        const double eta = linear_predictor(beta, X.row(i));
        ll += (y[i] ? eta : 0.0) - softplus(eta);
    }
    return ll;
}

/// Gradient of the log-likelihood: X^T (y - pi) with the intercept column first.
inline std::vector<double> log_likelihood_gradient(std::span<const double> beta, const Matrix& X,
                                                   std::span<const int> y) {
    check_width(beta, X, "log_likelihood_gradient");
    std::vector<double> g(beta.size(), 0.0);
    for (std::size_t i = 0; i < X.rows(); ++i) {
        const double r = static_cast<double>(y[i]) - logistic(linear_predictor(beta, X.row(i)));
        g[0] += r;
        for (std::size_t k = 0; k < X.cols(); ++k) g[k + 1] += r * X(i, k);
    }
    return g;
}

/// (1 - alpha) * sum beta_k^2 / 2 + alpha * sum |beta_k|, over k >= 1 unless
/// the intercept is penalized too.
inline double penalty(std::span<const double> beta, const ElasticNetConfig& cfg) {
    double l1 = 0.0, l2 = 0.0;
    for (std::size_t k = cfg.penalize_intercept ? 0 : 1; k < beta.size(); ++k) {
        l1 += std::abs(beta[k]);
        l2 += beta[k] * beta[k];
    }
    return (1.0 - cfg.alpha) * l2 / 2.0 + cfg.alpha * l1;
}

// ---------------------------------------------------------------------------
// Fitting

/// Column-wise sparse view of a design matrix: each column stores its most
/// frequent value and the rows that differ from it. Coordinate updates then
/// cost O(rows that differ) instead of O(rows).
class LogisticDesign {
public:
    LogisticDesign() = default;

    explicit LogisticDesign(const Matrix& X) : LogisticDesign(X, iota_indices(X.rows())) {}

    /// Design over a subset of rows (duplicates allowed).
    LogisticDesign(const Matrix& X, std::span<const std::size_t> rows) : n_(rows.size()), p_(X.cols()) {
        base_.resize(p_);
        start_.assign(p_ + 1, 0);
        std::vector<double> col(n_);
        for (std::size_t j = 0; j < p_; ++j) {
            for (std::size_t i = 0; i < n_; ++i) col[i] = X(rows[i], j);
            base_[j] = mode_of(col);
            for (std::size_t i = 0; i < n_; ++i)
                if (col[i] != base_[j]) {
                    idx_.push_back(static_cast<std::uint32_t>(i));
                    delta_.push_back(col[i] - base_[j]);
                }
            start_[j + 1] = idx_.size();
        }
    }

    std::size_t rows() const noexcept { return n_; }
    std::size_t cols() const noexcept { return p_; }
    double base(std::size_t j) const noexcept { return base_[j]; }
    std::span<const std::uint32_t> nz_rows(std::size_t j) const {
        return {idx_.data() + start_[j], start_[j + 1] - start_[j]};
    }
    std::span<const double> nz_delta(std::size_t j) const {
        return {delta_.data() + start_[j], start_[j + 1] - start_[j]};
    }

    /// eta = X beta for every row.
    void linear_predictor(std::span<const double> beta, std::vector<double>& eta) const {
        double shift = beta[0];
        for (std::size_t j = 0; j < p_; ++j) shift += beta[j + 1] * base_[j];
        eta.assign(n_, shift);
        for (std::size_t j = 0; j < p_; ++j) {
            const double b = beta[j + 1];
            if (b == 0.0) continue;
            auto ri = nz_rows(j);
            auto dv = nz_delta(j);
            for (std::size_t k = 0; k < ri.size(); ++k) eta[ri[k]] += b * dv[k];
        }
    }

private:
    static double mode_of(std::vector<double> v) {
        std::sort(v.begin(), v.end());
        double best = v.empty() ? 0.0 : v[0];
        std::size_t best_n = 0;
        for (std::size_t i = 0; i < v.size();) {
            std::size_t j = i;
            while (j < v.size() && v[j] == v[i]) ++j;
            if (j - i > best_n) {
                best_n = j - i;
                best = v[i];
            }
            i = j;
        }
        return best;
    }

    std::size_t n_ = 0, p_ = 0;
    std::vector<double> base_;
    std::vector<std::size_t> start_;
    std::vector<std::uint32_t> idx_;
    std::vector<double> delta_;
};

namespace detail {

inline double soft_threshold(double z, double g) noexcept {
    if (z > g) return z - g;
    if (z < -g) return z + g;
    return 0.0;
}

inline double pnll_from_eta(std::span<const double> eta, std::span<const int> y, std::span<const double> beta,
                            const ElasticNetConfig& cfg) {
    double nll = 0.0;
    for (std::size_t i = 0; i < eta.size(); ++i) nll += softplus(eta[i]) - (y[i] ? eta[i] : 0.0);
    return nll + cfg.lambda * penalty(beta, cfg);
}

/// Coordinate descent on 1/2 sum w (z - X b)^2 + lambda * J(b), starting from
/// b with working residual r = z - X b supplied by the caller. Stops when no
/// coordinate update lowers the quadratic by more than `tol`, or after a
/// bounded number of sweeps; any partial solve is still a descent direction.
inline void solve_weighted_subproblem(const LogisticDesign& D, std::span<const double> w, std::vector<double>& r,
                                      std::vector<double>& b, const ElasticNetConfig& cfg, double tol) {
    const std::size_t p = D.cols();
    const double l1 = cfg.lambda * cfg.alpha;
    const double l2 = cfg.lambda * (1.0 - cfg.alpha);

    // Residual is held as r_i = rt_i + offset so that base-value shifts are O(1).
    double offset = 0.0;
    double W = 0.0, WRt = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        W += w[i];
        WRt += w[i] * r[i];
    }
    std::vector<double> s(p), q(p), h(p);  // sum w d, sum w d^2, curvature
    for (std::size_t j = 0; j < p; ++j) {
        auto ri = D.nz_rows(j);
        auto dv = D.nz_delta(j);
        double sj = 0.0, qj = 0.0;
        for (std::size_t k = 0; k < ri.size(); ++k) {
            const double wd = w[ri[k]] * dv[k];
            sj += wd;
            qj += wd * dv[k];
        }
        s[j] = sj;
        q[j] = qj;
        const double c = D.base(j);
        h[j] = c * c * W + 2.0 * c * sj + qj;
    }

    auto update_intercept = [&]() -> double {
        if (W <= 0.0) return 0.0;
        const double grad = WRt + offset * W;
        double nb;
        if (cfg.penalize_intercept)
            nb = soft_threshold(grad + b[0] * W, l1) / (W + l2);
        else
            nb = b[0] + grad / W;
        const double delta = nb - b[0];
        if (delta != 0.0) {
            b[0] = nb;
            offset -= delta;
        }
        return delta * delta * W;
    };

    auto update = [&](std::size_t j) -> double {
        if (h[j] <= 0.0) return 0.0;
        auto ri = D.nz_rows(j);
        auto dv = D.nz_delta(j);
        const double c = D.base(j);
        double wdr = 0.0;
        for (std::size_t k = 0; k < ri.size(); ++k) wdr += w[ri[k]] * dv[k] * r[ri[k]];
        // sum_i w_i x_ij r_i with x = c + d and r = rt + offset.
        const double grad = c * (WRt + offset * W) + wdr + offset * s[j];
        const double old = b[j + 1];
        const double nb = soft_threshold(grad + old * h[j], l1) / (h[j] + l2);
        const double delta = nb - old;
        if (delta == 0.0) return 0.0;
        b[j + 1] = nb;
        offset -= c * delta;
        for (std::size_t k = 0; k < ri.size(); ++k) r[ri[k]] -= dv[k] * delta;
        WRt -= delta * s[j];
        return delta * delta * h[j];
    };

    constexpr int kMaxFullSweeps = 20;
    constexpr int kMaxActiveSweeps = 100;
    std::vector<std::size_t> active;
    for (int outer = 0; outer < kMaxFullSweeps; ++outer) {
        double change = update_intercept();
        active.clear();
        for (std::size_t j = 0; j < p; ++j) {
            change = std::max(change, update(j));
            if (b[j + 1] != 0.0) active.push_back(j);
        }
        if (change < tol) break;
        for (int inner = 0; inner < kMaxActiveSweeps; ++inner) {
            double ch = update_intercept();
            for (std::size_t j : active) ch = std::max(ch, update(j));
            if (ch < tol) break;
        }
    }
    for (double& v : r) v += offset;
}

}  // namespace detail

/// Minimise -loglik(beta) + lambda * J(beta) from `init` (zeros by default).
/// The objective is non-increasing across accepted iterations.
inline LogisticModel fit_logistic(const LogisticDesign& D, std::span<const int> y, const ElasticNetConfig& cfg,
                                  const std::vector<double>* init = nullptr) {
    cfg.validate();
    const std::size_t n = D.rows(), p = D.cols();
    if (y.size() != n) throw ModelError("fit_logistic: label count mismatch");
    require_binary(y, "fit_logistic");
    const std::size_t pos = count_positive(y);
    if (pos == 0 || pos == n) throw ModelError("fit_logistic: labels contain a single class");

    LogisticModel m;
    m.config = cfg;
    m.beta = init ? *init : std::vector<double>(p + 1, 0.0);
    if (m.beta.size() != p + 1) throw ModelError("fit_logistic: warm start has wrong length");

    std::vector<double> eta, w(n), r(n), trial_eta;
    D.linear_predictor(m.beta, eta);
    double f = detail::pnll_from_eta(eta, y, m.beta, cfg);
    m.objective_trace.push_back(f);
    constexpr double kWeightFloor = 1e-10;
    // Inner threshold relative to the null deviance.
    const double prev = static_cast<double>(pos) / static_cast<double>(n);
    const double null_dev =
        -2.0 * static_cast<double>(n) * (prev * std::log(prev) + (1.0 - prev) * std::log(1.0 - prev));
    const double sub_tol = 1e-9 * null_dev;

    for (int it = 0; it < cfg.max_iterations; ++it) {
        for (std::size_t i = 0; i < n; ++i) {
            const double pi = logistic(eta[i]);
            w[i] = std::max(pi * (1.0 - pi), kWeightFloor);
            r[i] = (static_cast<double>(y[i]) - pi) / w[i];
        }
        std::vector<double> b = m.beta;
        detail::solve_weighted_subproblem(D, w, r, b, cfg, sub_tol);

        // Backtracking on the true objective.
        std::vector<double> dir(p + 1);
        for (std::size_t k = 0; k <= p; ++k) dir[k] = b[k] - m.beta[k];
        double t = 1.0;
        bool accepted = false;
        std::vector<double> trial(p + 1);
        double f_trial = f;
        for (int ls = 0; ls < 40; ++ls) {
            for (std::size_t k = 0; k <= p; ++k) trial[k] = m.beta[k] + t * dir[k];
            D.linear_predictor(trial, trial_eta);
            f_trial = detail::pnll_from_eta(trial_eta, y, trial, cfg);
            if (std::isfinite(f_trial) && f_trial <= f) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) break;
        double step = 0.0;
        for (std::size_t k = 0; k <= p; ++k) step = std::max(step, std::abs(trial[k] - m.beta[k]));
        m.beta.swap(trial);
        eta.swap(trial_eta);
        f = f_trial;
        m.objective_trace.push_back(f);
        m.iterations = it + 1;
        if (step < cfg.tolerance) break;
    }
    for (double v : m.beta)
        if (!std::isfinite(v)) throw ModelError("fit_logistic: non-finite coefficient");
    return m;
}

inline LogisticModel fit_logistic(const Matrix& X, std::span<const int> y, const ElasticNetConfig& cfg) {
    if (!all_finite(X)) throw ModelError("fit_logistic: non-finite input");
    return fit_logistic(LogisticDesign(X), y, cfg);
}

inline LogisticModel fit_logistic(const Dataset& d, const ElasticNetConfig& cfg) {
    LogisticModel m = fit_logistic(d.X, d.y, cfg);
    m.descriptors = d.descriptors;
    return m;
}

inline nlohmann::json to_json(const ElasticNetConfig& c) {
    return {{"lambda", c.lambda},
            {"alpha", c.alpha},
            {"max_iterations", c.max_iterations},
            {"tolerance", c.tolerance},
            {"penalize_intercept", c.penalize_intercept}};
}

/// Coefficients are written with round-trip precision.
inline nlohmann::json to_json(const LogisticModel& m) {
    return {{"type", "logistic"},
            {"beta", m.beta},
            {"config", to_json(m.config)},
            {"iterations", m.iterations},
            {"descriptors", descriptors_to_json(m.descriptors)}};
}

}  // namespace dropout
