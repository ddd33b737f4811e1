#pragma once

// EM estimation of theta = (nu, alpha, P) from observations of N(1) given
// T > 1.
//
// M-step. With sum N_ij = sum y (an E-step identity) the complete-data
// log-likelihood depends on (nu, P) only through B = nu P, and the optimal
// alpha for fixed B is alpha_i proportional to S_i / eta_i, eta = e^B 1.
// What remains is
//     G(B) = sum_ij N_ij log B_ij - sum_i S_i log eta_i(B),
// which is concave in x = log B over the entries with N_ij > 0 (the other
// entries are optimal at zero). G is maximized by BFGS in x, and the
// result is mapped back with nu = max row sum of B and P = B / nu.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "phpoisson/errors.hpp"
#include "phpoisson/linalg.hpp"
#include "phpoisson/ph_poisson.hpp"
#include "phpoisson/sample.hpp"

namespace phpoisson {

inline constexpr double kEMFeasibilityTol = 1e-10;

struct EMParams {
    double nu = 1.0;
    RowVector alpha;
    Matrix P;

    Index order() const { return alpha.size(); }

    /// nu > 0, alpha >= 0 with alpha 1 = 1, P >= 0 with P 1 <= 1.
    void validate() const {
        require_square(P, "em");
        if (P.rows() != alpha.size()) throw DimensionError("em: alpha length does not match the order of P");
        if (!(nu > 0.0) || !std::isfinite(nu)) throw ValidationError("em: nu must be positive and finite");
        if (!alpha.allFinite() || !P.allFinite()) throw ValidationError("em: entries must be finite");
        if (alpha.size() == 0) throw ValidationError("em: order must be at least 1");
        if (alpha.minCoeff() < 0.0) throw ValidationError("em: alpha must be nonnegative");
        if (std::abs(alpha.sum() - 1.0) > kEMFeasibilityTol) throw ValidationError("em: alpha 1 must equal 1");
        if (P.minCoeff() < 0.0) throw ValidationError("em: P must be nonnegative");
        if (P.rowwise().sum().maxCoeff() > 1.0 + kEMFeasibilityTol) {
            throw ValidationError("em: P row sums must not exceed 1");
        }
    }

    PhysicalRep physical() const { return PhysicalRep{nu, alpha, P}; }

    static EMParams from_physical(const PhysicalRep& phys) {
        EMParams t{phys.nu, phys.alpha / phys.alpha.sum(), phys.P};
        t.validate();
        return t;
    }

    bool p_stochastic(double tol = 1e-8) const {
        return (P.rowwise().sum().array() - 1.0).abs().maxCoeff() <= tol;
    }
};

struct SufficientStats {
    Vector S;  ///< expected initial-phase counts
    Matrix N;  ///< expected jump counts
};

// ---------------------------------------------------------------------------
// Likelihoods
// ---------------------------------------------------------------------------

/// log(alpha e^{nu P} 1), evaluated as nu + log(alpha e^{nu (P - I)} 1).
inline double log_alpha_eta(const EMParams& theta) {
    const Index m = theta.order();
    const Matrix shifted = theta.nu * (theta.P - Matrix::Identity(m, m));
    return theta.nu + std::log(theta.alpha.dot(matexp_action(shifted, ones(m))));
}

struct LogLikelihood {
    double value = 0.0;
    bool neg_inf = false;  ///< a log 0 term with a positive weight
};

/// Complete-data log-likelihood with the expected statistics in place of
/// S_i and N_ij; 0 log 0 = 0.
inline LogLikelihood loglik_complete(const EMParams& theta, const SampleData& y, const SufficientStats& stats) {
    theta.validate();
    const Index m = theta.order();
    if (stats.S.size() != m || stats.N.rows() != m || stats.N.cols() != m) {
        throw DimensionError("loglik_complete: statistics do not match the order of theta");
    }
    LogLikelihood out;
    const double n = static_cast<double>(y.size());
    double v = -n * log_alpha_eta(theta);
    for (auto obs : y.observations) {
        const double yk = static_cast<double>(obs);
        v += yk * std::log(theta.nu) - std::lgamma(yk + 1.0);
    }
    for (Index i = 0; i < m; ++i) {
        if (stats.S(i) == 0.0) continue;
        if (theta.alpha(i) == 0.0) {
            out.neg_inf = true;
            continue;
        }
        v += stats.S(i) * std::log(theta.alpha(i));
    }
    for (Index i = 0; i < m; ++i) {
        for (Index j = 0; j < m; ++j) {
            if (stats.N(i, j) == 0.0) continue;
            if (theta.P(i, j) == 0.0) {
                out.neg_inf = true;
                continue;
            }
            v += stats.N(i, j) * std::log(theta.P(i, j));
        }
    }
    out.value = out.neg_inf ? -std::numeric_limits<double>::infinity() : v;
    return out;
}

namespace detail {

/// Scaled forward vectors alpha P^t and backward vectors P^s 1, t, s <= t_max.
/// Each vector is stored normalized together with the log of its scale.
struct ForwardBackward {
    std::vector<RowVector> f;
    std::vector<double> log_f;  ///< log(alpha P^t 1)
    std::vector<Vector> b;
    std::vector<double> log_b;  ///< log max(P^s 1)
};

inline ForwardBackward forward_backward(const EMParams& theta, std::size_t t_max) {
    ForwardBackward fb;
    const Index m = theta.order();
    RowVector f = theta.alpha;
    double lf = 0.0;
    Vector b = Vector::Ones(m);
    double lb = 0.0;
    const double neg_inf = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t <= t_max; ++t) {
        if (t > 0) {
            f = f * theta.P;
            b = theta.P * b;
        }
        const double fs = f.sum();
        if (fs > 0.0) {
            f /= fs;
            lf += std::log(fs);
        } else {
            lf = neg_inf;
        }
        const double bs = b.size() ? b.maxCoeff() : 0.0;
        if (bs > 0.0) {
            b /= bs;
            lb += std::log(bs);
        } else {
            lb = neg_inf;
        }
        fb.f.push_back(f);
        fb.log_f.push_back(lf);
        fb.b.push_back(b);
        fb.log_b.push_back(lb);
    }
    return fb;
}

}  // namespace detail

/// Sum_k log p(y_k) under the conditional law of the physical model.
inline double loglik_observed(const EMParams& theta, const SampleData& y) {
    theta.validate();
    if (y.empty()) return 0.0;
    const auto hist = y.histogram();
    const auto fb = detail::forward_backward(theta, static_cast<std::size_t>(y.max_value()));
    const double lae = log_alpha_eta(theta);
    double total = 0.0;
    for (const auto& [value, count] : hist) {
        const double yk = static_cast<double>(value);
        const double lp = fb.log_f[value] + yk * std::log(theta.nu) - std::lgamma(yk + 1.0) - lae;
        total += static_cast<double>(count) * lp;
    }
    return total;
}

// ---------------------------------------------------------------------------
// E-step
// ---------------------------------------------------------------------------

/// Expected S_i and N_ij given the observations, one pass per distinct value.
inline SufficientStats e_step(const EMParams& theta, const SampleData& y) {
    theta.validate();
    const Index m = theta.order();
    SufficientStats st{Vector::Zero(m), Matrix::Zero(m, m)};
    if (y.empty()) return st;
    const auto hist = y.histogram();
    const auto fb = detail::forward_backward(theta, static_cast<std::size_t>(y.max_value()));

    for (const auto& [value, count] : hist) {
        const double denom = fb.log_f[value];
        if (!std::isfinite(denom)) {
            throw ImpossibleObservationError("e_step: observation y = " + std::to_string(value) +
                                                 " has probability zero under the current parameters",
                                             value);
        }
        const double c = static_cast<double>(count);
        // S_i: alpha_i (P^y 1)_i / alpha P^y 1.
        const double ws = std::exp(fb.log_b[value] - denom);
        st.S += c * ws * theta.alpha.transpose().cwiseProduct(fb.b[value]);
        // N_ij: p_ij sum_t (alpha P^{t-1})_i (P^{y-t} 1)_j / alpha P^y 1.
        Matrix acc = Matrix::Zero(m, m);
        for (std::uint64_t t = 1; t <= value; ++t) {
            const double lw = fb.log_f[t - 1] + fb.log_b[value - t] - denom;
            if (!std::isfinite(lw)) continue;
            acc.noalias() += std::exp(lw) * (fb.f[t - 1].transpose() * fb.b[value - t].transpose());
        }
        st.N += c * theta.P.cwiseProduct(acc);
    }
    return st;
}

// ---------------------------------------------------------------------------
// M-step
// ---------------------------------------------------------------------------

struct MStepResult {
    EMParams theta;
    bool converged = false;
    std::size_t iterations = 0;
    double objective = 0.0;      ///< G(B) at the result
    double gradient_norm = 0.0;  ///< max_ij |N_ij - B_ij dG_ij| / max(N_ij, 1)
    std::string status;
};

namespace detail {

/// G(B) and its gradient with respect to x = log B on the active entries.
struct ProfileEval {
    double value = 0.0;
    Vector grad;   ///< dG/dx, active entries in order
    Vector eta;    ///< e^B 1
};

struct ActiveSet {
    std::vector<std::pair<Index, Index>> entries;
    Matrix to_matrix(const Vector& x, Index m) const {
        Matrix b = Matrix::Zero(m, m);
        for (std::size_t k = 0; k < entries.size(); ++k) b(entries[k].first, entries[k].second) = std::exp(x(k));
        return b;
    }
};

inline ProfileEval profile_eval(const Vector& x, const ActiveSet& act, const SufficientStats& st) {
    const Index m = st.S.size();
    const Matrix b = act.to_matrix(x, m);
    ProfileEval out;
    out.eta = matexp_action(b, ones(m));
    double v = 0.0;
    for (std::size_t k = 0; k < act.entries.size(); ++k) {
        const auto [i, j] = act.entries[k];
        v += st.N(i, j) * x(k);
    }
    Vector w = Vector::Zero(m);
    for (Index i = 0; i < m; ++i) {
        if (st.S(i) == 0.0) continue;
        v -= st.S(i) * std::log(out.eta(i));
        w(i) = st.S(i) / out.eta(i);
    }
    out.value = v;
    // d/dB_ij sum_i S_i log eta_i = [int_0^1 e^{(1-s)B^T} w 1^T e^{sB^T} ds]_ij.
    const Matrix g = coupled_exp_integral(Matrix(b.transpose()), Matrix(w * Vector::Ones(m).transpose()), 1.0);
    out.grad.resize(static_cast<Index>(act.entries.size()));
    for (std::size_t k = 0; k < act.entries.size(); ++k) {
        const auto [i, j] = act.entries[k];
        out.grad(static_cast<Index>(k)) = st.N(i, j) - b(i, j) * g(i, j);
    }
    return out;
}

inline double scaled_gradient_norm(const Vector& grad, const ActiveSet& act, const SufficientStats& st) {
    double r = 0.0;
    for (std::size_t k = 0; k < act.entries.size(); ++k) {
        const auto [i, j] = act.entries[k];
        r = std::max(r, std::abs(grad(static_cast<Index>(k))) / std::max(st.N(i, j), 1.0));
    }
    return r;
}

inline EMParams params_from_b(const Matrix& b, const Vector& eta, const SufficientStats& st, double nu_fallback) {
    const Index m = b.rows();
    EMParams t;
    Vector a = Vector::Zero(m);
    for (Index i = 0; i < m; ++i) a(i) = st.S(i) > 0.0 ? st.S(i) / eta(i) : 0.0;
    t.alpha = (a / a.sum()).transpose();
    const double rate = b.rowwise().sum().maxCoeff();
    if (rate > 0.0) {
        t.nu = rate;
        t.P = b / rate;
        // Division can leave the largest row sum a rounding step above 1.
        for (Index i = 0; i < m; ++i) {
            const double s = t.P.row(i).sum();
            if (s > 1.0) t.P.row(i) /= s;
        }
    } else {
        t.nu = nu_fallback;
        t.P = Matrix::Zero(m, m);
    }
    return t;
}

}  // namespace detail

/// Maximizes the expected complete-data log-likelihood. The result never has
/// a lower objective than theta_init.
inline MStepResult m_step(const SufficientStats& stats, const SampleData& y, const EMParams& theta_init,
                          double tol = 1e-10, std::size_t max_iter = 500) {
    theta_init.validate();
    const Index m = theta_init.order();
    if (stats.S.size() != m || stats.N.rows() != m || stats.N.cols() != m) {
        throw DimensionError("m_step: statistics do not match the order of theta");
    }
    if (stats.S.minCoeff() < 0.0 || stats.N.minCoeff() < 0.0) {
        throw ValidationError("m_step: statistics must be nonnegative");
    }
    const double n = static_cast<double>(y.size());
    if (n == 0.0) throw ValidationError("m_step: empty sample");
    if (std::abs(stats.S.sum() - n) > 1e-8 * std::max(1.0, n)) {
        throw ValidationError("m_step: sum S_i must equal the sample size");
    }
    const double sum_y = y.total();
    if (std::abs(stats.N.sum() - sum_y) > 1e-8 * std::max(1.0, sum_y)) {
        throw ValidationError("m_step: sum N_ij must equal the sum of the observations");
    }

    detail::ActiveSet act;
    bool diagonal = true;
    for (Index i = 0; i < m; ++i) {
        for (Index j = 0; j < m; ++j) {
            if (stats.N(i, j) > 0.0) {
                act.entries.emplace_back(i, j);
                if (i != j) diagonal = false;
            }
        }
    }

    MStepResult out;
    const Matrix b_init = theta_init.nu * theta_init.P;

    if (diagonal) {
        // G separates: N_ii log b_i - S_i b_i, maximized at b_i = N_ii / S_i.
        Matrix b = Matrix::Zero(m, m);
        for (const auto& [i, j] : act.entries) {
            if (!(stats.S(i) > 0.0)) throw ValidationError("m_step: jumps from a phase with no initial mass; objective is unbounded");
            b(i, i) = stats.N(i, i) / stats.S(i);
        }
        const Vector eta = matexp_action(b, ones(m));
        out.theta = detail::params_from_b(b, eta, stats, theta_init.nu);
        Vector x(static_cast<Index>(act.entries.size()));
        for (std::size_t k = 0; k < act.entries.size(); ++k) x(static_cast<Index>(k)) = std::log(b(act.entries[k].first, act.entries[k].second));
        const auto ev = detail::profile_eval(x, act, stats);
        out.objective = ev.value;
        out.gradient_norm = detail::scaled_gradient_norm(ev.grad, act, stats);
        out.converged = true;
        out.status = "closed-form";
        return out;
    }

    // Start from theta_init where it is positive; elsewhere from N_ij / n.
    const std::size_t k_act = act.entries.size();
    Vector x(static_cast<Index>(k_act));
    for (std::size_t k = 0; k < k_act; ++k) {
        const auto [i, j] = act.entries[k];
        const double b0 = b_init(i, j);
        x(static_cast<Index>(k)) = std::log(b0 > 0.0 ? b0 : std::max(stats.N(i, j) / n, 1e-300));
    }
    auto ev = detail::profile_eval(x, act, stats);
    // BFGS on F = -G with inverse Hessian seeded by diag(1/N_ij).
    Matrix h = Matrix::Zero(static_cast<Index>(k_act), static_cast<Index>(k_act));
    for (std::size_t k = 0; k < k_act; ++k) {
        const auto [i, j] = act.entries[k];
        h(static_cast<Index>(k), static_cast<Index>(k)) = 1.0 / std::max(stats.N(i, j), 1e-12);
    }
    const double max_step = 5.0;
    out.status = "max-iter";
    std::size_t it = 0;
    for (; it < max_iter; ++it) {
        out.gradient_norm = detail::scaled_gradient_norm(ev.grad, act, stats);
        if (out.gradient_norm <= tol) {
            out.converged = true;
            out.status = "converged";
            break;
        }
        Vector dir = h * ev.grad;  // ascent direction for G
        double slope = ev.grad.dot(dir);
        if (!(slope > 0.0)) {
            h = Matrix::Zero(h.rows(), h.cols());
            for (std::size_t k = 0; k < k_act; ++k) {
                const auto [i, j] = act.entries[k];
                h(static_cast<Index>(k), static_cast<Index>(k)) = 1.0 / std::max(stats.N(i, j), 1e-12);
            }
            dir = h * ev.grad;
            slope = ev.grad.dot(dir);
        }
        const double dmax = dir.cwiseAbs().maxCoeff();
        if (dmax > max_step) {
            dir *= max_step / dmax;
            slope = ev.grad.dot(dir);
        }
        double step = 1.0;
        bool accepted = false;
        detail::ProfileEval trial;
        Vector x_new;
        for (int ls = 0; ls < 60; ++ls) {
            x_new = x + step * dir;
            trial = detail::profile_eval(x_new, act, stats);
            if (std::isfinite(trial.value) && trial.value >= ev.value + 1e-4 * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            out.status = "line-search";
            break;
        }
        const Vector s = x_new - x;
        const Vector yv = ev.grad - trial.grad;  // gradient change of F = -G
        const double sy = s.dot(yv);
        if (sy > 1e-300) {
            const Vector hy = h * yv;
            const double yhy = yv.dot(hy);
            h += ((sy + yhy) / (sy * sy)) * (s * s.transpose()) - (hy * s.transpose() + s * hy.transpose()) / sy;
        }
        x = x_new;
        ev = trial;
    }
    out.iterations = it;
    const Matrix b = act.to_matrix(x, m);
    out.objective = ev.value;
    out.theta = detail::params_from_b(b, ev.eta, stats, theta_init.nu);
    return out;
}

// ---------------------------------------------------------------------------
// Fit
// ---------------------------------------------------------------------------

struct EMIteration {
    std::size_t iter = 0;
    EMParams theta;
    double loglik = 0.0;     ///< observed-data log-likelihood at theta
    double stats_s = 0.0;    ///< sum S_i of the E-step that produced theta
    double stats_n = 0.0;    ///< sum N_ij of the same E-step
    std::size_t m_iterations = 0;
    bool m_converged = true;
    std::string m_status;
    bool p_stochastic = false;
};

struct EMTrace {
    std::vector<EMIteration> records;
    bool converged = false;

    const EMParams& final_theta() const { return records.back().theta; }
    double final_loglik() const { return records.back().loglik; }
};

struct FitOptions {
    std::size_t max_iter = 200;
    double tol = 1e-8;         ///< relative observed log-likelihood gain
    double m_tol = 1e-10;      ///< M-step scaled gradient tolerance
};

/// Alternates E- and M-steps from theta0. Stops when the relative gain in
/// the observed log-likelihood falls below tol, or after max_iter steps.
inline EMTrace fit(const SampleData& y, const EMParams& theta0, const FitOptions& opt = {}) {
    theta0.validate();
    if (y.empty()) throw ValidationError("fit: empty sample");
    EMTrace trace;
    EMIteration rec;
    rec.theta = theta0;
    rec.loglik = loglik_observed(theta0, y);
    rec.p_stochastic = theta0.p_stochastic();
    rec.m_status = "start";
    trace.records.push_back(rec);

    for (std::size_t s = 1; s <= opt.max_iter; ++s) {
        const EMParams& cur = trace.records.back().theta;
        const auto stats = e_step(cur, y);
        const auto ms = m_step(stats, y, cur, opt.m_tol);
        EMIteration next;
        next.iter = s;
        next.theta = ms.theta;
        next.loglik = loglik_observed(ms.theta, y);
        next.stats_s = stats.S.sum();
        next.stats_n = stats.N.sum();
        next.m_iterations = ms.iterations;
        next.m_converged = ms.converged;
        next.m_status = ms.status;
        next.p_stochastic = ms.theta.p_stochastic();
        const double gain = next.loglik - trace.records.back().loglik;
        const double scale = std::max(1.0, std::abs(trace.records.back().loglik));
        trace.records.push_back(std::move(next));
        if (gain < opt.tol * scale) {
            trace.converged = true;
            break;
        }
    }
    return trace;
}

/// Diagonal start: alpha uniform and per-phase rates at evenly spaced sample
/// quantiles, nu = largest rate. A seed jitters the rates.
inline EMParams default_start(const SampleData& y, Index m, std::optional<std::uint64_t> seed = std::nullopt) {
    if (m < 1) throw ValidationError("default_start: order must be at least 1");
    if (y.empty()) throw ValidationError("default_start: empty sample");
    std::vector<std::uint64_t> sorted = y.observations;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> rates(static_cast<std::size_t>(m));
    std::mt19937_64 rng(seed.value_or(0));
    for (Index i = 0; i < m; ++i) {
        const double q = (static_cast<double>(i) + 0.5) / static_cast<double>(m);
        const auto idx = static_cast<std::size_t>(q * static_cast<double>(sorted.size() - 1) + 0.5);
        double r = std::max(0.5, static_cast<double>(sorted[idx]));
        // Keep rates distinct so phases are not interchangeable.
        r *= 1.0 + 0.01 * static_cast<double>(i);
        if (seed) r *= std::uniform_real_distribution<double>(0.8, 1.2)(rng);
        rates[static_cast<std::size_t>(i)] = r;
    }
    EMParams t;
    t.nu = *std::max_element(rates.begin(), rates.end());
    t.alpha = RowVector::Constant(m, 1.0 / static_cast<double>(m));
    t.P = Matrix::Zero(m, m);
    for (Index i = 0; i < m; ++i) t.P(i, i) = rates[static_cast<std::size_t>(i)] / t.nu;
    return t;
}

// ---------------------------------------------------------------------------
// KKT residuals
// ---------------------------------------------------------------------------

struct KKTReport {
    /// alpha e^{nu P} (nu P 1 - ybar 1).
    double r_nu = 0.0;
    /// max_i |alpha_i - (S_i/eta_i) / sum_j (S_j/eta_j)|.
    double r_alpha = 0.0;
    /// n alpha/(alpha e^{nu P} 1) int_0^nu e^{(nu-u)P} e_i e_j^T e^{uP} du 1 - N_ij/p_ij;
    /// feasibility means R_P <= slack. Zero where inactive.
    Matrix R_P;
    /// p_ij = 0.
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> inactive;
    /// nu p_ij alpha int_0^1 e^{nu(P - I)x} dx e_i - N_ij / n, the reduced
    /// form for stochastic P.
    Matrix stochastic_form;
    /// Sum of stochastic_form; equals nu - sum N_ij / n when P is stochastic.
    double stochastic_sum = 0.0;

    double max_active_rp() const {
        double r = 0.0;
        for (Index i = 0; i < R_P.rows(); ++i)
            for (Index j = 0; j < R_P.cols(); ++j)
                if (!inactive(i, j)) r = std::max(r, std::abs(R_P(i, j)));
        return r;
    }
};

inline KKTReport kkt_residuals(const EMParams& theta, const SampleData& y, const SufficientStats& stats) {
    theta.validate();
    const Index m = theta.order();
    if (stats.S.size() != m || stats.N.rows() != m || stats.N.cols() != m) {
        throw DimensionError("kkt_residuals: statistics do not match the order of theta");
    }
    const double n = static_cast<double>(y.size());
    const double ybar = y.empty() ? 0.0 : y.mean();
    KKTReport rep;
    const Matrix b = theta.nu * theta.P;
    const Vector eta = matexp_action(b, ones(m));
    const double ae = theta.alpha.dot(eta);

    rep.r_nu = theta.alpha.dot(matexp_action(b, Vector(b * ones(m) - ybar * ones(m))));

    Vector w = Vector::Zero(m);
    for (Index i = 0; i < m; ++i) w(i) = stats.S(i) > 0.0 ? stats.S(i) / eta(i) : 0.0;
    const double z = w.sum();
    for (Index i = 0; i < m; ++i) {
        const double target = z > 0.0 ? w(i) / z : 0.0;
        rep.r_alpha = std::max(rep.r_alpha, std::abs(theta.alpha(i) - target));
    }

    rep.R_P = Matrix::Zero(m, m);
    rep.inactive.resize(m, m);
    for (Index i = 0; i < m; ++i) {
        for (Index j = 0; j < m; ++j) {
            rep.inactive(i, j) = theta.P(i, j) == 0.0;
            if (rep.inactive(i, j)) continue;
            const Matrix integral = block_exp_integral(theta.P, theta.nu, i, j);
            rep.R_P(i, j) = n * theta.alpha.dot(integral * ones(m)) / ae - stats.N(i, j) / theta.P(i, j);
        }
    }

    // int_0^1 e^{nu(P - I)x} dx is the upper-right block of
    // exp([[nu(P - I), I], [0, 0]]).
    Matrix big = Matrix::Zero(2 * m, 2 * m);
    big.topLeftCorner(m, m) = theta.nu * (theta.P - Matrix::Identity(m, m));
    big.topRightCorner(m, m) = Matrix::Identity(m, m);
    const Matrix integral01 = matexp(big).topRightCorner(m, m);
    const RowVector a_int = theta.alpha * integral01;
    rep.stochastic_form = Matrix::Zero(m, m);
    for (Index i = 0; i < m; ++i) {
        for (Index j = 0; j < m; ++j) {
            rep.stochastic_form(i, j) =
                theta.nu * theta.P(i, j) * a_int(i) - (n > 0.0 ? stats.N(i, j) / n : 0.0);
        }
    }
    rep.stochastic_sum = rep.stochastic_form.sum();
    return rep;
}

}  // namespace phpoisson
