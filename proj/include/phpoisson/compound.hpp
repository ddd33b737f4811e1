#pragma once

// Densities g_n of S = X_1 + ... + X_N with i.i.d. severities X_i >= 1.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "phpoisson/errors.hpp"
#include "phpoisson/genab0.hpp"
#include "phpoisson/linalg.hpp"

namespace phpoisson {

inline constexpr double kSeverityTol = 1e-10;

/// Severity law f_0..f_M with f_0 = 0.
class SeverityDensity {
public:
    SeverityDensity() : f_{0.0} {}

    explicit SeverityDensity(std::vector<double> f, double tol = kSeverityTol) : f_(std::move(f)) {
        if (f_.empty()) throw ValidationError("severity: density must have at least one entry");
        if (f_[0] != 0.0) {
            throw ValidationError("severity: f_0 must be 0; the recursion covers severities supported on {1, 2, ...} only");
        }
        double total = 0.0;
        for (double v : f_) {
            if (!std::isfinite(v) || v < 0.0) throw ValidationError("severity: entries must be finite and nonnegative");
            total += v;
        }
        if (total > 1.0 + tol) throw ValidationError("severity: total mass " + std::to_string(total) + " exceeds 1");
    }

    const std::vector<double>& f() const { return f_; }
    std::size_t max_support() const { return f_.size() - 1; }
    double at(std::size_t i) const { return i < f_.size() ? f_[i] : 0.0; }

    double mass() const {
        double s = 0.0;
        for (double v : f_) s += v;
        return s;
    }
    double mean() const {
        double s = 0.0;
        for (std::size_t i = 0; i < f_.size(); ++i) s += static_cast<double>(i) * f_[i];
        return s;
    }
    double second_moment() const {
        double s = 0.0;
        for (std::size_t i = 0; i < f_.size(); ++i) s += static_cast<double>(i * i) * f_[i];
        return s;
    }

private:
    std::vector<double> f_;
};

/// Frequency law p_n = p_{n-1}(a + b/n).
struct PanjerScalarParams {
    double a = 0.0;
    double b = 0.0;
    double p0 = 0.0;

    /// Checks p0 in [0, 1] and that p_1..p_horizon are nonnegative with a
    /// convergent ratio a + b/n (|a| < 1, or the sequence terminates).
    void validate(std::size_t horizon = 1000) const {
        if (!(p0 >= 0.0 && p0 <= 1.0)) throw ValidationError("panjer: p0 must lie in [0, 1]");
        if (!std::isfinite(a) || !std::isfinite(b)) throw ValidationError("panjer: a and b must be finite");
        double p = p0;
        for (std::size_t n = 1; n <= horizon; ++n) {
            p *= a + b / static_cast<double>(n);
            if (p < -kNegativeClamp) {
                throw ValidationError("panjer: p_" + std::to_string(n) + " is negative");
            }
            if (p == 0.0) return;
        }
        if (!(std::abs(a) < 1.0)) throw DivergenceError("panjer: the sequence is not summable (|a| >= 1)");
    }
};

/// g_0 = p_0, g_n = sum_{1<=i<=n} f_i g_{n-i} (a + i b / n).
inline DiscreteDensity panjer_scalar(const PanjerScalarParams& params, const SeverityDensity& f, std::size_t n_max) {
    params.validate();
    std::vector<double> g(n_max + 1, 0.0);
    g[0] = params.p0;
    for (std::size_t n = 1; n <= n_max; ++n) {
        double s = 0.0;
        const std::size_t top = std::min(n, f.max_support());
        for (std::size_t i = 1; i <= top; ++i) {
            s += f.at(i) * g[n - i] * (params.a + static_cast<double>(i) * params.b / static_cast<double>(n));
        }
        g[n] = s;
    }
    double tail = 1.0;
    for (double v : g) tail -= v;
    return make_density(std::move(g), std::max(0.0, tail));
}

/// h_0 = beta, h_n = sum_{1<=i<=n} f_i h_{n-i} (A + (i/n) B), g_n = h_n 1.
/// tail_bound is |1 - sum g_n| when the frequency law is proper.
inline DiscreteDensity panjer_vector(const GenAB0Rep& rep, const SeverityDensity& f, std::size_t n_max) {
    rep.validate();
    check_convergence(rep.A, rep.B);
    const std::size_t support = f.max_support();
    std::vector<RowVector> h;
    h.reserve(n_max + 1);
    h.push_back(rep.beta);
    std::vector<double> g{rep.beta.sum()};
    for (std::size_t n = 1; n <= n_max; ++n) {
        RowVector s = RowVector::Zero(rep.order());
        const std::size_t top = std::min(n, support);
        for (std::size_t i = 1; i <= top; ++i) {
            if (f.at(i) == 0.0) continue;
            const Matrix c = rep.A + rep.B * (static_cast<double>(i) / static_cast<double>(n));
            s += f.at(i) * (h[n - i] * c);
        }
        g.push_back(s.sum());
        h.push_back(std::move(s));
    }
    double tail = 1.0;
    for (double v : g) tail -= v;
    return make_density(std::move(g), std::abs(tail));
}

/// Direct g_n = sum_{k<=k_max} p_k (f^{*k})_n.
inline DiscreteDensity convolve_oracle(const DiscreteDensity& p, const SeverityDensity& f, std::size_t n_max,
                                       std::size_t k_max) {
    std::vector<double> g(n_max + 1, 0.0);
    std::vector<double> conv(n_max + 1, 0.0);  // f^{*k}
    conv[0] = 1.0;
    const std::size_t k_top = std::min(k_max, p.probs.empty() ? 0 : p.probs.size() - 1);
    for (std::size_t k = 0; k <= k_top; ++k) {
        if (k > 0) {
            std::vector<double> next(n_max + 1, 0.0);
            for (std::size_t n = 0; n <= n_max; ++n) {
                if (conv[n] == 0.0) continue;
                for (std::size_t i = 1; i <= f.max_support() && n + i <= n_max; ++i) next[n + i] += conv[n] * f.at(i);
            }
            conv = std::move(next);
        }
        const double pk = p.raw.empty() ? p.probs[k] : p.raw[k];
        for (std::size_t n = 0; n <= n_max; ++n) g[n] += pk * conv[n];
    }
    double tail = 1.0;
    for (double v : g) tail -= v;
    return make_density(std::move(g), std::abs(tail));
}

/// Horizon mean + 10 sd of S, from E[S] = E[N]E[X] and
/// Var[S] = E[N]Var[X] + Var[N]E[X]^2.
inline std::size_t suggest_horizon(double freq_mean, double freq_variance, const SeverityDensity& f) {
    const double mx = f.mean();
    const double vx = std::max(0.0, f.second_moment() - mx * mx);
    const double mean = freq_mean * mx;
    const double var = freq_mean * vx + std::max(0.0, freq_variance) * mx * mx;
    const double h = std::ceil(mean + 10.0 * std::sqrt(var));
    if (!std::isfinite(h)) throw NumericalError("suggest_horizon: moments are not finite");
    return static_cast<std::size_t>(std::max(h, 1.0));
}

}  // namespace phpoisson
