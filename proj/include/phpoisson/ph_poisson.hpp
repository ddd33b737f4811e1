#pragma once

// PH-Poisson distributions P(beta, B):  p_n = beta B^n 1 / n!,  beta e^B 1 = 1,
// with beta >= 0 and B >= 0, and their physical form (nu, alpha, P).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "phpoisson/errors.hpp"
#include "phpoisson/genab0.hpp"
#include "phpoisson/linalg.hpp"

namespace phpoisson {

inline constexpr double kNormalizationTol = 1e-10;

/// Sum over n > n_max of x^n / n!, for x >= 0.
inline double poisson_series_tail(double x, std::size_t n_max) {
    if (!(x >= 0.0)) throw ValidationError("poisson_series_tail: x must be nonnegative");
    if (x == 0.0) return 0.0;
    double n = static_cast<double>(n_max) + 1.0;
    double term = std::exp(n * std::log(x) - std::lgamma(n + 1.0));
    double sum = 0.0;
    for (;;) {
        sum += term;
        const double ratio = x / (n + 1.0);
        if (ratio < 0.5) {
            // Geometric majorant for the rest.
            const double rest = term * ratio / (1.0 - ratio);
            if (rest <= 1e-17 * sum || rest == 0.0) return sum + rest;
        }
        term *= ratio;
        n += 1.0;
    }
}

class PHPoissonRep {
public:
    PHPoissonRep() = default;

    /// Checks beta >= 0, B >= 0 and |beta e^B 1 - 1| <= tol.
    PHPoissonRep(RowVector beta, Matrix b, double tol = kNormalizationTol) : beta_(std::move(beta)), b_(std::move(b)) {
        check_shape_and_sign(beta_, b_, "ph-poisson");
        const double total = normalization(beta_, b_);
        if (!(std::abs(total - 1.0) <= tol)) {
            throw ValidationError("ph-poisson: beta e^B 1 = " + std::to_string(total) + " differs from 1");
        }
    }

    /// Scales beta_raw so that beta e^B 1 = 1.
    static PHPoissonRep normalize(const RowVector& beta_raw, const Matrix& b) {
        check_shape_and_sign(beta_raw, b, "normalize");
        if (beta_raw.size() == 0 || beta_raw.maxCoeff() == 0.0) {
            throw ValidationError("normalize: beta must not be the zero vector");
        }
        const double total = normalization(beta_raw, b);
        if (!(total > 0.0) || !std::isfinite(total)) {
            throw NumericalError("normalize: beta e^B 1 is not a positive finite number");
        }
        PHPoissonRep rep;
        rep.beta_ = beta_raw / total;
        rep.b_ = b;
        return rep;
    }

    const RowVector& beta() const { return beta_; }
    const Matrix& B() const { return b_; }
    Index order() const { return beta_.size(); }

    GenAB0Rep as_genab0() const { return GenAB0Rep{beta_, Matrix::Zero(order(), order()), b_}; }

    static double normalization(const RowVector& beta, const Matrix& b) {
        return beta.dot(matexp_action(b, ones(b.rows())));
    }

private:
    static void check_shape_and_sign(const RowVector& beta, const Matrix& b, const char* what) {
        require_square(b, what);
        if (b.rows() != beta.size()) {
            throw DimensionError(std::string(what) + ": beta has length " + std::to_string(beta.size()) +
                                 " but B has order " + std::to_string(b.rows()));
        }
        if (!beta.allFinite() || !b.allFinite()) throw ValidationError(std::string(what) + ": entries must be finite");
        if (!is_nonnegative(beta)) throw ValidationError(std::string(what) + ": beta must be nonnegative");
        if (!is_nonnegative(b)) throw ValidationError(std::string(what) + ": B must be nonnegative");
    }

    RowVector beta_;
    Matrix b_;
};

/// Poisson clock rate nu, initial law alpha and per-event transition matrix P.
struct PhysicalRep {
    double nu = 0.0;
    RowVector alpha;
    Matrix P;

    Index order() const { return alpha.size(); }

    /// nu > 0, alpha >= 0 with 0 < alpha 1 <= 1, P >= 0 with row sums <= 1.
    void validate() const {
        require_square(P, "physical");
        if (P.rows() != alpha.size()) throw DimensionError("physical: alpha length does not match the order of P");
        if (!(nu > 0.0) || !std::isfinite(nu)) throw ValidationError("physical: nu must be positive and finite");
        if (!alpha.allFinite() || !P.allFinite()) throw ValidationError("physical: entries must be finite");
        if (!is_nonnegative(alpha)) throw ValidationError("physical: alpha must be nonnegative");
        const double mass = alpha.sum();
        if (!(mass > 0.0) || mass > 1.0 + kNormalizationTol) {
            throw ValidationError("physical: alpha 1 must lie in (0, 1]");
        }
        if (!is_nonnegative(P)) throw ValidationError("physical: P must be nonnegative");
        if (P.size() > 0 && P.rowwise().sum().maxCoeff() > 1.0 + kNormalizationTol) {
            throw ValidationError("physical: P row sums must not exceed 1");
        }
    }

    /// Absorption probabilities 1 - (P 1)_i, clipped at zero.
    Vector exit_vector() const { return (Vector::Ones(order()) - P.rowwise().sum()).cwiseMax(0.0); }

    bool is_stochastic(double tol = 1e-12) const {
        return order() > 0 && (P.rowwise().sum().array() - 1.0).abs().maxCoeff() <= tol;
    }
};

/// p_n by v_k = v_{k-1} B / k, v_0 = beta.
inline double pmf(const PHPoissonRep& rep, std::size_t n) {
    RowVector v = rep.beta();
    for (std::size_t k = 1; k <= n; ++k) {
        v = v * rep.B() / static_cast<double>(k);
        if (v.maxCoeff() == 0.0) return 0.0;
    }
    return v.sum();
}

/// p_0..p_{n_max}; tail_bound = beta 1 * sum_{n > n_max} nubar^n / n!
/// with nubar the largest row sum of B.
inline DiscreteDensity pmf_sequence(const PHPoissonRep& rep, std::size_t n_max) {
    std::vector<double> raw;
    raw.reserve(n_max + 1);
    RowVector v = rep.beta();
    raw.push_back(v.sum());
    for (std::size_t k = 1; k <= n_max; ++k) {
        v = v * rep.B() / static_cast<double>(k);
        raw.push_back(v.sum());
    }
    const double nubar = rep.order() == 0 ? 0.0 : rep.B().rowwise().sum().maxCoeff();
    return make_density(std::move(raw), rep.beta().sum() * poisson_series_tail(nubar, n_max));
}

/// Smallest horizon whose certified tail is at most tol.
inline DiscreteDensity pmf_to_tolerance(const PHPoissonRep& rep, double tol, std::size_t n_limit = 1000000) {
    if (!(tol > 0.0)) throw ValidationError("pmf: tol must be positive");
    const double nubar = rep.order() == 0 ? 0.0 : rep.B().rowwise().sum().maxCoeff();
    const double mass = rep.beta().sum();
    std::size_t n = static_cast<std::size_t>(std::ceil(nubar));
    while (mass * poisson_series_tail(nubar, n) > tol) {
        if (n >= n_limit) throw NumericalError("pmf: tail not certified within the term limit");
        n += std::max<std::size_t>(1, n / 8);
    }
    // Shrink to the first n that still satisfies the bound.
    std::size_t lo = 0;
    std::size_t hi = n;
    while (lo < hi) {
        const std::size_t mid = lo + (hi - lo) / 2;
        if (mass * poisson_series_tail(nubar, mid) <= tol) hi = mid;
        else lo = mid + 1;
    }
    return pmf_sequence(rep, hi);
}

/// p(z) = beta e^{zB} 1.
inline double pgf(const PHPoissonRep& rep, double z) {
    return rep.beta().dot(matexp_action(Matrix(z * rep.B()), ones(rep.order())));
}

/// E[X(X-1)...(X-n+1)] = beta B^n e^B 1.
inline double factorial_moment(const PHPoissonRep& rep, std::size_t n) {
    RowVector v = rep.beta();
    for (std::size_t k = 0; k < n; ++k) v = v * rep.B();
    return v.dot(matexp_action(rep.B(), ones(rep.order())));
}

inline Moments moments(const PHPoissonRep& rep) {
    return moments_from_factorial(factorial_moment(rep, 1), factorial_moment(rep, 2));
}

/// nu = max_i (B 1)_i, P = B / nu, alpha = c beta with c = 1/(beta 1) by default.
inline PhysicalRep to_physical(const PHPoissonRep& rep, std::optional<double> c = std::nullopt) {
    if (rep.order() == 0 || rep.B().maxCoeff() == 0.0) {
        throw ValidationError("to_physical: B = 0 defines no Poisson rate");
    }
    const double mass = rep.beta().sum();
    const double c_max = 1.0 / mass;
    const double scale = c.value_or(c_max);
    if (!(scale > 0.0) || scale > c_max * (1.0 + kNormalizationTol)) {
        throw ValidationError("to_physical: c must lie in (0, 1/(beta 1)] = (0, " + std::to_string(c_max) + "]");
    }
    PhysicalRep phys;
    phys.nu = rep.B().rowwise().sum().maxCoeff();
    phys.P = rep.B() / phys.nu;
    phys.alpha = scale * rep.beta();
    return phys;
}

/// B = nu P, beta = alpha / (alpha e^B 1).
inline PHPoissonRep from_physical(const PhysicalRep& phys) {
    phys.validate();
    return PHPoissonRep::normalize(phys.alpha, phys.nu * phys.P);
}

/// Survival probability P[T > 1] = alpha e^{-nu} e^B 1 with B = nu P.
inline double survival_probability(const PhysicalRep& phys) {
    phys.validate();
    const Vector eta = matexp_action(Matrix(phys.nu * phys.P), ones(phys.order()));
    return std::exp(-phys.nu) * phys.alpha.dot(eta);
}

struct TailDiagnostic {
    bool finite_support = false;
    std::size_t support_max = 0;  ///< largest n with p_n possibly > 0, when finite_support
    double spectral_radius = 0.0;
    std::vector<double> ratios;   ///< p_n n! / sp(B)^n for n in [n_lo, n_hi]
};

/// Slope of log(p_n n! / sp(B)^n) against log n estimates the index of sp(B).
/// For nilpotent B the support is reported instead.
inline TailDiagnostic tail_diagnostic(const PHPoissonRep& rep, std::size_t n_lo, std::size_t n_hi) {
    if (!(n_lo < n_hi)) throw ValidationError("tail_diagnostic: requires n_lo < n_hi");
    TailDiagnostic out;
    const Index m = rep.order();
    // Nonnegative products vanish only structurally, so B^k = 0 is exact.
    Matrix power = Matrix::Identity(m, m);
    for (Index k = 1; k <= m; ++k) {
        power = power * rep.B();
        if (power.maxCoeff() == 0.0) {
            out.finite_support = true;
            out.support_max = static_cast<std::size_t>(k - 1);
            return out;
        }
    }
    out.spectral_radius = spectral_radius(rep.B()).value;
    const Matrix scaled = rep.B() / out.spectral_radius;
    RowVector v = rep.beta();
    for (std::size_t n = 0; n <= n_hi; ++n) {
        if (n >= n_lo) out.ratios.push_back(v.sum());
        v = v * scaled;
    }
    return out;
}

}  // namespace phpoisson
