#pragma once

// Generalized (a,b,0) counting distributions D(beta, A, B):
//   p_n = beta P_n 1,  P_0 = I,  P_n = P_{n-1} (A + B/n).
// Also the (a,b,1) variant, whose product starts at index 2.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "phpoisson/errors.hpp"
#include "phpoisson/linalg.hpp"

namespace phpoisson {

struct GenAB0Rep {
    RowVector beta;
    Matrix A;
    Matrix B;

    Index order() const { return beta.size(); }

    void validate() const {
        const Index m = beta.size();
        if (A.rows() != m || A.cols() != m || B.rows() != m || B.cols() != m) {
            throw DimensionError("genab0: beta has length " + std::to_string(m) + " but A is " +
                                 std::to_string(A.rows()) + "x" + std::to_string(A.cols()) +
                                 " and B is " + std::to_string(B.rows()) + "x" +
                                 std::to_string(B.cols()));
        }
        if (!beta.allFinite() || !A.allFinite() || !B.allFinite()) {
            throw ValidationError("genab0: entries must be finite");
        }
    }
};

struct GenAB1Rep {
    double p0 = 0.0;
    RowVector beta1;
    Matrix A;
    Matrix B;

    Index order() const { return beta1.size(); }

    void validate() const {
        GenAB0Rep{beta1, A, B}.validate();
        if (!(p0 >= 0.0 && p0 <= 1.0)) throw ValidationError("genab1: p0 must lie in [0, 1]");
    }
};

/// Finite prefix p_0..p_N of a counting density. `probs` has round-off
/// negatives above -1e-12 clamped to zero; `raw` keeps the computed values.
/// `tail_bound` bounds the absolute mass beyond N (infinity when it could not
/// be certified).
struct DiscreteDensity {
    std::vector<double> probs;
    std::vector<double> raw;
    double tail_bound = 0.0;

    std::size_t size() const { return probs.size(); }
    double mass() const {
        double s = 0.0;
        for (double p : probs) s += p;
        return s;
    }
    double mean() const {
        double s = 0.0;
        for (std::size_t n = 0; n < probs.size(); ++n) s += static_cast<double>(n) * probs[n];
        return s;
    }
};

inline constexpr double kSpectralMargin = 1e-9;
inline constexpr double kNegativeClamp = 1e-12;
inline constexpr std::size_t kTerminationHorizon = 256;

inline DiscreteDensity make_density(std::vector<double> raw, double tail_bound) {
    DiscreteDensity d;
    d.probs = raw;
    for (double& p : d.probs) {
        if (p < 0.0 && p > -kNegativeClamp) p = 0.0;
    }
    d.raw = std::move(raw);
    d.tail_bound = tail_bound;
    return d;
}

namespace detail {

/// A + B/i, snapped to exactly zero when it vanishes up to rounding (the
/// B = -kA case, where -k a / k need not reproduce -a exactly).
inline Matrix factor(const Matrix& a, const Matrix& b, std::size_t i) {
    const double inv = 1.0 / static_cast<double>(i);
    Matrix c = a + b * inv;
    const double scale = a.cwiseAbs().maxCoeff() + b.cwiseAbs().maxCoeff() * inv;
    if (c.size() > 0 && c.cwiseAbs().maxCoeff() <= 8.0 * kEps * scale) c.setZero();
    return c;
}

/// Bounds on the remainder of sum_n z^n w_n with w_{n} = w_{n-1}(A + B/n).
class RemainderBound {
public:
    RemainderBound(const Matrix& a, const Matrix& b) : norms_(a) {
        for (std::size_t k = 0; k < norms_.size(); ++k) {
            norm_a_.push_back(norms_.norm(k, a));
            norm_b_.push_back(norms_.norm(k, b));
        }
    }

    /// Bound on sum_{j>=1} |z|^j |u (prod_{i=n+1}^{n+j} C_i) x| where u is the
    /// current (already z-weighted) term. `vector_norm` selects the l1 norm of
    /// the row vector instead of the scalar obtained with x = 1.
    double tail(const RowVector& u, std::size_t n, double zabs, bool vector_norm) const {
        if (u.size() == 0 || u.cwiseAbs().maxCoeff() == 0.0 || zabs == 0.0) return 0.0;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < norms_.size(); ++k) {
            const double r = norm_a_[k] + norm_b_[k] / static_cast<double>(n + 1);
            const double q = zabs * r;
            if (!(q < 1.0)) continue;
            const double c = vector_norm ? norms_.inverse_norm(k) : norms_.ones_norm(k);
            best = std::min(best, norms_.row_norm(k, u) * c * q / (1.0 - q));
        }
        return best;
    }

private:
    SimilarityNorms norms_;
    std::vector<double> norm_a_;
    std::vector<double> norm_b_;
};

/// Checking the remainder on every index is wasteful for long series.
inline bool check_due(std::size_t n) { return n < 64 || n % 8 == 0; }

}  // namespace detail

struct ConvergenceCertificate {
    double spectral_radius = 0.0;
    /// Set when sp(A) is not below one but P_n = 0 for all n >= index.
    std::optional<std::size_t> termination_index;
};

/// First index n >= first at which prod_{first<=i<=n}(A + B/i) vanishes.
inline std::optional<std::size_t> find_termination(const Matrix& a, const Matrix& b, std::size_t horizon,
                                                   std::size_t first = 1) {
    const Index m = a.rows();
    Matrix p = Matrix::Identity(m, m);
    // |C_first| ... |C_i| bounds the rounding error of the product entrywise.
    Matrix q = Matrix::Identity(m, m);
    for (std::size_t i = first; i <= horizon; ++i) {
        const Matrix c = detail::factor(a, b, i);
        if (c.size() == 0 || c.cwiseAbs().maxCoeff() == 0.0) return i;
        p = p * c;
        q = q * c.cwiseAbs();
        const double scale = q.maxCoeff();
        if (!std::isfinite(scale) || scale == 0.0) return std::nullopt;
        p /= scale;
        q /= scale;
        const double slack = 64.0 * static_cast<double>(i - first + 1) * kEps;
        if ((p.cwiseAbs().array() <= slack * q.array()).all()) return i;
    }
    return std::nullopt;
}

/// Convergence gate for the series sum_n z^n P_n, |z| <= 1. Accepts
/// sp(A) <= 1 - margin, or a product that vanishes within the horizon.
inline ConvergenceCertificate check_convergence(const Matrix& a, const Matrix& b,
                                                std::size_t horizon = kTerminationHorizon,
                                                std::size_t first = 1,
                                                double margin = kSpectralMargin) {
    ConvergenceCertificate cert;
    cert.spectral_radius = spectral_radius(a).value;
    if (cert.spectral_radius <= 1.0 - margin) return cert;
    cert.termination_index = find_termination(a, b, std::max(horizon, kTerminationHorizon), first);
    if (cert.termination_index) return cert;
    if (is_nonnegative(a) && is_nonnegative(b)) {
        throw DivergenceError("series diverges: A and B are nonnegative and sp(A) = " +
                              std::to_string(cert.spectral_radius) + " >= 1");
    }
    throw DivergenceError("convergence not certified: sp(A) = " + std::to_string(cert.spectral_radius) +
                          " is not below 1 and the matrix product does not terminate within " +
                          std::to_string(std::max(horizon, kTerminationHorizon)) + " factors");
}

// ---------------------------------------------------------------------------
// Matrix sequence and densities
// ---------------------------------------------------------------------------

/// P_0..P_{n_max} by right multiplication.
inline std::vector<Matrix> pn_matrices(const GenAB0Rep& rep, std::size_t n_max) {
    rep.validate();
    const Index m = rep.order();
    std::vector<Matrix> out;
    out.reserve(n_max + 1);
    out.push_back(Matrix::Identity(m, m));
    for (std::size_t n = 1; n <= n_max; ++n) out.push_back(out.back() * detail::factor(rep.A, rep.B, n));
    return out;
}

namespace detail {

/// Values w_n 1 for n = first-1 .. last with w_{first-1} = start and
/// w_n = w_{n-1} C_n, plus a bound on the mass beyond `last`. When `last` is
/// empty the sequence is extended until the bound drops below tol.
struct SequenceResult {
    std::vector<double> values;
    double tail = 0.0;
};

inline SequenceResult density_sequence(const RowVector& start, const Matrix& a, const Matrix& b,
                                       std::size_t first, std::optional<std::size_t> last, double tol,
                                       const ConvergenceCertificate& cert, std::size_t n_limit) {
    SequenceResult out;
    RowVector w = start;
    std::size_t n = first - 1;
    out.values.push_back(w.sum());
    const auto terminated = [&](std::size_t idx) {
        return cert.termination_index && idx >= *cert.termination_index;
    };

    if (cert.termination_index) {
        const std::size_t stop = last ? *last : std::max(n, *cert.termination_index);
        while (n < stop) {
            ++n;
            if (terminated(n)) w.setZero();
            else w = w * factor(a, b, n);
            out.values.push_back(w.sum());
        }
        // Remaining terms are finitely many; sum their magnitudes exactly.
        double tail = 0.0;
        while (!terminated(n + 1) && w.cwiseAbs().maxCoeff() > 0.0) {
            ++n;
            w = w * factor(a, b, n);
            tail += std::abs(w.sum());
        }
        out.tail = tail;
        return out;
    }

    RemainderBound bound(a, b);
    if (last) {
        while (n < *last) {
            ++n;
            w = w * factor(a, b, n);
            out.values.push_back(w.sum());
        }
        out.tail = bound.tail(w, n, 1.0, false);
        return out;
    }
    for (;;) {
        if (check_due(n)) {
            const double t = bound.tail(w, n, 1.0, false);
            if (t <= tol) {
                out.tail = t;
                return out;
            }
        }
        if (n >= n_limit) {
            throw NumericalError("density: tail mass not certified below " + std::to_string(tol) +
                                 " within " + std::to_string(n_limit) + " terms");
        }
        ++n;
        w = w * factor(a, b, n);
        out.values.push_back(w.sum());
    }
}

}  // namespace detail

/// p_0..p_{n_max}.
inline DiscreteDensity density(const GenAB0Rep& rep, std::size_t n_max) {
    rep.validate();
    const auto cert = check_convergence(rep.A, rep.B, n_max);
    auto seq = detail::density_sequence(rep.beta, rep.A, rep.B, 1, n_max, 0.0, cert, n_max);
    return make_density(std::move(seq.values), seq.tail);
}

/// Density truncated where the certified tail mass drops below tol.
inline DiscreteDensity density_to_tolerance(const GenAB0Rep& rep, double tol, std::size_t n_limit = 200000) {
    rep.validate();
    if (!(tol > 0.0)) throw ValidationError("density: tol must be positive");
    const auto cert = check_convergence(rep.A, rep.B);
    auto seq = detail::density_sequence(rep.beta, rep.A, rep.B, 1, std::nullopt, tol, cert, n_limit);
    return make_density(std::move(seq.values), seq.tail);
}

/// (a,b,1) density: probs[0] = p0, probs[n] = beta1 prod_{2<=i<=n}(A + B/i) 1.
inline DiscreteDensity density_ab1(const GenAB1Rep& rep, std::size_t n_max) {
    rep.validate();
    std::vector<double> raw{rep.p0};
    if (n_max == 0) {
        // Everything beyond 0 is the (a,b,1) part: its first term plus the bound on the rest.
        const auto cert = check_convergence(rep.A, rep.B, kTerminationHorizon, 2);
        const auto seq = detail::density_sequence(rep.beta1, rep.A, rep.B, 2, std::size_t{1}, 0.0, cert, 1);
        return make_density(std::move(raw), std::abs(seq.values[0]) + seq.tail);
    }
    const auto cert = check_convergence(rep.A, rep.B, n_max, 2);
    auto seq = detail::density_sequence(rep.beta1, rep.A, rep.B, 2, n_max, 0.0, cert, n_max);
    raw.insert(raw.end(), seq.values.begin(), seq.values.end());
    return make_density(std::move(raw), seq.tail);
}

inline DiscreteDensity density_ab1_to_tolerance(const GenAB1Rep& rep, double tol, std::size_t n_limit = 200000) {
    rep.validate();
    if (!(tol > 0.0)) throw ValidationError("density: tol must be positive");
    const auto cert = check_convergence(rep.A, rep.B, kTerminationHorizon, 2);
    auto seq = detail::density_sequence(rep.beta1, rep.A, rep.B, 2, std::nullopt, tol, cert, n_limit);
    std::vector<double> raw{rep.p0};
    raw.insert(raw.end(), seq.values.begin(), seq.values.end());
    return make_density(std::move(raw), seq.tail);
}

/// Wu-Li parametrization (gamma, P0, A, B) to D(gamma P0, A, B).
inline GenAB0Rep from_wuli(const RowVector& gamma, const Matrix& p0, const Matrix& a, const Matrix& b) {
    if (p0.rows() != gamma.size() || p0.cols() != gamma.size()) {
        throw DimensionError("from_wuli: P0 must be square of the length of gamma");
    }
    GenAB0Rep rep{gamma * p0, a, b};
    rep.validate();
    return rep;
}

// ---------------------------------------------------------------------------
// Useless nodes
// ---------------------------------------------------------------------------

/// Nodes reachable in the |A| + |B| transition graph from the support of
/// beta, in increasing order.
inline std::vector<Index> useful_nodes(const GenAB0Rep& rep) {
    rep.validate();
    const Index m = rep.order();
    std::vector<char> seen(static_cast<std::size_t>(m), 0);
    std::queue<Index> frontier;
    for (Index i = 0; i < m; ++i) {
        if (rep.beta(i) != 0.0) {
            seen[static_cast<std::size_t>(i)] = 1;
            frontier.push(i);
        }
    }
    while (!frontier.empty()) {
        const Index i = frontier.front();
        frontier.pop();
        for (Index j = 0; j < m; ++j) {
            if (!seen[static_cast<std::size_t>(j)] && (std::abs(rep.A(i, j)) + std::abs(rep.B(i, j)) != 0.0)) {
                seen[static_cast<std::size_t>(j)] = 1;
                frontier.push(j);
            }
        }
    }
    std::vector<Index> out;
    for (Index i = 0; i < m; ++i) {
        if (seen[static_cast<std::size_t>(i)]) out.push_back(i);
    }
    return out;
}

/// Equivalent representation restricted to useful nodes. A representation
/// with beta = 0 keeps its first node so the order stays positive.
inline GenAB0Rep reduce_useless(const GenAB0Rep& rep) {
    auto keep = useful_nodes(rep);
    if (keep.size() == static_cast<std::size_t>(rep.order())) return rep;
    if (keep.empty()) keep.push_back(0);
    const Index k = static_cast<Index>(keep.size());
    GenAB0Rep out{RowVector(k), Matrix(k, k), Matrix(k, k)};
    for (Index r = 0; r < k; ++r) {
        out.beta(r) = rep.beta(keep[static_cast<std::size_t>(r)]);
        for (Index c = 0; c < k; ++c) {
            out.A(r, c) = rep.A(keep[static_cast<std::size_t>(r)], keep[static_cast<std::size_t>(c)]);
            out.B(r, c) = rep.B(keep[static_cast<std::size_t>(r)], keep[static_cast<std::size_t>(c)]);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Generating function and factorial moments
// ---------------------------------------------------------------------------

struct RowSeries {
    RowVector sum;
    double remainder = 0.0;  ///< bound on the l1 norm of the omitted terms
    std::size_t terms = 0;
};

/// sum_n z^n start P_n for the pair (A, B), truncated once the certified
/// remainder drops below tol. The caller is responsible for the gate.
inline RowSeries row_series(const RowVector& start, const Matrix& a, const Matrix& b, double z, double tol,
                            const ConvergenceCertificate& cert, std::size_t n_limit = 1000000) {
    RowSeries out;
    RowVector u = start;
    out.sum = start;
    const double zabs = std::abs(z);
    if (cert.termination_index) {
        for (std::size_t n = 1; n < *cert.termination_index; ++n) {
            u = z * (u * detail::factor(a, b, n));
            out.sum += u;
            out.terms = n;
        }
        return out;
    }
    detail::RemainderBound bound(a, b);
    for (std::size_t n = 0;; ++n) {
        if (u.size() == 0 || u.cwiseAbs().maxCoeff() == 0.0) {
            out.terms = n;
            out.remainder = 0.0;
            return out;
        }
        if (detail::check_due(n)) {
            const double t = bound.tail(u, n, zabs, true);
            if (t <= tol) {
                out.terms = n;
                out.remainder = t;
                return out;
            }
        }
        if (n >= n_limit) {
            throw NumericalError("series remainder not certified below " + std::to_string(tol) + " within " +
                                 std::to_string(n_limit) + " terms");
        }
        u = z * (u * detail::factor(a, b, n + 1));
        out.sum += u;
    }
}

/// Matrix generating function P(z; A, B) by rows.
inline Matrix pgf_matrix(const Matrix& a, const Matrix& b, double z, double tol = 1e-13) {
    require_square(a, "pgf_matrix");
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("pgf_matrix: A and B differ in shape");
    if (std::abs(z) > 1.0) throw ValidationError("pgf_matrix: |z| must not exceed 1");
    const auto cert = check_convergence(a, b);
    const Index m = a.rows();
    Matrix out(m, m);
    for (Index i = 0; i < m; ++i) {
        RowVector e = RowVector::Zero(m);
        e(i) = 1.0;
        out.row(i) = row_series(e, a, b, z, tol, cert).sum;
    }
    return out;
}

/// p(z) = beta P(z; A, B) 1 for |z| <= 1.
inline double pgf(const GenAB0Rep& rep, double z, double tol = 1e-13) {
    rep.validate();
    if (std::abs(z) > 1.0) throw ValidationError("pgf: |z| must not exceed 1");
    const auto cert = check_convergence(rep.A, rep.B);
    return row_series(rep.beta, rep.A, rep.B, z, tol, cert).sum.sum();
}

struct FactorialMomentForms {
    double primary = 0.0;  ///< beta n! P_n P(1; A, nA + B) 1
    double dual = 0.0;     ///< beta P(1; A, B) prod_i ((A + B/i)(I - A)^{-1}) 1
};

/// Both derivative forms of the n-th factorial moment; requires sp(A) < 1.
inline FactorialMomentForms factorial_moment_forms(const GenAB0Rep& rep, std::size_t n, double tol = 1e-11) {
    rep.validate();
    const Index m = rep.order();
    const double sp = spectral_radius(rep.A).value;
    if (!(sp <= 1.0 - kSpectralMargin)) {
        throw DivergenceError("factorial_moment: requires sp(A) < 1, got " + std::to_string(sp));
    }
    FactorialMomentForms out;
    if (n == 0) {
        out.primary = out.dual = pgf(rep, 1.0, tol);
        return out;
    }
    ConvergenceCertificate cert;
    cert.spectral_radius = sp;

    // n! P_n = prod_{i=1}^n (iA + B), applied to beta from the left.
    RowVector v = rep.beta;
    for (std::size_t i = 1; i <= n; ++i) v = v * (static_cast<double>(i) * rep.A + rep.B);
    const Matrix shifted = static_cast<double>(n) * rep.A + rep.B;
    out.primary = row_series(v, rep.A, shifted, 1.0, 0.1 * tol * std::max(1.0, v.lpNorm<1>()), cert).sum.sum();

    const Matrix resolvent = inverse(Matrix::Identity(m, m) - rep.A);
    Matrix tilde = Matrix::Identity(m, m);
    for (std::size_t i = 1; i <= n; ++i) tilde = tilde * ((static_cast<double>(i) * rep.A + rep.B) * resolvent);
    const double base_tol = 0.1 * tol * std::max(1.0, std::abs(out.primary)) / std::max(1.0, norm_inf(tilde));
    out.dual = (row_series(rep.beta, rep.A, rep.B, 1.0, base_tol, cert).sum * tilde).sum();
    return out;
}

/// n-th factorial moment beta M_n 1 from the primary form, cross-checked
/// against the dual form.
inline double factorial_moment(const GenAB0Rep& rep, std::size_t n, double tol = 1e-11) {
    const auto f = factorial_moment_forms(rep, n, tol);
    if (std::abs(f.primary - f.dual) > 10.0 * tol * std::max(1.0, std::abs(f.primary))) {
        throw ConsistencyError("factorial_moment: the two derivative formulas disagree (" + std::to_string(f.primary) +
                               " vs " + std::to_string(f.dual) + ")");
    }
    return f.primary;
}

struct Moments {
    double mean = 0.0;
    double variance = 0.0;
    double cv = 0.0;
};

/// Mean, variance and coefficient of variation from the first two factorial
/// moments.
inline Moments moments_from_factorial(double m1, double m2) {
    Moments out;
    out.mean = m1;
    out.variance = m2 + m1 - m1 * m1;
    out.cv = out.mean != 0.0 ? std::sqrt(std::max(0.0, out.variance)) / out.mean : 0.0;
    return out;
}

}  // namespace phpoisson
