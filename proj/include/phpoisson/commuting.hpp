#pragma once

// Closed forms for D(beta, A, B) when AB = BA:
//   P(z; A, B) = exp((A + B) D(z; A)),  D(z; A) = z sum_{n>=1} (zA)^{n-1} / n.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "phpoisson/errors.hpp"
#include "phpoisson/genab0.hpp"
#include "phpoisson/linalg.hpp"

namespace phpoisson {

inline constexpr double kCommuteTol = 1e-10;

/// ||AB - BA||_1 <= tol (||A||_1 ||B||_1 + 1).
inline bool is_commuting(const Matrix& a, const Matrix& b, double tol = kCommuteTol) {
    require_square(a, "is_commuting");
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("is_commuting: A and B differ in shape");
    return norm_1(a * b - b * a) <= tol * (norm_1(a) * norm_1(b) + 1.0);
}

/// A pair of matrices checked to commute at construction.
class CommutingPair {
public:
    CommutingPair(Matrix a, Matrix b, double comm_tol = kCommuteTol)
        : a_(std::move(a)), b_(std::move(b)), comm_tol_(comm_tol) {
        if (!is_commuting(a_, b_, comm_tol_)) {
            throw ValidationError("CommutingPair: ||AB - BA|| exceeds the commutation tolerance");
        }
    }

    const Matrix& A() const { return a_; }
    const Matrix& B() const { return b_; }
    double comm_tol() const { return comm_tol_; }

private:
    Matrix a_;
    Matrix b_;
    double comm_tol_;
};

namespace detail {

/// Smallest k <= order with (zA)^k = 0 up to rounding, if any. The entrywise
/// product |zA|^k bounds the rounding error of the computed power.
inline std::optional<std::size_t> nilpotency_index(const Matrix& za) {
    const Index m = za.rows();
    Matrix p = Matrix::Identity(m, m);
    Matrix q = Matrix::Identity(m, m);
    const Matrix abs_za = za.cwiseAbs();
    for (Index k = 1; k <= m; ++k) {
        p = p * za;
        q = q * abs_za;
        const double slack = 64.0 * static_cast<double>(k * m) * kEps;
        if ((p.cwiseAbs().array() <= slack * q.array()).all()) return static_cast<std::size_t>(k);
    }
    return std::nullopt;
}

/// Integer k >= 1 with B = -kA, if any.
inline std::optional<int> negative_multiple(const Matrix& a, const Matrix& b, double tol) {
    const double aa = a.squaredNorm();
    if (aa == 0.0) return std::nullopt;
    const double k = std::round(-(a.cwiseProduct(b)).sum() / aa);
    if (k < 1.0 || k > 1e6) return std::nullopt;
    if ((b + k * a).cwiseAbs().maxCoeff() > tol * std::max(1.0, b.cwiseAbs().maxCoeff())) return std::nullopt;
    return static_cast<int>(k);
}

}  // namespace detail

/// D(z; A) by its power series with a certified remainder. For nonsingular A
/// the result is cross-checked against A^{-1} log((I - zA)^{-1}).
inline Matrix dz_matrix(double z, const Matrix& a, double tol = 1e-14) {
    require_square(a, "dz_matrix");
    const Index m = a.rows();
    const Matrix za = z * a;
    if (z == 0.0) return Matrix::Zero(m, m);

    const auto nil = detail::nilpotency_index(za);
    Matrix sum = Matrix::Identity(m, m);
    if (nil) {
        Matrix power = Matrix::Identity(m, m);
        for (std::size_t n = 2; n <= *nil; ++n) {
            power = power * za;
            sum += power / static_cast<double>(n);
        }
        return z * sum;
    }

    const double sp = spectral_radius(za).value;
    if (!(sp <= 1.0 - kSpectralMargin)) {
        throw DivergenceError("dz_matrix: requires |z| sp(A) < 1, got " + std::to_string(sp));
    }
    // After the term (zA)^{n-1}/n the remainder is at most
    // ||S|| ||S^{-1}|| q^n / ((n+1)(1-q)) with q = ||S^{-1} zA S||.
    SimilarityNorms norms(za);
    std::vector<double> q(norms.size());
    for (std::size_t k = 0; k < norms.size(); ++k) q[k] = norms.norm(k, za);

    Matrix power = Matrix::Identity(m, m);
    for (std::size_t n = 1;; ++n) {
        if (n > 1) {
            power = power * za;
            sum += power / static_cast<double>(n);
        }
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < norms.size(); ++k) {
            if (!(q[k] < 1.0)) continue;
            best = std::min(best, norms.forward_norm(k) * norms.inverse_norm(k) *
                                      std::pow(q[k], static_cast<double>(n)) /
                                      (static_cast<double>(n + 1) * (1.0 - q[k])));
        }
        if (best <= tol * norm_inf(sum)) break;
        if (n >= 1000000) throw NumericalError("dz_matrix: remainder not certified");
    }
    Matrix d = z * sum;

    // Closed form for nonsingular A, checked only where the inverse does not
    // amplify rounding beyond the tolerance.
    Eigen::FullPivLU<Matrix> lu(a);
    if (lu.isInvertible()) {
        const Matrix ainv = lu.inverse();
        const double cond = norm_1(a) * norm_1(ainv);
        if (cond * 1e-13 < tol * 1e3) {
            const Matrix closed = -ainv * matlog(Matrix::Identity(m, m) - za);
            const double gap = (closed - d).cwiseAbs().maxCoeff();
            if (gap > std::max(10.0 * tol, 100.0 * cond * kEps) * std::max(1.0, d.cwiseAbs().maxCoeff())) {
                throw ConsistencyError("dz_matrix: series and logarithm forms disagree by " + std::to_string(gap));
            }
        }
    }
    return d;
}

/// P(z; A, B) = exp((A + B) D(z; A)). For B = -kA the product terminates and
/// P(z; A, B) = (I - zA)^{k-1} for every z, whatever sp(A).
inline Matrix pgf_closed(const CommutingPair& pair, double z, double tol = 1e-14) {
    const Index m = pair.A().rows();
    if (const auto k = detail::negative_multiple(pair.A(), pair.B(), 64.0 * kEps)) {
        const Matrix base = Matrix::Identity(m, m) - z * pair.A();
        Matrix out = Matrix::Identity(m, m);
        for (int i = 1; i < *k; ++i) out = out * base;
        return out;
    }
    return matexp((pair.A() + pair.B()) * dz_matrix(z, pair.A(), tol));
}

/// n-th factorial moment n! beta P(1; A, B) (I - A)^{-n} P_n 1.
inline double factorial_moment_commuting(const CommutingPair& pair, const RowVector& beta, std::size_t n,
                                         double tol = 1e-14) {
    const Matrix& a = pair.A();
    const Matrix& b = pair.B();
    const Index m = a.rows();
    if (beta.size() != m) throw DimensionError("factorial_moment_commuting: beta length does not match order");
    const double sp = spectral_radius(a).value;
    if (!(sp <= 1.0 - kSpectralMargin)) {
        throw DivergenceError("factorial_moment_commuting: requires sp(A) < 1, got " + std::to_string(sp));
    }
    const Matrix resolvent = inverse(Matrix::Identity(m, m) - a);
    RowVector v = beta * pgf_closed(pair, 1.0, tol);
    for (std::size_t i = 1; i <= n; ++i) v = v * resolvent;
    // n! P_n = prod_{i=1}^n (iA + B).
    for (std::size_t i = 1; i <= n; ++i) v = v * (static_cast<double>(i) * a + b);
    return v.sum();
}

/// Exact unsigned Stirling numbers of the first kind fit in 128 bits for
/// n <= 30 (30! < 2^108).
using StirlingInt = unsigned __int128;
inline constexpr std::size_t kStirlingMax = 30;

/// Unsigned Stirling number of the first kind [n, i] from
/// [n+1, i] = [n, i-1] + n [n, i].
inline StirlingInt stirling_first_unsigned(std::size_t n, std::size_t i) {
    if (n > kStirlingMax) {
        throw ValidationError("stirling_first_unsigned: n = " + std::to_string(n) + " exceeds the exact range " +
                              std::to_string(kStirlingMax));
    }
    if (i > n) throw ValidationError("stirling_first_unsigned: requires i <= n");
    std::vector<StirlingInt> row{1};  // [0, 0] = 1
    for (std::size_t k = 0; k < n; ++k) {
        std::vector<StirlingInt> next(k + 2, 0);
        for (std::size_t j = 0; j <= k + 1; ++j) {
            const StirlingInt left = j >= 1 ? row[j - 1] : 0;
            const StirlingInt stay = j <= k ? static_cast<StirlingInt>(k) * row[j] : 0;
            next[j] = left + stay;
        }
        row = std::move(next);
    }
    return row[i];
}

}  // namespace phpoisson
