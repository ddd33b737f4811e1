#pragma once

// Dense matrix kernels shared by the rest of the library. Eigen provides the
// storage, products and factorizations; the exponential, logarithm and the
// augmented-block integral are computed here with explicit error control.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "phpoisson/errors.hpp"

namespace phpoisson {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

inline constexpr double kEps = std::numeric_limits<double>::epsilon();

// ---------------------------------------------------------------------------
// Small helpers
// ---------------------------------------------------------------------------

inline void require_square(const Matrix& m, const char* what) {
    if (m.rows() != m.cols()) {
        throw DimensionError(std::string(what) + ": matrix must be square, got " +
                             std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    }
}

inline void require_finite(const Matrix& m, const char* what) {
    if (!m.allFinite()) throw ValidationError(std::string(what) + ": entries must be finite");
}

/// Maximum absolute row sum.
inline double norm_inf(const Matrix& m) {
    if (m.size() == 0) return 0.0;
    return m.cwiseAbs().rowwise().sum().maxCoeff();
}

/// Maximum absolute column sum.
inline double norm_1(const Matrix& m) {
    if (m.size() == 0) return 0.0;
    return m.cwiseAbs().colwise().sum().maxCoeff();
}

inline Vector ones(Index n) { return Vector::Ones(n); }

inline bool is_nonnegative(const Matrix& m) { return m.size() == 0 || m.minCoeff() >= 0.0; }

inline Matrix inverse(const Matrix& m) {
    require_square(m, "inverse");
    Eigen::FullPivLU<Matrix> lu(m);
    if (!lu.isInvertible()) throw NumericalError("inverse: matrix is singular");
    return lu.inverse();
}

// ---------------------------------------------------------------------------
// Matrix exponential
// ---------------------------------------------------------------------------

/// e^M by scaling and squaring on a truncated Taylor series. The series is
/// cut when the bound on the remainder falls below tol times the norm of the
/// partial sum.
inline Matrix matexp(const Matrix& m, double tol = 1e-16) {
    require_square(m, "matexp");
    require_finite(m, "matexp");
    if (!(tol > 0.0)) throw ValidationError("matexp: tol must be positive");
    const Index n = m.rows();
    if (n == 0) return Matrix(0, 0);

    const double norm = norm_1(m);
    int squarings = 0;
    if (norm > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
    const Matrix x = m / std::ldexp(1.0, squarings);
    const double xnorm = norm_1(x);

    Matrix sum = Matrix::Identity(n, n);
    Matrix term = Matrix::Identity(n, n);
    for (int k = 1; k < 200; ++k) {
        term = term * x / static_cast<double>(k);
        sum += term;
        // Remaining terms are bounded by a geometric series in xnorm/(k+2).
        const double ratio = xnorm / static_cast<double>(k + 2);
        const double remainder = norm_1(term) * xnorm / static_cast<double>(k + 1) / (1.0 - ratio);
        if (remainder <= tol * norm_1(sum)) break;
    }
    for (int s = 0; s < squarings; ++s) sum = sum * sum;
    return sum;
}

/// e^M v without forming e^M: the interval is split so that each step has
/// norm at most one, and each step accumulates w <- w + M w / k.
inline Vector matexp_action(const Matrix& m, const Vector& v, double tol = 1e-16) {
    require_square(m, "matexp_action");
    if (m.cols() != v.size()) {
        throw DimensionError("matexp_action: matrix order " + std::to_string(m.cols()) +
                             " does not match vector length " + std::to_string(v.size()));
    }
    if (!(tol > 0.0)) throw ValidationError("matexp_action: tol must be positive");
    if (v.size() == 0) return v;

    const double norm = norm_inf(m);
    const int steps = std::max(1, static_cast<int>(std::ceil(norm)));
    const Matrix x = m / static_cast<double>(steps);
    const double xnorm = norm / static_cast<double>(steps);

    Vector w = v;
    for (int s = 0; s < steps; ++s) {
        Vector term = w;
        Vector acc = w;
        for (int k = 1; k < 200; ++k) {
            term = x * term / static_cast<double>(k);
            acc += term;
            const double ratio = xnorm / static_cast<double>(k + 2);
            const double remainder =
                term.lpNorm<Eigen::Infinity>() * xnorm / static_cast<double>(k + 1) / (1.0 - ratio);
            if (remainder <= tol * acc.lpNorm<Eigen::Infinity>()) break;
        }
        w = acc;
    }
    return w;
}

/// Row-vector form: v e^M.
inline RowVector matexp_action(const RowVector& v, const Matrix& m, double tol = 1e-16) {
    return matexp_action(Matrix(m.transpose()), Vector(v.transpose()), tol).transpose();
}

// ---------------------------------------------------------------------------
// Spectral radius
// ---------------------------------------------------------------------------

struct SpectralRadius {
    double value = 0.0;        ///< best estimate of sp(M)
    double upper_bound = 0.0;  ///< certified: sp(M) <= upper_bound
    double lower_bound = 0.0;  ///< certified for nonnegative M, zero otherwise
};

namespace detail {

/// Collatz-Wielandt bounds for the nonnegative matrix |M| from a positive
/// power-iteration vector. Returns {lower, upper, vector}.
struct PerronBounds {
    double lower = 0.0;
    double upper = 0.0;
    Vector vec;
};

inline PerronBounds perron_bounds(const Matrix& abs_m, double tol, int max_iter = 2000) {
    const Index n = abs_m.rows();
    PerronBounds out;
    Vector x = Vector::Ones(n);
    double lower = 0.0;
    double upper = std::numeric_limits<double>::infinity();
    for (int it = 0; it < max_iter; ++it) {
        const Vector y = abs_m * x;
        double lo = std::numeric_limits<double>::infinity();
        double hi = 0.0;
        for (Index i = 0; i < n; ++i) {
            const double r = y(i) / x(i);
            lo = std::min(lo, r);
            hi = std::max(hi, r);
        }
        lower = std::max(lower, lo);
        upper = std::min(upper, hi);
        if (upper - lower <= tol) break;
        // Shifting by the identity keeps every entry strictly positive.
        x = y + x;
        x /= x.maxCoeff();
    }
    out.lower = lower;
    out.upper = upper;
    out.vec = x;
    return out;
}

}  // namespace detail

/// Spectral radius of a square matrix. The value comes from the eigenvalues
/// of the real Schur form; the certificate is the smallest of the two
/// Gershgorin norms and the Collatz-Wielandt bound on |M|.
inline SpectralRadius spectral_radius(const Matrix& m, double tol = 1e-12) {
    require_square(m, "spectral_radius");
    SpectralRadius out;
    if (m.size() == 0 || m.cwiseAbs().maxCoeff() == 0.0) return out;

    const Matrix abs_m = m.cwiseAbs();
    const auto perron = detail::perron_bounds(abs_m, tol);
    out.upper_bound = std::min({norm_inf(m), norm_1(m), perron.upper});
    if (is_nonnegative(m)) out.lower_bound = perron.lower;

    // Triangular matrices carry their eigenvalues on the diagonal.
    const bool triangular = m.isUpperTriangular(0.0) || m.isLowerTriangular(0.0);
    Eigen::EigenSolver<Matrix> solver;
    if (triangular) {
        out.value = m.diagonal().cwiseAbs().maxCoeff();
        out.upper_bound = out.value;
        out.lower_bound = out.value;
    } else if (solver.compute(m, false); solver.info() == Eigen::Success) {
        out.value = solver.eigenvalues().cwiseAbs().maxCoeff();
    } else {
        out.value = out.upper_bound;
    }
    if (!triangular) out.value = std::clamp(out.value, out.lower_bound, out.upper_bound);
    return out;
}

// ---------------------------------------------------------------------------
// Integral of e^{(nu-u)P} e_i e_j^T e^{uP} over [0, nu]
// ---------------------------------------------------------------------------

/// Upper-right block of exp(nu [[P, E],[0, P]]) for a general coupling
/// block E: the integral of e^{(nu-u)P} E e^{uP} du over [0, nu].
inline Matrix coupled_exp_integral(const Matrix& p, const Matrix& e, double nu) {
    require_square(p, "coupled_exp_integral");
    const Index m = p.rows();
    if (e.rows() != m || e.cols() != m) throw DimensionError("coupled_exp_integral: coupling block shape");
    Matrix big = Matrix::Zero(2 * m, 2 * m);
    big.topLeftCorner(m, m) = p;
    big.bottomRightCorner(m, m) = p;
    big.topRightCorner(m, m) = e;
    return matexp(nu * big).topRightCorner(m, m);
}

/// The integral of e^{(nu-u)P} e_i e_j^T e^{uP} du over [0, nu], indices
/// zero-based.
inline Matrix block_exp_integral(const Matrix& p, double nu, Index i, Index j) {
    require_square(p, "block_exp_integral");
    const Index m = p.rows();
    if (i < 0 || i >= m || j < 0 || j >= m) {
        throw DimensionError("block_exp_integral: index (" + std::to_string(i) + "," +
                             std::to_string(j) + ") out of range for order " + std::to_string(m));
    }
    if (!(nu > 0.0)) throw ValidationError("block_exp_integral: nu must be positive");
    Matrix e = Matrix::Zero(m, m);
    e(i, j) = 1.0;
    return coupled_exp_integral(p, e, nu);
}

// ---------------------------------------------------------------------------
// Matrix logarithm and real powers
// ---------------------------------------------------------------------------

namespace detail {

/// Principal square root by the Denman-Beavers iteration.
inline Matrix sqrtm(const Matrix& a) {
    const Index n = a.rows();
    Matrix y = a;
    Matrix z = Matrix::Identity(n, n);
    for (int it = 0; it < 100; ++it) {
        const Matrix y_next = 0.5 * (y + inverse(z));
        const Matrix z_next = 0.5 * (z + inverse(y));
        const double change = norm_1(y_next - y);
        y = y_next;
        z = z_next;
        if (change <= 4.0 * kEps * norm_1(y)) break;
    }
    return y;
}

}  // namespace detail

/// Principal logarithm by inverse scaling and squaring. Requires a spectrum
/// off the closed negative real axis.
inline Matrix matlog(const Matrix& a, double tol = 1e-16) {
    require_square(a, "matlog");
    const Index n = a.rows();
    if (n == 0) return Matrix(0, 0);
    const Matrix id = Matrix::Identity(n, n);
    Matrix x = a;
    int roots = 0;
    while (norm_1(x - id) > 0.25) {
        if (roots >= 64) throw NumericalError("matlog: square roots did not approach the identity");
        x = detail::sqrtm(x);
        ++roots;
    }
    const Matrix y = x - id;
    const double ynorm = norm_1(y);
    Matrix power = y;
    Matrix sum = y;
    for (int k = 2; k < 400; ++k) {
        power = power * y;
        const double sign = (k % 2 == 0) ? -1.0 : 1.0;
        sum += sign * power / static_cast<double>(k);
        const double remainder = norm_1(power) * ynorm / static_cast<double>(k + 1) / (1.0 - ynorm);
        if (remainder <= tol * std::max(norm_1(sum), kEps)) break;
    }
    return std::ldexp(1.0, roots) * sum;
}

/// M^p = exp(p log M) for real p.
inline Matrix matpow_real(const Matrix& a, double p) { return matexp(p * matlog(a)); }

// ---------------------------------------------------------------------------
// Similarity-scaled norms used to certify remainders of matrix series
// ---------------------------------------------------------------------------

/// A family of similarity transforms S adapted to a matrix A. For each S the
/// induced row-sum norm ||S^{-1} X S||_inf bounds the growth of row vectors
/// under right multiplication by X, so products of factors close to A can be
/// bounded by numbers close to sp(A).
class SimilarityNorms {
public:
    using CMatrix = Eigen::MatrixXcd;

    explicit SimilarityNorms(const Matrix& a) {
        require_square(a, "SimilarityNorms");
        const Index m = a.rows();
        // Identity.
        add(CMatrix::Identity(m, m), CMatrix::Identity(m, m));
        if (m == 0) return;

        // Diagonal scaling by the Perron vector of |A|.
        const auto perron = detail::perron_bounds(a.cwiseAbs(), 1e-10, 500);
        Vector v = perron.vec;
        const double floor = 1e-8 * v.maxCoeff();
        for (Index i = 0; i < m; ++i) v(i) = std::max(v(i), floor);
        add(v.cast<std::complex<double>>().asDiagonal(),
            v.cwiseInverse().cast<std::complex<double>>().asDiagonal());

        // Complex Schur form with a geometric diagonal scaling that shrinks
        // the strictly upper part of the triangular factor.
        Eigen::ComplexSchur<Matrix> schur(a);
        if (schur.info() == Eigen::Success) {
            const CMatrix u = schur.matrixU();
            for (double t : {1.0, 0.3, 0.1, 0.03, 0.01, 1e-3, 1e-4, 1e-5}) {
                Eigen::VectorXcd d(m), dinv(m);
                for (Index i = 0; i < m; ++i) {
                    d(i) = std::pow(t, static_cast<double>(i));
                    dinv(i) = 1.0 / d(i);
                }
                add(u * d.asDiagonal(), dinv.asDiagonal() * u.adjoint());
            }
        }
    }

    std::size_t size() const { return s_.size(); }

    /// ||S_k^{-1} X S_k||_inf.
    double norm(std::size_t k, const Matrix& x) const {
        const CMatrix y = sinv_[k] * x.cast<std::complex<double>>() * s_[k];
        return y.cwiseAbs().rowwise().sum().maxCoeff();
    }

    /// ||w S_k||_1.
    double row_norm(std::size_t k, const RowVector& w) const {
        return (w.cast<std::complex<double>>() * s_[k]).cwiseAbs().sum();
    }

    /// ||S_k^{-1} 1||_inf.
    double ones_norm(std::size_t k) const { return ones_norm_[k]; }

    /// ||S_k^{-1}||_inf.
    double inverse_norm(std::size_t k) const { return inv_norm_[k]; }

    /// ||S_k||_inf.
    double forward_norm(std::size_t k) const { return fwd_norm_[k]; }

private:
    void add(const CMatrix& s, const CMatrix& sinv) {
        s_.push_back(s);
        sinv_.push_back(sinv);
        const Index m = s.rows();
        ones_norm_.push_back(m == 0 ? 0.0
                                    : (sinv * Eigen::VectorXcd::Ones(m)).cwiseAbs().maxCoeff());
        inv_norm_.push_back(m == 0 ? 0.0 : sinv.cwiseAbs().rowwise().sum().maxCoeff());
        fwd_norm_.push_back(m == 0 ? 0.0 : s.cwiseAbs().rowwise().sum().maxCoeff());
    }

    std::vector<CMatrix> s_;
    std::vector<CMatrix> sinv_;
    std::vector<double> ones_norm_;
    std::vector<double> inv_norm_;
    std::vector<double> fwd_norm_;
};

}  // namespace phpoisson
