#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "phpoisson/commuting.hpp"
#include "phpoisson/em.hpp"
#include "phpoisson/genab0.hpp"
#include "phpoisson/linalg.hpp"
#include "phpoisson/ph_poisson.hpp"

namespace testing_support {

using namespace phpoisson;

/// Five-phase tridiagonal model with raw weights [5, 2.5, 3, 2.25, 6] e^{-diag}.
inline Matrix tridiagonal5_B() {
    Matrix b = Matrix::Zero(5, 5);
    const double d[5] = {5, 9, 13, 17, 21};
    for (int i = 0; i < 5; ++i) {
        b(i, i) = d[i];
        if (i + 1 < 5) b(i, i + 1) = b(i + 1, i) = 0.05;
    }
    return b;
}

inline RowVector tridiagonal5_beta_raw() {
    const double w[5] = {5.0, 2.5, 3.0, 2.25, 6.0};
    const double d[5] = {5, 9, 13, 17, 21};
    RowVector beta(5);
    for (int i = 0; i < 5; ++i) beta(i) = w[i] * std::exp(-d[i]);
    return beta;
}

inline PHPoissonRep tridiagonal5() { return PHPoissonRep::normalize(tridiagonal5_beta_raw(), tridiagonal5_B()); }

/// m = 10 upper bidiagonal B (diag 10, superdiag 37.5), beta = e_1 diag(e^B 1)^{-1}.
inline PHPoissonRep bidiagonal10() {
    const int m = 10;
    Matrix b = Matrix::Zero(m, m);
    for (int i = 0; i < m; ++i) {
        b(i, i) = 10.0;
        if (i + 1 < m) b(i, i + 1) = 37.5;
    }
    const Vector r = matexp(b) * ones(m);
    RowVector beta = RowVector::Zero(m);
    beta(0) = 1.0 / r(0);
    return PHPoissonRep(beta, b);
}

/// Random matrix with entries in [lo, hi).
inline Matrix random_matrix(std::mt19937_64& rng, Index m, double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    Matrix x(m, m);
    for (Index i = 0; i < m; ++i)
        for (Index j = 0; j < m; ++j) x(i, j) = u(rng);
    return x;
}

inline RowVector random_row(std::mt19937_64& rng, Index m, double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    RowVector x(m);
    for (Index i = 0; i < m; ++i) x(i) = u(rng);
    return x;
}

/// Matrix rescaled to spectral radius `target`.
inline Matrix with_radius(const Matrix& a, double target) {
    const double r = spectral_radius(a).value;
    return r > 0.0 ? Matrix(a * (target / r)) : a;
}

/// Commuting pair: A random with sp(A) = radius, B = c0 I + c1 A + c2 A^2.
struct RandomPair {
    Matrix A;
    Matrix B;
};

inline RandomPair random_commuting_pair(std::mt19937_64& rng, Index m, double radius) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const Matrix a = with_radius(random_matrix(rng, m, -1.0, 1.0), radius);
    const Matrix b = u(rng) * Matrix::Identity(m, m) + u(rng) * a + 0.5 * u(rng) * a * a;
    return {a, b};
}

/// Path-enumeration oracle for one observation y of the physical model:
/// sums over all phase paths phi_0..phi_y the weight
/// alpha_{phi_0} prod p_{phi_{t-1} phi_t}, accumulating S, N and the total.
struct PathOracle {
    double total = 0.0;
    Vector S;
    Matrix N;
};

inline PathOracle enumerate_paths(const EMParams& theta, std::uint64_t y) {
    const Index m = theta.order();
    PathOracle out;
    out.S = Vector::Zero(m);
    out.N = Matrix::Zero(m, m);
    std::vector<Index> path(y + 1, 0);
    while (true) {
        double w = theta.alpha(path[0]);
        for (std::uint64_t t = 1; t <= y; ++t) w *= theta.P(path[t - 1], path[t]);
        out.total += w;
        out.S(path[0]) += w;
        for (std::uint64_t t = 1; t <= y; ++t) out.N(path[t - 1], path[t]) += w;
        std::size_t k = 0;
        while (k <= y && ++path[k] == m) path[k++] = 0;
        if (k > y) break;
    }
    out.S /= out.total;
    out.N /= out.total;
    return out;
}

inline double l1_distance(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = std::max(a.size(), b.size());
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = i < a.size() ? a[i] : 0.0;
        const double y = i < b.size() ? b[i] : 0.0;
        s += std::abs(x - y);
    }
    return s;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace testing_support
