#include <gtest/gtest.h>

#include <random>

#include "phpoisson/genab0.hpp"
#include "support.hpp"

using namespace phpoisson;
using namespace testing_support;

namespace {

double factorial(int n) { return std::tgamma(n + 1.0); }

GenAB0Rep random_rep(std::mt19937_64& rng, Index m, double radius) {
    GenAB0Rep rep;
    rep.A = with_radius(random_matrix(rng, m, 0.0, 1.0), radius);
    rep.B = random_matrix(rng, m, 0.0, 0.5);
    rep.beta = random_row(rng, m, 0.0, 1.0);
    return rep;
}

}  // namespace

TEST(PnMatrices, EmptyProductAndTermination) {
    GenAB0Rep rep{RowVector::Ones(2), Matrix::Identity(2, 2) * 0.3, Matrix::Identity(2, 2) * -0.3};
    const auto p = pn_matrices(rep, 5);
    ASSERT_EQ(p.size(), 6u);
    EXPECT_EQ(p[0], Matrix::Identity(2, 2));
    for (std::size_t n = 1; n <= 5; ++n) EXPECT_EQ(p[n].cwiseAbs().maxCoeff(), 0.0);
}

TEST(PnMatrices, ZeroAGivesPowersOverFactorial) {
    std::mt19937_64 rng(10);
    const Matrix b = random_matrix(rng, 3, 0.0, 1.0);
    const auto p = pn_matrices(GenAB0Rep{RowVector::Ones(3), Matrix::Zero(3, 3), b}, 20);
    Matrix power = Matrix::Identity(3, 3);
    for (int n = 1; n <= 20; ++n) {
        power = power * b;
        const Matrix ref = power / factorial(n);
        EXPECT_LT(max_abs_diff(p[n], ref), 1e-14 * std::max(1.0, ref.cwiseAbs().maxCoeff()));
    }
}

TEST(Density, PhaseTypeEmbedding) {
    // alpha = [0.6], T = [[0.5]]: beta = alpha (I - T) T^{-1} = [0.6].
    GenAB0Rep rep{RowVector::Constant(1, 0.6), Matrix::Constant(1, 1, 0.5), Matrix::Zero(1, 1)};
    const auto d = density(rep, 40);
    for (int n = 1; n <= 40; ++n) EXPECT_NEAR(d.probs[n], 0.3 * std::pow(0.5, n - 1), 1e-15);
    // p_0 = beta 1 = 0.6 differs from 1 - alpha 1 = 0.4; only n >= 1 match.
    EXPECT_DOUBLE_EQ(d.probs[0], 0.6);
}

TEST(Density, MatchesPHPoissonFormulaForZeroA) {
    const auto ph = tridiagonal5();
    const GenAB0Rep rep = ph.as_genab0();
    const auto d = density(rep, 60);
    Matrix power = Matrix::Identity(5, 5);
    for (int n = 0; n <= 60; ++n) {
        if (n > 0) power = power * rep.B / static_cast<double>(n);
        const double ref = rep.beta * power * ones(5);
        EXPECT_NEAR(d.probs[n], ref, 1e-12);
    }
    const auto full = density_to_tolerance(rep, 1e-14);
    EXPECT_NEAR(full.mean(), 13.84, 0.01);
    EXPECT_NEAR(full.mass(), 1.0, 1e-12);
    EXPECT_LE(full.tail_bound, 1e-14);
}

TEST(Density, TerminatingProductIsPointMass) {
    Matrix a(2, 2);
    a << 3.0, 1.0, 0.5, 2.0;  // sp(A) > 1
    GenAB0Rep rep{RowVector::Constant(2, 0.5), a, -a};
    const auto d = density(rep, 10);
    EXPECT_EQ(d.probs[0], 1.0);
    for (int n = 1; n <= 10; ++n) EXPECT_EQ(d.probs[n], 0.0);
    EXPECT_EQ(d.tail_bound, 0.0);
}

TEST(Density, NegativeBinomialAsScalarCase) {
    // a = q, b = (r - 1) q, p_0 = (1 - q)^r.
    const double q = 0.4;
    const double r = 3.0;
    GenAB0Rep rep{RowVector::Constant(1, std::pow(1 - q, r)), Matrix::Constant(1, 1, q),
                  Matrix::Constant(1, 1, (r - 1) * q)};
    const auto d = density_to_tolerance(rep, 1e-14);
    for (int n = 0; n < 30; ++n) {
        const double ref = std::tgamma(n + r) / (std::tgamma(r) * factorial(n)) * std::pow(1 - q, r) * std::pow(q, n);
        EXPECT_NEAR(d.probs[n], ref, 1e-14);
    }
    EXPECT_NEAR(d.mass() + d.tail_bound, 1.0, 1e-13);
    EXPECT_LE(std::abs(1.0 - d.mass()), d.tail_bound + 1e-14);
}

TEST(Density, PartialSumsMonotone) {
    std::mt19937_64 rng(11);
    for (int rep_i = 0; rep_i < 10; ++rep_i) {
        auto rep = random_rep(rng, 3, 0.5);
        const double total = pgf(rep, 1.0);
        rep.beta /= total;
        const auto d = density(rep, 200);
        double s = 0.0;
        for (double p : d.probs) {
            EXPECT_GE(p, 0.0);
            s += p;
            EXPECT_LE(s, 1.0 + 1e-12);
        }
    }
}

TEST(Density, DivergenceGate) {
    std::mt19937_64 rng(12);
    for (int rep_i = 0; rep_i < 20; ++rep_i) {
        auto rep = random_rep(rng, 3, 1.0 + 0.5 * rep_i / 20.0);
        EXPECT_THROW(density(rep, 10), DivergenceError);
        EXPECT_THROW(pgf(rep, 0.5), DivergenceError);
    }
}

TEST(DensityAB1, PhaseTypeEncoding) {
    Matrix t(2, 2);
    t << 0.3, 0.4, 0.2, 0.5;
    RowVector alpha(2);
    alpha << 0.5, 0.3;
    GenAB1Rep rep{1.0 - alpha.sum(), RowVector(alpha * (Matrix::Identity(2, 2) - t)), t, Matrix::Zero(2, 2)};
    const auto d = density_ab1(rep, 40);
    EXPECT_DOUBLE_EQ(d.probs[0], 0.2);
    Matrix tp = Matrix::Identity(2, 2);
    const Vector exit = (Matrix::Identity(2, 2) - t) * ones(2);
    for (int n = 1; n <= 40; ++n) {
        const double ref = alpha * tp * exit;
        EXPECT_NEAR(d.probs[n], ref, 1e-15);
        tp = tp * t;
    }
    const auto full = density_ab1_to_tolerance(rep, 1e-13);
    EXPECT_NEAR(full.mass(), 1.0, 1e-12);
}

TEST(DensityAB1, ZeroBeta1AndZeroA) {
    GenAB1Rep zero{1.0, RowVector::Zero(2), Matrix::Zero(2, 2), Matrix::Identity(2, 2)};
    const auto d = density_ab1(zero, 5);
    EXPECT_EQ(d.probs[0], 1.0);
    for (int n = 1; n <= 5; ++n) EXPECT_EQ(d.probs[n], 0.0);

    std::mt19937_64 rng(13);
    const Matrix b = random_matrix(rng, 2, 0.0, 1.0);
    const RowVector b1 = random_row(rng, 2, 0.0, 0.2);
    const auto e = density_ab1(GenAB1Rep{0.1, b1, Matrix::Zero(2, 2), b}, 15);
    Matrix prod = Matrix::Identity(2, 2);
    for (int n = 1; n <= 15; ++n) {
        if (n >= 2) prod = prod * (b / static_cast<double>(n));
        const double ref = b1 * prod * ones(2);
        EXPECT_NEAR(e.probs[n], ref, 1e-15);
    }
}

TEST(FromWuli, Forms) {
    std::mt19937_64 rng(14);
    const Matrix a = with_radius(random_matrix(rng, 2, 0.0, 1.0), 0.4);
    const Matrix b = random_matrix(rng, 2, 0.0, 1.0);
    const RowVector gamma = random_row(rng, 2, 0.0, 1.0);
    EXPECT_EQ(from_wuli(gamma, Matrix::Identity(2, 2), a, b).beta, gamma);

    const auto ph = tridiagonal5();
    const RowVector g = ph.beta() * matexp(ph.B());
    const auto back = from_wuli(g, matexp(-ph.B()), Matrix::Zero(5, 5), ph.B());
    EXPECT_LT((back.beta - ph.beta()).cwiseAbs().maxCoeff(), 1e-10 * ph.beta().cwiseAbs().maxCoeff());

    const Matrix p0 = random_matrix(rng, 2, 0.0, 1.0);
    const auto rep = from_wuli(gamma, p0, a, b);
    const auto d = density(rep, 20);
    const auto p = pn_matrices(GenAB0Rep{gamma, a, b}, 20);
    for (int n = 0; n <= 20; ++n) EXPECT_NEAR(d.raw[n], gamma * p0 * p[n] * ones(2), 1e-14);
}

TEST(ReduceUseless, RemovesUnreachableNodes) {
    GenAB0Rep rep{RowVector::Zero(2), Matrix::Zero(2, 2), Matrix::Zero(2, 2)};
    rep.beta(0) = 1.0;
    rep.A(0, 0) = 0.1;
    rep.A(1, 1) = 0.2;
    const auto red = reduce_useless(rep);
    ASSERT_EQ(red.order(), 1);
    EXPECT_EQ(red.beta(0), 1.0);
    EXPECT_EQ(red.A(0, 0), 0.1);
    const auto d0 = density(rep, 50);
    const auto d1 = density(red, 50);
    for (int n = 0; n <= 50; ++n) EXPECT_NEAR(d0.probs[n], d1.probs[n], 1e-12);

    GenAB0Rep single{RowVector::Constant(1, 0.5), Matrix::Constant(1, 1, 0.2), Matrix::Zero(1, 1)};
    EXPECT_EQ(reduce_useless(single).order(), 1);
}

TEST(ReduceUseless, IdempotentAndDensityPreserving) {
    std::mt19937_64 rng(15);
    for (int rep_i = 0; rep_i < 20; ++rep_i) {
        auto rep = random_rep(rng, 5, 0.5);
        // Sparsify so that some nodes become unreachable.
        for (Index i = 0; i < 5; ++i)
            for (Index j = 0; j < 5; ++j)
                if ((i + 2 * j + rep_i) % 3 != 0 && i != j) rep.A(i, j) = rep.B(i, j) = 0.0;
        rep.beta(rep_i % 5) = 0.0;
        rep.beta((rep_i + 2) % 5) = 0.0;
        const auto red = reduce_useless(rep);
        const auto red2 = reduce_useless(red);
        EXPECT_EQ(red2.order(), red.order());
        EXPECT_EQ(red2.A, red.A);
        const auto d0 = density(rep, 50);
        const auto d1 = density(red, 50);
        for (int n = 0; n <= 50; ++n) EXPECT_NEAR(d0.raw[n], d1.raw[n], 1e-12);
        const auto useful = useful_nodes(red);
        EXPECT_EQ(static_cast<Index>(useful.size()), red.order());
    }
    auto positive = random_rep(rng, 4, 0.5);
    EXPECT_EQ(reduce_useless(positive).order(), 4);
}

TEST(Pgf, BasicIdentities) {
    const auto ph = tridiagonal5();
    const GenAB0Rep rep = ph.as_genab0();
    EXPECT_DOUBLE_EQ(pgf(rep, 0.0), rep.beta.sum());
    for (double z : {0.25, 0.5, 0.9}) {
        const double ref = rep.beta.dot(matexp_action(Matrix(z * rep.B), ones(5)));
        EXPECT_NEAR(pgf(rep, z), ref, 1e-10 * std::max(1.0, ref));
    }
    EXPECT_NEAR(pgf(rep, 1.0), 1.0, 1e-12);
}

TEST(FactorialMoment, ZeroAReducesToPHPoissonFormula) {
    const auto ph = tridiagonal5();
    const GenAB0Rep rep = ph.as_genab0();
    const double m1 = factorial_moment(rep, 1);
    const double ref = rep.beta * rep.B * matexp(rep.B) * ones(5);
    EXPECT_NEAR(m1, ref, 1e-9 * ref);
    const auto mom = moments_from_factorial(m1, factorial_moment(rep, 2));
    EXPECT_NEAR(mom.mean, 13.84, 0.01);
    EXPECT_NEAR(mom.variance, 47.31, 0.02);
}

TEST(FactorialMoment, FiniteDifferenceOfPgf) {
    std::mt19937_64 rng(16);
    for (int rep_i = 0; rep_i < 20; ++rep_i) {
        const auto pair = random_commuting_pair(rng, 3, 0.5);
        GenAB0Rep rep{random_row(rng, 3, 0.0, 1.0), pair.A, pair.B};
        // p(z) = sum z^n p_n from the density, valid for |z| sp(A) < 1.
        const auto d = density(rep, 3000);
        auto series = [&](double z) {
            double s = 0.0;
            for (std::size_t n = d.raw.size(); n-- > 0;) s = s * z + d.raw[n];
            return s;
        };
        const double h = 1e-4;
        EXPECT_NEAR(series(1.0 - h), pgf(rep, 1.0 - h), 1e-11);
        const double fd = (series(1.0 + h) - series(1.0 - h)) / (2 * h);
        const double m1 = factorial_moment(rep, 1);
        EXPECT_NEAR(fd, m1, 1e-5 * std::max(1.0, std::abs(m1)));
    }
}

TEST(FactorialMoment, DualFormsAgree) {
    std::mt19937_64 rng(17);
    for (int rep_i = 0; rep_i < 30; ++rep_i) {
        auto rep = random_rep(rng, 3, 0.5);
        for (std::size_t n = 1; n <= 4; ++n) {
            const auto f = factorial_moment_forms(rep, n);
            EXPECT_NEAR(f.primary, f.dual, 1e-8 * std::max(1.0, std::abs(f.primary)));
            EXPECT_EQ(factorial_moment(rep, n), f.primary);
        }
    }
}

TEST(Moments, FromFactorial) {
    const auto m = moments_from_factorial(3.0, 9.0);  // Poisson(3)
    EXPECT_DOUBLE_EQ(m.mean, 3.0);
    EXPECT_DOUBLE_EQ(m.variance, 3.0);
    EXPECT_DOUBLE_EQ(m.cv, std::sqrt(3.0) / 3.0);
}
