#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <vector>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "stab/spectral.hpp"

using namespace stab;
using std::numbers::pi;

namespace {

BlockSystem example_system(int level, ModelParams p = {}) {
    const Mesh m = build_crisscross_mesh(level);
    return assemble_block_system(m, p, ControlRegion::full_domain(m));
}

std::vector<double> sorted_real_parts(std::vector<Complex> v) {
    std::vector<double> out;
    for (const auto& z : v) out.push_back(z.real());
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

TEST(ExactLaplacian, Values) {
    EXPECT_NEAR(exact_laplacian_eig(1, 1), 19.7392088, 1e-6);
    EXPECT_NEAR(exact_laplacian_eig(1, 2), 49.3480220, 1e-6);
    EXPECT_EQ(exact_laplacian_eig(1, 2), exact_laplacian_eig(2, 1));
    EXPECT_THROW(exact_laplacian_eig(0, 1), InvalidInput);
}

TEST(ExactCoupled, ReferenceValues) {
    const ModelParams p;
    const auto [plus, minus] = exact_coupled_eigs(p, exact_laplacian_eig(1, 1));
    EXPECT_NEAR(plus.real(), 6.73471, 5e-6);
    EXPECT_NEAR(plus.imag(), 1.68153, 5e-6);
    EXPECT_NEAR(minus.real(), 6.73471, 5e-6);
    EXPECT_NEAR(minus.imag(), -1.68153, 5e-6);
    EXPECT_NEAR(exact_coupled_eigs(p, exact_laplacian_eig(1, 2)).first.real(), -16.08341, 5e-6);
}

TEST(ExactCoupled, DecoupledRates) {
    ModelParams p;
    p.eta1 = 0.0;
    p.omega = 0.0;
    const double lam = exact_laplacian_eig(1, 1);
    const auto [a, b] = exact_coupled_eigs(p, lam);
    std::vector<double> got{a.real(), b.real()}, want{-p.eta0 * lam, -p.beta0 * lam - p.kappa};
    std::sort(got.begin(), got.end());
    std::sort(want.begin(), want.end());
    EXPECT_NEAR(got[0], want[0], 1e-12);
    EXPECT_NEAR(got[1], want[1], 1e-12);
    EXPECT_EQ(a.imag(), 0.0);
}

TEST(ExactCoupled, RootsOfTheSymbol) {
    // Both values are eigenvalues of the 2x2 symbol [[-η0λ+ω-ν0, -η1], [1, -β0λ-κ+ω-ν0]].
    std::mt19937 gen(7);
    std::uniform_real_distribution<double> u(0.1, 3.0), s(-5.0, 5.0);
    for (int k = 0; k < 100; ++k) {
        ModelParams p;
        p.eta0 = u(gen);
        p.beta0 = u(gen);
        p.kappa = u(gen);
        p.nu0 = s(gen);
        p.eta1 = 4 * s(gen);
        p.omega = 5 * s(gen);
        const double lam = 10 * u(gen);
        const double a = -p.eta0 * lam + p.omega - p.nu0, d = -p.beta0 * lam - p.kappa + p.omega - p.nu0;
        const auto [r1, r2] = exact_coupled_eigs(p, lam);
        const double scale = std::abs(a) + std::abs(d) + std::abs(p.eta1) + 1.0;
        EXPECT_NEAR(std::abs(r1 + r2 - (a + d)), 0.0, 1e-12 * scale);
        EXPECT_NEAR(std::abs(r1 * r2 - (a * d + p.eta1)), 0.0, 1e-11 * scale * scale);
    }
}

TEST(DiscreteEigs, LevelFourUnstablePair) {
    const auto pairs = discrete_eigs(example_system(4), 2);
    ASSERT_EQ(pairs.size(), 2u);
    EXPECT_NEAR(pairs[0].value.real(), 6.50970, 1e-5);
    EXPECT_NEAR(std::abs(pairs[0].value.imag()), 1.65928, 1e-5);
    EXPECT_NEAR(std::abs(pairs[0].value - std::conj(pairs[1].value)), 0.0, 1e-10);
}

TEST(DiscreteEigs, LevelThreeRealTarget) {
    EigOptions opt;
    opt.which = Which::nearest;
    opt.target = -20.0;
    const auto pairs = discrete_eigs(example_system(3), 1, opt);
    EXPECT_NEAR(pairs[0].value.real(), -20.13492, 1e-5);
    EXPECT_NEAR(pairs[0].value.imag(), 0.0, 1e-10);
}

TEST(DiscreteEigs, DecoupledPencilIsUnionOfScalarPencils) {
    ModelParams p;
    p.eta1 = 0.0;
    const BlockSystem s = example_system(2, p);
    const Matrix G = Matrix(s.G), K = Matrix(s.K);
    Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> kg(K, G);
    std::vector<double> oracle;
    for (Eigen::Index i = 0; i < kg.eigenvalues().size(); ++i) {
        const double lam = kg.eigenvalues()(i);
        oracle.push_back(-p.eta0 * lam + p.omega - p.nu0);
        oracle.push_back(-p.beta0 * lam - p.kappa + p.omega - p.nu0);
    }
    std::sort(oracle.begin(), oracle.end());
    std::vector<Complex> all;
    for (const auto& e : discrete_eigs(s, 2 * s.n)) all.push_back(e.value);
    const auto got = sorted_real_parts(all);
    ASSERT_EQ(got.size(), oracle.size());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], oracle[i], 1e-9 * (1 + std::abs(oracle[i])));
}

TEST(DiscreteEigs, ResidualsAndNormalization) {
    const BlockSystem s = example_system(3);
    for (const auto& e : discrete_eigs(s, 6)) {
        EXPECT_LT(detail::pencil_residual(s.A, s.M, e.value, e.right_vector), 1e-10);
        EXPECT_LT(detail::pencil_residual(SparseMatrix(s.A.transpose()), s.M, e.value, e.left_vector), 1e-10);
        EXPECT_NEAR(std::abs(e.right_vector.dot(s.M * e.right_vector)), 1.0, 1e-12);
    }
}

TEST(DiscreteEigs, KrylovMatchesDense) {
    const BlockSystem s = example_system(4);
    const auto dense = discrete_eigs(s, 4);
    EigOptions opt;
    opt.dense_limit = 0;
    const auto krylov = discrete_eigs(s, 4, opt);
    ASSERT_EQ(krylov.size(), dense.size());
    for (std::size_t i = 0; i < dense.size(); ++i)
        EXPECT_NEAR(std::abs(krylov[i].value - dense[i].value), 0.0, 1e-8);
}

TEST(DiscreteEigs, KrylovIsDeterministic) {
    const BlockSystem s = example_system(5);
    const auto a = discrete_eigs(s, 3);
    const auto b = discrete_eigs(s, 3);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].value, b[i].value);
}

TEST(DiscreteEigs, CountOutOfRange) {
    const BlockSystem s = example_system(2);
    EXPECT_THROW(discrete_eigs(s, 0), InvalidInput);
    EXPECT_THROW(discrete_eigs(s, 2 * s.n + 1), InvalidInput);
}

TEST(UnstableBasisTest, ExampleHasOnePair) {
    for (int level = 2; level <= 4; ++level) {
        const auto b = unstable_basis(discrete_eigs(example_system(level), 6));
        EXPECT_EQ(b.count, 2) << level;
        ASSERT_EQ(b.blocks.size(), 1u);
        EXPECT_EQ(b.blocks[0], 2);
    }
}

TEST(UnstableBasisTest, AllStable) {
    ModelParams p;
    p.omega = 0.0;
    const auto b = unstable_basis(discrete_eigs(example_system(3, p), 6));
    EXPECT_EQ(b.count, 0);
    EXPECT_EQ(b.E.cols(), 0);
}

TEST(UnstableBasisTest, SingleRealEigenvalue) {
    // Decoupled with a stiff z block: only the first y mode crosses, once ω exceeds η0 λ_h.
    ModelParams p;
    p.eta1 = 0.0;
    p.beta0 = 2.0;
    const BlockSystem probe = example_system(3, p);
    Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> kg(Matrix(probe.K), Matrix(probe.G));
    p.omega = p.eta0 * kg.eigenvalues()(0) + 0.5;
    const auto b = unstable_basis(discrete_eigs(example_system(3, p), 6));
    EXPECT_EQ(b.count, 1);
    EXPECT_EQ(b.E.cols(), 1);
    EXPECT_NEAR(b.eigenvalues[0].real(), 0.5, 1e-9);
}

TEST(UnstableBasisTest, IncompletePairRejected) {
    auto pairs = discrete_eigs(example_system(2), 2);
    pairs.pop_back();
    EXPECT_THROW(unstable_basis(pairs), InvalidInput);
}

TEST(UnstableBasisTest, Biorthonormal) {
    const BlockSystem s = example_system(3);
    auto b = unstable_basis(discrete_eigs(s, 6));
    biorthonormalize(b, s.M);
    const Matrix c = b.Xi.transpose() * (s.M * b.E);
    EXPECT_LT((c - Matrix::Identity(2, 2)).norm(), 1e-12);
}

TEST(Hautus, ExampleLevelFour) {
    const BlockSystem s = example_system(4);
    const auto b = unstable_basis(discrete_eigs(s, 6));
    const auto r = hautus_check(s, b, 1e-3);
    EXPECT_TRUE(r.ok);
    ASSERT_EQ(r.ratios.size(), 1u);
    EXPECT_GE(r.ratios[0], 0.1);
}

TEST(Hautus, KernelCase) {
    const BlockSystem s = example_system(2);
    UnstableBasis b;
    b.count = 1;
    b.blocks = {1};
    b.eigenvalues = {1.0};
    b.E = Matrix::Zero(2 * s.n, 1);
    b.Xi = Matrix::Zero(2 * s.n, 1);
    b.Xi(s.n, 0) = 1.0;  // only a z component
    const auto r = hautus_check(s, b, 1e-3);
    EXPECT_FALSE(r.ok);
    EXPECT_EQ(r.ratios[0], 0.0);
}

TEST(Hautus, EmptyBasisWarns) {
    const BlockSystem s = example_system(2);
    std::ostringstream w;
    EXPECT_TRUE(hautus_check(s, UnstableBasis{}, 1e-3, &w).ok);
    EXPECT_NE(w.str().find("warning"), std::string::npos);
}

TEST(EigStudy, TablePrefix) {
    const std::vector<EigTarget> targets{{1, 1, true}, {1, 2, true}};
    const auto rows = eig_convergence_study(ModelParams{}, {2, 3, 4, 5}, targets);
    ASSERT_EQ(rows.size(), 8u);
    // Printed to five decimals; the last digit is not always rounded.
    const double pair_err[] = {3.34832, 0.88348, 0.22610, 0.05707};
    const double pair_ord[] = {0, 1.92215, 1.96619, 1.98619};
    const double real_err[] = {11.55674, 4.05151, 1.05060, 0.26512};
    const double real_ord[] = {0, 1.51221, 1.94724, 1.98655};
    for (int i = 0; i < 4; ++i) {
        EXPECT_NEAR(rows[i].error, pair_err[i], 1.5e-5);
        EXPECT_NEAR(rows[4 + i].error, real_err[i], 1.5e-5);
        if (i == 0) {
            EXPECT_FALSE(rows[i].order.has_value());
            continue;
        }
        ASSERT_TRUE(rows[i].order.has_value());
        EXPECT_NEAR(*rows[i].order, pair_ord[i], 1.5e-5);
        EXPECT_NEAR(*rows[4 + i].order, real_ord[i], 1.5e-5);
    }
}

TEST(EigStudy, FittedSlope) {
    const auto rows = eig_convergence_study(ModelParams{}, {3, 4, 5, 6}, {{1, 1, true}, {1, 1, false}});
    for (int t = 0; t < 2; ++t) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (int i = 0; i < 4; ++i) {
            const double x = std::log(rows[4 * t + i].h), y = std::log(rows[4 * t + i].error);
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        const double slope = (4 * sxy - sx * sy) / (4 * sxx - sx * sx);
        EXPECT_GE(slope, 1.85);
        EXPECT_LE(slope, 2.05);
    }
}

TEST(EigStudy, RejectsRepeatedLevels) {
    EXPECT_THROW(eig_convergence_study(ModelParams{}, {3, 3}, {{1, 1, true}}), InvalidInput);
}
