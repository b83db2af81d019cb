#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "stab/fem.hpp"
#include "stab/linalg.hpp"
#include "stab/spectral.hpp"

namespace stab {

namespace detail {

// Dense Riccati and Lyapunov kernels run in extended precision: ill-conditioned instances lose
// roughly eps times the condition number, and the projected problems are tiny.
using Wide = long double;
using WideMatrix = Eigen::Matrix<Wide, Eigen::Dynamic, Eigen::Dynamic>;
using WideComplex = std::complex<Wide>;
using WideComplexMatrix = Eigen::Matrix<WideComplex, Eigen::Dynamic, Eigen::Dynamic>;
using WideComplexVector = Eigen::Matrix<WideComplex, Eigen::Dynamic, 1>;

/// Swap T(k,k) and T(k+1,k+1) of an upper-triangular Schur factor, updating U.
inline void swap_schur(WideComplexMatrix& T, WideComplexMatrix& U, Eigen::Index k) {
    const Eigen::Index n = T.rows();
    const WideComplex a = T(k, k), b = T(k, k + 1), d = T(k + 1, k + 1);
    Eigen::Matrix<WideComplex, 2, 1> x(b, d - a);
    const Wide nx = x.norm();
    if (nx == 0.0L) return;
    x /= nx;
    Eigen::Matrix<WideComplex, 2, 2> q;
    q << x(0), -std::conj(x(1)), x(1), std::conj(x(0));
    T.block(k, k, 2, n - k) = q.adjoint() * T.block(k, k, 2, n - k);
    T.block(0, k, k + 2, 2) = T.block(0, k, k + 2, 2) * q;
    T(k + 1, k) = 0.0L;
    U.middleCols(k, 2) = U.middleCols(k, 2) * q;
}

/// Reorder a complex Schur form so that eigenvalues with negative real part lead.
inline int order_schur_stable_first(WideComplexMatrix& T, WideComplexMatrix& U) {
    const Eigen::Index n = T.rows();
    int placed = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
        if (T(j, j).real() >= 0.0L) continue;
        for (Eigen::Index k = j - 1; k >= placed; --k) swap_schur(T, U, k);
        ++placed;
    }
    return placed;
}

/// Fᵀ X + X F + W = 0 by Bartels–Stewart on the complex Schur form of F.
inline WideMatrix lyapunov_wide(const WideMatrix& F, const WideMatrix& W) {
    const Eigen::Index n = F.rows();
    Eigen::ComplexSchur<WideComplexMatrix> cs(F.cast<WideComplex>());
    if (cs.info() != Eigen::Success) throw NumericalError("lyapunov: Schur decomposition failed");
    const WideComplexMatrix& T = cs.matrixT();
    const WideComplexMatrix& U = cs.matrixU();
    const WideComplexMatrix C = U.adjoint() * W.cast<WideComplex>() * U;
    const WideComplexMatrix Th = T.adjoint();
    WideComplexMatrix Y = WideComplexMatrix::Zero(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        WideComplexVector rhs = -C.col(j);
        for (Eigen::Index i = 0; i < j; ++i) rhs -= T(i, j) * Y.col(i);
        WideComplexMatrix sys = Th;
        sys.diagonal().array() += T(j, j);
        for (Eigen::Index i = 0; i < n; ++i)
            if (std::abs(sys(i, i)) < 1e-14L * std::max<Wide>(1.0L, T.norm()))
                throw NumericalError("lyapunov: F and -Fᵀ share an eigenvalue");
        Y.col(j) = sys.triangularView<Eigen::Lower>().solve(rhs);
    }
    WideMatrix X = (U * Y * U.adjoint()).real();
    return 0.5L * (X + X.transpose());
}

inline Wide abscissa(const WideMatrix& x) {
    return Eigen::EigenSolver<WideMatrix>(x, false).eigenvalues().real().maxCoeff();
}

}  // namespace detail

/// Stabilizing solution of Aᵀ X + X A − X R X + Q = 0 (R, Q symmetric PSD)
/// from the stable invariant subspace of the Hamiltonian [[A, −R], [−Q, −Aᵀ]].
inline Matrix solve_care(const Matrix& A, const Matrix& R, const Matrix& Q) {
    using namespace detail;
    const Eigen::Index n = A.rows();
    require(A.cols() == n && R.rows() == n && R.cols() == n && Q.rows() == n && Q.cols() == n,
            "solve_care: dimension mismatch");
    if (!A.allFinite() || !R.allFinite() || !Q.allFinite()) throw NumericalError("solve_care: non-finite input");

    Eigen::EigenSolver<Matrix> left(A.transpose());
    for (Eigen::Index i = 0; i < n; ++i) {
        if (left.eigenvalues()(i).real() < 0.0) continue;
        const ComplexVector x = left.eigenvectors().col(i);
        const double reach = std::abs((x.transpose() * R.cast<Complex>() * x.conjugate()).value());
        if (!(reach > 1e-12 * std::max(R.norm(), 1e-300) * x.squaredNorm()))
            throw NumericalError("solve_care: pair is not stabilizable (unstable mode not reached by the input)");
    }

    WideMatrix H(2 * n, 2 * n);
    H << A.cast<Wide>(), -R.cast<Wide>(), -Q.cast<Wide>(), -A.transpose().cast<Wide>();
    Eigen::ComplexSchur<WideComplexMatrix> cs(H.cast<WideComplex>());
    if (cs.info() != Eigen::Success) throw NumericalError("solve_care: Schur decomposition failed");
    WideComplexMatrix T = cs.matrixT();
    WideComplexMatrix U = cs.matrixU();
    const Wide scale = std::max<Wide>(1.0L, H.norm());
    for (Eigen::Index i = 0; i < 2 * n; ++i)
        if (std::abs(T(i, i).real()) < 1e-10L * scale)
            throw NumericalError("solve_care: Hamiltonian has eigenvalues on the imaginary axis (non-dichotomic)");
    if (order_schur_stable_first(T, U) != n) throw NumericalError("solve_care: stable subspace has wrong dimension");
    const WideComplexMatrix u11 = U.topLeftCorner(n, n);
    const WideComplexMatrix u21 = U.bottomLeftCorner(n, n);
    Eigen::PartialPivLU<WideComplexMatrix> lu(u11.transpose());
    if (!(lu.rcond() > 1e-17L)) throw NumericalError("solve_care: invariant subspace basis is singular");
    // X u11 = u21
    const WideMatrix xw = lu.solve(u21.transpose()).transpose().real();
    Matrix X = (0.5L * (xw + xw.transpose())).cast<double>();
    if (!X.allFinite()) throw NumericalError("solve_care: non-finite solution");
    return X;
}

/// Solves Fᵀ X + X F + W = 0 for symmetric W.
inline Matrix lyapunov(const Matrix& F, const Matrix& W) {
    require(F.cols() == F.rows() && W.rows() == F.rows() && W.cols() == F.rows(), "lyapunov: dimension mismatch");
    return detail::lyapunov_wide(F.cast<detail::Wide>(), W.cast<detail::Wide>()).cast<double>();
}

struct NewtonKleinmanResult {
    Matrix X;
    int iterations = 0;
};

/// Newton–Kleinman for Aᵀ X + X A − X B Bᵀ X + Q = 0. X = 0 stabilizes A − sI for s past the spectral
/// abscissa; each converged shifted solution leaves a margin that lets s move halfway towards 0.
inline NewtonKleinmanResult newton_kleinman(const Matrix& A, const Matrix& B, const Matrix& Q, int max_iter = 100,
                                            double tol = 1e-17) {
    using namespace detail;
    const Eigen::Index n = A.rows();
    const WideMatrix a = A.cast<Wide>(), q = Q.cast<Wide>();
    const WideMatrix R = B.cast<Wide>() * B.cast<Wide>().transpose();
    const WideMatrix I = WideMatrix::Identity(n, n);
    Wide s = std::max<Wide>(0.0L, abscissa(a) + 1.0L);
    WideMatrix X = WideMatrix::Zero(n, n);
    NewtonKleinmanResult out;
    for (int stage = 0; stage < 200; ++stage) {
        const WideMatrix as = a - s * I;
        for (int k = 1; k <= max_iter; ++k) {
            const WideMatrix next = lyapunov_wide(as - R * X, q + X * R * X);
            const Wide change = (next - X).norm();
            X = next;
            ++out.iterations;
            if (change <= tol * std::max<Wide>(1.0L, X.norm())) break;
        }
        if (s == 0.0L) {
            out.X = X.cast<double>();
            return out;
        }
        const Wide margin = -abscissa(as - R * X);
        if (!(margin > 0.0L)) throw NumericalError("newton_kleinman: shifted iterate is not stabilizing");
        s = s > 0.5L * margin ? s - 0.5L * margin : 0.0L;
    }
    throw NumericalError("newton_kleinman: shift continuation did not reach the unshifted equation");
}

inline double care_residual(const Matrix& A, const Matrix& R, const Matrix& Q, const Matrix& X) {
    return (A.transpose() * X + X * A - X * R * X + Q).norm();
}

struct ProjectedSystem {
    Matrix Au;
    Matrix Bu;
    Matrix Qu;
};

struct RiccatiSolution {
    Matrix P;
    double residual_norm = 0.0;
    double relative_residual = 0.0;
    std::vector<Complex> closed_loop_eigs;
};

struct FeedbackGain {
    Matrix left_factor;   // Buᵀ P
    Matrix right_factor;  // Xiᵀ M

    bool empty() const { return left_factor.size() == 0; }
    /// K = left_factor · right_factor, dense (testing only).
    Matrix dense() const { return left_factor * right_factor; }
};

inline double condition_number(const Matrix& x) {
    Eigen::JacobiSVD<Matrix> svd(x);
    const auto& s = svd.singularValues();
    if (s.size() == 0) return 1.0;
    const double smin = s(s.size() - 1);
    return smin > 0.0 ? s(0) / smin : std::numeric_limits<double>::infinity();
}

inline ProjectedSystem project_system(const BlockSystem& sys, const UnstableBasis& basis) {
    require(basis.count >= 1, "project_system needs a nonempty unstable basis");
    require(basis.E.rows() == 2 * sys.n && basis.Xi.rows() == 2 * sys.n, "basis does not match the system");
    if (condition_number(basis.E) > 1e12 || condition_number(basis.Xi) > 1e12)
        throw NumericalError("unstable basis is rank deficient (condition number above 1e12)");
    ProjectedSystem ps;
    ps.Au = basis.Xi.transpose() * (sys.A * basis.E);
    ps.Bu = (sys.B.transpose() * basis.Xi).transpose();
    const Matrix q = basis.E.transpose() * (sys.M * basis.E);
    ps.Qu = 0.5 * (q + q.transpose());
    return ps;
}

/// Auᵀ P + P Au − P Bu Buᵀ P + Qu = 0, the LQR equation of the unstable coordinates
/// w = Xiᵀ M Y (w' = Au w + Bu u); the stabilized matrix is Au − Bu Buᵀ P.
inline RiccatiSolution solve_projected_are(const ProjectedSystem& ps) {
    const Matrix R = ps.Bu * ps.Bu.transpose();
    RiccatiSolution s;
    s.P = solve_care(ps.Au, R, ps.Qu);
    s.residual_norm = care_residual(ps.Au, R, ps.Qu, s.P);
    const double scale = ps.Au.norm() * s.P.norm() + ps.Qu.norm();
    s.relative_residual = scale > 0.0 ? s.residual_norm / scale : s.residual_norm;
    if (!(s.relative_residual <= 1e-8))
        throw NumericalError("projected Riccati residual too large: " + std::to_string(s.relative_residual));
    Eigen::EigenSolver<Matrix> es(ps.Au - R * s.P);
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) s.closed_loop_eigs.push_back(es.eigenvalues()(i));
    return s;
}

/// K = (Buᵀ P)(Xiᵀ M): the gain acts on the unstable coordinates of Y.
inline FeedbackGain feedback_gain(const RiccatiSolution& sol, const ProjectedSystem& ps, const UnstableBasis& basis,
                                  const SparseMatrix& M) {
    FeedbackGain k;
    k.left_factor = ps.Bu.transpose() * sol.P;
    k.right_factor = (M * basis.Xi).transpose();
    return k;
}

struct FullAreSolution {
    Matrix S;
    double relative_residual = 0.0;
    /// Coefficient-space gain K with u = −K Y.
    Matrix gain;
};

/// Aᵀ M⁻¹ S + S M⁻¹ A − S M⁻¹ D M⁻¹ S + M = 0 with D = B G_O⁻¹ Bᵀ, via S̃ = L⁻¹ S L⁻ᵀ, M = L Lᵀ.
inline Matrix solve_mass_weighted_are(const Matrix& A, const Matrix& M, const Matrix& D, double* rel_residual = nullptr) {
    const Eigen::Index n = A.rows();
    Eigen::LLT<Matrix> llt(M);
    if (llt.info() != Eigen::Success) throw NumericalError("mass matrix Cholesky failed");
    auto sandwich = [&](const Matrix& x) {
        Matrix y = llt.matrixL().solve(x);
        return Matrix(llt.matrixL().solve(y.transpose()).transpose());
    };
    const Matrix at = sandwich(A);
    Matrix rt = sandwich(D);
    rt = 0.5 * (rt + rt.transpose());
    const Matrix st = solve_care(at, rt, Matrix::Identity(n, n));
    const Matrix L = llt.matrixL();
    Matrix S = L * st * L.transpose();
    S = 0.5 * (S + S.transpose());
    if (rel_residual) {
        const Matrix mis = llt.solve(S);
        const Matrix res = A.transpose() * mis + mis.transpose() * A - mis.transpose() * D * mis + M;
        const double scale = 2.0 * A.norm() * mis.norm() + D.norm() * mis.norm() * mis.norm() + M.norm();
        *rel_residual = res.norm() / scale;
    }
    return S;
}

inline FullAreSolution solve_full_discrete_are(const BlockSystem& sys, int size_cap = 600) {
    require(2 * sys.n <= size_cap, "full-order Riccati solve limited to 2n <= " + std::to_string(size_cap));
    const int n = sys.n;
    Matrix D = Matrix::Zero(2 * n, 2 * n);
    D.topLeftCorner(n, n) = Matrix(sys.G_O);
    FullAreSolution out;
    const Matrix M = Matrix(sys.M);
    out.S = solve_mass_weighted_are(Matrix(sys.A), M, D, &out.relative_residual);
    // B K = D M⁻¹ S, so K = first block row of M⁻¹ S on the control support.
    const Matrix mis = Eigen::LLT<Matrix>(M).solve(out.S);
    out.gain = mis.topRows(n);
    return out;
}

}  // namespace stab
