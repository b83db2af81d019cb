#pragma once

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>

#include "stab/convergence.hpp"
#include "stab/fem.hpp"
#include "stab/linalg.hpp"
#include "stab/mesh.hpp"

namespace stab {

inline double exact_laplacian_eig(int m, int n) {
    require(m >= 1 && n >= 1, "Laplacian eigenvalue indices must be positive");
    return (m * m + n * n) * std::numbers::pi * std::numbers::pi;
}

/// Λ^± + ω for the Laplacian eigenvalue λ; `.first` carries the + root.
inline std::pair<Complex, Complex> exact_coupled_eigs(const ModelParams& p, double lambda) {
    require(lambda > 0.0, "Laplacian eigenvalue must be positive");
    const double mid = -0.5 * ((p.eta0 + p.beta0) * lambda + p.kappa + 2.0 * p.nu0);
    const double d = (p.beta0 - p.eta0) * lambda + p.kappa;
    const Complex root = 0.5 * std::sqrt(Complex(d * d - 4.0 * p.eta1, 0.0));
    return {mid + root + p.omega, mid - root + p.omega};
}

struct EigenPair {
    Complex value;
    ComplexVector right_vector;
    ComplexVector left_vector;
};

enum class Which { largest_real, nearest };

struct EigOptions {
    Which which = Which::largest_real;
    Complex target = 0.0;
    int dense_limit = 600;
    double tol = 1e-10;
    int max_restarts = 60;
    unsigned seed = 20240611u;
};

namespace detail {

/// M-norm one, largest-magnitude entry rotated onto the positive real axis.
inline void normalize_eigvec(ComplexVector& v, const SparseMatrix& M) {
    const double nrm = std::sqrt(std::abs(v.dot(M * v)));
    if (nrm > 0.0) v /= nrm;
    Eigen::Index j = 0;
    v.cwiseAbs().maxCoeff(&j);
    const double a = std::abs(v(j));
    if (a > 0.0) v *= std::conj(v(j)) / a;
}

inline bool eig_before(const Complex& a, const Complex& b) {
    if (a.real() != b.real()) return a.real() > b.real();
    return a.imag() > b.imag();
}

inline double pencil_residual(const SparseMatrix& A, const SparseMatrix& M, const Complex& lam,
                              const ComplexVector& v) {
    const ComplexVector av = A.cast<Complex>() * v;
    const ComplexVector mv = M.cast<Complex>() * v;
    const double scale = std::max(av.norm(), std::abs(lam) * mv.norm());
    return scale > 0.0 ? (av - lam * mv).norm() / scale : 0.0;
}

struct Eigenset {
    std::vector<Complex> values;
    std::vector<ComplexVector> vectors;
};

/// All eigenpairs of (A, M) via M = L Lᵀ and the standard problem L⁻¹ A L⁻ᵀ.
inline Eigenset dense_pencil(const Matrix& A, const Matrix& M) {
    Eigen::LLT<Matrix> llt(M);
    if (llt.info() != Eigen::Success) throw NumericalError("mass matrix is not positive definite");
    const Matrix L = llt.matrixL();
    Matrix c = llt.matrixL().solve(A);
    c = llt.matrixL().solve(c.transpose()).transpose();
    Eigen::EigenSolver<Matrix> es(c);
    if (es.info() != Eigen::Success) throw NumericalError("dense eigensolver failed to converge");
    Eigenset out;
    const ComplexMatrix w = es.eigenvectors();
    const ComplexMatrix vecs = L.transpose().cast<Complex>().triangularView<Eigen::Upper>().solve(w);
    for (Eigen::Index i = 0; i < c.rows(); ++i) {
        out.values.push_back(es.eigenvalues()(i));
        out.vectors.push_back(vecs.col(i));
    }
    return out;
}

using ColMajorSparse = Eigen::SparseMatrix<double>;

/// Arnoldi with explicit restarts on x ↦ (A − σM)⁻¹ M x (supplied as `apply`); keeps the
/// `want` Ritz pairs closest to σ and stops once `residual(Λ, v)` is below tolerance for all.
template <typename Apply, typename Residual>
Eigenset shift_invert_arnoldi(Eigen::Index N, Apply&& apply, Residual&& residual, double sigma, int want,
                              const EigOptions& opt, int need = -1) {
    if (need < 0 || need > want) need = want;
    const int m = static_cast<int>(std::min<Eigen::Index>(N, std::max(3 * want + 20, 60)));
    std::mt19937 gen(opt.seed);
    std::uniform_real_distribution<double> dist(0.5, 1.5);
    Vector start(N);
    for (Eigen::Index i = 0; i < N; ++i) start(i) = dist(gen);

    double worst = 0.0;
    for (int restart = 0; restart <= opt.max_restarts; ++restart) {
        Matrix V = Matrix::Zero(N, m + 1);
        Matrix H = Matrix::Zero(m + 1, m);
        V.col(0) = start / start.norm();
        int dim = m;
        for (int j = 0; j < m; ++j) {
            Vector w = apply(V.col(j));
            for (int pass = 0; pass < 2; ++pass) {
                const Vector h = V.leftCols(j + 1).transpose() * w;
                w -= V.leftCols(j + 1) * h;
                H.col(j).head(j + 1) += h;
            }
            const double beta = w.norm();
            H(j + 1, j) = beta;
            if (beta < 1e-14 * H.col(j).norm()) {
                dim = j + 1;
                break;
            }
            V.col(j + 1) = w / beta;
        }
        Eigen::EigenSolver<Matrix> es(H.topLeftCorner(dim, dim));
        if (es.info() != Eigen::Success) throw NumericalError("Hessenberg eigensolver failed");
        std::vector<int> order(dim);
        for (int i = 0; i < dim; ++i) order[i] = i;
        const ComplexVector theta = es.eigenvalues();
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return std::abs(theta(a)) > std::abs(theta(b)); });
        const int take = std::min(dim, want);
        const ComplexMatrix basis = V.leftCols(dim).cast<Complex>();
        Eigenset out;
        worst = 0.0;
        Vector next = Vector::Zero(N);
        for (int k = 0; k < take; ++k) {
            const int i = order[k];
            if (std::abs(theta(i)) == 0.0) continue;
            const Complex lam = sigma + 1.0 / theta(i);
            ComplexVector x = basis * es.eigenvectors().col(i);
            x /= x.norm();
            const double r = residual(lam, x);
            if (k < need) worst = std::max(worst, r);
            if (r <= opt.tol) {
                out.values.push_back(lam);
                out.vectors.push_back(x);
            } else {
                next += x.real() + x.imag();
            }
        }
        if (worst <= opt.tol) return out;
        if (next.norm() == 0.0) break;
        for (const auto& x : out.vectors) next += 0.1 * (x.real() + x.imag());
        start = next;
    }
    throw NumericalError("eigensolver did not converge; attained relative residual " + std::to_string(worst));
}

inline Eigenset sparse_pencil(const SparseMatrix& A, const SparseMatrix& M, double sigma, int want,
                              const EigOptions& opt, int need = -1) {
    ColMajorSparse shifted = ColMajorSparse(A) - sigma * ColMajorSparse(M);
    shifted.makeCompressed();
    Eigen::SparseLU<ColMajorSparse> lu;
    lu.compute(shifted);
    if (lu.info() != Eigen::Success) throw NumericalError("shift-invert factorization failed (shift on spectrum?)");
    auto apply = [&](const Vector& x) {
        Vector y = lu.solve(M * x);
        if (lu.info() != Eigen::Success) throw NumericalError("shift-invert solve failed");
        return y;
    };
    auto resid = [&](const Complex& lam, const ComplexVector& v) { return pencil_residual(A, M, lam, v); };
    return shift_invert_arnoldi(A.rows(), apply, resid, sigma, want, opt, need);
}

/// Real shift to the right of every eigenvalue whose real part is below `bound`.
inline double right_shift(double bound) { return bound + 1.0 + 0.05 * std::abs(bound); }

inline Eigenset solve_pencil(const SparseMatrix& A, const SparseMatrix& M, int count, const EigOptions& opt,
                             double real_bound) {
    if (A.rows() <= opt.dense_limit) return dense_pencil(Matrix(A), Matrix(M));
    if (opt.which == Which::largest_real) return sparse_pencil(A, M, right_shift(real_bound), count + 8, opt, count + 2);
    return sparse_pencil(A, M, opt.target.real(), count + 4, opt, count);
}

inline std::vector<int> select(const std::vector<Complex>& values, int count, const EigOptions& opt) {
    std::vector<int> idx(values.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    if (opt.which == Which::largest_real) {
        std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return eig_before(values[a], values[b]); });
    } else {
        std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
            const double da = std::abs(values[a] - opt.target), db = std::abs(values[b] - opt.target);
            if (da != db) return da < db;
            return eig_before(values[a], values[b]);
        });
    }
    idx.resize(std::min<std::size_t>(idx.size(), count));
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return eig_before(values[a], values[b]); });
    return idx;
}

}  // namespace detail

/// Eigenpairs of the pencil (A, M) with left vectors from (Aᵀ, M), sorted by descending real part.
inline std::vector<EigenPair> discrete_eigs(const BlockSystem& sys, int count, const EigOptions& opt = {}) {
    require(count >= 1 && count <= 2 * sys.n, "eigenpair count must lie in [1, 2n]");
    const SparseMatrix At = sys.A.transpose();
    const detail::Eigenset right = detail::solve_pencil(sys.A, sys.M, count, opt, sys.real_part_bound);
    const detail::Eigenset left = detail::solve_pencil(At, sys.M, count, opt, sys.real_part_bound);
    const std::vector<int> picked = detail::select(right.values, count, opt);

    std::vector<EigenPair> out;
    for (int i : picked) {
        const Complex lam = right.values[i];
        int best = -1;
        double dist = 0.0;
        for (std::size_t j = 0; j < left.values.size(); ++j) {
            const double d = std::abs(left.values[j] - lam);
            const bool tie_ok = best < 0 || d < dist ||
                                (d == dist && (left.values[j].imag() >= 0) == (lam.imag() >= 0));
            if (tie_ok) {
                best = static_cast<int>(j);
                dist = d;
            }
        }
        if (best < 0 || dist > 1e-6 * std::max(1.0, std::abs(lam)))
            throw NumericalError("no left eigenvector matches eigenvalue " + std::to_string(lam.real()) + " + " +
                                 std::to_string(lam.imag()) + "i");
        EigenPair pair{lam, right.vectors[i], left.vectors[best]};
        detail::normalize_eigvec(pair.right_vector, sys.M);
        detail::normalize_eigvec(pair.left_vector, sys.M);
        const double rr = detail::pencil_residual(sys.A, sys.M, lam, pair.right_vector);
        const double rl = detail::pencil_residual(At, sys.M, lam, pair.left_vector);
        if (rr > 1e-8 || rl > 1e-8)
            throw NumericalError("eigenpair residual too large: " + std::to_string(std::max(rr, rl)));
        out.push_back(std::move(pair));
    }
    return out;
}

struct UnstableBasis {
    Matrix E;
    Matrix Xi;
    int count = 0;
    std::vector<Complex> eigenvalues;
    /// Column block widths: 2 for a complex pair (Re, Im), 1 for a real eigenvalue.
    std::vector<int> blocks;
};

/// Real bases of the eigenspaces with Re(Λ) > -tol.
inline UnstableBasis unstable_basis(const std::vector<EigenPair>& pairs, double tol = 1e-9) {
    require(tol >= 0.0, "unstable threshold must be nonnegative");
    UnstableBasis b;
    std::vector<ComplexVector> rv, lv;
    std::vector<bool> used(pairs.size(), false);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const Complex lam = pairs[i].value;
        if (used[i] || !(lam.real() > -tol)) continue;
        used[i] = true;
        const double scale = std::max(1.0, std::abs(lam));
        if (std::abs(lam.imag()) <= 1e-10 * scale) {
            b.eigenvalues.push_back(lam);
            b.blocks.push_back(1);
            rv.push_back(pairs[i].right_vector);
            lv.push_back(pairs[i].left_vector);
            continue;
        }
        int partner = -1;
        for (std::size_t j = 0; j < pairs.size(); ++j)
            if (!used[j] && std::abs(pairs[j].value - std::conj(lam)) <= 1e-8 * scale) {
                partner = static_cast<int>(j);
                break;
            }
        if (partner < 0) throw InvalidInput("unstable eigenvalue has no conjugate partner (incomplete pair)");
        used[partner] = true;
        const int k = lam.imag() > 0 ? static_cast<int>(i) : partner;
        b.eigenvalues.push_back(pairs[k].value);
        b.eigenvalues.push_back(std::conj(pairs[k].value));
        b.blocks.push_back(2);
        rv.push_back(pairs[k].right_vector);
        lv.push_back(pairs[k].left_vector);
    }
    const Eigen::Index rows = pairs.empty() ? 0 : pairs.front().right_vector.size();
    int cols = 0;
    for (int w : b.blocks) cols += w;
    b.count = cols;
    b.E.resize(rows, cols);
    b.Xi.resize(rows, cols);
    int c = 0;
    for (std::size_t k = 0; k < b.blocks.size(); ++k) {
        b.E.col(c) = rv[k].real();
        b.Xi.col(c) = lv[k].real();
        if (b.blocks[k] == 2) {
            b.E.col(c + 1) = rv[k].imag();
            b.Xi.col(c + 1) = lv[k].imag();
        }
        c += b.blocks[k];
    }
    return b;
}

/// Rescale Xi within its span so that Xiᵀ M E = I. The feedback gain built from
/// such a pair does not depend on how the individual eigenvectors were scaled.
inline void biorthonormalize(UnstableBasis& b, const SparseMatrix& M) {
    if (b.count == 0) return;
    const Matrix c = b.E.transpose() * (M * b.Xi);
    Eigen::PartialPivLU<Matrix> lu(c);
    const double rc = lu.rcond();
    if (!(rc > 1e-12)) throw NumericalError("left and right unstable bases are nearly M-orthogonal");
    b.Xi = b.Xi * lu.inverse();
}

struct HautusReport {
    bool ok = true;
    std::vector<double> ratios;  // one per eigenvalue block
};

/// √(ξ_yᴴ G_O ξ_y) / √(ξᴴ M ξ) per unstable left eigenvector.
inline HautusReport hautus_check(const BlockSystem& sys, const UnstableBasis& basis, double tol,
                                 std::ostream* warn = &std::cerr) {
    HautusReport r;
    if (basis.count == 0) {
        if (warn) *warn << "warning: empty unstable basis, Hautus test holds vacuously\n";
        return r;
    }
    const int n = sys.n;
    int c = 0;
    for (int w : basis.blocks) {
        double num = 0.0, den = 0.0;
        for (int k = 0; k < w; ++k) {
            const Vector xi = basis.Xi.col(c + k);
            const Vector xy = xi.head(n);
            num += xy.dot(sys.G_O * xy);
            den += xi.dot(sys.M * xi);
        }
        const double ratio = den > 0.0 ? std::sqrt(std::max(num, 0.0) / den) : 0.0;
        r.ratios.push_back(ratio);
        if (!(ratio > tol)) r.ok = false;
        c += w;
    }
    return r;
}

struct EigTarget {
    int m = 1;
    int n = 1;
    bool plus = true;

    std::string label() const {
        return "(" + std::to_string(m) + "," + std::to_string(n) + "," + (plus ? "+" : "-") + ")";
    }
};

struct EigStudyRow {
    EigTarget target;
    int level = 0;
    double h = 0.0;
    Complex exact;
    Complex discrete;
    double error = 0.0;
    Order order;
};

/// Discrete eigenvalue nearest to each exact target, per level, with observed orders.
inline std::vector<EigStudyRow> eig_convergence_study(const ModelParams& params, const std::vector<int>& levels,
                                                      const std::vector<EigTarget>& targets,
                                                      MeshFamily family = MeshFamily::crisscross) {
    require(!levels.empty(), "no levels given");
    for (std::size_t i = 1; i < levels.size(); ++i) require(levels[i] > levels[i - 1], "levels must ascend");
    std::vector<std::vector<EigStudyRow>> per_target(targets.size());
    for (int level : levels) {
        const Mesh mesh = build_mesh(family, level);
        const BlockSystem sys = assemble_block_system(mesh, params, ControlRegion::full_domain(mesh));
        for (std::size_t t = 0; t < targets.size(); ++t) {
            const auto ex = exact_coupled_eigs(params, exact_laplacian_eig(targets[t].m, targets[t].n));
            const Complex exact = targets[t].plus ? ex.first : ex.second;
            EigOptions opt;
            opt.which = Which::nearest;
            opt.target = exact;
            const auto pairs = discrete_eigs(sys, 1, opt);
            EigStudyRow row;
            row.target = targets[t];
            row.level = level;
            row.h = mesh.h;
            row.exact = exact;
            row.discrete = pairs.front().value;
            row.error = std::abs(row.discrete - exact);
            per_target[t].push_back(row);
        }
    }
    std::vector<EigStudyRow> out;
    for (auto& rows : per_target) {
        std::vector<double> e, hs;
        for (const auto& r : rows) {
            e.push_back(r.error);
            hs.push_back(r.h);
        }
        const auto orders = compute_order(e, hs);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            rows[i].order = orders[i];
            out.push_back(rows[i]);
        }
    }
    return out;
}

}  // namespace stab
