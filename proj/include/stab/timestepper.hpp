#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/SparseLU>

#include "stab/fem.hpp"
#include "stab/linalg.hpp"
#include "stab/riccati.hpp"

namespace stab {

/// M Y' = (A − U V) Y; without a low-rank part this is the open loop.
struct ClosedLoopOperator {
    SparseMatrix M;
    SparseMatrix A;
    Matrix U;  // 2n × r
    Matrix V;  // r × 2n

    bool has_low_rank() const { return U.cols() > 0; }

    static ClosedLoopOperator open_loop(const BlockSystem& sys) { return {sys.M, sys.A, Matrix(), Matrix()}; }

    /// A_cl = A − B K with K = left_factor · right_factor.
    static ClosedLoopOperator closed_loop(const BlockSystem& sys, const FeedbackGain& gain) {
        if (gain.empty()) return open_loop(sys);
        return {sys.M, sys.A, Matrix(sys.B * gain.left_factor), gain.right_factor};
    }
};

namespace detail {
inline std::atomic<long>& factorization_counter() {
    static std::atomic<long> count{0};
    return count;
}
}  // namespace detail

/// Number of sparse factorizations performed by ImplicitSolver so far (process-wide).
inline long factorization_count() { return detail::factorization_counter().load(); }

/// Solves (c M − dt A_cl) x = r: one sparse LU of c M − dt A plus a Woodbury correction.
class ImplicitSolver {
public:
    ImplicitSolver(const ClosedLoopOperator& op, double c, double dt) {
        require(dt > 0.0, "time step must be positive");
        init(op, c, dt);
    }

    /// Solver for (A_cl − σ M) x = r.
    static ImplicitSolver shifted(const ClosedLoopOperator& op, double sigma) { return ImplicitSolver(op, -sigma, -1.0, 0); }

    Vector solve(const Vector& r) const {
        Vector x = lu_.solve(r);
        if (V_.size() > 0) x -= W_ * cap_.solve(V_ * x);
        return x;
    }

private:
    ImplicitSolver(const ClosedLoopOperator& op, double c, double dt, int) { init(op, c, dt); }

    void init(const ClosedLoopOperator& op, double c, double dt) {
        Eigen::SparseMatrix<double> s = c * Eigen::SparseMatrix<double>(op.M) - dt * Eigen::SparseMatrix<double>(op.A);
        s.makeCompressed();
        lu_.compute(s);
        ++detail::factorization_counter();
        if (lu_.info() != Eigen::Success) throw NumericalError("factorization of the implicit step matrix failed");
        if (op.has_low_rank()) {
            V_ = op.V;
            W_.resize(op.U.rows(), op.U.cols());
            for (Eigen::Index j = 0; j < op.U.cols(); ++j) W_.col(j) = lu_.solve(Vector(dt * op.U.col(j)));
            const Matrix cap = Matrix::Identity(V_.rows(), V_.rows()) + V_ * W_;
            cap_.compute(cap);
            if (!(cap_.rcond() > 1e-14)) throw NumericalError("Woodbury capacitance matrix is singular");
        }
    }

    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu_;
    Matrix V_;
    Matrix W_;
    Eigen::PartialPivLU<Matrix> cap_;
};

/// (M − dt A_cl) Y1 = M Y0.
inline Vector be_first_step(const ClosedLoopOperator& op, const Vector& y0, double dt) {
    require(y0.size() == op.M.rows(), "state dimension mismatch");
    return ImplicitSolver(op, 1.0, dt).solve(op.M * y0);
}

/// (1.5 M − dt A_cl) Y_{n+2} = M (2 Y_{n+1} − 0.5 Y_n).
inline Vector bdf2_step(const ClosedLoopOperator& op, const Vector& yn, const Vector& yn1, double dt) {
    require(yn.size() == op.M.rows() && yn1.size() == op.M.rows(), "state dimension mismatch");
    return ImplicitSolver(op, 1.5, dt).solve(op.M * (2.0 * yn1 - 0.5 * yn));
}

inline double discrete_l2_norm(const SparseMatrix& g, const Vector& c) {
    require(g.rows() == c.size() && g.cols() == c.size(), "norm: dimension mismatch");
    return std::sqrt(std::max(0.0, c.dot(g * c)));
}

inline double discrete_h1_norm(const SparseMatrix& g, const SparseMatrix& k, const Vector& c) {
    require(g.rows() == c.size() && k.rows() == c.size(), "norm: dimension mismatch");
    return std::sqrt(std::max(0.0, c.dot(g * c) + c.dot(k * c)));
}

/// Rightmost eigenvalues of the closed-loop pencil (A − B K, M), descending real part.
inline std::vector<Complex> closed_loop_eigs(const BlockSystem& sys, const FeedbackGain& gain, int count,
                                             const EigOptions& opt = {}) {
    require(count >= 1 && count <= 2 * sys.n, "eigenvalue count must lie in [1, 2n]");
    const ClosedLoopOperator op = ClosedLoopOperator::closed_loop(sys, gain);
    detail::Eigenset set;
    if (2 * sys.n <= opt.dense_limit) {
        Matrix a = Matrix(sys.A);
        if (op.has_low_rank()) a -= op.U * op.V;
        set = detail::dense_pencil(a, Matrix(sys.M));
    } else {
        const double sigma = detail::right_shift(sys.real_part_bound);
        const ImplicitSolver solver = ImplicitSolver::shifted(op, sigma);
        auto apply = [&](const Vector& x) { return solver.solve(sys.M * x); };
        const Eigen::SparseMatrix<Complex> ac = sys.A.cast<Complex>();
        const Eigen::SparseMatrix<Complex> mc = sys.M.cast<Complex>();
        auto resid = [&](const Complex& lam, const ComplexVector& v) {
            ComplexVector av = ac * v;
            if (op.has_low_rank()) av -= op.U.cast<Complex>() * (op.V.cast<Complex>() * v);
            const ComplexVector mv = mc * v;
            const double scale = std::max(av.norm(), std::abs(lam) * mv.norm());
            return scale > 0.0 ? (av - lam * mv).norm() / scale : 0.0;
        };
        set = detail::shift_invert_arnoldi(2 * sys.n, apply, resid, sigma, count + 8, opt, count + 2);
    }
    std::vector<Complex> vals = set.values;
    std::stable_sort(vals.begin(), vals.end(), detail::eig_before);
    if (static_cast<int>(vals.size()) > count) vals.resize(count);
    return vals;
}

struct TimeSeries {
    std::vector<double> times;
    std::vector<double> state_energy;
    std::vector<double> control_energy;
    std::vector<std::pair<double, Vector>> checkpoints;
};

/// BE startup then BDF2 up to t_final; u = −K Y is evaluated at each new level.
inline TimeSeries simulate(const BlockSystem& sys, const FeedbackGain* gain, const Vector& y0, double dt, double t_final,
                           const std::vector<double>& checkpoint_times = {}) {
    require(dt > 0.0 && std::isfinite(dt), "time step must be positive");
    require(t_final >= dt, "t_final must be at least one time step");
    require(y0.size() == 2 * sys.n, "initial state has the wrong length");
    const bool controlled = gain && !gain->empty();
    const ClosedLoopOperator op = controlled ? ClosedLoopOperator::closed_loop(sys, *gain)
                                             : ClosedLoopOperator::open_loop(sys);
    const long steps = std::lround(t_final / dt);

    std::vector<long> wanted;
    for (double t : checkpoint_times) {
        require(std::isfinite(t) && t >= 0.0, "checkpoint time must be nonnegative");
        wanted.push_back(std::clamp(std::lround(t / dt), 0L, steps));
    }

    TimeSeries ts;
    ts.times.reserve(steps + 1);
    auto record = [&](long k, const Vector& y) {
        if (!y.allFinite())
            throw NumericalError("non-finite state at step " + std::to_string(k) + " (t = " + std::to_string(k * dt) + ")");
        ts.times.push_back(k * dt);
        ts.state_energy.push_back(discrete_l2_norm(sys.M, y));
        if (controlled) {
            const Vector u = -(gain->left_factor * (gain->right_factor * y));
            ts.control_energy.push_back(discrete_l2_norm(sys.G_O, u));
        } else {
            ts.control_energy.push_back(0.0);
        }
        for (long w : wanted)
            if (w == k) ts.checkpoints.emplace_back(k * dt, y);
    };

    record(0, y0);
    Vector prev = y0;
    Vector cur = ImplicitSolver(op, 1.0, dt).solve(sys.M * y0);
    record(1, cur);
    if (steps >= 2) {
        const ImplicitSolver bdf(op, 1.5, dt);
        for (long k = 2; k <= steps; ++k) {
            Vector next = bdf.solve(sys.M * (2.0 * cur - 0.5 * prev));
            prev = std::move(cur);
            cur = std::move(next);
            record(k, cur);
        }
    }
    return ts;
}

inline void write_time_series_csv(const TimeSeries& ts, const std::string& path, int precision = 8) {
    std::ofstream os(path);
    if (!os) throw InvalidInput("cannot open " + path + " for writing");
    os << std::setprecision(precision);
    os << "t,state_energy,control_energy\n";
    for (std::size_t i = 0; i < ts.times.size(); ++i)
        os << ts.times[i] << ',' << ts.state_energy[i] << ',' << ts.control_energy[i] << '\n';
}

/// Checkpoint file: little-endian uint64 length, then that many doubles.
inline void write_checkpoint(const std::string& path, const Vector& v) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InvalidInput("cannot open " + path + " for writing");
    const std::uint64_t n = static_cast<std::uint64_t>(v.size());
    os.write(reinterpret_cast<const char*>(&n), sizeof n);
    os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
}

inline Vector read_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InvalidInput("cannot open " + path);
    std::uint64_t n = 0;
    is.read(reinterpret_cast<char*>(&n), sizeof n);
    if (!is || n > (std::uint64_t{1} << 40)) throw InvalidInput("malformed checkpoint " + path);
    Vector v(static_cast<Eigen::Index>(n));
    is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) throw InvalidInput("truncated checkpoint " + path);
    return v;
}

}  // namespace stab
