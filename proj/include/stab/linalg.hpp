#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <complex>
#include <fstream>
#include <iomanip>
#include <string>

#include "stab/errors.hpp"

namespace stab {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using ComplexVector = Eigen::VectorXcd;
using ComplexMatrix = Eigen::MatrixXcd;
using Complex = std::complex<double>;

/// Compressed-row storage with sorted column indices (Eigen keeps inner
/// indices sorted after setFromTriplets / makeCompressed).
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Triplet = Eigen::Triplet<double>;

inline void require(bool cond, const std::string& what) {
    if (!cond) throw InvalidInput(what);
}

/// Block-diagonal [a 0; 0 b].
inline SparseMatrix block_diag(const SparseMatrix& a, const SparseMatrix& b) {
    std::vector<Triplet> t;
    t.reserve(static_cast<std::size_t>(a.nonZeros() + b.nonZeros()));
    for (int r = 0; r < a.outerSize(); ++r)
        for (SparseMatrix::InnerIterator it(a, r); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
    for (int r = 0; r < b.outerSize(); ++r)
        for (SparseMatrix::InnerIterator it(b, r); it; ++it)
            t.emplace_back(it.row() + a.rows(), it.col() + a.cols(), it.value());
    SparseMatrix out(a.rows() + b.rows(), a.cols() + b.cols());
    out.setFromTriplets(t.begin(), t.end());
    return out;
}

/// Assemble [[a, b], [c, d]] from four equally shaped sparse blocks.
inline SparseMatrix block_2x2(const SparseMatrix& a, const SparseMatrix& b, const SparseMatrix& c,
                              const SparseMatrix& d) {
    const auto n = a.rows();
    const auto m = a.cols();
    std::vector<Triplet> t;
    t.reserve(static_cast<std::size_t>(a.nonZeros() + b.nonZeros() + c.nonZeros() + d.nonZeros()));
    auto put = [&](const SparseMatrix& s, Eigen::Index r0, Eigen::Index c0) {
        for (int r = 0; r < s.outerSize(); ++r)
            for (SparseMatrix::InnerIterator it(s, r); it; ++it)
                t.emplace_back(it.row() + r0, it.col() + c0, it.value());
    };
    put(a, 0, 0);
    put(b, 0, m);
    put(c, n, 0);
    put(d, n, m);
    SparseMatrix out(2 * n, 2 * m);
    out.setFromTriplets(t.begin(), t.end());
    return out;
}

/// Stack [top; bottom] where bottom is an all-zero block of the same shape.
inline SparseMatrix stack_over_zero(const SparseMatrix& top) {
    SparseMatrix out(2 * top.rows(), top.cols());
    std::vector<Triplet> t;
    for (int r = 0; r < top.outerSize(); ++r)
        for (SparseMatrix::InnerIterator it(top, r); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
    out.setFromTriplets(t.begin(), t.end());
    return out;
}

inline void write_matrix_market(const std::string& path, const SparseMatrix& a) {
    std::ofstream os(path);
    if (!os) throw InvalidInput("cannot open " + path + " for writing");
    os << "%%MatrixMarket matrix coordinate real general\n";
    os << a.rows() << ' ' << a.cols() << ' ' << a.nonZeros() << '\n';
    os << std::setprecision(17);
    for (int r = 0; r < a.outerSize(); ++r)
        for (SparseMatrix::InnerIterator it(a, r); it; ++it)
            os << it.row() + 1 << ' ' << it.col() + 1 << ' ' << it.value() << '\n';
}

inline void write_matrix_market(const std::string& path, const Matrix& a) {
    std::ofstream os(path);
    if (!os) throw InvalidInput("cannot open " + path + " for writing");
    os << "%%MatrixMarket matrix array real general\n";
    os << a.rows() << ' ' << a.cols() << '\n';
    os << std::setprecision(17);
    for (Eigen::Index c = 0; c < a.cols(); ++c)
        for (Eigen::Index r = 0; r < a.rows(); ++r) os << a(r, c) << '\n';
}

}  // namespace stab
