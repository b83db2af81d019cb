#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/SparseCholesky>

#include "stab/linalg.hpp"
#include "stab/mesh.hpp"

namespace stab {

/// Coefficients of the coupled system
///   y_t - eta0 Δy + nu0 y + eta1 z = χ_O u,
///   z_t - beta0 Δz + (kappa + nu0) z - y = 0,
/// shifted by omega (the target decay rate).
struct ModelParams {
    double eta0 = 1.0;
    double beta0 = 0.8;
    double kappa = 1.0;
    double nu0 = 0.0;
    double eta1 = 5.0;
    double omega = 25.0;

    void validate() const {
        require(eta0 > 0.0, "eta0 must be positive");
        require(beta0 > 0.0, "beta0 must be positive");
        require(kappa > 0.0, "kappa must be positive");
        require(std::isfinite(nu0) && std::isfinite(eta1) && std::isfinite(omega), "model coefficients must be finite");
    }
};

/// Semi-discrete system M Y' = A Y + B u, unknowns ordered (y, z).
struct BlockSystem {
    int n = 0;              // interior node count
    SparseMatrix M;         // diag(G, G)
    SparseMatrix A;         // shifted coupled operator
    SparseMatrix B;         // [G_O; 0]
    SparseMatrix G;         // scalar mass
    SparseMatrix K;         // scalar stiffness
    SparseMatrix G_O;       // mass restricted to the control region
    ModelParams params;
    /// Upper bound on Re(Λ) over the whole pencil spectrum (field of values).
    double real_part_bound = 0.0;
};

using ScalarField = std::function<double(double, double)>;

inline Eigen::Matrix3d element_mass(const Mesh& mesh, int t) {
    const double area = mesh.signed_area(t);
    Eigen::Matrix3d m;
    m << 2, 1, 1, 1, 2, 1, 1, 1, 2;
    return (area / 12.0) * m;
}

inline Eigen::Matrix3d element_stiffness(const Mesh& mesh, int t) {
    const auto& tri = mesh.triangles[t];
    const double area = mesh.signed_area(t);
    // grad φ_i = (y_j - y_k, x_k - x_j) / (2 area), (i, j, k) cyclic
    Eigen::Matrix<double, 2, 3> grad;
    for (int i = 0; i < 3; ++i) {
        const Point& pj = mesh.vertices[tri[(i + 1) % 3]];
        const Point& pk = mesh.vertices[tri[(i + 2) % 3]];
        grad(0, i) = (pj.y - pk.y) / (2.0 * area);
        grad(1, i) = (pk.x - pj.x) / (2.0 * area);
    }
    return area * grad.transpose() * grad;
}

namespace detail {

template <typename ElementFn>
SparseMatrix assemble_interior(const Mesh& mesh, const std::vector<int>& elements, ElementFn&& element) {
    std::vector<Triplet> t;
    t.reserve(elements.size() * 9);
    for (int e : elements) {
        const Eigen::Matrix3d ke = element(mesh, e);
        const auto& tri = mesh.triangles[e];
        for (int a = 0; a < 3; ++a) {
            const int ra = mesh.interior_index[tri[a]];
            if (ra < 0) continue;
            for (int b = 0; b < 3; ++b) {
                const int cb = mesh.interior_index[tri[b]];
                if (cb >= 0) t.emplace_back(ra, cb, ke(a, b));
            }
        }
    }
    SparseMatrix out(mesh.num_interior(), mesh.num_interior());
    out.setFromTriplets(t.begin(), t.end());
    return out;
}

inline std::vector<int> all_elements(const Mesh& mesh) {
    std::vector<int> ids(mesh.num_triangles());
    for (int e = 0; e < mesh.num_triangles(); ++e) ids[e] = e;
    return ids;
}

}  // namespace detail

/// Interior-node P1 mass matrix G = (<φ_i, φ_j>).
inline SparseMatrix assemble_mass(const Mesh& mesh) {
    return detail::assemble_interior(mesh, detail::all_elements(mesh), element_mass);
}

/// Mass matrix over every vertex, boundary included.
inline SparseMatrix assemble_mass_unreduced(const Mesh& mesh) {
    std::vector<Triplet> t;
    for (int e = 0; e < mesh.num_triangles(); ++e) {
        const Eigen::Matrix3d ke = element_mass(mesh, e);
        const auto& tri = mesh.triangles[e];
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) t.emplace_back(tri[a], tri[b], ke(a, b));
    }
    SparseMatrix out(mesh.num_vertices(), mesh.num_vertices());
    out.setFromTriplets(t.begin(), t.end());
    return out;
}

/// Interior-node stiffness K = (<∇φ_i, ∇φ_j>).
inline SparseMatrix assemble_stiffness(const Mesh& mesh) {
    return detail::assemble_interior(mesh, detail::all_elements(mesh), element_stiffness);
}

/// <χ_O φ_j, φ_i>, assembled over the elements of the control region only.
inline SparseMatrix assemble_control_mass(const Mesh& mesh, const ControlRegion& region) {
    require(!region.element_ids.empty(), "control region is empty");
    for (int e : region.element_ids)
        require(e >= 0 && e < mesh.num_triangles(), "control region element id out of range");
    return detail::assemble_interior(mesh, region.element_ids, element_mass);
}

inline double coupled_real_part_bound(const ModelParams& p) {
    const double a = p.omega - p.nu0;
    const double b = -p.kappa + p.omega - p.nu0;
    const double c = 0.5 * (1.0 - p.eta1);
    return 0.5 * (a + b) + std::sqrt(0.25 * (a - b) * (a - b) + c * c);
}

inline BlockSystem assemble_block_system(const Mesh& mesh, const ModelParams& params, const ControlRegion& region) {
    params.validate();
    BlockSystem s;
    s.n = mesh.num_interior();
    require(s.n > 0, "mesh has no interior nodes");
    s.params = params;
    s.G = assemble_mass(mesh);
    s.K = assemble_stiffness(mesh);
    s.G_O = region.is_full_domain ? s.G : assemble_control_mass(mesh, region);
    const double cy = params.omega - params.nu0;
    const double cz = -params.kappa + params.omega - params.nu0;
    SparseMatrix a11 = -params.eta0 * s.K + cy * s.G;
    SparseMatrix a12 = -params.eta1 * s.G;
    SparseMatrix a22 = -params.beta0 * s.K + cz * s.G;
    s.A = block_2x2(a11, a12, s.G, a22);
    s.M = block_diag(s.G, s.G);
    s.B = stack_over_zero(s.G_O);
    s.real_part_bound = coupled_real_part_bound(params);
    return s;
}

/// Moments <f, φ_i> over interior nodes; 6-point degree-4 rule, exact for cubic f.
inline Vector load_vector(const Mesh& mesh, const ScalarField& f) {
    struct Node {
        double l0, l1, w;
    };
    constexpr double a1 = 0.445948490915964886, w1 = 0.223381589678011466;
    constexpr double a2 = 0.091576213509770743, w2 = 1.0 / 3.0 - w1;
    constexpr double b1 = 1.0 - 2.0 * a1, b2 = 1.0 - 2.0 * a2;
    static constexpr Node rule[6] = {{a1, a1, w1}, {a1, b1, w1}, {b1, a1, w1},
                                     {a2, a2, w2}, {a2, b2, w2}, {b2, a2, w2}};
    Vector b = Vector::Zero(mesh.num_interior());
    for (int e = 0; e < mesh.num_triangles(); ++e) {
        const auto& tri = mesh.triangles[e];
        const Point& p0 = mesh.vertices[tri[0]];
        const Point& p1 = mesh.vertices[tri[1]];
        const Point& p2 = mesh.vertices[tri[2]];
        const double area = mesh.signed_area(e);
        for (const Node& q : rule) {
            const double l[3] = {q.l0, q.l1, 1.0 - q.l0 - q.l1};
            const double fv = area * q.w * f(l[0] * p0.x + l[1] * p1.x + l[2] * p2.x, l[0] * p0.y + l[1] * p1.y + l[2] * p2.y);
            for (int i = 0; i < 3; ++i) {
                const int r = mesh.interior_index[tri[i]];
                if (r >= 0) b(r) += fv * l[i];
            }
        }
    }
    return b;
}

inline Vector l2_project(const Mesh& mesh, const SparseMatrix& G, const ScalarField& f) {
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(G);
    if (ldlt.info() != Eigen::Success) throw NumericalError("mass matrix factorization failed");
    Vector c = ldlt.solve(load_vector(mesh, f));
    if (ldlt.info() != Eigen::Success) throw NumericalError("mass matrix solve failed");
    return c;
}

/// Initial coefficient vector (y, z): L2 projections of the initial data.
inline Vector l2_project_initial(const Mesh& mesh, const ScalarField& y0, const ScalarField& z0) {
    const SparseMatrix G = assemble_mass(mesh);
    const int n = mesh.num_interior();
    Vector c(2 * n);
    c.head(n) = l2_project(mesh, G, y0);
    c.tail(n) = l2_project(mesh, G, z0);
    return c;
}

/// Nodal interpolant at the interior vertices.
inline Vector interpolate(const Mesh& mesh, const ScalarField& f) {
    Vector c(mesh.num_interior());
    for (int i = 0; i < mesh.num_interior(); ++i) {
        const Point& p = mesh.vertices[mesh.interior_nodes[i]];
        c(i) = f(p.x, p.y);
    }
    return c;
}

inline Vector interpolate_initial(const Mesh& mesh, const ScalarField& y0, const ScalarField& z0) {
    const int n = mesh.num_interior();
    Vector c(2 * n);
    c.head(n) = interpolate(mesh, y0);
    c.tail(n) = interpolate(mesh, z0);
    return c;
}

}  // namespace stab
