#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "stab/linalg.hpp"

namespace stab {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

enum class MeshFamily {
    /// (2^L)^2 grid squares, each cut by the lower-left to upper-right diagonal.
    diagonal,
    /// Unit square cut by both diagonals (4 triangles around the center),
    /// then refined uniformly L-1 times.
    crisscross,
    imported,
};

/// Conforming P1 triangulation. Immutable once built; all queries are const.
struct Mesh {
    std::vector<Point> vertices;
    std::vector<std::array<int, 3>> triangles;  // counter-clockwise
    std::vector<char> on_boundary;              // per vertex
    std::vector<int> interior_nodes;            // vertex ids of unknowns, ascending
    std::vector<int> interior_index;            // vertex id -> unknown index, or -1
    double h = 0.0;
    int level = 0;
    MeshFamily family = MeshFamily::imported;

    [[nodiscard]] int num_vertices() const { return static_cast<int>(vertices.size()); }
    [[nodiscard]] int num_triangles() const { return static_cast<int>(triangles.size()); }
    [[nodiscard]] int num_interior() const { return static_cast<int>(interior_nodes.size()); }

    [[nodiscard]] double signed_area(int t) const {
        const auto& [a, b, c] = triangles[t];
        const Point& p = vertices[a];
        const Point& q = vertices[b];
        const Point& r = vertices[c];
        return 0.5 * ((q.x - p.x) * (r.y - p.y) - (r.x - p.x) * (q.y - p.y));
    }

    [[nodiscard]] Point barycenter(int t) const {
        const auto& tri = triangles[t];
        Point c;
        for (int v : tri) {
            c.x += vertices[v].x / 3.0;
            c.y += vertices[v].y / 3.0;
        }
        return c;
    }

    [[nodiscard]] double total_area() const {
        double s = 0.0;
        for (int t = 0; t < num_triangles(); ++t) s += signed_area(t);
        return s;
    }

    [[nodiscard]] double max_diameter() const {
        double d = 0.0;
        for (const auto& tri : triangles)
            for (int i = 0; i < 3; ++i) {
                const Point& p = vertices[tri[i]];
                const Point& q = vertices[tri[(i + 1) % 3]];
                d = std::max(d, std::hypot(p.x - q.x, p.y - q.y));
            }
        return d;
    }

    /// Scatter interior coefficients into a full per-vertex vector (zero on the boundary).
    [[nodiscard]] Vector to_vertex_values(const Vector& interior_coeffs) const {
        require(interior_coeffs.size() == num_interior(), "coefficient length does not match interior count");
        Vector full = Vector::Zero(num_vertices());
        for (int i = 0; i < num_interior(); ++i)
            full(interior_nodes[i]) = interior_coeffs(i);
        return full;
    }
};

/// The open control set realized as a union of triangles.
struct ControlRegion {
    std::vector<int> element_ids;  // ascending
    bool is_full_domain = false;

    static ControlRegion full_domain(const Mesh& mesh) {
        ControlRegion r;
        r.element_ids.resize(mesh.num_triangles());
        for (int t = 0; t < mesh.num_triangles(); ++t) r.element_ids[t] = t;
        r.is_full_domain = true;
        return r;
    }

    /// Triangles whose barycenter lies in [x0,x1] x [y0,y1].
    static ControlRegion rectangle(const Mesh& mesh, double x0, double x1, double y0, double y1) {
        ControlRegion r;
        for (int t = 0; t < mesh.num_triangles(); ++t) {
            const Point c = mesh.barycenter(t);
            if (c.x >= x0 && c.x <= x1 && c.y >= y0 && c.y <= y1) r.element_ids.push_back(t);
        }
        r.is_full_domain = static_cast<int>(r.element_ids.size()) == mesh.num_triangles();
        return r;
    }

    static ControlRegion from_elements(const Mesh& mesh, std::vector<int> ids) {
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
        for (int id : ids) require(id >= 0 && id < mesh.num_triangles(), "control region element id out of range");
        ControlRegion r;
        r.is_full_domain = static_cast<int>(ids.size()) == mesh.num_triangles();
        r.element_ids = std::move(ids);
        return r;
    }
};

namespace detail {

inline bool on_unit_square_boundary(const Point& p) {
    constexpr double tol = 1e-12;
    return std::abs(p.x) < tol || std::abs(p.x - 1.0) < tol || std::abs(p.y) < tol || std::abs(p.y - 1.0) < tol;
}

inline void index_interior(Mesh& m) {
    m.interior_nodes.clear();
    m.interior_index.assign(m.vertices.size(), -1);
    for (int v = 0; v < m.num_vertices(); ++v) {
        if (!m.on_boundary[v]) {
            m.interior_index[v] = m.num_interior();
            m.interior_nodes.push_back(v);
        }
    }
}

using Edge = std::pair<int, int>;

inline Edge make_edge(int a, int b) { return a < b ? Edge{a, b} : Edge{b, a}; }

/// Edges with exactly one adjacent triangle.
inline std::set<Edge> boundary_edges(const Mesh& m) {
    std::map<Edge, int> count;
    for (const auto& t : m.triangles)
        for (int i = 0; i < 3; ++i) ++count[make_edge(t[i], t[(i + 1) % 3])];
    std::set<Edge> out;
    for (const auto& [e, c] : count)
        if (c == 1) out.insert(e);
    return out;
}

/// Exact-coordinate key; nested dyadic meshes reproduce coordinates bitwise,
/// imported meshes are matched after rounding to 1e-12.
struct PointKey {
    long long x, y;
    bool operator<(const PointKey& o) const { return x < o.x || (x == o.x && y < o.y); }
};

inline PointKey key_of(const Point& p) {
    return {std::llround(p.x * 1e12), std::llround(p.y * 1e12)};
}

}  // namespace detail

/// Uniform grid of (2^level+1)^2 vertices with every square split along
/// the lower-left to upper-right diagonal. h = 2^-level.
inline Mesh build_unit_square_mesh(int level) {
    require(level >= 1, "mesh level must be >= 1 (level 0 has no interior nodes)");
    require(level <= 12, "mesh level too large");
    const int n = 1 << level;
    Mesh m;
    m.level = level;
    m.family = MeshFamily::diagonal;
    m.h = 1.0 / n;
    m.vertices.reserve((n + 1) * (n + 1));
    for (int j = 0; j <= n; ++j)
        for (int i = 0; i <= n; ++i)
            m.vertices.push_back({static_cast<double>(i) / n, static_cast<double>(j) / n});
    auto id = [n](int i, int j) { return j * (n + 1) + i; };
    m.triangles.reserve(2 * n * n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            const int a = id(i, j), b = id(i + 1, j), c = id(i + 1, j + 1), d = id(i, j + 1);
            m.triangles.push_back({a, b, c});
            m.triangles.push_back({a, c, d});
        }
    m.on_boundary.resize(m.vertices.size());
    for (std::size_t v = 0; v < m.vertices.size(); ++v)
        m.on_boundary[v] = detail::on_unit_square_boundary(m.vertices[v]) ? 1 : 0;
    detail::index_interior(m);
    return m;
}

/// Split every triangle into four congruent children through its edge
/// midpoints. Coarse vertices keep their indices; midpoints are appended.
inline Mesh refine_uniform(const Mesh& coarse) {
    Mesh f;
    f.level = coarse.level + 1;
    f.family = coarse.family;
    f.vertices = coarse.vertices;
    f.on_boundary = coarse.on_boundary;
    const auto bnd = detail::boundary_edges(coarse);
    std::map<detail::Edge, int> midpoint;
    auto mid = [&](int a, int b) {
        const auto e = detail::make_edge(a, b);
        auto it = midpoint.find(e);
        if (it != midpoint.end()) return it->second;
        const Point& p = coarse.vertices[a];
        const Point& q = coarse.vertices[b];
        const int id = static_cast<int>(f.vertices.size());
        f.vertices.push_back({0.5 * (p.x + q.x), 0.5 * (p.y + q.y)});
        f.on_boundary.push_back(bnd.count(e) ? 1 : 0);
        midpoint.emplace(e, id);
        return id;
    };
    f.triangles.reserve(coarse.triangles.size() * 4);
    for (const auto& [a, b, c] : coarse.triangles) {
        const int ab = mid(a, b), bc = mid(b, c), ca = mid(c, a);
        f.triangles.push_back({a, ab, ca});
        f.triangles.push_back({ab, b, bc});
        f.triangles.push_back({ca, bc, c});
        f.triangles.push_back({ab, bc, ca});
    }
    f.h = coarse.family == MeshFamily::imported ? f.max_diameter() : 0.5 * coarse.h;
    detail::index_interior(f);
    return f;
}

/// Unit square cut by both diagonals into four triangles meeting at the
/// center (level 1), refined uniformly level-1 times. Interior count is
/// (2^(level-1)-1)^2 + 4^(level-1); h is reported as 2^-level.
inline Mesh build_crisscross_mesh(int level) {
    require(level >= 1, "mesh level must be >= 1");
    require(level <= 12, "mesh level too large");
    Mesh m;
    m.level = 1;
    m.family = MeshFamily::crisscross;
    m.h = 0.5;
    m.vertices = {{0.0, 0.0}, {1.0, 0.0}, {1.0, 1.0}, {0.0, 1.0}, {0.5, 0.5}};
    m.triangles = {{0, 1, 4}, {1, 2, 4}, {2, 3, 4}, {3, 0, 4}};
    m.on_boundary = {1, 1, 1, 1, 0};
    detail::index_interior(m);
    for (int l = 1; l < level; ++l) m = refine_uniform(m);
    return m;
}

inline Mesh build_mesh(MeshFamily family, int level) {
    switch (family) {
        case MeshFamily::diagonal: return build_unit_square_mesh(level);
        case MeshFamily::crisscross: return build_crisscross_mesh(level);
        case MeshFamily::imported: break;
    }
    throw InvalidInput("imported meshes cannot be built by level");
}

/// P1 interpolation from the interior unknowns of `coarse` to those of
/// `fine = refine_uniform(coarse)` (or any mesh with the same nested vertex
/// set). Rows index fine interior nodes, columns coarse interior nodes.
inline SparseMatrix prolongation(const Mesh& coarse, const Mesh& fine) {
    std::map<detail::PointKey, int> fine_at;
    for (int v = 0; v < fine.num_vertices(); ++v) fine_at.emplace(detail::key_of(fine.vertices[v]), v);

    // Each fine vertex is either a coarse vertex or a coarse edge midpoint.
    std::vector<std::array<int, 2>> parents(fine.num_vertices(), {-1, -1});
    for (int v = 0; v < coarse.num_vertices(); ++v) {
        auto it = fine_at.find(detail::key_of(coarse.vertices[v]));
        if (it == fine_at.end()) throw InvalidInput("prolongation: meshes are not nested (coarse vertex missing)");
        parents[it->second] = {v, v};
    }
    for (const auto& t : coarse.triangles)
        for (int i = 0; i < 3; ++i) {
            const int a = t[i], b = t[(i + 1) % 3];
            const Point& p = coarse.vertices[a];
            const Point& q = coarse.vertices[b];
            auto it = fine_at.find(detail::key_of({0.5 * (p.x + q.x), 0.5 * (p.y + q.y)}));
            if (it == fine_at.end()) throw InvalidInput("prolongation: meshes are not nested (edge midpoint missing)");
            parents[it->second] = {a, b};
        }
    if (fine.num_triangles() != 4 * coarse.num_triangles())
        throw InvalidInput("prolongation: fine mesh is not a uniform refinement of the coarse mesh");

    std::vector<Triplet> t;
    for (int fi = 0; fi < fine.num_interior(); ++fi) {
        const int v = fine.interior_nodes[fi];
        const auto [a, b] = parents[v];
        if (a < 0) throw InvalidInput("prolongation: fine vertex has no coarse parent");
        if (a == b) {
            const int ci = coarse.interior_index[a];
            if (ci >= 0) t.emplace_back(fi, ci, 1.0);
            continue;
        }
        for (int p : {a, b}) {
            const int ci = coarse.interior_index[p];
            if (ci >= 0) t.emplace_back(fi, ci, 0.5);
        }
    }
    SparseMatrix out(fine.num_interior(), coarse.num_interior());
    out.setFromTriplets(t.begin(), t.end());
    return out;
}

/// Text format: `nv nt`, then nv lines `x y boundary_flag`, then nt lines
/// `i j k` with 0-based vertex ids. Clockwise triangles are reoriented.
inline Mesh parse_mesh(std::istream& is) {
    Mesh m;
    long long nv = 0, nt = 0;
    if (!(is >> nv >> nt) || nv < 3 || nt < 1) throw InvalidInput("mesh file: bad header");
    m.vertices.resize(nv);
    m.on_boundary.resize(nv);
    for (long long v = 0; v < nv; ++v) {
        int flag = 0;
        Point& p = m.vertices[v];
        if (!(is >> p.x >> p.y >> flag)) throw InvalidInput("mesh file: truncated vertex block");
        if (flag != 0 && flag != 1) throw InvalidInput("mesh file: boundary flag must be 0 or 1");
        if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw InvalidInput("mesh file: non-finite coordinate");
        m.on_boundary[v] = static_cast<char>(flag);
    }
    std::set<std::array<int, 3>> seen;
    std::vector<char> used(nv, 0);
    m.triangles.resize(nt);
    for (long long t = 0; t < nt; ++t) {
        long long i = 0, j = 0, k = 0;
        if (!(is >> i >> j >> k)) throw InvalidInput("mesh file: truncated triangle block");
        for (long long idx : {i, j, k})
            if (idx < 0 || idx >= nv) throw InvalidInput("mesh file: dangling vertex index " + std::to_string(idx));
        if (i == j || j == k || i == k) throw InvalidInput("mesh file: degenerate triangle");
        std::array<int, 3> tri{static_cast<int>(i), static_cast<int>(j), static_cast<int>(k)};
        auto sorted = tri;
        std::sort(sorted.begin(), sorted.end());
        if (!seen.insert(sorted).second) throw InvalidInput("mesh file: repeated triangle");
        m.triangles[t] = tri;
        const double a = m.signed_area(static_cast<int>(t));
        if (std::abs(a) <= 1e-14) throw InvalidInput("mesh file: triangle with non-positive area");
        if (a < 0) std::swap(m.triangles[t][1], m.triangles[t][2]);
        for (int v : tri) used[v] = 1;
    }
    std::string extra;
    if (is >> extra) throw InvalidInput("mesh file: trailing content");
    if (std::find(used.begin(), used.end(), 0) != used.end())
        throw InvalidInput("mesh file: vertex not referenced by any triangle");
    detail::index_interior(m);
    if (m.num_interior() == 0) throw InvalidInput("mesh file: no interior vertices");
    m.h = m.max_diameter();
    m.family = MeshFamily::imported;
    return m;
}

inline Mesh load_mesh(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw InvalidInput("cannot open mesh file " + path);
    return parse_mesh(is);
}

inline void save_mesh(const Mesh& m, std::ostream& os) {
    os << m.num_vertices() << ' ' << m.num_triangles() << '\n' << std::setprecision(17);
    for (int v = 0; v < m.num_vertices(); ++v)
        os << m.vertices[v].x << ' ' << m.vertices[v].y << ' '
           << static_cast<int>(m.on_boundary[v]) << '\n';
    for (const auto& [a, b, c] : m.triangles) os << a << ' ' << b << ' ' << c << '\n';
}

}  // namespace stab
