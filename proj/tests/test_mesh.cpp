#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <utility>

#include <gtest/gtest.h>

#include "stab/mesh.hpp"

using namespace stab;

namespace {

std::set<std::pair<double, double>> vertex_set(const Mesh& m) {
    std::set<std::pair<double, double>> s;
    for (const auto& p : m.vertices) s.emplace(p.x, p.y);
    return s;
}

int interior_id_at(const Mesh& m, double x, double y) {
    for (int i = 0; i < m.num_interior(); ++i) {
        const Point& p = m.vertices[m.interior_nodes[i]];
        if (std::abs(p.x - x) < 1e-14 && std::abs(p.y - y) < 1e-14) return i;
    }
    return -1;
}

}  // namespace

TEST(DiagonalMesh, CountsAtLevelTwo) {
    const Mesh m = build_unit_square_mesh(2);
    EXPECT_EQ(m.num_vertices(), 25);
    EXPECT_EQ(m.num_triangles(), 32);
    EXPECT_EQ(m.num_interior(), 9);
    EXPECT_DOUBLE_EQ(m.h, 0.25);
}

TEST(DiagonalMesh, LevelOneHasOnlyTheCenter) {
    const Mesh m = build_unit_square_mesh(1);
    ASSERT_EQ(m.num_interior(), 1);
    const Point& c = m.vertices[m.interior_nodes[0]];
    EXPECT_DOUBLE_EQ(c.x, 0.5);
    EXPECT_DOUBLE_EQ(c.y, 0.5);
}

TEST(DiagonalMesh, LevelSix) {
    const Mesh m = build_unit_square_mesh(6);
    EXPECT_EQ(m.num_interior(), 63 * 63);
    EXPECT_DOUBLE_EQ(m.h, 1.0 / 64);
}

TEST(DiagonalMesh, RejectsLevelZero) { EXPECT_THROW(build_unit_square_mesh(0), InvalidInput); }

TEST(DiagonalMesh, AreasArePositiveAndSumToOne) {
    const Mesh m = build_unit_square_mesh(4);
    double total = 0.0;
    for (int t = 0; t < m.num_triangles(); ++t) {
        EXPECT_GT(m.signed_area(t), 0.0);
        total += m.signed_area(t);
    }
    EXPECT_NEAR(total, 1.0, 1e-14);
}

TEST(CrisscrossMesh, Counts) {
    for (int level = 1; level <= 6; ++level) {
        const Mesh m = build_crisscross_mesh(level);
        const int a = (1 << (level - 1)) - 1;
        EXPECT_EQ(m.num_triangles(), 4 << (2 * (level - 1)));
        EXPECT_EQ(m.num_interior(), a * a + (1 << (2 * (level - 1)))) << level;
        EXPECT_DOUBLE_EQ(m.h, std::ldexp(1.0, -level));
    }
}

TEST(CrisscrossMesh, SymmetricUnderReflections) {
    const Mesh m = build_crisscross_mesh(3);
    const auto s = vertex_set(m);
    for (const auto& [x, y] : s) {
        EXPECT_TRUE(s.count({1.0 - x, y}));
        EXPECT_TRUE(s.count({y, x}));
    }
}

TEST(Refine, QuadruplesTriangles) {
    Mesh m = build_unit_square_mesh(2);
    const Mesh f = refine_uniform(m);
    EXPECT_EQ(f.num_triangles(), 128);
    for (int i = 0; i < 3; ++i) {
        const Mesh g = refine_uniform(m);
        EXPECT_EQ(g.num_triangles(), 4 * m.num_triangles());
        m = g;
    }
}

TEST(Refine, NestedVertices) {
    const Mesh c = build_unit_square_mesh(2);
    const Mesh f = refine_uniform(c);
    for (int v = 0; v < c.num_vertices(); ++v) {
        EXPECT_NEAR(f.vertices[v].x, c.vertices[v].x, 1e-14);
        EXPECT_NEAR(f.vertices[v].y, c.vertices[v].y, 1e-14);
    }
    const auto fine = vertex_set(build_unit_square_mesh(3));
    EXPECT_EQ(vertex_set(f), fine);
}

TEST(Refine, ChildrenKeepOrientation) {
    const Mesh f = refine_uniform(refine_uniform(build_crisscross_mesh(1)));
    for (int t = 0; t < f.num_triangles(); ++t) EXPECT_GT(f.signed_area(t), 0.0);
}

TEST(Prolongation, ConstantAwayFromBoundary) {
    const Mesh c = build_unit_square_mesh(3);
    const Mesh f = refine_uniform(c);
    const SparseMatrix p = prolongation(c, f);
    const Vector fine = p * Vector::Ones(c.num_interior());
    for (int i = 0; i < f.num_interior(); ++i) {
        const Point& q = f.vertices[f.interior_nodes[i]];
        const bool deep = q.x > 0.2 && q.x < 0.8 && q.y > 0.2 && q.y < 0.8;
        if (deep) {
            EXPECT_DOUBLE_EQ(fine(i), 1.0);
        }
    }
}

TEST(Prolongation, HatFunction) {
    const Mesh c = build_unit_square_mesh(2);
    const Mesh f = refine_uniform(c);
    const int node = interior_id_at(c, 0.5, 0.5);
    ASSERT_GE(node, 0);
    Vector hat = Vector::Zero(c.num_interior());
    hat(node) = 1.0;
    const Vector fine = prolongation(c, f) * hat;
    EXPECT_DOUBLE_EQ(fine(interior_id_at(f, 0.5, 0.5)), 1.0);
    int halves = 0;
    for (int i = 0; i < fine.size(); ++i) {
        if (fine(i) == 0.5) ++halves;
        else if (fine(i) != 0.0) {
            EXPECT_DOUBLE_EQ(fine(i), 1.0);
        }
    }
    EXPECT_EQ(halves, 6);
}

TEST(Prolongation, LinearFunction) {
    const Mesh c = build_crisscross_mesh(3);
    const Mesh f = refine_uniform(c);
    Vector xs(c.num_interior());
    for (int i = 0; i < c.num_interior(); ++i) xs(i) = c.vertices[c.interior_nodes[i]].x;
    const Vector fine = prolongation(c, f) * xs;
    // Fine nodes whose coarse parents are both interior see the exact x.
    for (int i = 0; i < f.num_interior(); ++i) {
        const Point& q = f.vertices[f.interior_nodes[i]];
        bool both_interior = true;
        for (const auto& t : c.triangles)
            for (int k = 0; k < 3; ++k) {
                const Point& a = c.vertices[t[k]];
                const Point& b = c.vertices[t[(k + 1) % 3]];
                if (std::abs(0.5 * (a.x + b.x) - q.x) < 1e-14 && std::abs(0.5 * (a.y + b.y) - q.y) < 1e-14)
                    both_interior = both_interior && !c.on_boundary[t[k]] && !c.on_boundary[t[(k + 1) % 3]];
            }
        if (both_interior) {
            EXPECT_NEAR(fine(i), q.x, 1e-14);
        }
    }
}

TEST(Prolongation, RejectsNonNestedMeshes) {
    const Mesh c = build_crisscross_mesh(2);
    const Mesh f = build_unit_square_mesh(3);
    EXPECT_THROW(prolongation(c, f), InvalidInput);
}

TEST(MeshFile, LevelOneUpToOrdering) {
    // Same mesh as build_unit_square_mesh(1), vertices listed in reverse.
    std::istringstream is(R"(9 8
1 1 1
0.5 1 1
0 1 1
1 0.5 1
0.5 0.5 0
0 0.5 1
1 0 1
0.5 0 1
0 0 1
8 7 4
8 4 5
7 6 3
7 3 4
5 4 1
5 1 2
4 3 0
4 0 1
)");
    const Mesh m = parse_mesh(is);
    const Mesh ref = build_unit_square_mesh(1);
    EXPECT_EQ(vertex_set(m), vertex_set(ref));
    EXPECT_EQ(m.num_triangles(), ref.num_triangles());
    EXPECT_EQ(m.num_interior(), 1);
    double area = 0.0;
    for (int t = 0; t < m.num_triangles(); ++t) area += m.signed_area(t);
    EXPECT_NEAR(area, 1.0, 1e-15);
}

TEST(MeshFile, RepeatedTriangle) {
    std::istringstream is("4 3\n0 0 1\n1 0 1\n0 1 1\n0.3 0.3 0\n0 1 3\n1 2 3\n3 1 0\n");
    EXPECT_THROW(parse_mesh(is), InvalidInput);
}

TEST(MeshFile, ClockwiseIsReoriented) {
    std::istringstream is("4 3\n0 0 1\n1 0 1\n0 1 1\n0.3 0.3 0\n0 3 1\n1 3 2\n2 3 0\n");
    const Mesh m = parse_mesh(is);
    for (int t = 0; t < m.num_triangles(); ++t) EXPECT_GT(m.signed_area(t), 0.0);
}

TEST(MeshFile, DanglingIndex) {
    std::istringstream is("3 1\n0 0 1\n1 0 1\n0 1 0\n0 1 5\n");
    EXPECT_THROW(parse_mesh(is), InvalidInput);
}

TEST(MeshFile, RoundTrip) {
    const Mesh m = build_crisscross_mesh(3);
    std::stringstream ss;
    save_mesh(m, ss);
    const Mesh back = parse_mesh(ss);
    EXPECT_EQ(back.num_interior(), m.num_interior());
    EXPECT_EQ(back.triangles, m.triangles);
    EXPECT_EQ(back.interior_nodes, m.interior_nodes);
}

TEST(ControlRegionTest, RectangleByBarycenter) {
    const Mesh m = build_unit_square_mesh(3);
    const ControlRegion left = ControlRegion::rectangle(m, 0.0, 0.5, 0.0, 1.0);
    EXPECT_EQ(static_cast<int>(left.element_ids.size()), m.num_triangles() / 2);
    EXPECT_FALSE(left.is_full_domain);
    EXPECT_TRUE(ControlRegion::rectangle(m, 0, 1, 0, 1).is_full_domain);
    EXPECT_THROW(ControlRegion::from_elements(m, {-1}), InvalidInput);
}
