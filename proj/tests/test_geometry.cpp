#include "cgo/geometry.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace cgo;

namespace {

std::shared_ptr<const CrossSection> unit_disk() {
    return std::make_shared<const CrossSection>(build_cross_section(ShapeSpec::disk(1.0)));
}

double orthogonality_defect(const DirectionFrame& f) {
    return std::max({std::abs(f.theta_t.dot(f.xi)), std::abs(f.theta_t.dot(f.eta)), std::abs(f.eta.dot(f.xi)),
                     std::abs(f.eta.norm() - 1)});
}

}  // namespace

TEST(CrossSection, DiskPerimeterMatchesInscribedPolygon) {
    auto cs = unit_disk();
    ASSERT_EQ(cs->segment_count(), 64u);
    double perimeter = 0;
    for (double l : cs->lengths) perimeter += l;
    EXPECT_NEAR(perimeter, 2 * 64 * std::sin(pi / 64), 1e-12);
    EXPECT_NEAR(cs->R, 1.0, 1e-12);
}

TEST(CrossSection, NormalsAreOutwardUnitVectors) {
    auto cs = unit_disk();
    for (std::size_t i = 0; i < cs->segment_count(); ++i) {
        EXPECT_NEAR(cs->normals[i].norm(), 1.0, 1e-14);
        EXPECT_GT(cs->normals[i].dot(cs->midpoints[i]), 0.0);
        Vec2 edge = cs->vertices[(i + 1) % cs->segment_count()] - cs->vertices[i];
        EXPECT_NEAR(edge.dot(cs->normals[i]), 0.0, 1e-14);
    }
}

TEST(CrossSection, RejectsSelfIntersectingPolygon) {
    EXPECT_THROW(build_cross_section(ShapeSpec::polygon({{0, 0}, {1, 1}, {1, 0}, {0, 1}})), GeometryError);
}

TEST(CrossSection, ClockwiseSquareIsRejected) {
    EXPECT_THROW(build_cross_section(ShapeSpec::polygon({{-1, -1}, {-1, 1}, {1, 1}, {1, -1}})), GeometryError);
    auto cs = build_cross_section(ShapeSpec::polygon({{-1, -1}, {1, -1}, {1, 1}, {-1, 1}}));
    for (std::size_t i = 0; i < cs.segment_count(); ++i) EXPECT_GT(cs.normals[i].dot(cs.midpoints[i]), 0.0);
    EXPECT_TRUE(cs.contains({0.5, -0.5}));
    EXPECT_FALSE(cs.contains({1.5, 0}));
}

TEST(Grid, AxialNodeCountAndMask) {
    auto g = build_grid(unit_disk(), 0.1, 0.1, 2.0);
    EXPECT_EQ(g->nz, 41);
    EXPECT_DOUBLE_EQ(g->z(0), -2.0);
    EXPECT_NEAR(g->z(g->nz - 1), 2.0, 1e-12);
    for (int m : g->mask_nodes2) {
        Vec2 p(g->x(m % g->nx), g->y(m / g->nx));
        EXPECT_LE(p.norm(), 1.0 + 1e-12);
    }
}

TEST(Frame, HandDerivedEta) {
    auto f = build_frame({1, 0}, {0, 1}, 1.0, 1.0);
    EXPECT_NEAR(f.eta.x(), 0.0, 1e-15);
    EXPECT_NEAR(f.eta.y(), 1 / std::sqrt(2.0), 1e-15);
    EXPECT_NEAR(f.eta.z(), -1 / std::sqrt(2.0), 1e-15);
}

TEST(Frame, SecondHandDerivedEta) {
    // theta = (0,1), xi' = (-2,0), xi3 = 1: eta ~ (-2, 0, -4) / |.|
    auto f = build_frame({0, 1}, {-2, 0}, 1.0, 1.0);
    Vec3 e = Vec3(-2, 0, -4).normalized();
    EXPECT_NEAR((f.eta - e).norm(), 0.0, 1e-15);
}

TEST(Frame, RandomFramesAreOrthonormal) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> U(0, 1);
    double worst = 0;
    for (int i = 0; i < 1000; ++i) {
        double a = 2 * pi * U(rng);
        Vec2 th(std::cos(a), std::sin(a));
        double m = 0.05 + 5 * U(rng), z = (U(rng) < 0.5 ? -1 : 1) * (0.05 + 5 * U(rng));
        worst = std::max(worst, orthogonality_defect(build_frame(th, m * Vec2(-th.y(), th.x()), z, 1.0)));
    }
    EXPECT_LE(worst, 1e-12);
}

TEST(Frame, Rejections) {
    EXPECT_THROW(build_frame({1, 0}, {0, 1}, 0.0, 1.0), GeometryError);
    EXPECT_THROW(build_frame({1, 0}, {0.5, 1}, 1.0, 1.0), GeometryError);
    EXPECT_THROW(build_frame({2, 0}, {0, 1}, 1.0, 1.0), GeometryError);
    EXPECT_THROW(build_frame({1, 0}, {0, 0}, 1.0, 1.0), GeometryError);
}

TEST(Frame, WindowRadius) {
    auto f = build_frame({1, 0}, {0, 1}, 1.0, 1.0);
    EXPECT_NEAR(f.R1, 2 * std::sqrt(2.0) * (3 + 3), 1e-12);
}

TEST(Partition, SplitsEverySegmentOnce) {
    auto cs = unit_disk();
    Vec2 th(std::cos(0.3), std::sin(0.3));
    for (double eps : {0.0, 0.2, 0.7}) {
        auto p = boundary_partition(*cs, th, eps);
        EXPECT_EQ(p.illuminated.size() + p.shadowed.size(), cs->segment_count());
        for (auto i : p.illuminated) EXPECT_GT(cs->normals[i].dot(th), eps);
        for (auto i : p.shadowed) EXPECT_LE(cs->normals[i].dot(th), eps);
    }
    EXPECT_THROW(boundary_partition(*cs, th, 1.0), GeometryError);
}
