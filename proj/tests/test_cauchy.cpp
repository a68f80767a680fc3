#include "cgo/cauchy.hpp"

#include <gtest/gtest.h>

using namespace cgo;

namespace {

// A = sigma theta~ exp(-|x|^2 / a^2) (truncated far out), so that
// (sigma theta~ + i eta).A is the Gaussian itself.
VectorPotential gaussian_potential(GridPtr g, const DirectionFrame& f, int sigma, double a) {
    VectorPotential A(g);
    for (std::size_t n = 0; n < g->size(); ++n) {
        double v = std::exp(-g->point(n).squaredNorm() / (a * a));
        if (v < 1e-13) continue;
        A.set(n, sigma * v * f.theta_t);
    }
    return A;
}

// Closed form: with z = sigma theta~.x + i eta.x and t the coordinate along
// theta~ x eta, Phi = (-i/2) (a^2 / z) (1 - exp(-|z|^2/a^2)) exp(-t^2/a^2).
cplx gaussian_phase(const DirectionFrame& f, int sigma, double a, const Vec3& x) {
    cplx z(sigma * f.theta_t.dot(x), f.eta.dot(x));
    double t = f.theta_t.cross(f.eta).dot(x);
    return cplx(0, -0.5) * (a * a / z) * (1.0 - std::exp(-std::norm(z) / (a * a))) * std::exp(-t * t / (a * a));
}

const std::vector<Vec3> kPoints = {{0.2, 0.1, 0.3}, {0.5, -0.3, 0.05}, {-0.1, 0.2, 0.6}, {0.6, 0.5, -0.4}, {-0.4, -0.2, -0.1}};

double max_error(double h, int sigma) {
    auto cs = std::make_shared<const CrossSection>(build_cross_section(ShapeSpec::disk(1.0)));
    auto g = build_grid(cs, h, h, 2.0);
    auto f = build_frame({1, 0}, {0, 1}, 1.0, cs->R);
    const double a = 0.3;
    CauchyPhase ev(gaussian_potential(g, f, sigma, a), f, sigma);
    double err = 0, scale = 0;
    for (const auto& x : kPoints) {
        cplx expect = gaussian_phase(f, sigma, a, x);
        err = std::max(err, std::abs(ev(x) - expect));
        scale = std::max(scale, std::abs(expect));
    }
    return err / scale;
}

}  // namespace

TEST(CauchyPhase, MatchesGaussianClosedFormAndConverges) {
    for (int sigma : {1, -1}) {
        double coarse = max_error(0.1, sigma), fine = max_error(0.05, sigma);
        EXPECT_LE(coarse, 2e-2) << "sigma " << sigma;
        EXPECT_GE(std::log2(coarse / fine), 1.5) << "sigma " << sigma;
    }
}

TEST(CauchyPhase, ZeroPotentialGivesZeroPhase) {
    auto cs = std::make_shared<const CrossSection>(build_cross_section(ShapeSpec::disk(1.0)));
    auto g = build_grid(cs, 0.2, 0.2, 2.0);
    auto f = build_frame({1, 0}, {0, 1}, 1.0, cs->R);
    CauchyPhase ev(VectorPotential(g), f, 1);
    EXPECT_TRUE(ev.zero());
    EXPECT_EQ(ev(Vec3(0.1, 0.2, 0.3)), cplx{});
    auto pd = phase_decay(ev, Vec3::Zero(), 4 * f.R1);
    EXPECT_EQ(pd.status, "zero field");
    EXPECT_THROW(CauchyPhase(VectorPotential(g), f, 0), FieldError);
}

TEST(CauchyPhase, DecaysLikeInverseDistance) {
    auto cs = std::make_shared<const CrossSection>(build_cross_section(ShapeSpec::disk(1.0)));
    auto g = build_grid(cs, 0.1, 0.1, 2.0);
    auto f = build_frame({1, 0}, {0, 1}, 1.0, cs->R);
    CauchyPhase ev(gaussian_potential(g, f, 1, 0.3), f, 1);
    auto pd = phase_decay(ev, Vec3::Zero(), 4 * f.R1);
    EXPECT_EQ(pd.status, "ok");
    EXPECT_LE(pd.slope, -0.9);
    EXPECT_GE(pd.slope, -1.1);
    EXPECT_THROW(phase_decay(ev, Vec3::Zero(), f.R1), FieldError);
}

TEST(CauchyPhase, DbarResidualOfExactDataConverges) {
    auto cs = std::make_shared<const CrossSection>(build_cross_section(ShapeSpec::disk(1.0)));
    auto f = build_frame({1, 0}, {0, 1}, 1.0, cs->R);
    double sup[2];
    int i = 0;
    for (double h : {0.1, 0.05}) {
        auto g = build_grid(cs, h, h, 2.0);
        auto A = gaussian_potential(g, f, 1, 0.3);
        CauchyPhase ev(A, f, 1);
        std::vector<std::size_t> nodes;
        for (std::size_t n = 0; n < g->size(); ++n)
            if (g->point(n).norm() < 0.5) nodes.push_back(n);
        auto r = dbar_residual(ev, A, A, nodes, h);
        EXPECT_EQ(r.mollification_error, 0.0);
        sup[i++] = r.sup_mollified;
    }
    // residual relative to |grad Phi| ~ 1 on the support, second order in h
    EXPECT_LE(sup[0], 0.15);
    EXPECT_GE(std::log2(sup[0] / sup[1]), 1.5);
}
