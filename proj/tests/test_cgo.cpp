#include "cgo/cgo.hpp"

#include <gtest/gtest.h>

using namespace cgo;

namespace {

struct Scene {
    std::shared_ptr<const CrossSection> cs =
        std::make_shared<const CrossSection>(build_cross_section(ShapeSpec::disk(1.0)));
    GridPtr g;
    DirectionFrame f = build_frame({1, 0}, {0, 1}, 1.0, 1.0);
    explicit Scene(double h = 0.2, double L = 2.0) : g(build_grid(cs, h, h, L)) {}
};

}  // namespace

TEST(AxialCutoff, PlateauSupportAndDerivatives) {
    for (double rho : {8.0, 16.0, 64.0}) {
        AxialCutoff psi{rho};
        double s = std::pow(rho, 0.25);
        EXPECT_EQ(psi.value(0.0), 1.0);
        EXPECT_EQ(psi.value(0.999 * s), 1.0);
        EXPECT_EQ(psi.value(-0.999 * s), 1.0);
        EXPECT_EQ(psi.value(2.001 * s), 0.0);
        for (double x : {1.2 * s, -1.5 * s, 1.9 * s}) {
            double v, d1, d2, vp, vm, dd;
            psi.eval(x, v, d1, d2);
            const double e = 1e-5 * s;
            psi.eval(x + e, vp, dd, dd);
            psi.eval(x - e, vm, dd, dd);
            EXPECT_GT(v, 0.0);
            EXPECT_LT(v, 1.0);
            EXPECT_NEAR(d1, (vp - vm) / (2 * e), 1e-6);
            EXPECT_NEAR(d2, (vp - 2 * v + vm) / (e * e), 1e-3 * std::max(1.0, std::abs(d2)));
        }
    }
}

// On a plane wave c = exp(i k.x) the centred stencil acts by its symbol.
TEST(EnvelopeOperator, PlaneWaveSymbol) {
    Scene s(0.1);
    const auto& g = *s.g;
    Vec3 a(0.3, -0.2, 0.4);
    cplx qv(0.7, -0.1);
    VectorPotential A(s.g);
    ScalarField q(s.g);
    for (std::size_t n = 0; n < g.size(); ++n) {
        A.set(n, a);
        q[n] = qv;
    }
    Vec3 k(1.3, -0.4, 2.1);
    Vec3c kappa = cgo_kappa(s.f, 8.0, 1);
    std::vector<cplx> c(g.size());
    for (std::size_t n = 0; n < g.size(); ++n) c[n] = std::exp(cplx(0, k.dot(g.point(n))));
    const double h[3] = {g.hp, g.hp, g.h3};
    cplx lap{}, drift{}, mag{};
    for (int d = 0; d < 3; ++d) {
        lap += (2 * std::cos(k[d] * h[d]) - 2) / (h[d] * h[d]);
        cplx D = cplx(0, std::sin(k[d] * h[d]) / h[d]);
        drift += 2.0 * kappa[d] * D;
        mag += cplx(0, 2 * a[d]) * (D + kappa[d]);
    }
    cplx symbol = lap + drift + mag - a.squaredNorm() + qv;
    double worst = 0;
    for (std::size_t n : interior_nodes(g))
        worst = std::max(worst, std::abs(apply_envelope(g, A, q, kappa, c, n) - symbol * c[n]));
    EXPECT_LE(worst, 1e-9 * std::abs(symbol));
}

TEST(Cgo, KappaIsIsotropic) {
    Scene s;
    for (int sigma : {1, -1}) {
        Vec3c k = cgo_kappa(s.f, 16.0, sigma);
        EXPECT_NEAR(std::abs(k.x() * k.x() + k.y() * k.y() + k.z() * k.z()), 0.0, 1e-12);
    }
}

TEST(Cgo, RejectsBadArguments) {
    Scene s;
    VectorPotential A(s.g);
    ScalarField q(s.g);
    EXPECT_THROW(build_cgo(A, q, s.f, 8.0, 0), FieldError);
    EXPECT_THROW(build_cgo(A, q, s.f, 1.0, 1), FieldError);
    auto fast = build_frame({1, 0}, {0, 8}, 8.0, 1.0);
    EXPECT_THROW(build_cgo(A, q, fast, 8.0, 1), FieldError);
}

TEST(Cgo, FreeOperatorPrincipalPartIsCutoffTimesPlaneWave) {
    Scene s;
    const auto& g = *s.g;
    VectorPotential A(s.g);
    ScalarField q(s.g);
    const double rho = 8.0;
    AxialCutoff psi{rho};
    for (int sigma : {1, -1}) {
        auto u = build_cgo(A, q, s.f, rho, sigma);
        Vec3 xi = sigma == 1 ? s.f.xi : Vec3::Zero();
        double worst = 0;
        for (int m : g.mask_nodes2)
            for (int k = 0; k < g.nz; ++k) {
                std::size_t n = static_cast<std::size_t>(k) * g.plane() + m;
                Vec3 x = g.point(n);
                cplx expect = psi.value(x.z()) * std::exp(cplx(0, -xi.dot(x)));
                worst = std::max(worst, std::abs(u.principal[n] - expect));
            }
        EXPECT_LE(worst, 1e-14);
        EXPECT_LE(u.report.pde_residual, u.report.residual_estimate);
        EXPECT_LE(u.report.linear_residual, 1e-8);
    }
}

TEST(Cgo, MagneticSolutionSatisfiesTheEquation) {
    Scene s(0.2, 2.0);
    PotentialSpec p;
    p.bump = {Vec3(0.1, 0, 0), 0.6, 0.5};
    p.direction = Vec3(1, 1, 1).normalized();
    auto A = synth_potential(s.g, p);
    auto q = synth_scalar(s.g, Bump{Vec3::Zero(), 0.6, 1.0}, 0.5);
    auto u = build_cgo(A, q, s.f, 8.0, -1);
    EXPECT_LE(u.report.pde_residual, u.report.residual_estimate);
    EXPECT_GT(u.report.decay, 0.0);
    auto pde = verify_pde(u, A, q);
    EXPECT_DOUBLE_EQ(pde.residual, u.report.pde_residual);
}

TEST(Traces, LinearFunctionNormalDerivative) {
    Scene s(0.1);
    const auto& g = *s.g;
    VectorPotential A(s.g);
    Vec3 a(0.7, -1.3, 0.4);
    std::vector<std::size_t> band;
    for (int m : g.boundary_nodes2) band.push_back(static_cast<std::size_t>(g.nz / 2) * g.plane() + m);
    auto tr = traces([&](std::size_t n) { return cplx(a.dot(g.point(n)), 0.0); }, A, band);
    auto in = [&](std::size_t m, long off) { return g.mask2[static_cast<long>(m) + off] != 0; };
    std::size_t checked = 0;
    for (std::size_t t = 0; t < band.size(); ++t) {
        // a node with no in-mask neighbour along an axis has no difference there
        std::size_t m = g.boundary_nodes2[t];
        const long nx = static_cast<long>(g.nx);
        if (!(in(m, 1) || in(m, -1)) || !(in(m, nx) || in(m, -nx))) continue;
        ++checked;
        Vec2 nu = g.boundary_normals2[t];
        EXPECT_NEAR(std::abs(tr.normal_derivative[t] - cplx(a.x() * nu.x() + a.y() * nu.y())), 0.0, 1e-12);
        EXPECT_EQ(tr.magnetic_neumann[t], -tr.normal_derivative[t]);
    }
    EXPECT_GE(checked + 8, band.size());
}
