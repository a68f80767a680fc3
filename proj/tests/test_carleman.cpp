#include "cgo/carleman.hpp"

#include <gtest/gtest.h>

using namespace cgo;

namespace {

struct Scene {
    std::shared_ptr<const CrossSection> cs =
        std::make_shared<const CrossSection>(build_cross_section(ShapeSpec::disk(1.0)));
    GridPtr g;
    VectorPotential A;
    ScalarField q;
    explicit Scene(double h = 0.2) : g(build_grid(cs, h, h, 2.0)), A(g), q(g) {
        PotentialSpec p;
        p.bump = {Vec3(0.1, 0, 0), 0.6, 0.1};
        p.direction = Vec3(1, 1, 1).normalized();
        A = synth_potential(g, p);
        q = synth_scalar(g, Bump{Vec3::Zero(), 0.6, 1.0}, 0.5);
    }
};

void expect_same_rows(const CarlemanReport& a, const CarlemanReport& b) {
    ASSERT_EQ(a.rows.size(), b.rows.size());
    for (std::size_t m = 0; m < a.rows.size(); ++m) {
        EXPECT_EQ(a.rows[m].lhs, b.rows[m].lhs);
        EXPECT_EQ(a.rows[m].rhs, b.rows[m].rhs);
    }
    EXPECT_EQ(a.fitted_C, b.fitted_C);
}

}  // namespace

TEST(Weight, GradientAndLaplacian) {
    auto w = make_weight(7.0, 16.0, Vec2(std::cos(0.4), std::sin(0.4)), -1);
    Vec3 x(0.3, -0.2, 0.9);
    const double e = 1e-5;
    Vec3 fd;
    double lap = 0;
    for (int a = 0; a < 3; ++a) {
        Vec3 d = Vec3::Zero();
        d[a] = e;
        fd[a] = (w.value(x + d) - w.value(x - d)) / (2 * e);
        lap += (w.value(x + d) - 2 * w.value(x) + w.value(x - d)) / (e * e);
    }
    EXPECT_LE((fd - w.gradient(x)).norm(), 1e-8);
    EXPECT_NEAR(lap, w.laplacian(), 1e-3);
    EXPECT_THROW(make_weight(20.0, 16.0, Vec2(1, 0), 1), FieldError);
    EXPECT_THROW(make_weight(7.0, 16.0, Vec2(1, 0), 0), FieldError);
}

// On v = exp(kappa.x) exp(i k.x) with constant A and q the conjugated operator
// acts pointwise by the centred-difference symbol with grad Psi = grad phi + kappa.
TEST(ConjugatedOperator, PlaneWaveSymbol) {
    Scene s(0.1);
    const auto& g = *s.g;
    Vec3 a(0.2, 0.1, -0.3);
    cplx qv(0.4, 0.2);
    VectorPotential A(s.g);
    ScalarField q(s.g);
    for (std::size_t n = 0; n < g.size(); ++n) {
        A.set(n, a);
        q[n] = qv;
    }
    auto w = make_weight(7.0, 16.0, Vec2(0.6, 0.8), 1);
    Vec3 k(0.9, 1.7, -0.6);
    PhasedField v;
    v.kappa = Vec3c(cplx(0.5, 1), cplx(0, -2), cplx(0.1, 0));
    v.env = ScalarField(s.g);
    for (std::size_t n = 0; n < g.size(); ++n) {
        Vec3 x = g.point(n);
        if (std::abs(w.value(x)) < 600) v.env[n] = std::exp(cplx(0, k.dot(x)));
    }
    auto out = conjugated_apply(v, A, q, w);
    const double h[3] = {g.hp, g.hp, g.h3};
    double worst = 0, scale = 0;
    for (std::size_t n : interior_nodes(g)) {
        Vec3 x = g.point(n);
        Vec3c gP = w.gradient(x).cast<cplx>() + v.kappa;
        cplx sym = w.laplacian() + gP.x() * gP.x() + gP.y() * gP.y() + gP.z() * gP.z() + qv;
        for (int d = 0; d < 3; ++d) {
            cplx D = cplx(0, std::sin(k[d] * h[d]) / h[d]);
            sym += (2 * std::cos(k[d] * h[d]) - 2) / (h[d] * h[d]) + 2.0 * gP[d] * D + cplx(0, 2 * a[d]) * (D + gP[d]);
        }
        cplx expect = sym * v.env[n];
        worst = std::max(worst, std::abs(out.env[n] - expect));
        scale = std::max(scale, std::abs(expect));
    }
    EXPECT_LE(worst, 1e-12 * scale);
}

TEST(TestField, JetMatchesDifferenceQuotients) {
    Scene s;
    SuiteSpec spec;
    spec.count = 3;
    auto suite = make_suite(*s.g, Vec2(1, 0), spec);
    const double rho = 4.0, e = 1e-5;
    for (const auto& f : suite) {
        Vec3 x(0.2, -0.3, 0.1);
        Jet j = f.jet(x, rho);
        // jet drops the unimodular factor exp(i rho eta.x); restore it for the quotient
        auto full = [&](const Vec3& y) { return std::exp(cplx(0, rho * f.eta.dot(y))) * f.envelope(y).v; };
        cplx ph = std::exp(cplx(0, rho * f.eta.dot(x)));
        cplx lap{};
        for (int a = 0; a < 3; ++a) {
            Vec3 d = Vec3::Zero();
            d[a] = e;
            cplx fd = (full(x + d) - full(x - d)) / (2 * e);
            EXPECT_NEAR(std::abs(fd - ph * j.grad[a]), 0.0, 1e-6 * (1 + std::abs(fd)));
            lap += (full(x + d) - 2.0 * full(x) + full(x - d)) / (e * e);
        }
        EXPECT_NEAR(std::abs(lap - ph * j.lap), 0.0, 1e-3 * (1 + std::abs(lap)));
    }
}

TEST(Suite, DeterministicInTheSeed) {
    Scene s;
    SuiteSpec a;
    a.seed = 5;
    auto s1 = make_suite(*s.g, Vec2(1, 0), a), s2 = make_suite(*s.g, Vec2(1, 0), a);
    ASSERT_EQ(s1.size(), 20u);
    for (std::size_t i = 0; i < s1.size(); ++i) {
        EXPECT_EQ(s1[i].eta, s2[i].eta);
        EXPECT_EQ(s1[i].amps, s2[i].amps);
    }
    a.seed = 6;
    auto s3 = make_suite(*s.g, Vec2(1, 0), a);
    EXPECT_NE(s1[0].amps, s3[0].amps);
}

TEST(Carleman, HomogeneityIsExact) {
    Scene s;
    SuiteSpec spec;
    spec.count = 4;
    auto suite = make_suite(*s.g, Vec2(1, 0), spec);
    auto doubled = suite;
    for (auto& f : doubled)
        for (auto& a : f.amps) a *= 2.0;
    double sp = 48 * std::pow(sup_norm(s.A), 2) + 7;
    auto r1 = check_carleman_convexified(suite, s.A, s.q, make_weight(sp, 16, Vec2(1, 0), 1));
    auto r2 = check_carleman_convexified(doubled, s.A, s.q, make_weight(sp, 16, Vec2(1, 0), 1));
    auto l1 = check_carleman_linear(suite, s.A, s.q, 16, Vec2(1, 0));
    auto l2 = check_carleman_linear(doubled, s.A, s.q, 16, Vec2(1, 0));
    for (std::size_t m = 0; m < suite.size(); ++m) {
        for (std::size_t t = 0; t < r1.rows[m].lhs.size(); ++t) EXPECT_EQ(4 * r1.rows[m].lhs[t], r2.rows[m].lhs[t]);
        for (std::size_t t = 0; t < r1.rows[m].rhs.size(); ++t) EXPECT_EQ(4 * r1.rows[m].rhs[t], r2.rows[m].rhs[t]);
        EXPECT_EQ(r1.rows[m].ratio, r2.rows[m].ratio);
        EXPECT_EQ(l1.rows[m].ratio, l2.rows[m].ratio);
    }
}

TEST(Carleman, ThetaReversalIsExact) {
    Scene s;
    SuiteSpec spec;
    spec.count = 4;
    Vec2 th(std::cos(0.3), std::sin(0.3));
    auto suite = make_suite(*s.g, th, spec);
    double sp = 48 * std::pow(sup_norm(s.A), 2) + 7;
    expect_same_rows(check_carleman_convexified(suite, s.A, s.q, make_weight(sp, 16, th, 1)),
                     check_carleman_convexified(suite, s.A, s.q, make_weight(sp, 16, -th, -1)));
    spec.boundary = false;
    auto inner = make_suite(*s.g, th, spec);
    expect_same_rows(check_carleman_negative(inner, s.A, s.q, 16, th, 1),
                     check_carleman_negative(inner, s.A, s.q, 16, -th, -1));
}

TEST(Carleman, ConvexificationThreshold) {
    Scene s;
    auto suite = make_suite(*s.g, Vec2(1, 0), SuiteSpec{});
    EXPECT_THROW(check_carleman_convexified(suite, s.A, s.q, make_weight(5.0, 16, Vec2(1, 0), 1)), FieldError);
}

TEST(Carleman, LadderDrift) {
    EXPECT_DOUBLE_EQ(ladder_drift({1.0, 2.0, 1.5}), 2.0);
    EXPECT_TRUE(std::isinf(ladder_drift({0.0, 1.0})));
}
