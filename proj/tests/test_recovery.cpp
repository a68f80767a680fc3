#include "cgo/recovery.hpp"

#include <gtest/gtest.h>

using namespace cgo;

namespace {

std::shared_ptr<const CrossSection> unit_disk() {
    return std::make_shared<const CrossSection>(build_cross_section(ShapeSpec::disk(1.0)));
}

}  // namespace

TEST(DirectTransform, GaussianMatchesClosedForm) {
    auto g = build_grid(unit_disk(), 0.1, 0.1, 2.0);
    const double a = 0.2;
    auto nodes = g->nodes();
    Vec3 xi(1.5, -0.7, 2.0);
    cplx F = direct_transform(*g, nodes, xi, [&](std::size_t n) { return cplx(std::exp(-g->point(n).squaredNorm() / (a * a))); });
    // (2 pi)^{-3/2} int exp(-|x|^2/a^2 - i xi.x) dx = (a^2/2)^{3/2} exp(-a^2 |xi|^2 / 4)
    double expect = std::pow(a * a / 2, 1.5) * std::exp(-a * a * xi.squaredNorm() / 4);
    EXPECT_NEAR(std::abs(F - expect), 0.0, 1e-8 * expect);
}

TEST(Richardson, ExactOnPolynomialsInInverseRootRho) {
    std::vector<double> rhos = {8, 16, 32, 64};
    cplx c0(1.5, -0.5), c1(0.3, 2.0), c2(-1.0, 0.25), c3(0.7, 0.1);
    std::vector<cplx> v;
    for (double r : rhos) {
        double t = 1 / std::sqrt(r);
        v.push_back(c0 + c1 * t + c2 * t * t + c3 * t * t * t);
    }
    auto ex = richardson(rhos, v);
    EXPECT_NEAR(std::abs(ex.limit - c0), 0.0, 1e-12);
    EXPECT_FALSE(ex.divergent);
    auto bad = richardson({8, 16, 32}, {cplx(1), cplx(1.1), cplx(2)});
    EXPECT_TRUE(bad.divergent);
}

TEST(Probe, FrameCountAndOrthogonality) {
    auto p = make_probe({0.0, 2 * pi / 3, 4 * pi / 3}, {0.7, -1.1}, {0.8, -0.6}, 1.0);
    ASSERT_EQ(p.frames.size(), 12u);
    for (const auto& f : p.frames) {
        EXPECT_NEAR(f.xi.dot(f.theta_t), 0.0, 1e-15);
        EXPECT_NEAR(f.eta.dot(f.theta_t), 0.0, 1e-15);
        EXPECT_NEAR(f.eta.dot(f.xi), 0.0, 1e-15);
    }
}

TEST(Pairing, MatchesDirectSum) {
    auto g = build_grid(unit_disk(), 0.2, 0.2, 2.0);
    PotentialSpec p;
    p.bump = {Vec3(0.1, 0, 0), 0.6, 0.5};
    p.direction = Vec3(1, -1, 1).normalized();
    auto A = synth_potential(g, p);
    auto qt = synth_scalar(g, Bump{Vec3::Zero(), 0.6, 1.0}, cplx(0.3, 0.1));
    ScalarField u1(g), u2(g);
    for (std::size_t n = 0; n < g->size(); ++n) {
        Vec3 x = g->point(n);
        u1[n] = std::exp(cplx(0.3 * x.x(), x.y() - 0.5 * x.z()));
        u2[n] = cplx(1 + x.z(), x.x() * x.y());
    }
    cplx expect{};
    for (std::size_t n = 0; n < g->size(); ++n) {
        if (!lattice::has_neighbours(*g, n)) continue;
        auto d1 = lattice::grad(u1.v, *g, n), d2 = lattice::grad(u2.v, *g, n);
        Vec3 a = A.at(n);
        cplx ag1 = a.x() * d1[0] + a.y() * d1[1] + a.z() * d1[2];
        cplx ag2 = a.x() * d2[0] + a.y() * d2[1] + a.z() * d2[2];
        expect += cplx(0, 1) * ag1 * std::conj(u2[n]) - cplx(0, 1) * u1[n] * std::conj(ag2) + qt[n] * u1[n] * std::conj(u2[n]);
    }
    expect *= g->cell_volume();
    cplx got = pairing_integral(u1, u2, A, qt);
    EXPECT_NEAR(std::abs(got - expect), 0.0, 1e-12 * std::abs(expect));
}

TEST(Pairing, PhasedFieldAgreesWithSampledField) {
    auto g = build_grid(unit_disk(), 0.2, 0.2, 2.0);
    PotentialSpec p;
    p.bump = {Vec3(0.1, 0, 0), 0.6, 0.5};
    auto A = synth_potential(g, p);
    ScalarField qt(g);
    PhasedField u1, u2;
    u1.kappa = Vec3c(cplx(1.0, 0.5), cplx(0, 1), cplx(0, 0));
    u2.kappa = Vec3c(cplx(-0.5, 0), cplx(0.2, -1), cplx(0, 0.3));
    u1.env = ScalarField(g);
    u2.env = ScalarField(g);
    ScalarField s1(g), s2(g);
    for (std::size_t n = 0; n < g->size(); ++n) {
        Vec3 x = g->point(n);
        u1.env[n] = cplx(1 + 0.1 * x.x() * x.x(), x.z());
        u2.env[n] = cplx(0.5, x.y());
        s1[n] = u1.value(n);
        s2[n] = u2.value(n);
    }
    // the sampled version differences the full product; agreement is to discretisation order
    cplx a = pairing_integral(u1, u2, A, qt), b = pairing_integral(s1, s2, A, qt);
    EXPECT_LE(std::abs(a - b), 0.05 * std::abs(b));
}

TEST(RecoverDA, EqualPotentialsGiveZeroSamples) {
    auto g = build_grid(unit_disk(), 0.2, 0.2, 2.0);
    PotentialSpec p;
    p.bump = {Vec3(0.1, 0, 0), 0.6, 0.5};
    auto A = synth_potential(g, p);
    auto res = recover_dA(A, A, make_probe({0.0}, {0.7}, {0.8}, 1.0), {8, 16, 32});
    ASSERT_EQ(res.samples.size(), 1u);
    for (auto v : res.samples[0].recovered) EXPECT_EQ(v, cplx{});
    EXPECT_EQ(res.rms_recovered, 0.0);
    EXPECT_THROW(recover_dA(A, A, make_probe({0.0}, {0.7}, {0.8}, 1.0), {8, 16}), FieldError);
}

TEST(RecoverDA, AntisymmetryAccessor) {
    CurlSample s;
    s.recovered = {cplx(1, 0), cplx(2, 0), cplx(3, 0)};
    EXPECT_EQ(RecoveryResult::antisym(s, 0, 1), cplx(1, 0));
    EXPECT_EQ(RecoveryResult::antisym(s, 1, 0), cplx(-1, 0));
    EXPECT_EQ(RecoveryResult::antisym(s, 2, 1), cplx(-3, 0));
}

TEST(FourierIdentity, HoldsForMollifiedPotential) {
    auto cs = unit_disk();
    auto g = build_grid(cs, 0.1, 0.1, 4.0);
    auto f = build_frame({1, 0}, {0, 0.8}, 0.6, cs->R);
    PotentialSpec p;
    p.bump = {Vec3(0.1, 0, 0), 0.6, 0.3};
    p.direction = Vec3(1, 1, 1).normalized();
    auto Ar = mollify(synth_potential(g, p), make_mollifier(8)).A;
    auto pc = cauchy_phase(Ar, f, 1, support_nodes(Ar, 0), 8);
    auto r = verify_fourier_identity(Ar, pc, f);
    EXPECT_LE(r.rel_err, 1e-2);
    auto pm = cauchy_phase(Ar, f, -1, support_nodes(Ar, 0), 8);
    EXPECT_THROW(verify_fourier_identity(Ar, pm, f), FieldError);
}

TEST(Gauge, RecoversGeneratingPotential) {
    auto g = build_grid(unit_disk(), 0.1, 0.1, 2.0);
    PotentialSpec p;
    p.kind = PotentialKind::GradientField;
    p.discrete_gradient = true;
    p.bump = {Vec3::Zero(), 0.9, 0.5};
    auto A = synth_potential(g, p);
    auto r = gauge_potential(A);
    double err = 0;
    for (std::size_t n : g->nodes()) err = std::max(err, std::abs(r.phi[n] - p.bump.value(g->point(n))));
    // sup error ~ 2.2 h^2 for this bump
    EXPECT_LE(err, 0.05);
    EXPECT_EQ(r.phi[r.reference], cplx{});
}

TEST(Gauge, RejectsFieldsWithCurl) {
    auto g = build_grid(unit_disk(), 0.2, 0.2, 2.0);
    PotentialSpec p;
    p.kind = PotentialKind::CurlCarrier;
    p.bump = {Vec3::Zero(), 0.6, 0.5};
    EXPECT_THROW(gauge_potential(synth_potential(g, p)), FieldError);
    auto zero = gauge_potential(VectorPotential(g));
    for (auto v : zero.phi.v) EXPECT_EQ(v, cplx{});
}

TEST(RecoverQ, PlateauIsExactAndConjugateSymmetric) {
    auto g = build_grid(unit_disk(), 0.2, 0.2, 2.0);
    auto q = synth_scalar(g, Bump{Vec3(0.1, 0, 0.2), 0.6, 1.0}, 2.0);
    std::vector<Vec3> xis = {{0.5, 0.7, 0.8}, {-1.0, 0.2, -0.6}};
    std::vector<Vec3> neg = {-xis[0], -xis[1]};
    auto s = recover_q(q, xis, {8, 16, 32});
    auto m = recover_q(q, neg, {8, 16, 32});
    for (std::size_t i = 0; i < s.size(); ++i) {
        EXPECT_TRUE(s[i].plateau);
        for (auto v : s[i].ladder) EXPECT_LE(std::abs(v - s[i].oracle), 1e-12 * std::abs(s[i].oracle));
        EXPECT_EQ(s[i].limit, s[i].ladder.back());
        for (std::size_t k = 0; k < s[i].ladder.size(); ++k)
            EXPECT_LE(std::abs(m[i].ladder[k] - std::conj(s[i].ladder[k])), 1e-10 * std::abs(s[i].oracle));
    }
}

TEST(RecoverQ, WideSupportConvergesAlongTheLadder) {
    auto g = build_grid(unit_disk(), 0.2, 0.2, 4.4);
    auto q = synth_scalar(g, Bump{Vec3(0, 0, 1.5), 0.6, 1.0}, 1.0);
    std::vector<double> rhos = {8, 16, 32, 64};
    auto s = recover_q(q, {Vec3(0.5, 0.7, 0.8)}, rhos);
    ASSERT_EQ(s.size(), 1u);
    EXPECT_FALSE(s[0].plateau);
    double prev = std::numeric_limits<double>::infinity();
    for (auto v : s[0].ladder) {
        double e = std::abs(v - s[0].oracle);
        EXPECT_LE(e, prev);
        prev = e;
    }
    EXPECT_LE(prev, 1e-12 * std::abs(s[0].oracle));
}

TEST(PartialData, BoundarySubsetCovering) {
    auto cs = unit_disk();
    auto frames = frames_near(Vec2(1, 0), {-0.1, 0.0, 0.1}, 1.0, 1.0, cs->R);
    auto V = BoundarySubset::covering(*cs, frames, 0.2);
    for (const auto& f : frames)
        for (auto i : boundary_partition(*cs, f.theta, 0.2).shadowed) EXPECT_TRUE(V.contains(i));
    EXPECT_FALSE(V.is_full());
    EXPECT_TRUE(BoundarySubset::full(*cs).is_full());
}

TEST(PartialData, RejectsUncoveredShadowAndFarFrames) {
    auto cs = unit_disk();
    auto g = build_grid(cs, 0.2, 0.2, 2.0);
    VectorPotential A(g);
    ScalarField q(g);
    auto frames = frames_near(Vec2(1, 0), {0.0}, 1.0, 1.0, cs->R);
    auto V = BoundarySubset::covering(*cs, frames, 0.2);
    for (std::size_t i = 0; i < V.segments.size(); ++i)
        if (V.contains(i)) {
            V.segments[i] = 0;
            break;
        }
    EXPECT_THROW(partial_data_check(A, A, q, q, V, frames, Vec2(1, 0), 0.2, {8}), PartialDataError);
    auto far = frames_near(Vec2(1, 0), {0.5}, 1.0, 1.0, cs->R);
    EXPECT_THROW(partial_data_check(A, A, q, q, BoundarySubset::full(*cs), far, Vec2(1, 0), 0.2, {8}), PartialDataError);
    EXPECT_THROW(partial_data_check(A, A, q, q, BoundarySubset::full(*cs), frames, Vec2(1, 0), 1.5, {8}), PartialDataError);
}

TEST(PartialData, FullBoundaryHasZeroComplementAndCauchySchwarzHolds) {
    auto cs = unit_disk();
    auto g = build_grid(cs, 0.2, 0.2, 2.0);
    PotentialSpec p2;
    p2.bump = {Vec3(0.1, 0, 0), 0.6, 0.3};
    p2.direction = Vec3(1, 1, 1).normalized();
    auto A2 = synth_potential(g, p2);
    PotentialSpec pc;
    pc.kind = PotentialKind::CurlCarrier;
    pc.bump = {Vec3(-0.1, 0.1, 0.2), 0.6, 0.3};
    auto A1 = A2 + synth_potential(g, pc);
    ScalarField q(g);
    auto frames = frames_near(Vec2(1, 0), {0.0}, 1.0, 1.0, cs->R);
    auto rep = partial_data_check(A1, A2, q, q, BoundarySubset::full(*cs), frames, Vec2(1, 0), 0.2, {8});
    ASSERT_EQ(rep.rows.size(), 1u);
    EXPECT_TRUE(rep.full_boundary);
    EXPECT_EQ(rep.rows[0].complement, cplx{});
    EXPECT_LE(rep.rows[0].cauchy_schwarz, 1.0 + 1e-12);
    EXPECT_GT(std::abs(rep.rows[0].pairing), 0.0);
}

TEST(PartialData, EqualCoefficientsGiveZeroPairing) {
    auto cs = unit_disk();
    auto g = build_grid(cs, 0.2, 0.2, 2.0);
    PotentialSpec p;
    p.bump = {Vec3(0.1, 0, 0), 0.6, 0.3};
    auto A = synth_potential(g, p);
    auto q = synth_scalar(g, Bump{Vec3::Zero(), 0.5, 1.0}, 0.5);
    auto frames = frames_near(Vec2(1, 0), {0.0}, 1.0, 1.0, cs->R);
    auto rep = partial_data_check(A, A, q, q, BoundarySubset::covering(*cs, frames, 0.2), frames, Vec2(1, 0), 0.2, {8});
    EXPECT_EQ(rep.rows[0].pairing, cplx{});
    EXPECT_EQ(rep.A_norm, 0.0);
}
