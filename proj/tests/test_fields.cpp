#include "cgo/fields.hpp"

#include <gtest/gtest.h>

using namespace cgo;

namespace {

GridPtr small_grid(double h = 0.1, double L = 2.0) {
    auto cs = std::make_shared<const CrossSection>(build_cross_section(ShapeSpec::disk(1.0)));
    return build_grid(cs, h, h, L);
}

// 4 pi int_0^R r^2 M(r) dr by the composite Simpson rule.
double radial_mass(const Mollifier& M) {
    const int n = 4000;
    double h = M.radius / n, s = 0;
    for (int i = 0; i <= n; ++i) {
        double r = i * h, w = (i == 0 || i == n) ? 1 : (i % 2 ? 4 : 2);
        s += w * r * r * M(Vec3(0, r, 0));
    }
    return 4 * pi * s * h / 3;
}

}  // namespace

TEST(Bilinear, DoesNotConjugate) {
    Vec3c k(cplx(0, 1), cplx(2, 0), cplx(0, -1));
    Vec3 x(1, 2, 3);
    EXPECT_EQ(bilinear(k, x), cplx(4, -2));
}

TEST(Bump, DerivativesMatchDifferenceQuotients) {
    Bump b{Vec3(0.1, -0.2, 0.3), 0.7, 1.3};
    Vec3 x(0.2, 0.1, 0.0);
    const double d = 1e-4;
    Vec3 fd;
    double lap = 0;
    for (int a = 0; a < 3; ++a) {
        Vec3 e = Vec3::Zero();
        e[a] = d;
        fd[a] = (b.value(x + e) - b.value(x - e)) / (2 * d);
        lap += (b.value(x + e) - 2 * b.value(x) + b.value(x - e)) / (d * d);
    }
    EXPECT_LE((fd - b.gradient(x)).norm(), 1e-7);
    EXPECT_NEAR(lap, b.laplacian(x), 1e-5 * std::max(1.0, std::abs(lap)));
    EXPECT_EQ(b.value(Vec3(0.1, -0.2, 1.01)), 0.0);
}

TEST(Mollifier, UnitMassAtEveryLadderRho) {
    for (double rho : {4.0, 8.0, 16.0, 32.0, 64.0}) {
        auto M = make_mollifier(rho);
        EXPECT_NEAR(radial_mass(M), 1.0, 1e-6) << "rho " << rho;
        EXPECT_NEAR(M.radius, std::pow(rho, -0.25), 1e-15);
        EXPECT_EQ(M(Vec3(M.radius, 0, 0)), 0.0);
    }
    EXPECT_THROW(make_mollifier(1.0), FieldError);
}

TEST(Mollifier, ReproducesLinearFieldsAwayFromTheLatticeEdge) {
    auto g = small_grid();
    VectorPotential A(g);
    for (std::size_t n = 0; n < g->size(); ++n) {
        Vec3 x = g->point(n);
        A.set(n, Vec3(x.x(), 2 * x.y() - x.z(), 0.5));
    }
    auto res = mollify(A, make_mollifier(16));
    EXPECT_FALSE(res.under_resolved);
    int r = 6;
    double worst = 0;
    for (int k = r; k < g->nz - r; ++k)
        for (int j = r; j < g->ny - r; ++j)
            for (int i = r; i < g->nx - r; ++i) {
                auto n = g->idx(i, j, k);
                worst = std::max(worst, (res.A.at(n) - A.at(n)).norm());
            }
    EXPECT_LE(worst, 1e-12);
}

TEST(Mollifier, ErrorDecreasesAlongTheLadder) {
    auto g = small_grid();
    PotentialSpec p;
    p.bump = {Vec3(0.1, 0, 0.2), 0.6, 0.5};
    p.direction = Vec3(1, -1, 2).normalized();
    auto A = synth_potential(g, p);
    double prev = std::numeric_limits<double>::infinity();
    for (double rho : {4.0, 8.0, 16.0, 32.0}) {
        double e = l2_norm(A - mollify(A, make_mollifier(rho)).A);
        EXPECT_LT(e, prev);
        prev = e;
    }
}

TEST(Synth, DiscreteGradientHasZeroDifferenceCurl) {
    auto g = small_grid();
    PotentialSpec p;
    p.kind = PotentialKind::GradientField;
    p.discrete_gradient = true;
    p.bump = {Vec3::Zero(), 0.8, 0.5};
    auto A = synth_potential(g, p);
    double curl = 0;
    for (std::size_t n = 0; n < g->size(); ++n) curl = std::max(curl, curl_fd(A, n).cwiseAbs().maxCoeff());
    EXPECT_LE(curl, 1e-10);
    EXPECT_GT(sup_norm(A), 0.1);
}

TEST(Synth, CurlCarrierHasNonzeroCurl) {
    auto g = small_grid();
    PotentialSpec p;
    p.kind = PotentialKind::CurlCarrier;
    p.bump = {Vec3::Zero(), 0.6, 0.5};
    auto A = synth_potential(g, p);
    double curl = 0;
    for (std::size_t n = 0; n < g->size(); ++n) curl = std::max(curl, curl_fd(A, n).cwiseAbs().maxCoeff());
    EXPECT_GT(curl, 0.1);
}

TEST(Synth, SupportOverflowIsRejected) {
    auto g = small_grid();
    PotentialSpec p;
    p.bump = {Vec3(0.7, 0, 0), 0.5, 1.0};
    EXPECT_THROW(synth_potential(g, p), FieldError);
    p.bump = {Vec3(0, 0, 0.8), 0.5, 1.0};
    EXPECT_THROW(synth_potential(g, p), FieldError);
}

TEST(WeightedNorm, ZeroOrderIsTheL2Norm) {
    auto g = small_grid();
    auto q = synth_scalar(g, Bump{Vec3(0.1, 0, 0), 0.5, 1.0}, cplx(1, 2));
    EXPECT_NEAR(weighted_norm(q, 0, 5.0), l2_norm(q), 1e-12 * l2_norm(q));
}

TEST(WeightedNorm, MatchesNaiveTransform) {
    auto g = small_grid(0.2);
    ScalarField f(g);
    int i0 = g->i0 - 1, j0 = g->j0 - 1, k0 = g->nz / 2 - 1;
    std::vector<std::array<int, 3>> sup;
    for (int k = 0; k < 3; ++k)
        for (int j = 0; j < 3; ++j)
            for (int i = 0; i < 3; ++i) {
                f[g->idx(i0 + i, j0 + j, k0 + k)] = cplx(1 + i - j, k - 0.5 * i);
                sup.push_back({i, j, k});
            }
    const double rho = 3.0;
    Vec3 shift(0.4, -1.0, 2.5);
    int Nx = detail::fft_size(6), Ny = Nx, Nz = Nx;
    auto freq = [](int k, int n, double h) {
        int s = k < (n + 1) / 2 ? k : k - n;
        return 2 * pi * s / (n * h);
    };
    for (int m : {-1, 1, 2}) {
        double acc = 0;
        for (int a = 0; a < Nx; ++a)
            for (int b = 0; b < Ny; ++b)
                for (int c = 0; c < Nz; ++c) {
                    cplx s{};
                    for (const auto& p : sup) {
                        double ph = -2 * pi * (double(a * p[0]) / Nx + double(b * p[1]) / Ny + double(c * p[2]) / Nz);
                        s += f[g->idx(i0 + p[0], j0 + p[1], k0 + p[2])] * std::polar(1.0, ph);
                    }
                    Vec3 xi(freq(a, Nx, g->hp), freq(b, Ny, g->hp), freq(c, Nz, g->h3));
                    acc += std::pow((xi + shift).squaredNorm() + rho * rho, m) * std::norm(s);
                }
        double expect = std::sqrt(acc * g->cell_volume() / (double(Nx) * Ny * Nz));
        EXPECT_NEAR(weighted_norm(f, m, rho, shift), expect, 1e-12 * expect) << "m " << m;
    }
}
