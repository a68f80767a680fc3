#pragma once

#include <concepts>

#include "cgo/cauchy.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

namespace cgo {

// ---------------------------------------------------------------------------
// Axial cutoff psi(rho^{-1/4} x3): psi = 1 on [-1, 1], supported in [-2, 2].

namespace detail {

// f(u) = exp(-1/u) for u > 0 and its first two derivatives.
inline void flat_exp(double u, double& f, double& f1, double& f2) {
    if (u <= 0) {
        f = f1 = f2 = 0;
        return;
    }
    f = std::exp(-1.0 / u);
    double u2 = u * u;
    f1 = f / u2;
    f2 = f * (1.0 / (u2 * u2) - 2.0 / (u2 * u));
}

// Smooth step S(u): 1 for u <= 0, 0 for u >= 1.
inline void smooth_step(double u, double& s, double& s1, double& s2) {
    if (u <= 0) {
        s = 1, s1 = s2 = 0;
        return;
    }
    if (u >= 1) {
        s = s1 = s2 = 0;
        return;
    }
    double a, a1, a2, b, b1, b2;
    flat_exp(1 - u, a, a1, a2);
    flat_exp(u, b, b1, b2);
    a1 = -a1;  // d/du f(1-u)
    double d = a + b;
    s = a / d;
    double num = a1 * b - a * b1;
    s1 = num / (d * d);
    s2 = ((a2 * b - a * b2) * d - 2 * num * (a1 + b1)) / (d * d * d);
}

}  // namespace detail

struct AxialCutoff {
    double rho = 1.0;
    static constexpr double plateau = 1.0;
    static constexpr double support = 2.0;

    double scale() const { return std::pow(rho, -0.25); }

    // Base profile and derivatives at t.
    static void profile(double t, double& p, double& p1, double& p2) {
        double s, s1, s2;
        detail::smooth_step(std::abs(t) - plateau, s, s1, s2);
        p = s;
        p1 = (t < 0 ? -s1 : s1);
        p2 = s2;
    }
    double value(double x3) const {
        double p, p1, p2;
        profile(scale() * x3, p, p1, p2);
        return p;
    }
    // psi(rho^{-1/4} x3) and its x3-derivatives.
    void eval(double x3, double& v, double& d1, double& d2) const {
        double s = scale(), p, p1, p2;
        profile(s * x3, p, p1, p2);
        v = p;
        d1 = s * p1;
        d2 = s * s * p2;
    }
};

// ---------------------------------------------------------------------------
// Envelope operator. With u = exp(kappa.x) v and kappa.kappa = 0,
//   exp(-kappa.x)(Delta_A + q) u = Delta v + 2 kappa.grad v + 2i A.(grad v + kappa v)
//                                  + (i div A - |A|^2 + q) v.
// Centred seven-point stencil; the exponential never enters a difference.

struct Stencil {
    // centre, -x, +x, -y, +y, -z, +z
    std::array<cplx, 7> c{};
};

inline Stencil envelope_stencil(const CylinderGrid& g, const VectorPotential& A, const ScalarField& q,
                                const Vec3c& kappa, std::size_t n) {
    Vec3 a = A.at(n);
    cplx c0 = cplx(0, 2) * (a.x() * kappa.x() + a.y() * kappa.y() + a.z() * kappa.z()) +
              cplx(0, 1) * divergence(A, n) - a.squaredNorm() + q[n];
    double ip2 = 1.0 / (g.hp * g.hp), i32 = 1.0 / (g.h3 * g.h3);
    Stencil s;
    s.c[0] = -4 * ip2 - 2 * i32 + c0;
    const double hs[3] = {g.hp, g.hp, g.h3};
    const double lap[3] = {ip2, ip2, i32};
    for (int d = 0; d < 3; ++d) {
        cplx drift = (2.0 * kappa[d] + cplx(0, 2) * a[d]) / (2 * hs[d]);
        s.c[1 + 2 * d] = lap[d] - drift;
        s.c[2 + 2 * d] = lap[d] + drift;
    }
    return s;
}

inline std::array<std::size_t, 7> stencil_nodes(const CylinderGrid& g, std::size_t n) {
    const std::size_t sy = g.nx, sz = g.plane();
    return {n, n - 1, n + 1, n - sy, n + sy, n - sz, n + sz};
}

// Nodes where the discrete equation is imposed: all four lateral neighbours in
// the mask and both axial neighbours on the lattice.
inline std::vector<std::size_t> interior_nodes(const CylinderGrid& g) {
    std::vector<std::size_t> out;
    for (int k = 1; k + 1 < g.nz; ++k)
        for (int m : g.mask_nodes2)
            if (!g.boundary2[m]) out.push_back(static_cast<std::size_t>(k) * g.plane() + m);
    return out;
}

// Mask nodes plus one lattice ring around the cross-section, every axial level.
inline std::vector<std::size_t> padded_nodes(const CylinderGrid& g) {
    std::vector<unsigned char> keep(g.plane(), 0);
    for (int m : g.mask_nodes2)
        for (int d : {0, -1, 1, -g.nx, g.nx}) keep[m + d] = 1;
    std::vector<std::size_t> out;
    for (int k = 0; k < g.nz; ++k)
        for (std::size_t m = 0; m < g.plane(); ++m)
            if (keep[m]) out.push_back(k * g.plane() + m);
    return out;
}

inline cplx apply_envelope(const CylinderGrid& g, const VectorPotential& A, const ScalarField& q,
                           const Vec3c& kappa, const std::vector<cplx>& v, std::size_t n) {
    auto s = envelope_stencil(g, A, q, kappa, n);
    auto nb = stencil_nodes(g, n);
    cplx r{};
    for (int t = 0; t < 7; ++t) r += s.c[t] * v[nb[t]];
    return r;
}

// ---------------------------------------------------------------------------
// Principal part

struct CgoOptions {
    double rho_min = 1.0;
    double nodes_per_wavelength = 6.0;
    double tikhonov = 1e-10;
    double linear_tol = 1e-8;
    CauchyOptions cauchy;
};

inline bool same_frame(const DirectionFrame& a, const DirectionFrame& b) {
    return (a.xi - b.xi).norm() <= 1e-14 && (a.eta - b.eta).norm() <= 1e-14 &&
           (a.theta_t - b.theta_t).norm() <= 1e-14;
}

// Exponent of the weight times the rho-scale plane wave: sigma rho theta~ + i rho eta.
inline Vec3c cgo_kappa(const DirectionFrame& f, double rho, int sigma) {
    return (sigma * rho) * f.theta_t.cast<cplx>() + cplx(0, rho) * f.eta.cast<cplx>();
}

// Plane wave carried by the envelope: xi for sigma = +1, none for sigma = -1.
inline Vec3 envelope_wave(const DirectionFrame& f, int sigma) { return sigma == 1 ? f.xi : Vec3::Zero(); }

// Full principal part: exp((kappa - i xi_sigma).x) * psi * b.
inline PhasedField assemble_principal(const DirectionFrame& frame, double rho, const PhaseCorrector& phi,
                                      const AxialCutoff& psi, int sigma) {
    if (phi.sigma != sigma) throw FieldError("phase corrector built with the other sign");
    if (!same_frame(phi.frame, frame)) throw FieldError("phase corrector built for a different frame");
    if (std::abs(phi.rho - rho) > 1e-12 * rho || std::abs(psi.rho - rho) > 1e-12 * rho)
        throw FieldError("phase corrector or cutoff built for a different rho");
    const auto& g = *phi.phi.grid;
    PhasedField out;
    out.kappa = cgo_kappa(frame, rho, sigma) - cplx(0, 1) * envelope_wave(frame, sigma).cast<cplx>();
    out.env = ScalarField(phi.phi.grid);
    parallel_for(g.size(), [&](std::size_t n) { out.env[n] = psi.value(g.point(n).z()) * std::exp(phi.phi[n]); });
    return out;
}

// ---------------------------------------------------------------------------
// Source term

struct CgoSource {
    ScalarField F;            // envelope source at interior nodes
    ScalarField principal;    // c = exp(-i xi_sigma.x) psi b on padded nodes
    ScalarField b;            // exp(Phi)
    double third_line = 0.0;  // ||2 rho psi (sigma theta~ + i eta).(A - A_rho) b||_{L2}
};

// F = -exp(-kappa.x)(Delta_A + q)[exp(kappa.x) c]. The rho-order bracket
// (sigma theta~ + i eta).grad b + i (sigma theta~ + i eta).A b is rewritten with
// the d-bar equation for A_rho as i (sigma theta~ + i eta).(A - A_rho) b.
inline CgoSource cgo_source(const DirectionFrame& frame, double rho, const VectorPotential& A, const VectorPotential& A_rho,
                            const ScalarField& q, const PhaseCorrector& phi, const AxialCutoff& psi) {
    const int sigma = phi.sigma;
    if (!same_frame(phi.frame, frame)) throw FieldError("phase corrector built for a different frame");
    const auto& g = *A.grid;
    const Vec3 zeta = envelope_wave(frame, sigma);
    const Vec3c dir = static_cast<double>(sigma) * frame.theta_t.cast<cplx>() + cplx(0, 1) * frame.eta.cast<cplx>();
    const double eta3 = frame.eta.z();
    CgoSource out;
    out.b = ScalarField(A.grid);
    out.principal = ScalarField(A.grid);
    out.F = ScalarField(A.grid);
    auto pad = padded_nodes(g);
    parallel_for(pad.size(), [&](std::size_t t) {
        std::size_t n = pad[t];
        Vec3 x = g.point(n);
        out.b[n] = std::exp(phi.phi[n]);
        out.principal[n] = std::exp(cplx(0, -zeta.dot(x))) * psi.value(x.z()) * out.b[n];
    });
    auto inner = interior_nodes(g);
    std::vector<double> third(inner.size());
    parallel_for(inner.size(), [&](std::size_t t) {
        std::size_t n = inner[t];
        Vec3 x = g.point(n);
        double p, p1, p2;
        psi.eval(x.z(), p, p1, p2);
        cplx bn = out.b[n];
        auto gb = lattice::grad(out.b.v, g, n);
        cplx lb = lattice::laplacian(out.b.v, g, n);
        // grad(psi b), Delta(psi b)
        std::array<cplx, 3> gpb = {p * gb[0], p * gb[1], p * gb[2] + p1 * bn};
        cplx lpb = p * lb + 2.0 * p1 * gb[2] + p2 * bn;
        Vec3 a = A.at(n);
        cplx zdot = zeta[0] * gpb[0] + zeta[1] * gpb[1] + zeta[2] * gpb[2];
        cplx adot = a[0] * gpb[0] + a[1] * gpb[1] + a[2] * gpb[2];
        Vec3 dA = a - A_rho.at(n);
        cplx ddot = dir.x() * dA.x() + dir.y() * dA.y() + dir.z() * dA.z();
        cplx third_term = cplx(0, 2 * rho) * p * ddot * bn;
        cplx Lc = lpb - cplx(0, 2) * zdot - zeta.squaredNorm() * p * bn + cplx(0, 2) * adot +
                  2 * a.dot(zeta) * p * bn + (cplx(0, 1) * divergence(A, n) - a.squaredNorm() + q[n]) * p * bn +
                  third_term + cplx(0, 2 * rho * eta3) * p1 * bn;
        out.F[n] = -std::exp(cplx(0, -zeta.dot(x))) * Lc;
        third[t] = std::norm(third_term);
    });
    double s = 0;
    for (double v : third) s += v;
    out.third_line = std::sqrt(s * g.cell_volume());
    return out;
}

// ---------------------------------------------------------------------------
// Remainder

struct RemainderSolve {
    ScalarField v;  // envelope: w = exp(i rho eta.x) v
    double linear_residual = 0;
    std::size_t unknowns = 0, equations = 0;
    int refinements = 0;
};

struct SolverError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Minimum-norm Tikhonov solution of L_h v = F at interior nodes:
//   v = M^H (M M^H + lambda I)^{-1} F,  lambda = tikhonov * max diag(M M^H).
// Unknowns are all mask nodes off the two axial end layers (held at zero).
inline RemainderSolve solve_remainder(const ScalarField& F, const VectorPotential& A, const ScalarField& q,
                                      const Vec3c& kappa, const CgoOptions& opt = {}) {
    using SpMat = Eigen::SparseMatrix<cplx>;
    const auto& g = *A.grid;
    auto rows = interior_nodes(g);
    std::vector<long> col(g.size(), -1);
    std::vector<std::size_t> cols;
    for (int k = 1; k + 1 < g.nz; ++k)
        for (int m : g.mask_nodes2) {
            std::size_t n = static_cast<std::size_t>(k) * g.plane() + m;
            col[n] = static_cast<long>(cols.size());
            cols.push_back(n);
        }
    std::vector<Eigen::Triplet<cplx>> trip;
    trip.reserve(rows.size() * 7);
    Eigen::VectorXcd rhs(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        auto s = envelope_stencil(g, A, q, kappa, rows[r]);
        auto nb = stencil_nodes(g, rows[r]);
        for (int t = 0; t < 7; ++t)
            if (col[nb[t]] >= 0) trip.emplace_back(static_cast<int>(r), static_cast<int>(col[nb[t]]), s.c[t]);
        rhs[r] = F[rows[r]];
    }
    SpMat M(rows.size(), cols.size());
    M.setFromTriplets(trip.begin(), trip.end());
    SpMat MH = M.adjoint();
    SpMat N = M * MH;
    double dmax = 0;
    for (int k = 0; k < N.outerSize(); ++k)
        for (SpMat::InnerIterator it(N, k); it; ++it)
            if (it.row() == it.col()) dmax = std::max(dmax, std::abs(it.value()));
    double lambda = opt.tikhonov * dmax;
    for (int k = 0; k < N.rows(); ++k) N.coeffRef(k, k) += lambda;

    RemainderSolve out;
    out.v = ScalarField(A.grid);
    out.unknowns = cols.size();
    out.equations = rows.size();
    double fnorm = rhs.norm();
    if (fnorm == 0) return out;

    Eigen::SimplicialLDLT<SpMat, Eigen::Lower> ldlt(N);
    if (ldlt.info() != Eigen::Success) throw SolverError("remainder solve: factorisation failed");
    Eigen::VectorXcd y = ldlt.solve(rhs);
    Eigen::VectorXcd w = MH * y;
    out.linear_residual = (M * w - rhs).norm() / fnorm;
    // Iterated Tikhonov: each pass removes most of the regularisation bias.
    while (out.linear_residual > 1e-2 * opt.linear_tol && out.refinements < 8) {
        Eigen::VectorXcd res = rhs - M * w;
        w += MH * ldlt.solve(res);
        out.linear_residual = (M * w - rhs).norm() / fnorm;
        ++out.refinements;
    }
    if (!(out.linear_residual <= opt.linear_tol))
        throw SolverError("remainder solve did not converge: relative residual " +
                          std::to_string(out.linear_residual) + " after " + std::to_string(out.refinements) +
                          " refinement iterations");
    for (std::size_t c = 0; c < cols.size(); ++c) out.v[cols[c]] = w[static_cast<long>(c)];
    return out;
}

// ---------------------------------------------------------------------------
// Full solution

struct CgoReport {
    double h1_over_rho = 0;  // rho^{-1} ||w||_{H1}
    double l2 = 0;           // ||w||_{L2}
    double decay = 0;        // sum of the two
    double pde_residual = 0;
    double residual_estimate = 0;  // h^2 rho^2 ||exp(-sigma rho theta.x') u||
    double linear_residual = 0;
    double third_line = 0;
};

struct CGOSolution {
    DirectionFrame frame;
    double rho = 0;
    int sigma = 1;
    Vec3c kappa = Vec3c::Zero();  // sigma rho theta~ + i rho eta
    ScalarField principal;        // envelope c
    ScalarField remainder;        // envelope v
    ScalarField b;
    CgoReport report;

    // u = exp(kappa.x)(c + v)
    cplx value(std::size_t n) const {
        Vec3 x = principal.grid->point(n);
        return std::exp(bilinear(kappa, x)) * (principal[n] + remainder[n]);
    }
    PhasedField phased() const {
        PhasedField p;
        p.kappa = kappa;
        p.env = principal;
        for (std::size_t n = 0; n < p.env.size(); ++n) p.env[n] += remainder[n];
        return p;
    }
    cplx w(std::size_t n) const {
        Vec3 x = principal.grid->point(n);
        return std::exp(cplx(0, rho * frame.eta.dot(x))) * remainder[n];
    }
};

// ||w||_{L2} over the mask and ||grad w||_{L2} over interior nodes, with
// grad w = exp(i rho eta.x)(grad v + i rho eta v).
inline std::pair<double, double> remainder_norms(const ScalarField& v, const Vec3& eta, double rho) {
    const auto& g = *v.grid;
    double l2 = std::sqrt(integrate_mask(g, [&](std::size_t n) { return std::norm(v[n]); }));
    auto inner = interior_nodes(g);
    double s = parallel_sum<double>(inner.size(), [&](std::size_t t) {
        std::size_t n = inner[t];
        auto d = lattice::grad(v.v, g, n);
        double acc = 0;
        for (int c = 0; c < 3; ++c) acc += std::norm(d[c] + cplx(0, rho * eta[c]) * v[n]);
        return acc;
    });
    return {l2, std::sqrt(s * g.cell_volume())};
}

struct PdeCheck {
    double residual = 0;  // ||L_h (c + v)||_{L2} over interior nodes
    double norm = 0;      // ||c + v||_{L2} over the mask
    double estimate = 0;  // h^2 rho^2 norm
};

inline PdeCheck verify_pde(const CGOSolution& u, const VectorPotential& A, const ScalarField& q) {
    const auto& g = *A.grid;
    std::vector<cplx> env(g.size());
    for (std::size_t n = 0; n < g.size(); ++n) env[n] = u.principal[n] + u.remainder[n];
    auto inner = interior_nodes(g);
    PdeCheck out;
    double s = parallel_sum<double>(inner.size(), [&](std::size_t t) {
        return std::norm(apply_envelope(g, A, q, u.kappa, env, inner[t]));
    });
    out.residual = std::sqrt(s * g.cell_volume());
    out.norm = std::sqrt(integrate_mask(g, [&](std::size_t n) { return std::norm(env[n]); }));
    double h = std::max(g.hp, g.h3);
    out.estimate = h * h * u.rho * u.rho * out.norm;
    return out;
}

inline CGOSolution build_cgo(const VectorPotential& A, const ScalarField& q, const DirectionFrame& frame, double rho,
                             int sigma, const CgoOptions& opt = {}) {
    if (sigma != 1 && sigma != -1) throw FieldError("sigma must be +1 or -1");
    if (!(rho > opt.rho_min)) throw FieldError("rho must exceed the ladder minimum");
    const auto& g = *A.grid;
    double kmax = envelope_wave(frame, sigma).norm();
    if (kmax > 0 && 2 * pi / (kmax * std::max(g.hp, g.h3)) < opt.nodes_per_wavelength)
        throw FieldError("under-resolved: fewer than " + std::to_string(opt.nodes_per_wavelength) +
                         " nodes per wavelength of exp(-i xi.x)");
    auto A_rho = mollify(A, make_mollifier(rho)).A;
    CauchyPhase eval(A_rho, frame, sigma, opt.cauchy);
    PhaseCorrector phi;
    if (eval.zero()) {
        phi.phi = ScalarField(A.grid);
        phi.frame = frame;
        phi.sigma = sigma;
        phi.rho = rho;
    } else {
        phi = cauchy_phase(eval, padded_nodes(g), rho);
    }
    AxialCutoff psi{rho};
    auto src = cgo_source(frame, rho, A, A_rho, q, phi, psi);
    CGOSolution u;
    u.frame = frame;
    u.rho = rho;
    u.sigma = sigma;
    u.kappa = cgo_kappa(frame, rho, sigma);
    u.principal = src.principal;
    u.b = src.b;
    auto rem = solve_remainder(src.F, A, q, u.kappa, opt);
    u.remainder = rem.v;
    auto [l2, grad] = remainder_norms(rem.v, frame.eta, rho);
    u.report.l2 = l2;
    u.report.h1_over_rho = std::sqrt(l2 * l2 + grad * grad) / rho;
    u.report.decay = u.report.l2 + u.report.h1_over_rho;
    u.report.linear_residual = rem.linear_residual;
    u.report.third_line = src.third_line;
    auto pde = verify_pde(u, A, q);
    u.report.pde_residual = pde.residual;
    u.report.residual_estimate = pde.estimate;
    return u;
}

// ---------------------------------------------------------------------------
// Boundary traces

struct Traces {
    std::vector<std::size_t> nodes;
    std::vector<cplx> dirichlet;
    std::vector<cplx> normal_derivative;
    std::vector<cplx> magnetic_neumann;  // -d_nu u - i (A.nu) u
};

// d_nu u = nu'.grad' u at each boundary node; each lateral partial uses the
// centred difference when both neighbours are in the mask and the one-sided
// second-order difference into the mask otherwise.
template <class Value>
    requires std::invocable<Value&, std::size_t>
inline Traces traces(Value&& u, const VectorPotential& A, const std::vector<std::size_t>& band) {
    const auto& g = *A.grid;
    std::vector<Vec2> normal(g.plane(), Vec2::Zero());
    for (std::size_t t = 0; t < g.boundary_nodes2.size(); ++t) normal[g.boundary_nodes2[t]] = g.boundary_normals2[t];
    Traces out;
    out.nodes = band;
    out.dirichlet.resize(band.size());
    out.normal_derivative.resize(band.size());
    out.magnetic_neumann.resize(band.size());
    parallel_for(band.size(), [&](std::size_t t) {
        std::size_t n = band[t];
        std::size_t m = n % g.plane();
        auto in = [&](long off) { return g.mask2[static_cast<long>(m) + off] != 0; };
        auto partial = [&](long step) -> cplx {
            bool lo = in(-step), hi = in(step);
            if (lo && hi) return (u(n + step) - u(n - step)) / (2 * g.hp);
            if (hi) {
                if (in(2 * step)) return (-3.0 * u(n) + 4.0 * u(n + step) - u(n + 2 * step)) / (2 * g.hp);
                return (u(n + step) - u(n)) / g.hp;
            }
            if (lo) {
                if (in(-2 * step)) return (3.0 * u(n) - 4.0 * u(n - step) + u(n - 2 * step)) / (2 * g.hp);
                return (u(n) - u(n - step)) / g.hp;
            }
            return cplx{};
        };
        Vec2 nu = normal[m];
        cplx un = u(n);
        cplx dn = nu.x() * partial(1) + nu.y() * partial(static_cast<long>(g.nx));
        Vec3 a = A.at(n);
        out.dirichlet[t] = un;
        out.normal_derivative[t] = dn;
        out.magnetic_neumann[t] = -dn - cplx(0, a.x() * nu.x() + a.y() * nu.y()) * un;
    });
    return out;
}

inline Traces traces(const ScalarField& u, const VectorPotential& A, const std::vector<std::size_t>& band) {
    return traces([&](std::size_t n) { return u[n]; }, A, band);
}

}  // namespace cgo
