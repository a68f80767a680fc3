#pragma once

#include "cgo/carleman.hpp"

#include <Eigen/SparseLU>

namespace cgo {

// F f(xi) = (2 pi)^{-3/2} int f e^{-i xi.x} dx by node sums over `nodes`.
template <class F>
inline cplx direct_transform(const CylinderGrid& g, const std::vector<std::size_t>& nodes, const Vec3& xi, F&& f) {
    cplx s = parallel_sum<cplx>(nodes.size(), [&](std::size_t t) {
        std::size_t n = nodes[t];
        return f(n) * std::exp(cplx(0, -xi.dot(g.point(n))));
    });
    return s * g.cell_volume() / std::pow(2 * pi, 1.5);
}

inline std::vector<std::size_t> nonzero_nodes(const CylinderGrid& g, const std::function<bool(std::size_t)>& nz) {
    auto box = lattice::support_box(g, nz);
    if (!box) return {};
    return lattice::box_nodes(g, *box);
}

// ---------------------------------------------------------------------------
// Pairing  i int (A.grad u1) conj(u2) - i int u1 conj(A.grad u2) + int qt u1 conj(u2)
// for u_j = exp(kappa_j.x) env_j; gradients of the envelopes by centred differences.

inline cplx pairing_integral(const PhasedField& u1, const PhasedField& u2, const VectorPotential& A,
                             const ScalarField& qt) {
    const auto& g = *A.grid;
    auto nodes = nonzero_nodes(g, [&](std::size_t n) {
        return A.a[0][n] != 0 || A.a[1][n] != 0 || A.a[2][n] != 0 || qt[n] != cplx{};
    });
    const Vec3c k1 = u1.kappa, k2c = u2.kappa.conjugate();
    const Vec3c ksum = k1 + k2c;
    cplx s = parallel_sum<cplx>(nodes.size(), [&](std::size_t t) -> cplx {
        std::size_t n = nodes[t];
        if (!lattice::has_neighbours(g, n)) return {};
        Vec3 x = g.point(n);
        Vec3 a = A.at(n);
        cplx e1 = u1.env[n], e2 = std::conj(u2.env[n]);
        auto g1 = lattice::grad(u1.env.v, g, n);
        auto g2 = lattice::grad(u2.env.v, g, n);
        cplx ag1{}, ag2c{};
        for (int d = 0; d < 3; ++d) {
            ag1 += a[d] * (g1[d] + k1[d] * u1.env[n]);
            ag2c += a[d] * (std::conj(g2[d]) + k2c[d] * e2);
        }
        cplx val = cplx(0, 1) * ag1 * e2 - cplx(0, 1) * e1 * ag2c + qt[n] * e1 * e2;
        return std::exp(bilinear(ksum, x)) * val;
    });
    return s * g.cell_volume();
}

inline cplx pairing_integral(const ScalarField& u1, const ScalarField& u2, const VectorPotential& A,
                             const ScalarField& qt) {
    PhasedField p1, p2;
    p1.env = u1;
    p2.env = u2;
    return pairing_integral(p1, p2, A, qt);
}

// ---------------------------------------------------------------------------
// int (A_rho.(theta~ + i eta)) e^{Phi} e^{-i xi.x} = (theta~ + i eta).int A_rho e^{-i xi.x}

struct FourierIdentity {
    cplx lhs, rhs;
    double rel_err = 0;
};

inline FourierIdentity verify_fourier_identity(const VectorPotential& A_rho, const PhaseCorrector& phi,
                                               const DirectionFrame& frame) {
    const auto& g = *A_rho.grid;
    if (phi.sigma != 1) throw FieldError("identity uses the sigma = +1 phase");
    auto box = lattice::support_box(A_rho);
    FourierIdentity out{};
    if (!box) return out;
    auto nodes = lattice::box_nodes(g, *box);
    Vec3c dir = frame.theta_t.cast<cplx>() + cplx(0, 1) * frame.eta.cast<cplx>();
    const Vec3& xi = frame.xi;
    auto comb = [&](std::size_t n) { return dir.x() * A_rho.a[0][n] + dir.y() * A_rho.a[1][n] + dir.z() * A_rho.a[2][n]; };
    out.lhs = parallel_sum<cplx>(nodes.size(), [&](std::size_t t) {
                  std::size_t n = nodes[t];
                  return comb(n) * std::exp(phi.phi[n] - cplx(0, xi.dot(g.point(n))));
              }) *
              g.cell_volume();
    cplx c[3];
    for (int d = 0; d < 3; ++d)
        c[d] = parallel_sum<cplx>(nodes.size(), [&](std::size_t t) {
                   std::size_t n = nodes[t];
                   return A_rho.a[d][nodes[t]] * std::exp(cplx(0, -xi.dot(g.point(n))));
               }) *
               g.cell_volume();
    out.rhs = dir.x() * c[0] + dir.y() * c[1] + dir.z() * c[2];
    double den = std::abs(out.rhs);
    out.rel_err = den > 0 ? std::abs(out.lhs - out.rhs) / den : std::abs(out.lhs);
    return out;
}

// ---------------------------------------------------------------------------
// Limit along a rho ladder: polynomial extrapolation in t = rho^{-1/2} to t = 0.

struct Extrapolation {
    cplx limit{};
    bool divergent = false;
};

inline Extrapolation richardson(const std::vector<double>& rhos, const std::vector<cplx>& v) {
    Extrapolation out;
    const std::size_t n = v.size();
    if (n == 0) return out;
    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = 1.0 / std::sqrt(rhos[i]);
    for (std::size_t i = 0; i < n; ++i) {
        double w = 1;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) w *= (0 - t[j]) / (t[i] - t[j]);
        out.limit += w * v[i];
    }
    for (std::size_t i = 2; i < n; ++i)
        if (std::abs(v[i] - v[i - 1]) > std::abs(v[i - 1] - v[i - 2])) out.divergent = true;
    return out;
}

// ---------------------------------------------------------------------------
// Fourier probe

struct FourierProbe {
    std::vector<DirectionFrame> frames;
};

// xi' = a theta^perp for each theta angle, magnitude a and xi3.
inline FourierProbe make_probe(const std::vector<double>& theta_angles, const std::vector<double>& a,
                               const std::vector<double>& xi3, double R) {
    FourierProbe p;
    for (double ang : theta_angles) {
        Vec2 th(std::cos(ang), std::sin(ang));
        Vec2 perp(-th.y(), th.x());
        for (double m : a)
            for (double z : xi3) p.frames.push_back(build_frame(th, m * perp, z, R));
    }
    return p;
}

// ---------------------------------------------------------------------------
// Curl recovery

inline constexpr std::array<std::pair<int, int>, 3> kCurlPairs = {{{0, 1}, {0, 2}, {1, 2}}};

struct CurlSample {
    DirectionFrame frame;
    std::array<cplx, 3> recovered{};  // xi_k F(a_j) - xi_j F(a_k), (j,k) in kCurlPairs
    std::array<cplx, 3> oracle{};
    std::array<cplx, 2> limits{};     // (theta~ +- i eta).F(A) (2 pi)^{3/2}
    std::vector<cplx> ladder_plus, ladder_minus;
    bool divergent = false;
    double rel_err = 0;
};

struct RecoveryResult {
    std::vector<CurlSample> samples;
    std::vector<double> rhos;
    double rms_recovered = 0, rms_oracle = 0;
    double rms_rel_err = 0, max_rel_err = 0;
    int divergent = 0;

    // (j, k) -> -(k, j)
    static cplx antisym(const CurlSample& s, int j, int k) {
        for (int p = 0; p < 3; ++p) {
            if (kCurlPairs[p].first == j && kCurlPairs[p].second == k) return s.recovered[p];
            if (kCurlPairs[p].first == k && kCurlPairs[p].second == j) return -s.recovered[p];
        }
        return {};
    }
};

struct RecoveryOptions {
    CauchyOptions cauchy;
};

namespace detail {

// -i (2 rho)^{-1} times the pairing of principal parts
//   u1 = e^{(rho theta~ + i rho eta - i xi).x} psi e^{Phi_1},  u2 = e^{(-rho theta~ + i rho eta).x} psi e^{Phi_2}.
inline cplx pairing_functional(const VectorPotential& A1r, const VectorPotential& A2r, const VectorPotential& A,
                               const ScalarField& qt, const std::vector<std::size_t>& pad, const DirectionFrame& f,
                               double rho, const CauchyOptions& copt) {
    const auto& g = *A.grid;
    CauchyPhase p1(A1r, f, 1, copt), p2(A2r, f, -1, copt);
    AxialCutoff psi{rho};
    PhasedField u1, u2;
    u1.kappa = cgo_kappa(f, rho, 1) - cplx(0, 1) * f.xi.cast<cplx>();
    u2.kappa = cgo_kappa(f, rho, -1);
    u1.env = ScalarField(A.grid);
    u2.env = ScalarField(A.grid);
    parallel_for(pad.size(), [&](std::size_t t) {
        std::size_t n = pad[t];
        Vec3 x = g.point(n);
        double ps = psi.value(x.z());
        u1.env[n] = ps * std::exp(p1(x));
        u2.env[n] = ps * std::exp(p2(x));
    });
    return cplx(0, -0.5 / rho) * pairing_integral(u1, u2, A, qt);
}

}  // namespace detail

// Curl samples of A = A1 - A2 at each probe frequency.
inline RecoveryResult recover_dA(const VectorPotential& A1, const VectorPotential& A2, const FourierProbe& probe,
                                 const std::vector<double>& rhos, const RecoveryOptions& opt = {}) {
    const auto& g = *A1.grid;
    if (!g.same_lattice(*A2.grid)) throw FieldError("potentials live on different grids");
    if (rhos.size() < 3) throw FieldError("curl recovery needs a ladder of at least three rho values");
    VectorPotential A = A1 - A2;
    ScalarField qt(A1.grid);
    for (std::size_t n = 0; n < g.size(); ++n) qt[n] = A2.at(n).squaredNorm() - A1.at(n).squaredNorm();
    auto box = lattice::support_box(g, [&](std::size_t n) {
        return A.a[0][n] != 0 || A.a[1][n] != 0 || A.a[2][n] != 0 || qt[n] != cplx{};
    });
    RecoveryResult out;
    out.rhos = rhos;
    if (!box) {
        for (const auto& f : probe.frames) {
            CurlSample s;
            s.frame = f;
            out.samples.push_back(s);
        }
        return out;
    }
    auto pad = lattice::box_nodes(g, lattice::dilate(*box, 1, g));
    std::vector<VectorPotential> A1r, A2r;
    for (double rho : rhos) {
        auto M = make_mollifier(rho);
        A1r.push_back(mollify(A1, M).A);
        A2r.push_back(mollify(A2, M).A);
    }
    // FD curl of A for the oracle, on interior nodes of the support box
    VectorPotential curl(A1.grid);
    auto cnodes = lattice::box_nodes(g, lattice::dilate(*box, 1, g));
    for (std::size_t n : cnodes) curl.set(n, curl_fd(A, n));
    const double c32 = std::pow(2 * pi, 1.5);
    double s_rec = 0, s_orc = 0, s_err = 0;
    for (const auto& f : probe.frames) {
        CurlSample cs;
        cs.frame = f;
        for (int sgn : {1, -1}) {
            DirectionFrame fs = sgn > 0 ? f : f.flipped();
            std::vector<cplx> vals;
            for (std::size_t r = 0; r < rhos.size(); ++r)
                vals.push_back(detail::pairing_functional(A1r[r], A2r[r], A, qt, pad, fs, rhos[r], opt.cauchy));
            auto ex = richardson(rhos, vals);
            cs.divergent |= ex.divergent;
            cs.limits[sgn > 0 ? 0 : 1] = ex.limit;
            (sgn > 0 ? cs.ladder_plus : cs.ladder_minus) = vals;
        }
        cplx tF = (cs.limits[0] + cs.limits[1]) / (2 * c32);
        cplx eF = (cs.limits[0] - cs.limits[1]) / (cplx(0, 2) * c32);
        const Vec3& xi = f.xi;
        // d_k a_j - d_j a_k from the FD curl components
        auto fd = [&](int j, int k) -> std::function<cplx(std::size_t)> {
            if (j == 0 && k == 1) return [&](std::size_t n) { return cplx(-curl.a[2][n]); };
            if (j == 0 && k == 2) return [&](std::size_t n) { return cplx(curl.a[1][n]); };
            return [&](std::size_t n) { return cplx(-curl.a[0][n]); };
        };
        double num = 0, den = 0;
        for (int p = 0; p < 3; ++p) {
            auto [j, k] = kCurlPairs[p];
            Vec3 zeta = Vec3::Zero();
            zeta[j] = xi[k];
            zeta[k] = -xi[j];
            cs.recovered[p] = zeta.dot(f.theta_t) * tF + zeta.dot(f.eta) * eF;
            cs.oracle[p] = cplx(0, -1) * direct_transform(g, cnodes, xi, fd(j, k));
            num += std::norm(cs.recovered[p] - cs.oracle[p]);
            den += std::norm(cs.oracle[p]);
            s_rec += std::norm(cs.recovered[p]);
        }
        cs.rel_err = den > 0 ? std::sqrt(num / den) : std::sqrt(num);
        s_orc += den;
        s_err += num;
        out.max_rel_err = std::max(out.max_rel_err, cs.rel_err);
        out.divergent += cs.divergent;
        out.samples.push_back(cs);
    }
    double m = 3.0 * std::max<std::size_t>(1, probe.frames.size());
    out.rms_recovered = std::sqrt(s_rec / m);
    out.rms_oracle = std::sqrt(s_orc / m);
    out.rms_rel_err = s_orc > 0 ? std::sqrt(s_err / s_orc) : std::sqrt(s_err / m);
    return out;
}

// ---------------------------------------------------------------------------
// Gauge potential phi(x) = int_0^1 A(sx).x ds

namespace detail {

// Catmull-Rom tricubic interpolation; zero outside the lattice.
inline double interp_cubic(const std::vector<double>& f, const CylinderGrid& g, const Vec3& p) {
    double fx = p.x() / g.hp + g.i0, fy = p.y() / g.hp + g.j0, fz = (p.z() + g.L) / g.h3;
    int i = static_cast<int>(std::floor(fx)), j = static_cast<int>(std::floor(fy)), k = static_cast<int>(std::floor(fz));
    double t[3] = {fx - i, fy - j, fz - k};
    double w[3][4];
    for (int a = 0; a < 3; ++a) {
        double u = t[a], u2 = u * u, u3 = u2 * u;
        w[a][0] = 0.5 * (-u3 + 2 * u2 - u);
        w[a][1] = 0.5 * (3 * u3 - 5 * u2 + 2);
        w[a][2] = 0.5 * (-3 * u3 + 4 * u2 + u);
        w[a][3] = 0.5 * (u3 - u2);
    }
    double acc = 0;
    for (int c = 0; c < 4; ++c)
        for (int b = 0; b < 4; ++b) {
            double wyz = w[1][b] * w[2][c];
            if (wyz == 0) continue;
            for (int a = 0; a < 4; ++a) acc += w[0][a] * wyz * lattice::at(f, g, i - 1 + a, j - 1 + b, k - 1 + c);
        }
    return acc;
}

}  // namespace detail

struct GaugeOptions {
    int samples = 64;  // minimum; raised to four samples per cell along long lines
    double curl_tol = 1e-6;
    bool normalize = true;  // phi = 0 at a reference node outside supp(A)
};

struct GaugeResult {
    ScalarField phi;
    std::size_t reference = 0;
    double curl_sup = 0;
};

inline GaugeResult gauge_potential(const VectorPotential& A, const GaugeOptions& opt = {}) {
    const auto& g = *A.grid;
    GaugeResult out;
    out.phi = ScalarField(A.grid);
    out.curl_sup = parallel_max(g.size(), [&](std::size_t n) { return curl_fd(A, n).cwiseAbs().maxCoeff(); });
    if (out.curl_sup > opt.curl_tol)
        throw FieldError("not a gradient field: FD curl " + std::to_string(out.curl_sup) + " exceeds tolerance");
    auto box = lattice::support_box(A);
    if (!box) return out;
    // support of the cubic interpolant
    Vec3 lo(g.x(box->i0 - 2), g.y(box->j0 - 2), g.z(box->k0 - 2));
    Vec3 hi(g.x(box->i1 + 2), g.y(box->j1 + 2), g.z(box->k1 + 2));
    auto nodes = g.nodes();
    auto line = [&](const Vec3& x) {
        // clip s in [0, 1] to the support box along s -> s x
        double s0 = 0, s1 = 1;
        for (int a = 0; a < 3; ++a) {
            if (std::abs(x[a]) < 1e-300) {
                if (0 < lo[a] || 0 > hi[a]) return 0.0;
                continue;
            }
            double t0 = lo[a] / x[a], t1 = hi[a] / x[a];
            if (t0 > t1) std::swap(t0, t1);
            s0 = std::max(s0, t0);
            s1 = std::min(s1, t1);
        }
        if (!(s1 > s0)) return 0.0;
        int N = std::max(opt.samples, static_cast<int>(std::ceil(4 * (s1 - s0) * x.norm() / std::min(g.hp, g.h3))) + 1);
        double ds = (s1 - s0) / (N - 1), acc = 0;
        for (int i = 0; i < N; ++i) {
            double s = s0 + i * ds, w = (i == 0 || i == N - 1) ? 0.5 : 1.0;
            Vec3 p = s * x;
            Vec3 a(detail::interp_cubic(A.a[0], g, p), detail::interp_cubic(A.a[1], g, p), detail::interp_cubic(A.a[2], g, p));
            acc += w * a.dot(x);
        }
        return acc * ds;
    };
    parallel_for(nodes.size(), [&](std::size_t t) { out.phi[nodes[t]] = line(g.point(nodes[t])); });
    // reference: mask node on the axis at the lower axial end (outside the support)
    int i0 = g.i0, j0 = g.j0;
    out.reference = g.idx(i0, j0, 0);
    if (!g.in_mask(out.reference)) out.reference = static_cast<std::size_t>(g.mask_nodes2.front());
    if (opt.normalize) {
        cplx c = out.phi[out.reference];
        for (std::size_t n : nodes) out.phi[n] -= c;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Electric potential samples  int q psi^2(rho^{-1/4} x3) e^{-i xi.x}

struct QSample {
    Vec3 xi;
    std::vector<cplx> ladder;
    cplx limit{};
    cplx oracle{};
    bool divergent = false;
    bool plateau = false;  // psi^2 = 1 on supp(q) at every ladder rho
};

inline std::vector<QSample> recover_q(const ScalarField& q, const std::vector<Vec3>& xis, const std::vector<double>& rhos) {
    const auto& g = *q.grid;
    auto box = lattice::support_box(q);
    std::vector<QSample> out;
    std::vector<std::size_t> nodes;
    double zmax = 0;
    if (box) {
        nodes = lattice::box_nodes(g, *box);
        zmax = std::max(std::abs(g.z(box->k0)), std::abs(g.z(box->k1)));
    }
    for (const auto& xi : xis) {
        QSample s;
        s.xi = xi;
        s.plateau = true;
        for (double rho : rhos) {
            AxialCutoff psi{rho};
            s.plateau &= zmax <= std::pow(rho, 0.25) * AxialCutoff::plateau;
            s.ladder.push_back(direct_transform(g, nodes, xi, [&](std::size_t n) {
                double p = psi.value(g.point(n).z());
                return q[n] * (p * p);
            }));
        }
        s.oracle = direct_transform(g, nodes, xi, [&](std::size_t n) { return q[n]; });
        if (s.plateau) {
            s.limit = s.ladder.back();
        } else {
            auto ex = richardson(rhos, s.ladder);
            s.limit = ex.limit;
            s.divergent = ex.divergent;
        }
        out.push_back(s);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Partial data: u = v2 - u1 solves (Delta_{A2} + q2) u = f, u = 0 on the boundary,
// with f = 2i A.grad u1 + (q + i div A + |A2|^2 - |A1|^2) u1, A = A1 - A2, q = q1 - q2.

struct PartialDataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// V = V' x R with V' a set of boundary segments of the cross-section.
struct BoundarySubset {
    std::vector<char> segments;

    static BoundarySubset full(const CrossSection& cs) { return {std::vector<char>(cs.segment_count(), 1)}; }
    static BoundarySubset none(const CrossSection& cs) { return {std::vector<char>(cs.segment_count(), 0)}; }
    // Smallest V' containing the shadowed face of every frame.
    static BoundarySubset covering(const CrossSection& cs, const std::vector<DirectionFrame>& frames, double eps) {
        auto v = none(cs);
        for (const auto& f : frames)
            for (std::size_t i : boundary_partition(cs, f.theta, eps).shadowed) v.segments[i] = 1;
        return v;
    }
    bool contains(std::size_t i) const { return segments[i] != 0; }
    bool is_full() const { return std::all_of(segments.begin(), segments.end(), [](char c) { return c != 0; }); }
};

// theta0 rotated by each offset angle; xi' = a theta^perp.
inline std::vector<DirectionFrame> frames_near(const Vec2& theta0, const std::vector<double>& offsets, double a,
                                               double xi3, double R) {
    std::vector<DirectionFrame> out;
    for (double t : offsets) {
        double c = std::cos(t), s = std::sin(t);
        Vec2 th(c * theta0.x() - s * theta0.y(), s * theta0.x() + c * theta0.y());
        th.normalize();
        out.push_back(build_frame(th, a * Vec2(-th.y(), th.x()), xi3, R));
    }
    return out;
}

struct PartialDataRow {
    double rho = 0;
    Vec2 theta;
    cplx pairing{};         // int f conj(u2)
    cplx complement{};      // (a): int over the complement of V of d_nu u conj(u2)
    cplx full_boundary{};   // int over the whole lateral boundary of d_nu u conj(u2)
    double illuminated = 0; // (b): int_{theta.nu > eps} |theta.nu| |e^{-rho theta.x'} d_nu u|^2
    double shadowed = 0;    // same weight over theta.nu < 0
    double source = 0;      // ||e^{-rho theta.x'} (Delta_{A2} + q2) u||^2
    double u2_trace = 0;    // ||e^{rho theta.x'} u2||^2 over the complement of V
    double mollification = 0;  // ||A2 - A2_rho||
    double bound = 0;       // eps^{-1} rho^2 ||A2 - A2_rho||^2 ||A||^2
    double ratio = 0;       // |pairing|^2 / bound
    double cauchy_schwarz = 0;  // |(a)|^2 / (eps^{-1} (b) u2_trace), at most 1
    double carleman = 0;        // rho (b) / (source + rho shadowed)
    double solve_residual = 0;
};

struct PartialDataReport {
    double eps = 0;
    Vec2 theta0;
    bool full_boundary = false;
    double A_norm = 0;
    std::vector<PartialDataRow> rows;
    std::vector<double> rhos;
    std::vector<double> fitted_C;  // per rho: max ratio over frames
    double drift = 0;              // max/min of fitted_C over the ladder
};

struct PartialDataOptions {
    CgoOptions cgo;
    double normal_tol = 1e-12;  // |A1.nu - A2.nu| on boundary nodes
};

namespace detail {

// Zero-Dirichlet solve of the envelope equation e^{-kappa.x}(Delta_A + q)(e^{kappa.x} U) = S.
inline std::pair<ScalarField, double> dirichlet_envelope(const VectorPotential& A, const ScalarField& q,
                                                         const Vec3c& kappa, const ScalarField& S) {
    const auto& g = *A.grid;
    auto rows = interior_nodes(g);
    std::vector<long> col(g.size(), -1);
    for (std::size_t r = 0; r < rows.size(); ++r) col[rows[r]] = static_cast<long>(r);
    std::vector<Eigen::Triplet<cplx>> trip;
    trip.reserve(rows.size() * 7);
    Eigen::VectorXcd rhs(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        auto st = envelope_stencil(g, A, q, kappa, rows[r]);
        auto nb = stencil_nodes(g, rows[r]);
        for (int t = 0; t < 7; ++t)
            if (col[nb[t]] >= 0) trip.emplace_back(static_cast<int>(r), static_cast<int>(col[nb[t]]), st.c[t]);
        rhs[r] = S[rows[r]];
    }
    Eigen::SparseMatrix<cplx> M(rows.size(), rows.size());
    M.setFromTriplets(trip.begin(), trip.end());
    M.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<cplx>> lu;
    lu.compute(M);
    if (lu.info() != Eigen::Success) throw SolverError("forward Dirichlet factorisation failed");
    Eigen::VectorXcd x = lu.solve(rhs);
    double res = (M * x - rhs).norm() / std::max(rhs.norm(), 1e-300);
    ScalarField U(A.grid);
    for (std::size_t r = 0; r < rows.size(); ++r) U[rows[r]] = x[r];
    return {U, res};
}

}  // namespace detail

inline PartialDataReport partial_data_check(const VectorPotential& A1, const VectorPotential& A2, const ScalarField& q1,
                                            const ScalarField& q2, const BoundarySubset& V,
                                            const std::vector<DirectionFrame>& frames, const Vec2& theta0, double eps,
                                            const std::vector<double>& rhos, const PartialDataOptions& opt = {}) {
    const auto& g = *A1.grid;
    const auto& cs = *g.cs;
    if (!g.same_lattice(*A2.grid) || !g.same_lattice(*q1.grid) || !g.same_lattice(*q2.grid))
        throw FieldError("fields live on different grids");
    if (!(eps > 0 && eps < 1)) throw PartialDataError("epsilon must lie in (0, 1)");
    if (V.segments.size() != cs.segment_count()) throw PartialDataError("boundary subset does not match the cross-section");
    for (const auto& f : frames) {
        if ((f.theta - theta0).norm() > eps + 1e-12) throw PartialDataError("frame direction farther than eps from theta0");
        for (std::size_t i : boundary_partition(cs, f.theta, eps).shadowed)
            if (!V.contains(i)) throw PartialDataError("V does not cover the shadowed face of a probe frame");
    }
    for (std::size_t t = 0; t < g.boundary_nodes2.size(); ++t) {
        Vec2 nu = g.boundary_normals2[t];
        for (int k = 0; k < g.nz; ++k) {
            std::size_t n = static_cast<std::size_t>(k) * g.plane() + g.boundary_nodes2[t];
            Vec3 d = A1.at(n) - A2.at(n);
            if (std::abs(d.x() * nu.x() + d.y() * nu.y()) > opt.normal_tol)
                throw PartialDataError("normal components of A1 and A2 differ on the boundary");
        }
    }

    VectorPotential A = A1 - A2;
    ScalarField qq(A1.grid), q2c(A1.grid);
    for (std::size_t n = 0; n < g.size(); ++n) {
        qq[n] = q1[n] - q2[n] + cplx(0, divergence(A, n)) + A2.at(n).squaredNorm() - A1.at(n).squaredNorm();
        q2c[n] = std::conj(q2[n]);
    }

    // each segment's length is carried by its nearest boundary node
    std::vector<std::size_t> seg_node(cs.segment_count());
    for (std::size_t i = 0; i < cs.segment_count(); ++i) {
        double best = 1e300;
        for (int m : g.boundary_nodes2) {
            double d = (Vec2(g.x(m % g.nx), g.y(m / g.nx)) - cs.midpoints[i]).squaredNorm();
            if (d < best) best = d, seg_node[i] = static_cast<std::size_t>(m);
        }
    }
    std::vector<std::size_t> band;
    for (int k = 1; k + 1 < g.nz; ++k)
        for (int m : g.boundary_nodes2) band.push_back(static_cast<std::size_t>(k) * g.plane() + m);
    std::vector<long> band_pos(g.plane(), -1);
    for (std::size_t t = 0; t < g.boundary_nodes2.size(); ++t) band_pos[g.boundary_nodes2[t]] = static_cast<long>(t);
    const std::size_t nb2 = g.boundary_nodes2.size();

    PartialDataReport rep;
    rep.eps = eps;
    rep.theta0 = theta0;
    rep.full_boundary = V.is_full();
    rep.rhos = rhos;
    rep.A_norm = l2_norm(A);
    auto nodes = g.nodes();
    for (double rho : rhos) {
        auto M = make_mollifier(rho);
        double moll = l2_norm(A2 - mollify(A2, M).A);
        double fit = 0;
        for (const auto& f : frames) {
            PartialDataRow row;
            row.rho = rho;
            row.theta = f.theta;
            row.mollification = moll;
            auto u1 = build_cgo(A1, q1, f, rho, 1, opt.cgo);
            auto u2 = build_cgo(A2, q2c, f, rho, -1, opt.cgo);
            auto e1 = u1.phased(), e2 = u2.phased();
            const Vec3c k1 = u1.kappa;
            // envelope of f; u1 conj(u2) carries no exponential since kappa1 + conj(kappa2) = 0
            ScalarField S(A1.grid);
            for (std::size_t n : interior_nodes(g)) {
                Vec3 a = A.at(n);
                cplx src = qq[n] * e1.env[n];
                if (a.squaredNorm() > 0) {
                    auto gr = lattice::grad(e1.env.v, g, n);
                    for (int d = 0; d < 3; ++d) src += cplx(0, 2) * a[d] * (gr[d] + k1[d] * e1.env[n]);
                }
                S[n] = src;
            }
            row.pairing = parallel_sum<cplx>(nodes.size(), [&](std::size_t t) {
                              return S[nodes[t]] * std::conj(e2.env[nodes[t]]);
                          }) *
                          g.cell_volume();
            row.source = std::pow(l2_norm(S), 2);
            auto [U, res] = detail::dirichlet_envelope(A2, q2, k1, S);
            row.solve_residual = res;
            auto tr = traces(U, A2, band);
            for (std::size_t i = 0; i < cs.segment_count(); ++i) {
                std::size_t m = seg_node[i];
                Vec2 nu = cs.normals[i];
                double tn = nu.dot(f.theta), len = cs.lengths[i];
                long p = band_pos[m];
                for (int k = 1; k + 1 < g.nz; ++k) {
                    std::size_t n = static_cast<std::size_t>(k) * g.plane() + m;
                    cplx dU = tr.normal_derivative[static_cast<std::size_t>(k - 1) * nb2 + static_cast<std::size_t>(p)];
                    double w = len * g.h3;
                    cplx val = dU * std::conj(e2.env[n]) * w;
                    row.full_boundary += val;
                    if (!V.contains(i)) {
                        row.complement += val;
                        row.u2_trace += std::norm(e2.env[n]) * w;
                    }
                    if (tn > eps) row.illuminated += tn * std::norm(dU) * w;
                    if (tn < 0) row.shadowed += -tn * std::norm(dU) * w;
                }
            }
            row.bound = rho * rho * moll * moll * rep.A_norm * rep.A_norm / eps;
            row.ratio = row.bound > 0 ? std::norm(row.pairing) / row.bound : 0;
            double cs_den = row.illuminated * row.u2_trace / eps;
            row.cauchy_schwarz = cs_den > 0 ? std::norm(row.complement) / cs_den : 0;
            double car_den = row.source + rho * row.shadowed;
            row.carleman = car_den > 0 ? rho * row.illuminated / car_den : 0;
            fit = std::max(fit, row.ratio);
            rep.rows.push_back(row);
        }
        rep.fitted_C.push_back(fit);
    }
    if (!rep.fitted_C.empty()) {
        auto [lo, hi] = std::minmax_element(rep.fitted_C.begin(), rep.fitted_C.end());
        rep.drift = *lo > 0 ? *hi / *lo : (*hi > 0 ? std::numeric_limits<double>::infinity() : 1.0);
    }
    return rep;
}

}  // namespace cgo
