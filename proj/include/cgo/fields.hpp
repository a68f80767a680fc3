#pragma once

#include "cgo/geometry.hpp"
#include "cgo/parallel.hpp"

#include <fftw3.h>

#include <array>
#include <cmath>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace cgo {

using GridPtr = std::shared_ptr<const CylinderGrid>;

struct FieldError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Complex samples on every lattice node (zero outside the region of interest).
struct ScalarField {
    GridPtr grid;
    std::vector<cplx> v;

    ScalarField() = default;
    explicit ScalarField(GridPtr g) : grid(std::move(g)), v(grid->size(), cplx{}) {}

    std::size_t size() const { return v.size(); }
    cplx& operator[](std::size_t n) { return v[n]; }
    const cplx& operator[](std::size_t n) const { return v[n]; }
};

// Three real components per lattice node.
struct VectorPotential {
    GridPtr grid;
    std::array<std::vector<double>, 3> a;
    double axial_support = 0.0;  // half-length of the axial support

    VectorPotential() = default;
    explicit VectorPotential(GridPtr g) : grid(std::move(g)) {
        for (auto& c : a) c.assign(grid->size(), 0.0);
    }
    Vec3 at(std::size_t n) const { return {a[0][n], a[1][n], a[2][n]}; }
    void set(std::size_t n, const Vec3& v) {
        a[0][n] = v.x();
        a[1][n] = v.y();
        a[2][n] = v.z();
    }
    std::size_t size() const { return a[0].size(); }
};

// kappa.x without conjugation.
inline cplx bilinear(const Vec3c& k, const Vec3& x) { return k.x() * x.x() + k.y() * x.y() + k.z() * x.z(); }

// exp(kappa.x) * env: exponential weights and plane-wave phases are carried
// analytically and only the envelope is sampled.
struct PhasedField {
    Vec3c kappa = Vec3c::Zero();
    ScalarField env;

    cplx factor(const Vec3& x) const {
        return std::exp(bilinear(kappa, x));
    }
    cplx value(std::size_t n) const { return factor(env.grid->point(n)) * env[n]; }
};

// ---------------------------------------------------------------------------
// Lattice helpers

namespace lattice {

template <class T>
inline T at(const std::vector<T>& f, const CylinderGrid& g, int i, int j, int k) {
    if (i < 0 || j < 0 || k < 0 || i >= g.nx || j >= g.ny || k >= g.nz) return T{};
    return f[g.idx(i, j, k)];
}

// Trilinear interpolation; zero outside the lattice.
template <class T>
inline T interp(const std::vector<T>& f, const CylinderGrid& g, const Vec3& p) {
    double fx = p.x() / g.hp + g.i0, fy = p.y() / g.hp + g.j0, fz = (p.z() + g.L) / g.h3;
    double ix = std::floor(fx), iy = std::floor(fy), iz = std::floor(fz);
    if (ix < -1 || iy < -1 || iz < -1 || ix >= g.nx || iy >= g.ny || iz >= g.nz) return T{};
    int i = static_cast<int>(ix), j = static_cast<int>(iy), k = static_cast<int>(iz);
    double tx = fx - ix, ty = fy - iy, tz = fz - iz;
    auto v = [&](int di, int dj, int dk) { return at(f, g, i + di, j + dj, k + dk); };
    T c00 = v(0, 0, 0) * (1 - tx) + v(1, 0, 0) * tx;
    T c10 = v(0, 1, 0) * (1 - tx) + v(1, 1, 0) * tx;
    T c01 = v(0, 0, 1) * (1 - tx) + v(1, 0, 1) * tx;
    T c11 = v(0, 1, 1) * (1 - tx) + v(1, 1, 1) * tx;
    T c0 = c00 * (1 - ty) + c10 * ty;
    T c1 = c01 * (1 - ty) + c11 * ty;
    return c0 * (1 - tz) + c1 * tz;
}

// Trilinear interpolation using only mask corners, weights renormalised.
// Used for traces of fields that are defined on the mask only.
template <class T>
inline T interp_masked(const std::vector<T>& f, const CylinderGrid& g, const Vec3& p) {
    double fx = p.x() / g.hp + g.i0, fy = p.y() / g.hp + g.j0, fz = (p.z() + g.L) / g.h3;
    int i = static_cast<int>(std::floor(fx)), j = static_cast<int>(std::floor(fy)),
        k = static_cast<int>(std::floor(fz));
    double tx = fx - i, ty = fy - j, tz = fz - k;
    T acc{};
    double wsum = 0;
    for (int dk = 0; dk < 2; ++dk)
        for (int dj = 0; dj < 2; ++dj)
            for (int di = 0; di < 2; ++di) {
                int ii = i + di, jj = j + dj, kk = std::clamp(k + dk, 0, g.nz - 1);
                if (ii < 0 || jj < 0 || ii >= g.nx || jj >= g.ny) continue;
                if (!g.mask2[jj * g.nx + ii]) continue;
                double w = (di ? tx : 1 - tx) * (dj ? ty : 1 - ty) * (dk ? tz : 1 - tz);
                acc += f[g.idx(ii, jj, kk)] * w;
                wsum += w;
            }
    return wsum > 0 ? acc / wsum : T{};
}

// Lattice index bounding box of nonzero entries (inclusive); empty -> nullopt.
struct Box {
    int i0, i1, j0, j1, k0, k1;
};

template <class Pred>
inline std::optional<Box> support_box(const CylinderGrid& g, Pred nonzero) {
    Box b{g.nx, -1, g.ny, -1, g.nz, -1};
    for (std::size_t n = 0; n < g.size(); ++n) {
        if (!nonzero(n)) continue;
        int i, j, k;
        g.ijk(n, i, j, k);
        b.i0 = std::min(b.i0, i);
        b.i1 = std::max(b.i1, i);
        b.j0 = std::min(b.j0, j);
        b.j1 = std::max(b.j1, j);
        b.k0 = std::min(b.k0, k);
        b.k1 = std::max(b.k1, k);
    }
    if (b.i1 < 0) return std::nullopt;
    return b;
}

inline std::optional<Box> support_box(const VectorPotential& A) {
    return support_box(*A.grid, [&](std::size_t n) { return A.a[0][n] != 0 || A.a[1][n] != 0 || A.a[2][n] != 0; });
}
inline std::optional<Box> support_box(const ScalarField& f) {
    return support_box(*f.grid, [&](std::size_t n) { return f.v[n] != cplx{}; });
}

inline Box dilate(Box b, int d, const CylinderGrid& g) {
    b.i0 = std::max(0, b.i0 - d);
    b.j0 = std::max(0, b.j0 - d);
    b.k0 = std::max(0, b.k0 - d);
    b.i1 = std::min(g.nx - 1, b.i1 + d);
    b.j1 = std::min(g.ny - 1, b.j1 + d);
    b.k1 = std::min(g.nz - 1, b.k1 + d);
    return b;
}

inline std::vector<std::size_t> box_nodes(const CylinderGrid& g, const Box& b) {
    std::vector<std::size_t> out;
    for (int k = b.k0; k <= b.k1; ++k)
        for (int j = b.j0; j <= b.j1; ++j)
            for (int i = b.i0; i <= b.i1; ++i) out.push_back(g.idx(i, j, k));
    return out;
}

// Nodes whose six lattice neighbours exist (centred differences are defined).
inline bool has_neighbours(const CylinderGrid& g, std::size_t n) {
    int i, j, k;
    g.ijk(n, i, j, k);
    return i > 0 && j > 0 && k > 0 && i + 1 < g.nx && j + 1 < g.ny && k + 1 < g.nz;
}

// Centred gradient of lattice samples at node n (requires has_neighbours).
template <class T>
inline std::array<T, 3> grad(const std::vector<T>& f, const CylinderGrid& g, std::size_t n) {
    const std::size_t sx = 1, sy = g.nx, sz = g.plane();
    return {(f[n + sx] - f[n - sx]) / (2 * g.hp), (f[n + sy] - f[n - sy]) / (2 * g.hp),
            (f[n + sz] - f[n - sz]) / (2 * g.h3)};
}

template <class T>
inline T laplacian(const std::vector<T>& f, const CylinderGrid& g, std::size_t n) {
    const std::size_t sx = 1, sy = g.nx, sz = g.plane();
    double ip2 = 1.0 / (g.hp * g.hp), i32 = 1.0 / (g.h3 * g.h3);
    return (f[n + sx] + f[n - sx] + f[n + sy] + f[n - sy] - 4.0 * f[n]) * ip2 +
           (f[n + sz] + f[n - sz] - 2.0 * f[n]) * i32;
}

}  // namespace lattice

inline double divergence(const VectorPotential& A, std::size_t n) {
    const auto& g = *A.grid;
    if (!lattice::has_neighbours(g, n)) return 0.0;
    return lattice::grad(A.a[0], g, n)[0] + lattice::grad(A.a[1], g, n)[1] + lattice::grad(A.a[2], g, n)[2];
}

// Centred FD curl components (d2a3-d3a2, d3a1-d1a3, d1a2-d2a1) at node n.
inline Vec3 curl_fd(const VectorPotential& A, std::size_t n) {
    const auto& g = *A.grid;
    if (!lattice::has_neighbours(g, n)) return Vec3::Zero();
    auto g0 = lattice::grad(A.a[0], g, n), g1 = lattice::grad(A.a[1], g, n), g2 = lattice::grad(A.a[2], g, n);
    return {g2[1] - g1[2], g0[2] - g2[0], g1[0] - g0[1]};
}

// Trapezoid (node-sum) integral of f over mask nodes.
template <class F>
inline auto integrate_mask(const CylinderGrid& g, F&& f) {
    using T = decltype(f(std::size_t{}));
    const std::size_t P = g.mask_nodes2.size();
    T s = parallel_sum<T>(P * g.nz, [&](std::size_t t) {
        std::size_t k = t / P, m = static_cast<std::size_t>(g.mask_nodes2[t % P]);
        return f(k * g.plane() + m);
    });
    return s * g.cell_volume();
}

// Node-sum integral over the whole lattice box (for fields extended by zero).
template <class F>
inline auto integrate_box(const CylinderGrid& g, F&& f) {
    using T = decltype(f(std::size_t{}));
    return parallel_sum<T>(g.size(), f) * g.cell_volume();
}

inline double l2_norm(const ScalarField& f) {
    return std::sqrt(integrate_box(*f.grid, [&](std::size_t n) { return std::norm(f.v[n]); }));
}

inline double l2_norm(const VectorPotential& A) {
    return std::sqrt(integrate_box(*A.grid, [&](std::size_t n) {
        return A.a[0][n] * A.a[0][n] + A.a[1][n] * A.a[1][n] + A.a[2][n] * A.a[2][n];
    }));
}

inline double sup_norm(const VectorPotential& A) {
    return parallel_max(A.size(), [&](std::size_t n) { return A.at(n).norm(); });
}

inline double sup_norm(const ScalarField& f) {
    return parallel_max(f.size(), [&](std::size_t n) { return std::abs(f.v[n]); });
}

inline VectorPotential operator-(const VectorPotential& x, const VectorPotential& y) {
    VectorPotential r = x;
    for (int c = 0; c < 3; ++c)
        for (std::size_t n = 0; n < r.size(); ++n) r.a[c][n] -= y.a[c][n];
    r.axial_support = std::max(x.axial_support, y.axial_support);
    return r;
}

inline VectorPotential operator+(const VectorPotential& x, const VectorPotential& y) {
    VectorPotential r = x;
    for (int c = 0; c < 3; ++c)
        for (std::size_t n = 0; n < r.size(); ++n) r.a[c][n] += y.a[c][n];
    r.axial_support = std::max(x.axial_support, y.axial_support);
    return r;
}

inline VectorPotential scaled(const VectorPotential& x, double s) {
    VectorPotential r = x;
    for (int c = 0; c < 3; ++c)
        for (auto& v : r.a[c]) v *= s;
    return r;
}

// ---------------------------------------------------------------------------
// Synthetic potentials

// Compactly supported bump exp(-s^2/(1-s^2)), s = |x-c|/a: a Gaussian core with
// exact support in the closed ball of radius a.
struct Bump {
    Vec3 center = Vec3::Zero();
    double radius = 0.5;
    double amplitude = 1.0;

    double value(const Vec3& x) const {
        double s2 = (x - center).squaredNorm() / (radius * radius);
        if (s2 >= 1.0) return 0.0;
        return amplitude * std::exp(-s2 / (1.0 - s2));
    }
    Vec3 gradient(const Vec3& x) const {
        Vec3 d = x - center;
        double s2 = d.squaredNorm() / (radius * radius);
        if (s2 >= 1.0) return Vec3::Zero();
        double e = std::exp(-s2 / (1.0 - s2));
        double om = 1.0 - s2;
        // d/dx exp(-s2/(1-s2)) = exp(.) * (-1/(1-s2)^2) * d(s2)/dx, d(s2)/dx = 2d/a^2
        return amplitude * e * (-1.0 / (om * om)) * (2.0 / (radius * radius)) * d;
    }
    double laplacian(const Vec3& x) const {
        Vec3 d = x - center;
        double a2 = radius * radius, s2 = d.squaredNorm() / a2;
        if (s2 >= 1.0) return 0.0;
        double om = 1.0 - s2, e = std::exp(-s2 / om);
        double f1 = -e / (om * om), f2 = e * (1.0 / (om * om * om * om) - 2.0 / (om * om * om));
        // f''(u)|grad u|^2 + f'(u) Delta u with u = s2
        return amplitude * (f2 * 4.0 * d.squaredNorm() / (a2 * a2) + f1 * 6.0 / a2);
    }
};

enum class PotentialKind { GaussianBump, GradientField, CurlCarrier, Tent, Zero };

struct PotentialSpec {
    PotentialKind kind = PotentialKind::GaussianBump;
    Bump bump;
    Vec3 direction = Vec3(0, 0, 1);  // gaussian-bump / tent vector direction
    bool discrete_gradient = false;  // gradient-field: centred FD of sampled phi

    Vec3 eval(const Vec3& x) const {
        switch (kind) {
            case PotentialKind::GaussianBump:
                return bump.value(x) * direction;
            case PotentialKind::GradientField:
                return bump.gradient(x);
            case PotentialKind::CurlCarrier:
                return Vec3(0.0, bump.value(x) * x.x(), 0.0);
            case PotentialKind::Tent: {
                double r = (x - bump.center).norm() / bump.radius;
                return (r < 1.0 ? bump.amplitude * (1.0 - r) : 0.0) * direction;
            }
            case PotentialKind::Zero:
                break;
        }
        return Vec3::Zero();
    }
};

inline void check_support_fits(const CylinderGrid& g, const Bump& b) {
    Vec2 c(b.center.x(), b.center.y());
    const auto& cs = *g.cs;
    if (!cs.contains(c) || cs.distance_to_boundary(c) < b.radius)
        throw FieldError("support overflow: bump leaves the cross-section");
    if (std::abs(b.center.z()) + b.radius > g.L / 2 + 1e-12)
        throw FieldError("support overflow: bump exceeds |x3| <= L/2");
}

inline VectorPotential synth_potential(GridPtr g, const PotentialSpec& spec) {
    VectorPotential A(g);
    if (spec.kind == PotentialKind::Zero || spec.bump.amplitude == 0.0) return A;
    check_support_fits(*g, spec.bump);
    A.axial_support = std::abs(spec.bump.center.z()) + spec.bump.radius;
    if (spec.kind == PotentialKind::GradientField && spec.discrete_gradient) {
        std::vector<double> phi(g->size());
        parallel_for(g->size(), [&](std::size_t n) { phi[n] = spec.bump.value(g->point(n)); });
        parallel_for(g->size(), [&](std::size_t n) {
            if (!lattice::has_neighbours(*g, n)) return;
            auto d = lattice::grad(phi, *g, n);
            A.set(n, {d[0], d[1], d[2]});
        });
        return A;
    }
    parallel_for(g->size(), [&](std::size_t n) { A.set(n, spec.eval(g->point(n))); });
    return A;
}

inline ScalarField synth_scalar(GridPtr g, const Bump& b, cplx amplitude = 1.0) {
    ScalarField q(g);
    if (b.amplitude == 0.0 || amplitude == cplx{}) return q;
    check_support_fits(*g, b);
    parallel_for(g->size(), [&](std::size_t n) { q[n] = amplitude * b.value(g->point(n)); });
    return q;
}

// ---------------------------------------------------------------------------
// Mollifier chi_rho(x) = rho^{3/4} chi(rho^{1/4} x), chi = c exp(-1/(1-|x|^2)).

struct Mollifier {
    double rho = 2.0;
    double radius = 1.0;  // rho^{-1/4}
    double c = 1.0;       // unit-mass constant of the base bump

    double base(double r2) const { return r2 < 1.0 ? c * std::exp(-1.0 / (1.0 - r2)) : 0.0; }
    double operator()(const Vec3& x) const {
        double s = std::pow(rho, 0.25);
        return std::pow(rho, 0.75) * base((s * x).squaredNorm());
    }
    double peak() const { return std::pow(rho, 0.75) * base(0.0); }

    // Lattice quadrature of the kernel mass with n nodes per support radius.
    double mass(int n = 24) const {
        double h = radius / n, s = 0;
        for (int k = -n; k <= n; ++k)
            for (int j = -n; j <= n; ++j)
                for (int i = -n; i <= n; ++i) s += (*this)(Vec3(i * h, j * h, k * h));
        return s * h * h * h;
    }
};

inline double base_bump_constant() {
    // 4 pi int_0^1 r^2 exp(-1/(1-r^2)) dr by composite Simpson; the integrand
    // is flat at r = 1 so the rule converges fast.
    const int n = 20000;
    auto f = [](double r) { return r < 1.0 ? r * r * std::exp(-1.0 / (1.0 - r * r)) : 0.0; };
    double h = 1.0 / n, s = f(0) + f(1);
    for (int i = 1; i < n; ++i) s += f(i * h) * (i % 2 ? 4 : 2);
    return 1.0 / (4 * pi * s * h / 3);
}

inline Mollifier make_mollifier(double rho) {
    if (!(rho > 1)) throw FieldError("mollifier requires rho > 1");
    static const double c = base_bump_constant();
    Mollifier m;
    m.rho = rho;
    m.radius = std::pow(rho, -0.25);
    m.c = c;
    return m;
}

struct MollifyResult {
    VectorPotential A;
    bool under_resolved = false;
    std::size_t stencil_size = 0;
};

// Componentwise convolution by direct quadrature over the kernel support. The
// lattice stencil is normalised to unit sum so constants are reproduced exactly.
inline MollifyResult mollify(const VectorPotential& A, const Mollifier& M) {
    const auto& g = *A.grid;
    struct Tap {
        int di, dj, dk;
        double w;
    };
    std::vector<Tap> taps;
    int ri = static_cast<int>(std::ceil(M.radius / g.hp)), rk = static_cast<int>(std::ceil(M.radius / g.h3));
    double wsum = 0;
    for (int dk = -rk; dk <= rk; ++dk)
        for (int dj = -ri; dj <= ri; ++dj)
            for (int di = -ri; di <= ri; ++di) {
                double w = M(Vec3(di * g.hp, dj * g.hp, dk * g.h3));
                if (w > 0) {
                    taps.push_back({di, dj, dk, w});
                    wsum += w;
                }
            }
    MollifyResult out;
    out.A = VectorPotential(A.grid);
    out.A.axial_support = A.axial_support + M.radius;
    if (taps.empty()) {
        out.under_resolved = true;
        out.A = A;
        return out;
    }
    for (auto& t : taps) t.w /= wsum;
    out.stencil_size = taps.size();
    out.under_resolved = taps.size() <= 1 || M.radius < std::max(g.hp, g.h3);
    auto box = lattice::support_box(A);
    if (!box) return out;
    auto b = lattice::dilate(*box, std::max(ri, rk), g);
    auto nodes = lattice::box_nodes(g, b);
    parallel_for(nodes.size(), [&](std::size_t t) {
        std::size_t n = nodes[t];
        int i, j, k;
        g.ijk(n, i, j, k);
        double s0 = 0, s1 = 0, s2 = 0;
        for (const auto& tp : taps) {
            int ii = i - tp.di, jj = j - tp.dj, kk = k - tp.dk;
            if (ii < 0 || jj < 0 || kk < 0 || ii >= g.nx || jj >= g.ny || kk >= g.nz) continue;
            std::size_t m = g.idx(ii, jj, kk);
            s0 += tp.w * A.a[0][m];
            s1 += tp.w * A.a[1][m];
            s2 += tp.w * A.a[2][m];
        }
        out.A.a[0][n] = s0;
        out.A.a[1][n] = s1;
        out.A.a[2][n] = s2;
    });
    return out;
}

// ---------------------------------------------------------------------------
// Semiclassical H^m_rho norms on a zero-padded periodic box.

namespace detail {
inline std::mutex& fftw_mutex() {
    static std::mutex m;
    return m;
}
inline int fft_size(int n) {
    // smallest 2^a 3^b 5^c >= n
    for (int m = std::max(n, 1);; ++m) {
        int r = m;
        for (int p : {2, 3, 5})
            while (r % p == 0) r /= p;
        if (r == 1) return m;
    }
}
}  // namespace detail

// (sum_k (|xi_k + shift|^2 + rho^2)^m |f^(xi_k)|^2 dxi)^{1/2}. The shift
// evaluates the norm of exp(i shift.x) f without sampling the plane wave.
inline double weighted_norm(const ScalarField& f, int m, double rho, const Vec3& shift = Vec3::Zero()) {
    if (m < -2 || m > 2) throw FieldError("weight exponent must lie in [-2, 2]");
    const auto& g = *f.grid;
    auto box = lattice::support_box(f);
    if (!box) return 0.0;
    int bx = box->i1 - box->i0 + 1, by = box->j1 - box->j0 + 1, bz = box->k1 - box->k0 + 1;
    int Nx = detail::fft_size(2 * bx), Ny = detail::fft_size(2 * by), Nz = detail::fft_size(2 * bz);
    std::size_t N = static_cast<std::size_t>(Nx) * Ny * Nz;
    fftw_complex* buf = fftw_alloc_complex(N);
    for (std::size_t t = 0; t < N; ++t) buf[t][0] = buf[t][1] = 0.0;
    for (int k = 0; k < bz; ++k)
        for (int j = 0; j < by; ++j)
            for (int i = 0; i < bx; ++i) {
                cplx v = f.v[g.idx(box->i0 + i, box->j0 + j, box->k0 + k)];
                std::size_t t = (static_cast<std::size_t>(i) * Ny + j) * Nz + k;
                buf[t][0] = v.real();
                buf[t][1] = v.imag();
            }
    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(detail::fftw_mutex());
        plan = fftw_plan_dft_3d(Nx, Ny, Nz, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
        std::lock_guard<std::mutex> lock(detail::fftw_mutex());
        fftw_destroy_plan(plan);
    }
    auto freq = [](int k, int n, double h) {
        int s = k < (n + 1) / 2 ? k : k - n;
        return 2 * pi * s / (n * h);
    };
    double acc = 0;
    for (int i = 0; i < Nx; ++i) {
        double xi1 = freq(i, Nx, g.hp) + shift.x();
        for (int j = 0; j < Ny; ++j) {
            double xi2 = freq(j, Ny, g.hp) + shift.y();
            double part = 0;
            for (int k = 0; k < Nz; ++k) {
                double xi3 = freq(k, Nz, g.h3) + shift.z();
                double w = std::pow(xi1 * xi1 + xi2 * xi2 + xi3 * xi3 + rho * rho, m);
                std::size_t t = (static_cast<std::size_t>(i) * Ny + j) * Nz + k;
                part += w * (buf[t][0] * buf[t][0] + buf[t][1] * buf[t][1]);
            }
            acc += part;
        }
    }
    fftw_free(buf);
    return std::sqrt(acc * g.cell_volume() / static_cast<double>(N));
}

}  // namespace cgo
