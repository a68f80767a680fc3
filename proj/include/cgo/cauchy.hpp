#pragma once

#include "cgo/fields.hpp"

#include <limits>

namespace cgo {

struct CauchyOptions {
    int min_angles = 64;
    double radial_step = 0.5;  // in units of h'
    double arc_step = 1.0;     // angular spacing at the far edge of the support, in units of h'
};

// Pointwise evaluator of
//   Phi(x) = (-i/2pi) int int g(x - sigma s1 theta~ - s2 eta) / (s1 + i s2) ds,
//   g = (sigma theta~ + i eta).A_rho.
// In polar coordinates s = r(cos phi, sin phi) the kernel becomes e^{-i phi} dr dphi.
class CauchyPhase {
public:
    CauchyPhase(const VectorPotential& A_rho, const DirectionFrame& frame, int sigma, CauchyOptions opt = {})
        : grid_(A_rho.grid), frame_(frame), sigma_(sigma), opt_(opt) {
        if (sigma != 1 && sigma != -1) throw FieldError("sigma must be +1 or -1");
        const auto& g = *grid_;
        Vec3c dir = static_cast<double>(sigma) * frame.theta_t.cast<cplx>() + cplx(0, 1) * frame.eta.cast<cplx>();
        g_.assign(g.size(), cplx{});
        for (std::size_t n = 0; n < g.size(); ++n)
            g_[n] = dir.x() * A_rho.a[0][n] + dir.y() * A_rho.a[1][n] + dir.z() * A_rho.a[2][n];
        auto box = lattice::support_box(g, [&](std::size_t n) { return g_[n] != cplx{}; });
        zero_ = !box.has_value();
        if (box) {
            // trilinear interpolant is supported one cell beyond the nonzero nodes
            lo_ = Vec3(g.x(box->i0 - 1), g.y(box->j0 - 1), g.z(box->k0 - 1));
            hi_ = Vec3(g.x(box->i1 + 1), g.y(box->j1 + 1), g.z(box->k1 + 1));
        }
        dr_ = opt_.radial_step * g.hp;
    }

    bool zero() const { return zero_; }
    int sigma() const { return sigma_; }
    const DirectionFrame& frame() const { return frame_; }
    const GridPtr& grid() const { return grid_; }
    cplx g_at(std::size_t n) const { return g_[n]; }
    double reach(const Vec3& x) const {
        double r = 0;
        for (int c = 0; c < 8; ++c) {
            Vec3 p((c & 1) ? hi_.x() : lo_.x(), (c & 2) ? hi_.y() : lo_.y(), (c & 4) ? hi_.z() : lo_.z());
            r = std::max(r, (p - x).norm());
        }
        return r;
    }

    // Angle count used at x (a multiple of 4, so the table is symmetric under
    // phi -> pi - phi and phi -> -phi).
    int angles_at(const Vec3& x) const {
        int n = static_cast<int>(std::ceil(2 * pi * reach(x) / (opt_.arc_step * grid_->hp)));
        n = std::max(n, opt_.min_angles);
        return (n + 3) / 4 * 4;
    }

    cplx operator()(const Vec3& x) const {
        if (zero_) return {};
        const int N = angles_at(x);
        const auto& tab = table(N);
        const double dphi = 2 * pi / N;
        cplx total{};
        for (int k = 0; k < N; ++k) {
            const double c = tab[k].first, s = tab[k].second;
            Vec3 d = (sigma_ * c) * frame_.theta_t + s * frame_.eta;
            double rin, rout;
            if (!clip(x, d, rin, rout)) continue;
            cplx line = radial_sum(x, d, rin, rout);
            total += cplx(c, -s) * line;
        }
        return cplx(0, -1) / (2 * pi) * total * dphi;
    }

private:
    // Ray x - r d, r >= 0, against the support box.
    bool clip(const Vec3& x, const Vec3& d, double& rin, double& rout) const {
        rin = 0.0;
        rout = std::numeric_limits<double>::infinity();
        for (int a = 0; a < 3; ++a) {
            double da = -d[a];
            if (std::abs(da) < 1e-300) {
                if (x[a] < lo_[a] || x[a] > hi_[a]) return false;
                continue;
            }
            double t0 = (lo_[a] - x[a]) / da, t1 = (hi_[a] - x[a]) / da;
            if (t0 > t1) std::swap(t0, t1);
            rin = std::max(rin, t0);
            rout = std::min(rout, t1);
        }
        return rout > rin;
    }

    cplx radial_sum(const Vec3& x, const Vec3& d, double rin, double rout) const {
        const auto& g = *grid_;
        long j0 = static_cast<long>(std::ceil(rin / dr_)), j1 = static_cast<long>(std::floor(rout / dr_));
        cplx acc{};
        for (long j = j0; j <= j1; ++j) {
            double w = 1.0;
            // Gregory end correction at r = 0 (the kernel cut is the only endpoint
            // where the integrand is not already zero).
            if (j == 0) w = 3.0 / 8.0;
            else if (j == 1) w = 7.0 / 6.0;
            else if (j == 2) w = 23.0 / 24.0;
            acc += w * lattice::interp(g_, g, x - (j * dr_) * d);
        }
        return acc * dr_;
    }

    static const std::vector<std::pair<double, double>>& table(int N) {
        static thread_local std::vector<std::pair<double, double>> cache;
        static thread_local int cached = -1;
        if (cached == N) return cache;
        cache.assign(N, {0.0, 0.0});
        const int q = N / 4;
        for (int k = 0; k <= q; ++k) {
            double a = 2 * pi * k / N;
            double c = std::cos(a), s = std::sin(a);
            if (k == 0) s = 0.0, c = 1.0;
            if (k == q) c = 0.0, s = 1.0;
            cache[k] = {c, s};
        }
        for (int k = q + 1; k <= 2 * q; ++k) cache[k] = {-cache[2 * q - k].first, cache[2 * q - k].second};
        for (int k = 2 * q + 1; k < N; ++k) cache[k] = {cache[N - k].first, -cache[N - k].second};
        cached = N;
        return cache;
    }

    GridPtr grid_;
    DirectionFrame frame_;
    int sigma_;
    CauchyOptions opt_;
    std::vector<cplx> g_;
    Vec3 lo_ = Vec3::Zero(), hi_ = Vec3::Zero();
    bool zero_ = true;
    double dr_ = 0.05;
};

// Phi sampled on a node set (zero elsewhere).
struct PhaseCorrector {
    ScalarField phi;
    std::vector<std::size_t> nodes;
    DirectionFrame frame;
    int sigma = 1;
    double rho = 0;
};

inline PhaseCorrector cauchy_phase(const CauchyPhase& eval, const std::vector<std::size_t>& nodes, double rho) {
    const auto& g = *eval.grid();
    const auto& f = eval.frame();
    double cap = g.cs->R + 1;
    PhaseCorrector pc;
    pc.phi = ScalarField(eval.grid());
    pc.nodes = nodes;
    pc.frame = f;
    pc.sigma = eval.sigma();
    pc.rho = rho;
    for (std::size_t n : nodes) {
        Vec3 x = g.point(n);
        if (std::hypot(x.x(), x.y()) <= cap && !eval.zero() && eval.reach(x) > f.R1)
            throw FieldError("quadrature window: support reaches beyond R1 of the frame");
    }
    parallel_for(nodes.size(), [&](std::size_t t) { pc.phi[nodes[t]] = eval(g.point(nodes[t])); });
    return pc;
}

inline PhaseCorrector cauchy_phase(const VectorPotential& A_rho, const DirectionFrame& frame, int sigma,
                                   const std::vector<std::size_t>& nodes, double rho, CauchyOptions opt = {}) {
    return cauchy_phase(CauchyPhase(A_rho, frame, sigma, opt), nodes, rho);
}

// ---------------------------------------------------------------------------
// d-bar residual of b = e^Phi by centred differences along sigma theta~ and eta.
// `volume` is the quadrature weight per node (default: the cell volume), so
// residuals sampled on a coarse node set of a refined grid stay comparable.

struct DbarResidual {
    double sup_mollified = 0, l2_mollified = 0;
    double sup_exact = 0, l2_exact = 0;
    double mollification_error = 0;  // ||A - A_rho||_{L2}
};

inline DbarResidual dbar_residual(const CauchyPhase& eval, const VectorPotential& A_rho, const VectorPotential& A,
                                  const std::vector<std::size_t>& nodes, double delta, double volume = 0) {
    const auto& g = *eval.grid();
    if (volume <= 0) volume = g.cell_volume();
    const auto& f = eval.frame();
    const double sg = eval.sigma();
    Vec3c dir = sg * f.theta_t.cast<cplx>() + cplx(0, 1) * f.eta.cast<cplx>();
    std::vector<cplx> rm(nodes.size()), re(nodes.size());
    parallel_for(nodes.size(), [&](std::size_t t) {
        std::size_t n = nodes[t];
        Vec3 x = g.point(n);
        Vec3 a = sg * f.theta_t, e = f.eta;
        cplx bpa = std::exp(eval(x + delta * a)), bma = std::exp(eval(x - delta * a));
        cplx bpe = std::exp(eval(x + delta * e)), bme = std::exp(eval(x - delta * e));
        cplx b = std::exp(eval(x));
        cplx D = ((bpa - bma) + cplx(0, 1) * (bpe - bme)) / (2 * delta);
        cplx gm = dir.x() * A_rho.a[0][n] + dir.y() * A_rho.a[1][n] + dir.z() * A_rho.a[2][n];
        cplx ge = dir.x() * A.a[0][n] + dir.y() * A.a[1][n] + dir.z() * A.a[2][n];
        rm[t] = D + cplx(0, 1) * gm * b;
        re[t] = D + cplx(0, 1) * ge * b;
    });
    DbarResidual r;
    double s2m = 0, s2e = 0;
    for (std::size_t t = 0; t < nodes.size(); ++t) {
        r.sup_mollified = std::max(r.sup_mollified, std::abs(rm[t]));
        r.sup_exact = std::max(r.sup_exact, std::abs(re[t]));
        s2m += std::norm(rm[t]);
        s2e += std::norm(re[t]);
    }
    r.l2_mollified = std::sqrt(s2m * volume);
    r.l2_exact = std::sqrt(s2e * volume);
    r.mollification_error = l2_norm(A - A_rho);
    return r;
}

// Nodes covering the support of A_rho plus a margin of `pad` cells.
inline std::vector<std::size_t> support_nodes(const VectorPotential& A, int pad) {
    auto box = lattice::support_box(A);
    if (!box) return {};
    return lattice::box_nodes(*A.grid, lattice::dilate(*box, pad, *A.grid));
}

// ---------------------------------------------------------------------------
// Transverse decay of |Phi| in the (theta~, eta) plane through `center`.

struct PhaseDecay {
    std::string status = "ok";  // ok | zero field
    double slope = 0;           // worst (largest) fitted slope over directions
    std::vector<double> slopes;
    std::vector<double> radii;
};

inline PhaseDecay phase_decay(const CauchyPhase& eval, const Vec3& center, double window, int directions = 8,
                              int samples = 9) {
    const auto& f = eval.frame();
    if (window < 4 * f.R1) throw FieldError("window too small: must reach 4 R1");
    PhaseDecay out;
    if (eval.zero()) {
        out.status = "zero field";
        return out;
    }
    for (int s = 0; s < samples; ++s)
        out.radii.push_back(2 * f.R1 * std::pow(2.0, static_cast<double>(s) / (samples - 1)));
    out.slope = -std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> logs(directions, std::vector<double>(samples));
    parallel_for(static_cast<std::size_t>(directions * samples), [&](std::size_t t) {
        int d = static_cast<int>(t) / samples, s = static_cast<int>(t) % samples;
        double a = 2 * pi * (d + 0.5) / directions;
        Vec3 x = center + out.radii[s] * (std::cos(a) * f.theta_t + std::sin(a) * f.eta);
        logs[d][s] = std::log(std::abs(eval(x)));
    });
    for (int d = 0; d < directions; ++d) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (int s = 0; s < samples; ++s) {
            double lx = std::log(out.radii[s]), ly = logs[d][s];
            sx += lx;
            sy += ly;
            sxx += lx * lx;
            sxy += lx * ly;
        }
        double slope = (samples * sxy - sx * sy) / (samples * sxx - sx * sx);
        out.slopes.push_back(slope);
        out.slope = std::max(out.slope, slope);
    }
    return out;
}

}  // namespace cgo
