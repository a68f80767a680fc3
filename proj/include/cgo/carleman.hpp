#pragma once

#include "cgo/cgo.hpp"

#include <cstdint>
#include <random>

namespace cgo {

// phi_{+-,s}(x) = +-rho theta.x' - s (theta.x')^2 / 2
struct CarlemanWeight {
    double s = 7.0;
    double rho = 16.0;
    Vec2 theta = Vec2(1, 0);
    int sign = 1;

    double t(const Vec3& x) const { return theta.x() * x.x() + theta.y() * x.y(); }
    double value(const Vec3& x) const {
        double tt = t(x);
        return sign * rho * tt - 0.5 * s * tt * tt;
    }
    // grad phi = (+-rho - s t) theta~, Delta phi = -s
    Vec3 gradient(const Vec3& x) const { return (sign * rho - s * t(x)) * Vec3(theta.x(), theta.y(), 0.0); }
    double laplacian() const { return -s; }
};

inline CarlemanWeight make_weight(double s, double rho, Vec2 theta, int sign) {
    if (sign != 1 && sign != -1) throw FieldError("weight sign must be +1 or -1");
    if (!(s >= 0) || !(rho > s)) throw FieldError("weight requires 0 <= s < rho");
    if (std::abs(theta.norm() - 1.0) > 1e-12) throw FieldError("theta must be a unit vector");
    return {s, rho, theta, sign};
}

// P v = e^{-phi}(Delta + 2i A.grad + q) e^{phi} v for v = exp(kappa.x) env with a
// plane-wave kappa. With Psi = phi + kappa.x the product rule gives
//   Delta c + 2 grad Psi.grad c + (Delta Psi + grad Psi.grad Psi) c + 2i A.(grad c + c grad Psi) + q c
// and only the envelope c is differenced. Result is defined on interior nodes.
inline PhasedField conjugated_apply(const PhasedField& v, const VectorPotential& A, const ScalarField& q,
                                    const CarlemanWeight& w) {
    const auto& g = *v.env.grid;
    for (std::size_t n = 0; n < g.size(); ++n)
        if (v.env[n] != cplx{} && std::abs(w.value(g.point(n))) > 700)
            throw FieldError("weight overflow; shrink rho or support");
    PhasedField out;
    out.kappa = v.kappa;
    out.env = ScalarField(v.env.grid);
    auto inner = interior_nodes(g);
    parallel_for(inner.size(), [&](std::size_t t) {
        std::size_t n = inner[t];
        Vec3 x = g.point(n);
        Vec3c gP = w.gradient(x).cast<cplx>() + v.kappa;
        auto gc = lattice::grad(v.env.v, g, n);
        cplx lc = lattice::laplacian(v.env.v, g, n);
        cplx c = v.env[n];
        Vec3 a = A.at(n);
        cplx r = lc + (w.laplacian() + gP.x() * gP.x() + gP.y() * gP.y() + gP.z() * gP.z()) * c + q[n] * c;
        for (int d = 0; d < 3; ++d) r += 2.0 * gP[d] * gc[d] + cplx(0, 2 * a[d]) * (gc[d] + c * gP[d]);
        out.env[n] = r;
    });
    return out;
}

inline ScalarField conjugated_apply(const ScalarField& v, const VectorPotential& A, const ScalarField& q,
                                    const CarlemanWeight& w) {
    PhasedField p;
    p.env = v;
    return conjugated_apply(p, A, q, w).env;
}

// ---------------------------------------------------------------------------
// Test fields v(x) = exp(i rho eta.x) beta(x') sum_j a_j bump_j(x), with eta a
// unit vector orthogonal to theta~. At frequency rho these nearly annihilate
// the leading symbol of the conjugated Laplacian, so the inequalities are
// probed close to their extremal regime.

struct Jet {
    cplx v{};
    Eigen::Vector3cd grad = Eigen::Vector3cd::Zero();
    cplx lap{};
};

// Smooth factor vanishing on the cross-section boundary: 1 - |x'|^2/r^2 for a
// disk, product of edge-line factors for a polygon.
struct BoundaryFactor {
    bool enabled = false;
    bool circle = true;
    double r = 1.0;
    std::vector<Vec2> m;  // n_i / (n_i . mid_i)

    static BoundaryFactor none() { return {}; }
    static BoundaryFactor for_section(const CrossSection& cs) {
        BoundaryFactor b;
        b.enabled = true;
        b.circle = cs.spec.kind == ShapeSpec::Kind::Disk;
        b.r = cs.inradius();
        for (std::size_t i = 0; i < cs.segment_count(); ++i)
            b.m.push_back(cs.normals[i] / cs.normals[i].dot(cs.midpoints[i]));
        return b;
    }

    void eval(const Vec2& x, double& f, Vec2& grad, double& lap) const {
        if (!enabled) {
            f = 1, grad.setZero(), lap = 0;
            return;
        }
        if (circle) {
            f = 1 - x.squaredNorm() / (r * r);
            grad = -2.0 * x / (r * r);
            lap = -4.0 / (r * r);
            return;
        }
        // beta = prod f_i, f_i = 1 - m_i.x
        std::size_t zero = m.size();
        int zeros = 0;
        double prod_nz = 1;
        Vec2 s1 = Vec2::Zero();
        double s2 = 0;
        for (std::size_t i = 0; i < m.size(); ++i) {
            double fi = 1 - m[i].dot(x);
            if (std::abs(fi) < 1e-14) {
                zero = i;
                ++zeros;
                continue;
            }
            prod_nz *= fi;
            s1 += m[i] / fi;
            s2 += m[i].squaredNorm() / (fi * fi);
        }
        if (zeros == 0) {
            f = prod_nz;
            grad = -prod_nz * s1;
            lap = prod_nz * (s1.squaredNorm() - s2);
        } else if (zeros == 1) {
            f = 0;
            grad = -prod_nz * m[zero];
            lap = 2 * prod_nz * m[zero].dot(s1);
        } else {
            f = 0, grad.setZero(), lap = 0;
        }
    }
};

struct TestField {
    Vec3 eta = Vec3(0, 0, 1);
    std::vector<Bump> bumps;
    std::vector<cplx> amps;
    BoundaryFactor beta;

    // Envelope jet of beta * sum a_j bump_j; the plane wave is applied in jet().
    Jet envelope(const Vec3& x) const {
        Jet c;
        for (std::size_t j = 0; j < bumps.size(); ++j) {
            double b = bumps[j].value(x);
            if (b == 0.0) continue;
            c.v += amps[j] * b;
            c.grad += amps[j] * bumps[j].gradient(x).cast<cplx>();
            c.lap += amps[j] * bumps[j].laplacian(x);
        }
        double f, lb;
        Vec2 gb;
        beta.eval(Vec2(x.x(), x.y()), f, gb, lb);
        Eigen::Vector3cd gB(gb.x(), gb.y(), 0.0);
        Jet out;
        out.v = f * c.v;
        out.grad = f * c.grad + c.v * gB;
        out.lap = f * c.lap + 2.0 * (c.grad.transpose() * gB)(0) + lb * c.v;
        return out;
    }
    // Jet of v with the unimodular factor exp(i rho eta.x) dropped.
    Jet jet(const Vec3& x, double rho) const {
        Jet c = envelope(x);
        Jet v;
        Eigen::Vector3cd k = cplx(0, rho) * eta.cast<cplx>();
        v.v = c.v;
        v.grad = c.grad + k * c.v;
        v.lap = c.lap + 2.0 * (k.transpose() * c.grad)(0) - rho * rho * eta.squaredNorm() * c.v;
        return v;
    }
};

// Deterministic uniform [0, 1) from a 64-bit engine, independent of the
// standard library's distribution implementations.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

struct SuiteSpec {
    int count = 20;
    std::uint64_t seed = 1;
    int bumps = 2;
    bool boundary = true;  // members vanish on the cross-section boundary
    double center_radius = 0.5;
    double min_radius = 0.5, max_radius = 0.9;
    double axial_center = 1.0;  // |center_3| <= axial_center
};

inline std::vector<TestField> make_suite(const CylinderGrid& g, const Vec2& theta, const SuiteSpec& spec) {
    std::mt19937_64 rng(spec.seed);
    const auto& cs = *g.cs;
    double rin = cs.inradius();
    Vec3 tperp(-theta.y(), theta.x(), 0.0);
    std::vector<TestField> out;
    for (int i = 0; i < spec.count; ++i) {
        TestField f;
        double al = 2 * pi * unit_uniform(rng);
        f.eta = std::cos(al) * Vec3(0, 0, 1) + std::sin(al) * tperp;
        if (spec.boundary) f.beta = BoundaryFactor::for_section(cs);
        for (int j = 0; j < spec.bumps; ++j) {
            Bump b;
            double r = spec.center_radius * rin * std::sqrt(unit_uniform(rng)), a = 2 * pi * unit_uniform(rng);
            b.center = Vec3(r * std::cos(a), r * std::sin(a), spec.axial_center * (2 * unit_uniform(rng) - 1));
            b.radius = spec.min_radius + (spec.max_radius - spec.min_radius) * unit_uniform(rng);
            if (!spec.boundary) b.radius = std::min(b.radius, 0.95 * (rin - r));
            b.amplitude = 1.0;
            double mag = 0.5 + 0.5 * unit_uniform(rng), ph = 2 * pi * unit_uniform(rng);
            f.bumps.push_back(b);
            f.amps.push_back(std::polar(mag, ph));
        }
        out.push_back(f);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reports

struct TermRow {
    std::vector<double> lhs;
    std::vector<double> rhs;
    double ratio = 0;  // sum(lhs) / sum(rhs)
};

struct CarlemanReport {
    std::string check;  // p1a | c2a | p2a
    double rho = 0, s = 0;
    int sign = 1;
    Vec2 theta = Vec2(1, 0);
    std::vector<std::string> lhs_names, rhs_names;
    std::vector<TermRow> rows;
    double fitted_C = 0;

    void fit() {
        fitted_C = 0;
        for (auto& r : rows) {
            double l = 0, h = 0;
            for (double v : r.lhs) l += v;
            for (double v : r.rhs) h += v;
            r.ratio = h > 0 ? l / h : (l > 0 ? std::numeric_limits<double>::infinity() : 0.0);
            fitted_C = std::max(fitted_C, r.ratio);
        }
    }
};

namespace detail {

// int over face x R of |d_nu v|^2 |theta.nu| by segment midpoints x axial nodes.
template <class Jf>
inline std::pair<double, double> face_integrals(const CylinderGrid& g, const Vec2& theta, Jf&& jet_at) {
    const auto& cs = *g.cs;
    double ill = 0, sh = 0;
    for (std::size_t i = 0; i < cs.segment_count(); ++i) {
        const Vec2& nu = cs.normals[i];
        double tn = theta.dot(nu);
        if (tn == 0.0) continue;
        double acc = 0;
        for (int k = 0; k < g.nz; ++k) {
            Vec3 x(cs.midpoints[i].x(), cs.midpoints[i].y(), g.z(k));
            Jet j = jet_at(x);
            acc += std::norm(nu.x() * j.grad[0] + nu.y() * j.grad[1]);
        }
        double v = acc * g.h3 * cs.lengths[i] * std::abs(tn);
        (tn > 0 ? ill : sh) += v;
    }
    return {ill, sh};
}

}  // namespace detail

// Convexified estimate: rho B_+ + s rho^-2 |Delta v|^2 + s |grad v|^2 + s rho^2 |v|^2
//                       <= C (|P_{A,q,+-,s} v|^2 + rho B_-).
inline CarlemanReport check_carleman_convexified(const std::vector<TestField>& suite, const VectorPotential& A,
                                                 const ScalarField& q, const CarlemanWeight& w) {
    const auto& g = *A.grid;
    double s1 = 48 * std::pow(sup_norm(A), 2) + 6;
    if (!(w.s > s1)) throw FieldError("convexification parameter must exceed 48 |A|_inf^2 + 6");
    CarlemanReport rep;
    rep.check = "p1a";
    rep.rho = w.rho;
    rep.s = w.s;
    rep.sign = w.sign;
    rep.theta = w.theta;
    rep.lhs_names = {"boundary_own_face", "laplacian", "gradient", "l2"};
    rep.rhs_names = {"operator", "boundary_opposite_face"};
    rep.rows.resize(suite.size());
    const double rho = w.rho;
    parallel_for(suite.size(), [&](std::size_t m) {
        const auto& f = suite[m];
        std::array<double, 4> acc{};
        for (int k = 0; k < g.nz; ++k)
            for (int mm : g.mask_nodes2) {
                std::size_t n = static_cast<std::size_t>(k) * g.plane() + mm;
                Vec3 x = g.point(n);
                Jet j = f.jet(x, rho);
                if (j.v == cplx{} && j.grad.isZero()) continue;
                Vec3c gp = w.gradient(x).cast<cplx>();
                Vec3 a = A.at(n);
                cplx gpv = (gp.transpose() * j.grad)(0);
                cplx agv = a.x() * j.grad[0] + a.y() * j.grad[1] + a.z() * j.grad[2];
                cplx agp = a.x() * gp[0] + a.y() * gp[1] + a.z() * gp[2];
                cplx P = j.lap + 2.0 * gpv + (w.laplacian() + gp.squaredNorm()) * j.v + cplx(0, 2) * (agv + j.v * agp) +
                         q[n] * j.v;
                acc[0] += std::norm(j.lap);
                acc[1] += j.grad.squaredNorm();
                acc[2] += std::norm(j.v);
                acc[3] += std::norm(P);
            }
        double dv = g.cell_volume();
        auto [ill, sh] = detail::face_integrals(g, w.theta, [&](const Vec3& x) { return f.jet(x, rho); });
        double own = w.sign > 0 ? ill : sh, opp = w.sign > 0 ? sh : ill;
        auto& r = rep.rows[m];
        r.lhs = {rho * own, w.s * acc[0] * dv / (rho * rho), w.s * acc[1] * dv, w.s * rho * rho * acc[2] * dv};
        r.rhs = {acc[3] * dv, rho * opp};
    });
    rep.fit();
    return rep;
}

// Linear-weight estimate for u = exp(rho theta.x') v:
//   rho B_+ + rho^2 |v|^2 + |e^{-rho theta.x'} grad u|^2
//     <= C (|e^{-rho theta.x'}(Delta + 2i A.grad + q) u|^2 + rho B_-).
inline CarlemanReport check_carleman_linear(const std::vector<TestField>& suite, const VectorPotential& A,
                                            const ScalarField& q, double rho, const Vec2& theta) {
    const auto& g = *A.grid;
    CarlemanReport rep;
    rep.check = "c2a";
    rep.rho = rho;
    rep.theta = theta;
    rep.lhs_names = {"boundary_illuminated", "l2", "gradient"};
    rep.rhs_names = {"operator", "boundary_shadowed"};
    rep.rows.resize(suite.size());
    const Vec3c th = Vec3(theta.x(), theta.y(), 0.0).cast<cplx>();
    parallel_for(suite.size(), [&](std::size_t m) {
        const auto& f = suite[m];
        std::array<double, 3> acc{};
        for (int k = 0; k < g.nz; ++k)
            for (int mm : g.mask_nodes2) {
                std::size_t n = static_cast<std::size_t>(k) * g.plane() + mm;
                Vec3 x = g.point(n);
                Jet j = f.jet(x, rho);
                if (j.v == cplx{} && j.grad.isZero()) continue;
                Vec3 a = A.at(n);
                Eigen::Vector3cd gu = j.grad + rho * j.v * th;  // e^{-rho theta.x'} grad u
                cplx P = j.lap + 2 * rho * (th.transpose() * j.grad)(0) + rho * rho * j.v + q[n] * j.v +
                         cplx(0, 2) * (a.x() * gu[0] + a.y() * gu[1] + a.z() * gu[2]);
                acc[0] += std::norm(j.v);
                acc[1] += gu.squaredNorm();
                acc[2] += std::norm(P);
            }
        double dv = g.cell_volume();
        // on the boundary v = 0, so e^{-rho theta.x'} d_nu u = d_nu v
        auto [ill, sh] = detail::face_integrals(g, theta, [&](const Vec3& x) { return f.jet(x, rho); });
        auto& r = rep.rows[m];
        r.lhs = {rho * ill, rho * rho * acc[0] * dv, acc[1] * dv};
        r.rhs = {acc[2] * dv, rho * sh};
    });
    rep.fit();
    return rep;
}

// Negative-order estimate rho^{-1} |v|_{H^1_rho} <= C |P_{A,q,+-} v|_{H^-1_rho}
// with P_{A,q,+-} = e^{-+rho theta.x'}(Delta_A + q) e^{+-rho theta.x'}.
inline CarlemanReport check_carleman_negative(const std::vector<TestField>& suite, const VectorPotential& A,
                                              const ScalarField& q, double rho, const Vec2& theta, int sign) {
    const auto& g = *A.grid;
    CarlemanReport rep;
    rep.check = "p2a";
    rep.rho = rho;
    rep.sign = sign;
    rep.theta = theta;
    rep.lhs_names = {"h1_rho_over_rho"};
    rep.rhs_names = {"operator_h-1_rho"};
    rep.rows.resize(suite.size());
    const Vec3c th = (sign * rho) * Vec3(theta.x(), theta.y(), 0.0).cast<cplx>();
    std::vector<double> divA(g.size(), 0.0);
    parallel_for(g.size(), [&](std::size_t n) { divA[n] = divergence(A, n); });
    // Suite members are evaluated one after another; the transforms inside
    // weighted_norm are the parallel work.
    for (std::size_t m = 0; m < suite.size(); ++m) {
        const auto& f = suite[m];
        ScalarField c(A.grid), P(A.grid);
        parallel_for(g.size(), [&](std::size_t n) {
            if (!g.in_mask(n)) return;
            Vec3 x = g.point(n);
            Jet j = f.jet(x, rho);
            if (j.v == cplx{} && j.grad.isZero()) return;
            Vec3 a = A.at(n);
            Eigen::Vector3cd gu = j.grad + j.v * th;
            c[n] = j.v;
            P[n] = j.lap + 2.0 * (th.transpose() * j.grad)(0) + rho * rho * j.v +
                   cplx(0, 2) * (a.x() * gu[0] + a.y() * gu[1] + a.z() * gu[2]) +
                   (cplx(0, divA[n]) - a.squaredNorm() + q[n]) * j.v;
        });
        Vec3 shift = rho * f.eta;
        auto& r = rep.rows[m];
        r.lhs = {weighted_norm(c, 1, rho, shift) / rho};
        r.rhs = {weighted_norm(P, -1, rho, shift)};
    }
    rep.fit();
    return rep;
}

// Largest ratio between fitted constants along a ladder.
inline double ladder_drift(const std::vector<double>& C) {
    double lo = std::numeric_limits<double>::infinity(), hi = 0;
    for (double c : C) {
        lo = std::min(lo, c);
        hi = std::max(hi, c);
    }
    return lo > 0 ? hi / lo : std::numeric_limits<double>::infinity();
}

}  // namespace cgo
