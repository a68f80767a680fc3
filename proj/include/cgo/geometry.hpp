#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace cgo {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using cplx = std::complex<double>;
using Vec3c = Eigen::Vector3cd;

inline constexpr double pi = std::numbers::pi;

struct GeometryError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Cross-section

struct ShapeSpec {
    enum class Kind { Disk, Polygon } kind = Kind::Disk;
    double radius = 1.0;
    int segments = 64;
    std::vector<Vec2> vertices;

    static ShapeSpec disk(double r, int segs = 64) {
        ShapeSpec s;
        s.kind = Kind::Disk;
        s.radius = r;
        s.segments = segs;
        return s;
    }
    static ShapeSpec polygon(std::vector<Vec2> v) {
        ShapeSpec s;
        s.kind = Kind::Polygon;
        s.vertices = std::move(v);
        return s;
    }
};

namespace detail {

inline double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

inline bool segments_intersect(const Vec2& p1, const Vec2& p2, const Vec2& q1, const Vec2& q2) {
    auto orient = [](const Vec2& a, const Vec2& b, const Vec2& c) {
        double v = cross2(b - a, c - a);
        return (v > 1e-14) - (v < -1e-14);
    };
    auto on_seg = [](const Vec2& a, const Vec2& b, const Vec2& c) {
        return std::min(a.x(), b.x()) - 1e-14 <= c.x() && c.x() <= std::max(a.x(), b.x()) + 1e-14 &&
               std::min(a.y(), b.y()) - 1e-14 <= c.y() && c.y() <= std::max(a.y(), b.y()) + 1e-14;
    };
    int o1 = orient(p1, p2, q1), o2 = orient(p1, p2, q2);
    int o3 = orient(q1, q2, p1), o4 = orient(q1, q2, p2);
    if (o1 != o2 && o3 != o4) return true;
    if (o1 == 0 && on_seg(p1, p2, q1)) return true;
    if (o2 == 0 && on_seg(p1, p2, q2)) return true;
    if (o3 == 0 && on_seg(q1, q2, p1)) return true;
    if (o4 == 0 && on_seg(q1, q2, p2)) return true;
    return false;
}

}  // namespace detail

class CrossSection {
public:
    ShapeSpec spec;
    std::vector<Vec2> vertices;  // counter-clockwise, not repeated at the end
    std::vector<Vec2> normals;   // outward, one per segment i -> i+1
    std::vector<Vec2> midpoints;
    std::vector<double> lengths;
    double R = 0.0;  // max |v| over vertices

    std::size_t segment_count() const { return vertices.size(); }

    // Winding number of the polyline around p (nonzero means inside).
    int winding(const Vec2& p) const {
        int wn = 0;
        const std::size_t n = vertices.size();
        for (std::size_t i = 0; i < n; ++i) {
            const Vec2& a = vertices[i];
            const Vec2& b = vertices[(i + 1) % n];
            if (a.y() <= p.y()) {
                if (b.y() > p.y() && detail::cross2(b - a, p - a) > 0) ++wn;
            } else {
                if (b.y() <= p.y() && detail::cross2(b - a, p - a) < 0) --wn;
            }
        }
        return wn;
    }

    double distance_to_boundary(const Vec2& p, std::size_t* seg = nullptr) const {
        double best = 1e300;
        const std::size_t n = vertices.size();
        for (std::size_t i = 0; i < n; ++i) {
            const Vec2& a = vertices[i];
            const Vec2& b = vertices[(i + 1) % n];
            Vec2 ab = b - a;
            double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
            double d = (a + t * ab - p).norm();
            if (d < best) {
                best = d;
                if (seg) *seg = i;
            }
        }
        return best;
    }

    // Closed set: interior or on the polyline (to 1e-12).
    bool contains(const Vec2& p) const {
        return winding(p) != 0 || distance_to_boundary(p) <= 1e-12;
    }

    // Radius of the largest centred disk inside the cross-section.
    double inradius() const {
        double r = 1e300;
        for (std::size_t i = 0; i < vertices.size(); ++i)
            r = std::min(r, std::abs(normals[i].dot(midpoints[i])));
        return r;
    }
};

inline CrossSection build_cross_section(const ShapeSpec& spec) {
    CrossSection cs;
    cs.spec = spec;
    if (spec.kind == ShapeSpec::Kind::Disk) {
        if (!(spec.radius > 0)) throw GeometryError("disk radius must be positive");
        if (spec.segments < 8) throw GeometryError("disk needs at least 8 segments");
        for (int k = 0; k < spec.segments; ++k) {
            double a = 2 * pi * k / spec.segments;
            cs.vertices.emplace_back(spec.radius * std::cos(a), spec.radius * std::sin(a));
        }
    } else {
        cs.vertices = spec.vertices;
        if (cs.vertices.size() < 3) throw GeometryError("polygon needs at least 3 vertices");
    }
    const std::size_t n = cs.vertices.size();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            if (j == i + 1 || (i == 0 && j == n - 1)) continue;
            if (detail::segments_intersect(cs.vertices[i], cs.vertices[(i + 1) % n], cs.vertices[j],
                                           cs.vertices[(j + 1) % n]))
                throw GeometryError("self-intersecting polygon: edges " + std::to_string(i) + " and " +
                                    std::to_string(j) + " cross");
        }
    double area2 = 0;
    for (std::size_t i = 0; i < n; ++i) area2 += detail::cross2(cs.vertices[i], cs.vertices[(i + 1) % n]);
    if (area2 <= 0) throw GeometryError("polygon must be positively oriented (counter-clockwise)");

    for (std::size_t i = 0; i < n; ++i) {
        const Vec2& a = cs.vertices[i];
        const Vec2& b = cs.vertices[(i + 1) % n];
        Vec2 t = b - a;
        double len = t.norm();
        if (len <= 0) throw GeometryError("repeated polygon vertex " + std::to_string(i));
        cs.lengths.push_back(len);
        cs.normals.emplace_back(t.y() / len, -t.x() / len);
        cs.midpoints.push_back(0.5 * (a + b));
        cs.R = std::max(cs.R, a.norm());
    }
    Vec2 probe = cs.midpoints[0] - 1e-6 * cs.lengths[0] * cs.normals[0];
    if (cs.winding(probe) != 1) throw GeometryError("polyline winding number is not 1");
    return cs;
}

// ---------------------------------------------------------------------------
// Cylinder grid on a box lattice. The lattice covers the cross-section plus a
// margin so that mollified potentials (support grows by rho^{-1/4} < 1) stay on
// the grid; the mask selects nodes of the closed cross-section.

class CylinderGrid {
public:
    std::shared_ptr<const CrossSection> cs;
    double hp = 0.1;  // cross-section spacing
    double h3 = 0.1;  // axial spacing
    double L = 4.0;
    double margin = 1.0;
    int nx = 0, ny = 0, nz = 0;
    int i0 = 0, j0 = 0;  // lattice index of x = 0, y = 0
    std::vector<unsigned char> mask2;      // nx*ny, node inside closed cross-section
    std::vector<unsigned char> boundary2;  // nx*ny, mask node with a missing 4-neighbour
    std::vector<int> boundary_nodes2;      // flat 2D indices of boundary nodes
    std::vector<Vec2> boundary_normals2;   // outward normal of nearest segment
    std::vector<int> mask_nodes2;          // flat 2D indices of mask nodes

    std::size_t size() const { return static_cast<std::size_t>(nx) * ny * nz; }
    std::size_t plane() const { return static_cast<std::size_t>(nx) * ny; }
    std::size_t idx(int i, int j, int k) const {
        return (static_cast<std::size_t>(k) * ny + j) * nx + i;
    }
    void ijk(std::size_t n, int& i, int& j, int& k) const {
        i = static_cast<int>(n % nx);
        j = static_cast<int>((n / nx) % ny);
        k = static_cast<int>(n / (static_cast<std::size_t>(nx) * ny));
    }
    double x(int i) const { return (i - i0) * hp; }
    double y(int j) const { return (j - j0) * hp; }
    double z(int k) const { return -L + k * h3; }
    Vec3 point(std::size_t n) const {
        int i, j, k;
        ijk(n, i, j, k);
        return {x(i), y(j), z(k)};
    }
    bool in_mask(std::size_t n) const { return mask2[n % plane()] != 0; }
    bool is_boundary(std::size_t n) const { return boundary2[n % plane()] != 0; }
    double cell_volume() const { return hp * hp * h3; }

    // Ordered list of masked nodes (cross-section nodes x axial nodes).
    std::vector<std::size_t> nodes() const {
        std::vector<std::size_t> out;
        out.reserve(mask_nodes2.size() * nz);
        for (int k = 0; k < nz; ++k)
            for (int m : mask_nodes2) out.push_back(static_cast<std::size_t>(k) * plane() + m);
        return out;
    }

    // Boundary nodes with |x3| <= r, in axial-major order.
    std::vector<std::size_t> boundary_band(double r) const {
        if (!(r > 0)) throw GeometryError("band half-width must be positive");
        if (r > L + 1e-12) throw GeometryError("band exceeds axial truncation L");
        std::vector<std::size_t> out;
        for (int k = 0; k < nz; ++k) {
            if (std::abs(z(k)) > r + 1e-12) continue;
            for (int m : boundary_nodes2) out.push_back(static_cast<std::size_t>(k) * plane() + m);
        }
        return out;
    }

    // True when lattice dimensions and spacings agree (fields may be combined).
    bool same_lattice(const CylinderGrid& o) const {
        return nx == o.nx && ny == o.ny && nz == o.nz && hp == o.hp && h3 == o.h3 && L == o.L &&
               i0 == o.i0 && j0 == o.j0;
    }
};

inline std::shared_ptr<const CylinderGrid> build_grid(std::shared_ptr<const CrossSection> cs, double hp,
                                                      double h3, double L, double margin = 1.0) {
    if (!(hp > 0) || !(h3 > 0) || !(L > 0)) throw GeometryError("grid spacings and L must be positive");
    auto g = std::make_shared<CylinderGrid>();
    g->cs = cs;
    g->hp = hp;
    g->h3 = h3;
    g->L = L;
    g->margin = margin;
    double steps = 2 * L / h3;
    g->nz = static_cast<int>(std::llround(steps)) + 1;
    if (std::abs(steps - std::round(steps)) > 1e-9 * std::max(1.0, steps))
        throw GeometryError("2L must be a whole number of axial steps");

    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& v : cs->vertices) {
        xmin = std::min(xmin, v.x());
        xmax = std::max(xmax, v.x());
        ymin = std::min(ymin, v.y());
        ymax = std::max(ymax, v.y());
    }
    // One extra lattice line on each side keeps every mask node's 4-neighbours on the lattice.
    int ilo = static_cast<int>(std::floor((xmin - margin) / hp)) - 1, ihi = static_cast<int>(std::ceil((xmax + margin) / hp)) + 1;
    int jlo = static_cast<int>(std::floor((ymin - margin) / hp)) - 1, jhi = static_cast<int>(std::ceil((ymax + margin) / hp)) + 1;
    g->nx = ihi - ilo + 1;
    g->ny = jhi - jlo + 1;
    g->i0 = -ilo;
    g->j0 = -jlo;
    g->mask2.assign(g->plane(), 0);
    g->boundary2.assign(g->plane(), 0);
    int mi_lo = g->nx, mi_hi = -1, mj_lo = g->ny, mj_hi = -1;
    for (int j = 0; j < g->ny; ++j)
        for (int i = 0; i < g->nx; ++i)
            if (cs->contains({g->x(i), g->y(j)})) {
                g->mask2[j * g->nx + i] = 1;
                mi_lo = std::min(mi_lo, i);
                mi_hi = std::max(mi_hi, i);
                mj_lo = std::min(mj_lo, j);
                mj_hi = std::max(mj_hi, j);
            }
    if (mi_hi - mi_lo + 1 < 5 || mj_hi - mj_lo + 1 < 5 || g->nz < 5)
        throw GeometryError("grid too coarse: fewer than 5 nodes across a dimension");
    for (int j = 0; j < g->ny; ++j)
        for (int i = 0; i < g->nx; ++i) {
            int m = j * g->nx + i;
            if (!g->mask2[m]) continue;
            g->mask_nodes2.push_back(m);
            bool bnd = !g->mask2[m - 1] || !g->mask2[m + 1] || !g->mask2[m - g->nx] || !g->mask2[m + g->nx];
            if (bnd) {
                g->boundary2[m] = 1;
                g->boundary_nodes2.push_back(m);
                std::size_t seg = 0;
                cs->distance_to_boundary({g->x(i), g->y(j)}, &seg);
                g->boundary_normals2.push_back(cs->normals[seg]);
            }
        }
    return g;
}

// ---------------------------------------------------------------------------
// Direction frame

struct DirectionFrame {
    Vec2 theta;
    Vec2 xi_p;
    double xi3 = 1.0;
    Vec3 xi;
    Vec3 eta;
    Vec3 theta_t;  // (theta, 0)
    double R1 = 0.0;

    // Same frame with eta replaced by -eta (the conjugate probing direction).
    DirectionFrame flipped() const {
        DirectionFrame f = *this;
        f.eta = -eta;
        return f;
    }
};

inline DirectionFrame build_frame(Vec2 theta, Vec2 xi_p, double xi3, double R) {
    if (xi3 == 0.0) throw GeometryError("frame requires xi3 != 0");
    double tn = theta.norm();
    if (!(std::abs(tn - 1.0) <= 1e-12)) throw GeometryError("theta must be a unit vector");
    theta /= tn;
    double along = xi_p.dot(theta);
    double scale = std::max(1.0, xi_p.norm());
    if (std::abs(along) > 1e-9 * scale) throw GeometryError("xi' is not orthogonal to theta");
    xi_p -= along * theta;  // exact projection onto theta-perp
    double a2 = xi_p.squaredNorm();
    if (a2 == 0.0) throw GeometryError("frame requires xi' != 0");
    DirectionFrame f;
    f.theta = theta;
    f.xi_p = xi_p;
    f.xi3 = xi3;
    f.xi = {xi_p.x(), xi_p.y(), xi3};
    double nrm = std::sqrt(a2 + a2 * a2 / (xi3 * xi3));
    f.eta = Vec3(xi_p.x(), xi_p.y(), -a2 / xi3) / nrm;
    f.theta_t = {theta.x(), theta.y(), 0.0};
    double ap = std::sqrt(a2);
    f.R1 = 2 * std::sqrt(2.0) * (R + 2 + (R + 2) / ap);
    return f;
}

// ---------------------------------------------------------------------------
// Boundary subsets

struct BoundaryPartition {
    std::vector<std::size_t> illuminated;  // nu.theta > eps
    std::vector<std::size_t> shadowed;     // nu.theta <= eps
};

inline BoundaryPartition boundary_partition(const CrossSection& cs, const Vec2& theta, double eps) {
    if (!(eps >= 0 && eps < 1)) throw GeometryError("epsilon must lie in [0, 1)");
    BoundaryPartition p;
    for (std::size_t i = 0; i < cs.segment_count(); ++i)
        (cs.normals[i].dot(theta) > eps ? p.illuminated : p.shadowed).push_back(i);
    return p;
}

}  // namespace cgo
