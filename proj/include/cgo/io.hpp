#pragma once

#include "cgo/recovery.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace cgo {

inline constexpr const char* kVersion = "0.1.0";

using json = nlohmann::json;

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// Write to a sibling temporary and rename over the target.
inline void atomic_write(const std::filesystem::path& path, std::string_view content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw IoError("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

// Shortest decimal that round-trips, independent of the global locale.
inline std::string num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    std::string s = buf;
    for (char& c : s)
        if (c == ',') c = '.';
    return s;
}

class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header) : cols_(header.size()) { row(header); }

    void row(const std::vector<std::string>& cells) {
        if (cells.size() != cols_) throw IoError("csv row width mismatch");
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ',';
            out_ << cells[i];
        }
        out_ << '\n';
    }
    std::string str() const { return out_.str(); }

private:
    std::size_t cols_;
    std::ostringstream out_;
};

// ---------------------------------------------------------------------------
// Binary field layout: six little-endian doubles (nx, ny, nz, hx, hy, h3) then
// node-major payload, `comps` doubles per node.

namespace detail {

inline bool little_endian() {
    const std::uint16_t one = 1;
    return *reinterpret_cast<const unsigned char*>(&one) == 1;
}

inline void put(std::string& buf, double v) {
    unsigned char b[8];
    std::memcpy(b, &v, 8);
    if (!little_endian()) std::reverse(b, b + 8);
    buf.append(reinterpret_cast<const char*>(b), 8);
}

inline double get(const std::string& buf, std::size_t& pos) {
    if (pos + 8 > buf.size()) throw IoError("truncated field file");
    unsigned char b[8];
    std::memcpy(b, buf.data() + pos, 8);
    if (!little_endian()) std::reverse(b, b + 8);
    pos += 8;
    double v;
    std::memcpy(&v, b, 8);
    return v;
}

inline std::string header(const CylinderGrid& g) {
    std::string buf;
    for (double v : {double(g.nx), double(g.ny), double(g.nz), g.hp, g.hp, g.h3}) put(buf, v);
    return buf;
}

inline std::string read_all(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open " + p.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::size_t check_header(const std::string& buf, const CylinderGrid& g, std::size_t comps) {
    std::size_t pos = 0;
    double h[6];
    for (double& v : h) v = get(buf, pos);
    if (h[0] != g.nx || h[1] != g.ny || h[2] != g.nz || h[3] != g.hp || h[4] != g.hp || h[5] != g.h3)
        throw IoError("field file does not match the grid");
    if (buf.size() != 48 + 8 * comps * g.size()) throw IoError("field payload has the wrong length");
    return pos;
}

}  // namespace detail

inline std::string field_bytes(const ScalarField& f) {
    std::string buf = detail::header(*f.grid);
    buf.reserve(buf.size() + 16 * f.size());
    for (const auto& v : f.v) {
        detail::put(buf, v.real());
        detail::put(buf, v.imag());
    }
    return buf;
}

inline std::string field_bytes(const VectorPotential& A) {
    std::string buf = detail::header(*A.grid);
    for (std::size_t n = 0; n < A.size(); ++n)
        for (int d = 0; d < 3; ++d) detail::put(buf, A.a[d][n]);
    return buf;
}

inline void write_field(const std::filesystem::path& p, const ScalarField& f) { atomic_write(p, field_bytes(f)); }
inline void write_field(const std::filesystem::path& p, const VectorPotential& A) { atomic_write(p, field_bytes(A)); }

inline ScalarField read_scalar_field(const std::filesystem::path& p, GridPtr g) {
    auto buf = detail::read_all(p);
    auto pos = detail::check_header(buf, *g, 2);
    ScalarField f(g);
    for (auto& v : f.v) {
        double re = detail::get(buf, pos);
        v = cplx(re, detail::get(buf, pos));
    }
    return f;
}

inline VectorPotential read_vector_potential(const std::filesystem::path& p, GridPtr g) {
    auto buf = detail::read_all(p);
    auto pos = detail::check_header(buf, *g, 3);
    VectorPotential A(g);
    for (std::size_t n = 0; n < A.size(); ++n)
        for (int d = 0; d < 3; ++d) A.a[d][n] = detail::get(buf, pos);
    return A;
}

inline std::string field_csv(const ScalarField& f) {
    const auto& g = *f.grid;
    CsvTable t({"x", "y", "z", "re", "im"});
    for (std::size_t n : g.nodes()) {
        Vec3 x = g.point(n);
        t.row({num(x.x()), num(x.y()), num(x.z()), num(f[n].real()), num(f[n].imag())});
    }
    return t.str();
}

inline std::string boundary_csv(const CrossSection& cs, const BoundarySubset* V = nullptr) {
    std::vector<std::string> head{"segment", "cx", "cy", "nx", "ny"};
    if (V) head.push_back("in_V");
    CsvTable t(head);
    for (std::size_t i = 0; i < cs.segment_count(); ++i) {
        std::vector<std::string> r{std::to_string(i), num(cs.midpoints[i].x()), num(cs.midpoints[i].y()),
                                   num(cs.normals[i].x()), num(cs.normals[i].y())};
        if (V) r.push_back(V->contains(i) ? "1" : "0");
        t.row(r);
    }
    return t.str();
}

// ---------------------------------------------------------------------------
// JSON records

inline json to_json(const Vec2& v) { return json::array({v.x(), v.y()}); }
inline json to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }
inline json to_json(cplx z) { return json::array({z.real(), z.imag()}); }

inline json to_json(const DirectionFrame& f) {
    return {{"theta", to_json(f.theta)}, {"xi", to_json(f.xi)}, {"eta", to_json(f.eta)}, {"R1", f.R1}};
}

inline json to_json(const CGOSolution& u) {
    const auto& r = u.report;
    return {{"frame", to_json(u.frame)},
            {"rho", u.rho},
            {"sigma", u.sigma},
            {"norms", {{"h1_over_rho", r.h1_over_rho}, {"l2", r.l2}, {"decay", r.decay}, {"third_line", r.third_line}}},
            {"residuals",
             {{"pde", r.pde_residual}, {"estimate", r.residual_estimate}, {"linear", r.linear_residual}}}};
}

inline json to_json(const CarlemanReport& r) {
    json rows = json::array();
    for (const auto& t : r.rows) rows.push_back({{"lhs", t.lhs}, {"rhs", t.rhs}, {"ratio", t.ratio}});
    return {{"check", r.check},     {"rho", r.rho},           {"s", r.s},
            {"sign", r.sign},       {"theta", to_json(r.theta)}, {"lhs_names", r.lhs_names},
            {"rhs_names", r.rhs_names}, {"rows", rows},       {"fitted_C", r.fitted_C}};
}

inline json to_json(const RecoveryResult& r) {
    json s = json::array();
    for (const auto& c : r.samples) {
        json cur = json::array(), orc = json::array(), lp = json::array(), lm = json::array();
        for (int p = 0; p < 3; ++p) {
            cur.push_back(to_json(c.recovered[p]));
            orc.push_back(to_json(c.oracle[p]));
        }
        for (auto v : c.ladder_plus) lp.push_back(to_json(v));
        for (auto v : c.ladder_minus) lm.push_back(to_json(v));
        s.push_back({{"xi", to_json(c.frame.xi)},
                     {"frame", to_json(c.frame)},
                     {"curl_samples", cur},
                     {"oracle", orc},
                     {"rel_err", c.rel_err},
                     {"divergent", c.divergent},
                     {"ladder_plus", lp},
                     {"ladder_minus", lm}});
    }
    return {{"rhos", r.rhos},
            {"samples", s},
            {"rms_recovered", r.rms_recovered},
            {"rms_oracle", r.rms_oracle},
            {"rms_rel_err", r.rms_rel_err},
            {"max_rel_err", r.max_rel_err},
            {"divergent", r.divergent}};
}

inline json to_json(const QSample& q) {
    json l = json::array();
    for (auto v : q.ladder) l.push_back(to_json(v));
    return {{"xi", to_json(q.xi)}, {"ladder", l}, {"limit", to_json(q.limit)}, {"oracle", to_json(q.oracle)},
            {"divergent", q.divergent}, {"plateau", q.plateau}};
}

inline json to_json(const PartialDataReport& r, const BoundarySubset& V) {
    json rows = json::array();
    for (const auto& w : r.rows)
        rows.push_back({{"rho", w.rho},
                        {"theta", to_json(w.theta)},
                        {"pairing", to_json(w.pairing)},
                        {"complement", to_json(w.complement)},
                        {"full_boundary", to_json(w.full_boundary)},
                        {"illuminated", w.illuminated},
                        {"shadowed", w.shadowed},
                        {"source", w.source},
                        {"u2_trace", w.u2_trace},
                        {"mollification", w.mollification},
                        {"bound", w.bound},
                        {"ratio", w.ratio},
                        {"cauchy_schwarz", w.cauchy_schwarz},
                        {"carleman", w.carleman},
                        {"solve_residual", w.solve_residual}});
    std::vector<std::size_t> segs;
    for (std::size_t i = 0; i < V.segments.size(); ++i)
        if (V.contains(i)) segs.push_back(i);
    return {{"eps", r.eps},
            {"theta0", to_json(r.theta0)},
            {"boundary_set", {{"full", r.full_boundary}, {"segments", segs}, {"segment_count", V.segments.size()}}},
            {"A_norm", r.A_norm},
            {"rhos", r.rhos},
            {"fitted_C", r.fitted_C},
            {"drift", r.drift},
            {"rows", rows}};
}

}  // namespace cgo
