#pragma once

// Config-driven pipeline stages shared by the command-line runner and tests.

#include "cgo/io.hpp"

#include <map>

namespace cgo {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PotentialTerm {
    PotentialSpec spec;
    double l2_norm = 0;  // rescale the term to this L2 norm when > 0
};

struct ScalarTerm {
    Bump bump;
    cplx amplitude = 1.0;
};

struct ExperimentConfig {
    ShapeSpec shape = ShapeSpec::disk(1.0);
    double hp = 0.1, h3 = 0.1, L = 4.0;
    std::vector<PotentialTerm> A1, A2;
    std::vector<ScalarTerm> q1, q2;
    std::map<std::string, std::vector<double>> ladders = {{"mollifier", {4, 8, 16, 32}},
                                                          {"cgo", {8, 16, 32}},
                                                          {"carleman", {16, 32, 64}},
                                                          {"recovery", {8, 16, 32, 64}},
                                                          {"q", {8, 16, 32}},
                                                          {"partial", {8, 16, 32}}};
    std::vector<std::pair<Vec2, Vec3>> probe;  // (theta, xi)
    Vec2 theta0 = Vec2(1, 0);
    double eps = 0.2;
    std::vector<double> offsets = {-0.1, 0.0, 0.1};
    std::string boundary_set = "cover";  // cover | full | explicit
    std::vector<std::size_t> boundary_segments;
    double carleman_s = 7.0;
    int suite_count = 20;
    int suite_bumps = 2;
    std::uint64_t seed = 7;
    int random_frames = 1000;
    std::string output = "out";
    std::map<std::string, double> tolerances = {{"frame_orthogonality", 1e-12}, {"unit_mass", 1e-6},
                                                {"grad_slope", 0.3},           {"decay_slope", -1.0 / 16},
                                                {"phase_decay_slope", -0.9},   {"drift", 2.0},
                                                {"curl_rel", 0.05},            {"curl_null", 1e-3},
                                                {"q_plateau", 1e-12},          {"q_conjugate", 1e-10},
                                                {"cauchy_schwarz", 1e-12}};
    json source;  // config after defaults and overrides; hashed into reports

    double tol(const std::string& k) const { return tolerances.at(k); }
    const std::vector<double>& ladder(const std::string& k) const { return ladders.at(k); }
    std::string hash() const { return hex64(fnv1a(source.dump())); }
};

namespace detail {

inline std::string line_col(const std::string& text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') ++line, col = 1;
        else ++col;
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

struct Reader {
    const json& j;
    std::string path;

    bool has(const char* k) const { return j.contains(k); }
    Reader at(const char* k) const {
        if (!j.contains(k)) throw ConfigError(path + "." + k + ": missing");
        return {j.at(k), path + "." + k};
    }
    double number(const char* k, double def) const {
        if (!j.contains(k)) return def;
        if (!j.at(k).is_number()) throw ConfigError(path + "." + k + ": expected a number");
        double v = j.at(k).get<double>();
        if (!std::isfinite(v)) throw ConfigError(path + "." + k + ": not finite");
        return v;
    }
    double positive(const char* k, double def) const {
        double v = number(k, def);
        if (!(v > 0)) throw ConfigError(path + "." + k + ": must be positive");
        return v;
    }
    std::string text(const char* k, const std::string& def) const {
        if (!j.contains(k)) return def;
        if (!j.at(k).is_string()) throw ConfigError(path + "." + k + ": expected a string");
        return j.at(k).get<std::string>();
    }
    std::vector<double> numbers(const char* k, std::vector<double> def, std::size_t len = 0) const {
        if (!j.contains(k)) return def;
        const auto& a = j.at(k);
        if (!a.is_array()) throw ConfigError(path + "." + k + ": expected an array of numbers");
        std::vector<double> out;
        for (const auto& e : a) {
            if (!e.is_number()) throw ConfigError(path + "." + k + ": expected an array of numbers");
            out.push_back(e.get<double>());
        }
        if (len && out.size() != len)
            throw ConfigError(path + "." + k + ": expected " + std::to_string(len) + " entries");
        return out;
    }
    Vec3 vec3(const char* k, Vec3 def) const {
        if (!j.contains(k)) return def;
        auto v = numbers(k, {}, 3);
        return {v[0], v[1], v[2]};
    }
    Vec2 vec2(const char* k, Vec2 def) const {
        if (!j.contains(k)) return def;
        auto v = numbers(k, {}, 2);
        return {v[0], v[1]};
    }
};

inline Bump read_bump(const Reader& r) {
    Bump b;
    b.center = r.vec3("center", Vec3::Zero());
    b.radius = r.positive("radius", 0.5);
    b.amplitude = r.number("amplitude", 1.0);
    return b;
}

inline PotentialTerm read_potential_term(const Reader& r) {
    static const std::map<std::string, PotentialKind> kinds = {{"gaussian_bump", PotentialKind::GaussianBump},
                                                               {"gradient_field", PotentialKind::GradientField},
                                                               {"curl_carrier", PotentialKind::CurlCarrier},
                                                               {"tent", PotentialKind::Tent},
                                                               {"zero", PotentialKind::Zero}};
    PotentialTerm t;
    auto kind = r.text("kind", "gaussian_bump");
    auto it = kinds.find(kind);
    if (it == kinds.end()) throw ConfigError(r.path + ".kind: unknown potential kind '" + kind + "'");
    t.spec.kind = it->second;
    t.spec.bump = read_bump(r);
    Vec3 d = r.vec3("direction", Vec3(0, 0, 1));
    if (d.norm() == 0) throw ConfigError(r.path + ".direction: must be nonzero");
    t.spec.direction = d.normalized();
    if (r.has("discrete_gradient")) {
        if (!r.j.at("discrete_gradient").is_boolean()) throw ConfigError(r.path + ".discrete_gradient: expected a boolean");
        t.spec.discrete_gradient = r.j.at("discrete_gradient").get<bool>();
    }
    t.l2_norm = r.number("l2_norm", 0.0);
    return t;
}

template <class T, class F>
inline std::vector<T> read_terms(const json& root, const char* key, F&& one) {
    std::vector<T> out;
    if (!root.contains(key)) return out;
    const auto& v = root.at(key);
    std::string path = std::string("potentials.") + key;
    if (v.is_object()) {
        out.push_back(one(Reader{v, path}));
    } else if (v.is_array()) {
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_object()) throw ConfigError(path + "[" + std::to_string(i) + "]: expected an object");
            out.push_back(one(Reader{v[i], path + "[" + std::to_string(i) + "]"}));
        }
    } else {
        throw ConfigError(path + ": expected an object or an array of objects");
    }
    return out;
}

inline std::vector<double> check_ladder(std::vector<double> l, const std::string& path) {
    if (l.empty()) throw ConfigError(path + ": ladder is empty");
    for (std::size_t i = 0; i < l.size(); ++i) {
        if (!(l[i] > 1)) throw ConfigError(path + ": rho values must exceed 1");
        if (i && !(l[i] > l[i - 1])) throw ConfigError(path + ": ladder must be strictly increasing");
    }
    return l;
}

}  // namespace detail

// Default probe: three directions theta, two magnitudes of xi' and two xi3.
inline std::vector<std::pair<Vec2, Vec3>> default_probe() {
    std::vector<std::pair<Vec2, Vec3>> out;
    for (const auto& f : make_probe({0.0, 2 * pi / 3, 4 * pi / 3}, {0.7, -1.1}, {0.8, -0.6}, 1.0).frames)
        out.push_back({f.theta, f.xi});
    return out;
}

inline ExperimentConfig parse_config(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("config parse error at " + detail::line_col(text, e.byte ? e.byte - 1 : 0) + ": " + e.what());
    }
    if (!root.is_object()) throw ConfigError("config: top level must be an object");
    static const std::vector<std::string> known = {"cross_section", "grid", "potentials", "ladders", "probe",
                                                   "partial_data", "carleman", "seed", "output", "tolerances",
                                                   "frames"};
    for (auto it = root.begin(); it != root.end(); ++it)
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            throw ConfigError(it.key() + ": unknown config section");

    ExperimentConfig c;
    detail::Reader top{root, "config"};
    if (root.contains("cross_section")) {
        auto r = top.at("cross_section");
        auto kind = r.text("kind", "disk");
        if (kind == "disk") {
            c.shape = ShapeSpec::disk(r.positive("radius", 1.0), static_cast<int>(r.number("segments", 64)));
        } else if (kind == "polygon") {
            const auto& v = r.at("vertices").j;
            if (!v.is_array() || v.size() < 3) throw ConfigError("cross_section.vertices: need at least three points");
            std::vector<Vec2> pts;
            for (std::size_t i = 0; i < v.size(); ++i) {
                if (!v[i].is_array() || v[i].size() != 2 || !v[i][0].is_number() || !v[i][1].is_number())
                    throw ConfigError("cross_section.vertices[" + std::to_string(i) + "]: expected [x, y]");
                pts.push_back({v[i][0].get<double>(), v[i][1].get<double>()});
            }
            c.shape = ShapeSpec::polygon(pts);
        } else {
            throw ConfigError("cross_section.kind: expected 'disk' or 'polygon'");
        }
    }
    if (root.contains("grid")) {
        auto r = top.at("grid");
        c.hp = r.positive("hp", c.hp);
        c.h3 = r.positive("h3", c.h3);
        c.L = r.positive("L", c.L);
    }
    if (root.contains("potentials")) {
        const auto& p = root.at("potentials");
        if (!p.is_object()) throw ConfigError("potentials: expected an object");
        c.A1 = detail::read_terms<PotentialTerm>(p, "A1", detail::read_potential_term);
        c.A2 = detail::read_terms<PotentialTerm>(p, "A2", detail::read_potential_term);
        auto scalar = [](const detail::Reader& r) {
            ScalarTerm t;
            t.bump = detail::read_bump(r);
            t.bump.amplitude = 1.0;
            auto a = r.numbers("amplitude", {1.0});
            if (a.size() == 1) t.amplitude = a[0];
            else if (a.size() == 2) t.amplitude = cplx(a[0], a[1]);
            else throw ConfigError(r.path + ".amplitude: expected a number or [re, im]");
            return t;
        };
        for (const char* k : {"q1", "q2"}) {
            if (!p.contains(k)) continue;
            // amplitude may be [re, im]; read_bump would reject that, so go through `scalar`
            auto v = p.at(k);
            std::vector<ScalarTerm> terms;
            auto one = [&](const json& e, const std::string& path) {
                if (!e.is_object()) throw ConfigError(path + ": expected an object");
                json e2 = e;
                json amp = e2.contains("amplitude") ? e2["amplitude"] : json(1.0);
                e2.erase("amplitude");
                detail::Reader r{e2, path};
                auto t = scalar(r);
                if (amp.is_number()) t.amplitude = amp.get<double>();
                else if (amp.is_array() && amp.size() == 2 && amp[0].is_number() && amp[1].is_number())
                    t.amplitude = cplx(amp[0].get<double>(), amp[1].get<double>());
                else throw ConfigError(path + ".amplitude: expected a number or [re, im]");
                terms.push_back(t);
            };
            std::string path = std::string("potentials.") + k;
            if (v.is_array())
                for (std::size_t i = 0; i < v.size(); ++i) one(v[i], path + "[" + std::to_string(i) + "]");
            else one(v, path);
            (std::string(k) == "q1" ? c.q1 : c.q2) = terms;
        }
    }
    if (root.contains("ladders")) {
        const auto& l = root.at("ladders");
        if (!l.is_object()) throw ConfigError("ladders: expected an object");
        for (auto it = l.begin(); it != l.end(); ++it) {
            if (!c.ladders.count(it.key())) throw ConfigError("ladders." + it.key() + ": unknown ladder");
            c.ladders[it.key()] = detail::check_ladder(detail::Reader{l, "ladders"}.numbers(it.key().c_str(), {}),
                                                       "ladders." + it.key());
        }
    }
    c.probe = default_probe();
    if (root.contains("probe")) {
        auto r = top.at("probe");
        if (r.has("frames")) {
            const auto& f = r.j.at("frames");
            if (!f.is_array() || f.empty()) throw ConfigError("probe.frames: expected a non-empty array");
            c.probe.clear();
            for (std::size_t i = 0; i < f.size(); ++i) {
                detail::Reader e{f[i], "probe.frames[" + std::to_string(i) + "]"};
                if (!f[i].is_object()) throw ConfigError(e.path + ": expected an object");
                c.probe.push_back({e.vec2("theta", Vec2(1, 0)), e.vec3("xi", Vec3(0, 1, 1))});
            }
        } else if (r.has("theta_angles") || r.has("xi_perp") || r.has("xi3")) {
            c.probe.clear();
            for (const auto& fr : make_probe(r.numbers("theta_angles", {0.0, 2 * pi / 3, 4 * pi / 3}),
                                             r.numbers("xi_perp", {0.7, -1.1}), r.numbers("xi3", {0.8, -0.6}), 1.0)
                                      .frames)
                c.probe.push_back({fr.theta, fr.xi});
        }
    }
    if (root.contains("partial_data")) {
        auto r = top.at("partial_data");
        c.theta0 = r.vec2("theta0", c.theta0);
        c.eps = r.number("eps", c.eps);
        c.offsets = r.numbers("offsets", c.offsets);
        if (r.has("boundary_set")) {
            const auto& b = r.j.at("boundary_set");
            if (b.is_string()) {
                c.boundary_set = b.get<std::string>();
                if (c.boundary_set != "cover" && c.boundary_set != "full")
                    throw ConfigError("partial_data.boundary_set: expected 'cover', 'full' or a list of segments");
            } else if (b.is_array()) {
                c.boundary_set = "explicit";
                for (const auto& e : b) {
                    if (!e.is_number_integer() || e.get<long>() < 0)
                        throw ConfigError("partial_data.boundary_set: segment indices must be non-negative integers");
                    c.boundary_segments.push_back(e.get<std::size_t>());
                }
            } else {
                throw ConfigError("partial_data.boundary_set: expected 'cover', 'full' or a list of segments");
            }
        }
    }
    if (root.contains("carleman")) {
        auto r = top.at("carleman");
        c.carleman_s = r.number("s", c.carleman_s);
        c.suite_count = static_cast<int>(r.positive("count", c.suite_count));
        c.suite_bumps = static_cast<int>(r.positive("bumps", c.suite_bumps));
    }
    if (root.contains("frames")) c.random_frames = static_cast<int>(top.at("frames").number("random", c.random_frames));
    if (root.contains("seed")) {
        if (!root.at("seed").is_number_unsigned()) throw ConfigError("seed: expected a non-negative integer");
        c.seed = root.at("seed").get<std::uint64_t>();
    }
    c.output = top.text("output", c.output);
    if (root.contains("tolerances")) {
        const auto& t = root.at("tolerances");
        if (!t.is_object()) throw ConfigError("tolerances: expected an object");
        for (auto it = t.begin(); it != t.end(); ++it) {
            if (!c.tolerances.count(it.key())) throw ConfigError("tolerances." + it.key() + ": unknown tolerance");
            if (!it.value().is_number()) throw ConfigError("tolerances." + it.key() + ": expected a number");
            c.tolerances[it.key()] = it.value().get<double>();
        }
    }
    if (!(c.eps > 0 && c.eps < 1)) throw ConfigError("partial_data.eps: must lie in (0, 1)");
    if (std::abs(c.theta0.norm() - 1) > 1e-12) throw ConfigError("partial_data.theta0: must be a unit vector");
    c.source = root;
    return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw ConfigError("cannot read config file " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

// Apply command-line overrides and record them in the hashed config.
inline void override_seed(ExperimentConfig& c, std::uint64_t seed) {
    c.seed = seed;
    c.source["seed"] = seed;
}

inline void override_ladder(ExperimentConfig& c, const std::vector<double>& l) {
    auto v = detail::check_ladder(l, "--ladder");
    for (auto& [k, lad] : c.ladders) lad = v;
    for (const auto& [k, lad] : c.ladders) c.source["ladders"][k] = lad;
}

// ---------------------------------------------------------------------------
// Materialised inputs

struct World {
    std::shared_ptr<const CrossSection> cs;
    GridPtr grid;
    VectorPotential A1, A2;
    ScalarField q1, q2;
    std::vector<DirectionFrame> probe;
};

inline VectorPotential sum_terms(GridPtr g, const std::vector<PotentialTerm>& terms) {
    VectorPotential A(g);
    for (const auto& t : terms) {
        auto P = synth_potential(g, t.spec);
        if (t.l2_norm > 0) {
            double n = l2_norm(P);
            if (n == 0) throw ConfigError("l2_norm requested for a vanishing potential term");
            P = scaled(P, t.l2_norm / n);
        }
        A = A + P;
    }
    return A;
}

inline ScalarField sum_terms(GridPtr g, const std::vector<ScalarTerm>& terms) {
    ScalarField q(g);
    for (const auto& t : terms) {
        auto s = synth_scalar(g, t.bump, t.amplitude);
        for (std::size_t n = 0; n < q.size(); ++n) q[n] += s[n];
    }
    return q;
}

inline World build_world(const ExperimentConfig& c) {
    World w;
    try {
        w.cs = std::make_shared<const CrossSection>(build_cross_section(c.shape));
        w.grid = build_grid(w.cs, c.hp, c.h3, c.L);
        w.A1 = sum_terms(w.grid, c.A1);
        w.A2 = sum_terms(w.grid, c.A2);
        w.q1 = sum_terms(w.grid, c.q1);
        w.q2 = sum_terms(w.grid, c.q2);
        for (const auto& [th, xi] : c.probe) w.probe.push_back(build_frame(th, xi.head<2>(), xi.z(), w.cs->R));
    } catch (const GeometryError& e) {
        throw ConfigError(std::string("invalid geometry: ") + e.what());
    } catch (const FieldError& e) {
        throw ConfigError(std::string("invalid potential: ") + e.what());
    }
    if (w.probe.empty()) throw ConfigError("probe: no frames");
    return w;
}

// ---------------------------------------------------------------------------
// Reports

struct Check {
    std::string name;
    double value = 0;
    double threshold = 0;
    std::string relation = "<=";  // value relation threshold
    bool pass = false;
};

inline Check check_le(std::string name, double v, double t) { return {std::move(name), v, t, "<=", v <= t}; }
inline Check check_ge(std::string name, double v, double t) { return {std::move(name), v, t, ">=", v >= t}; }

struct Report {
    explicit Report(std::string name) : command(std::move(name)) {}

    std::string command;
    std::vector<Check> checks;
    json data = json::object();
    std::map<std::string, std::string> tables;  // file name -> CSV

    bool pass() const {
        return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
    }
};

inline json to_json(const Check& c) {
    return {{"name", c.name}, {"value", c.value}, {"threshold", c.threshold}, {"relation", c.relation}, {"pass", c.pass}};
}

inline std::string report_text(const Report& r, const ExperimentConfig& c) {
    json checks = json::array();
    for (const auto& k : r.checks) checks.push_back(to_json(k));
    json j = {{"command", r.command}, {"version", kVersion}, {"config_hash", c.hash()}, {"seed", c.seed},
              {"checks", checks},     {"pass", r.pass()},     {"data", r.data}};
    return j.dump(2) + "\n";
}

inline void write_report(const std::filesystem::path& dir, const Report& r, const ExperimentConfig& c) {
    atomic_write(dir / (r.command + ".json"), report_text(r, c));
    for (const auto& [name, csv] : r.tables) atomic_write(dir / name, csv);
}

// ---------------------------------------------------------------------------
// Stages

inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    double n = static_cast<double>(x.size()), sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double lx = std::log(x[i]), ly = std::log(y[i]);
        sx += lx, sy += ly, sxx += lx * lx, sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

inline Report run_frames(const ExperimentConfig& c, const World& w) {
    Report r("frames");
    auto orth = [](const DirectionFrame& f) {
        return std::max({std::abs(f.theta_t.dot(f.xi)), std::abs(f.theta_t.dot(f.eta)), std::abs(f.eta.dot(f.xi)),
                         std::abs(f.eta.norm() - 1)});
    };
    double worst = 0;
    json frames = json::array();
    for (const auto& f : w.probe) {
        worst = std::max(worst, orth(f));
        frames.push_back(to_json(f));
    }
    std::mt19937_64 rng(c.seed);
    double worst_random = 0;
    for (int i = 0; i < c.random_frames; ++i) {
        double a = 2 * pi * unit_uniform(rng);
        Vec2 th(std::cos(a), std::sin(a));
        double m = 0.1 + 4 * unit_uniform(rng), z = (unit_uniform(rng) < 0.5 ? -1 : 1) * (0.1 + 4 * unit_uniform(rng));
        worst_random = std::max(worst_random, orth(build_frame(th, m * Vec2(-th.y(), th.x()), z, w.cs->R)));
    }
    r.checks.push_back(check_le("probe_orthogonality", worst, c.tol("frame_orthogonality")));
    r.checks.push_back(check_le("random_orthogonality", worst_random, c.tol("frame_orthogonality")));
    auto part = boundary_partition(*w.cs, c.theta0, c.eps);
    r.data = {{"frames", frames},
              {"random_frames", c.random_frames},
              {"theta0", to_json(c.theta0)},
              {"eps", c.eps},
              {"illuminated", part.illuminated},
              {"shadowed", part.shadowed}};
    r.tables["boundary.csv"] = boundary_csv(*w.cs);
    return r;
}

// Continuum mass of the mollifier by radial quadrature (independent of the lattice).
inline double mollifier_mass(const Mollifier& M) {
    const int n = 20000;
    double R = M.radius, s = 0;
    for (int i = 0; i <= n; ++i) {
        double r = R * i / n, w = (i == 0 || i == n) ? 0.5 : 1.0;
        s += w * M(Vec3(r, 0, 0)) * r * r;
    }
    return 4 * pi * s * R / n;
}

inline Report run_mollify(const ExperimentConfig& c, const World& w) {
    Report r("mollify");
    const auto& lad = c.ladder("mollifier");
    std::vector<double> err, grad, mass;
    CsvTable t({"rho", "mass", "l2_error", "grad_sup", "under_resolved"});
    json rows = json::array();
    for (double rho : lad) {
        auto M = make_mollifier(rho);
        auto res = mollify(w.A1, M);
        mass.push_back(mollifier_mass(M));
        err.push_back(l2_norm(w.A1 - res.A));
        double gs = parallel_max(w.grid->size(), [&](std::size_t n) {
            if (!lattice::has_neighbours(*w.grid, n)) return 0.0;
            double m = 0;
            for (int d = 0; d < 3; ++d)
                for (double v : lattice::grad(res.A.a[d], *w.grid, n)) m = std::max(m, std::abs(v));
            return m;
        });
        grad.push_back(gs);
        t.row({num(rho), num(mass.back()), num(err.back()), num(gs), res.under_resolved ? "1" : "0"});
        rows.push_back({{"rho", rho}, {"mass", mass.back()}, {"l2_error", err.back()}, {"grad_sup", gs},
                        {"under_resolved", res.under_resolved}});
    }
    double mass_err = 0;
    for (double m : mass) mass_err = std::max(mass_err, std::abs(m - 1));
    r.checks.push_back(check_le("unit_mass", mass_err, c.tol("unit_mass")));
    bool any = l2_norm(w.A1) > 0;
    if (any) {
        double worst = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 1; i < err.size(); ++i) worst = std::max(worst, err[i] - err[i - 1]);
        if (err.size() > 1) r.checks.push_back({"l2_error_decreasing", worst, 0.0, "<", worst < 0});
        if (lad.size() > 1) r.checks.push_back(check_le("grad_sup_slope", loglog_slope(lad, grad), c.tol("grad_slope")));
    }
    r.data = {{"ladder", lad}, {"rows", rows}};
    r.tables["mollify.csv"] = t.str();
    return r;
}

inline Report run_cgo_build(const ExperimentConfig& c, const World& w) {
    Report r("cgo-build");
    const auto& lad = c.ladder("cgo");
    const auto& f = w.probe.front();
    json sols = json::array();
    CsvTable t({"sigma", "rho", "h1_over_rho", "l2", "decay", "pde", "estimate", "linear"});
    for (int sigma : {1, -1}) {
        std::vector<double> Q;
        double pde_ratio = 0;
        for (double rho : lad) {
            auto u = build_cgo(w.A1, w.q1, f, rho, sigma);
            const auto& rep = u.report;
            Q.push_back(rep.decay);
            pde_ratio = std::max(pde_ratio, rep.pde_residual / rep.residual_estimate);
            sols.push_back(to_json(u));
            t.row({std::to_string(sigma), num(rho), num(rep.h1_over_rho), num(rep.l2), num(rep.decay),
                   num(rep.pde_residual), num(rep.residual_estimate), num(rep.linear_residual)});
        }
        std::string tag = sigma > 0 ? "+" : "-";
        double up = 0;
        for (std::size_t i = 1; i < Q.size(); ++i) up = std::max(up, Q[i] - Q[i - 1]);
        r.checks.push_back(check_le("remainder_nonincreasing" + tag, up, 0.0));
        if (lad.size() > 1) r.checks.push_back(check_le("remainder_slope" + tag, loglog_slope(lad, Q), c.tol("decay_slope")));
        r.checks.push_back(check_le("pde_residual_over_estimate" + tag, pde_ratio, 1.0));
    }
    // phase decay and d-bar residual of the sigma = +1 phase
    std::vector<double> Cs;
    json phase = json::array();
    auto nodes = support_nodes(w.A1, 0);
    double worst_slope = -std::numeric_limits<double>::infinity();
    for (double rho : lad) {
        auto Ar = mollify(w.A1, make_mollifier(rho)).A;
        CauchyPhase ev(Ar, f, 1);
        auto d = phase_decay(ev, Vec3::Zero(), 4 * f.R1);
        json row = {{"rho", rho}, {"decay_status", d.status}};
        if (d.status == "ok") {
            worst_slope = std::max(worst_slope, d.slope);
            row["decay_slope"] = d.slope;
        }
        if (!nodes.empty()) {
            auto res = dbar_residual(ev, Ar, w.A1, nodes, w.grid->hp);
            row["dbar_l2_mollified"] = res.l2_mollified;
            row["dbar_l2_exact"] = res.l2_exact;
            row["mollification_error"] = res.mollification_error;
            if (res.mollification_error > 0) Cs.push_back(res.l2_exact / res.mollification_error);
        }
        phase.push_back(row);
    }
    if (std::isfinite(worst_slope)) r.checks.push_back(check_le("phase_decay_slope", worst_slope, c.tol("phase_decay_slope")));
    if (Cs.size() > 1) r.checks.push_back(check_le("dbar_constant_drift", ladder_drift(Cs), c.tol("drift")));
    r.data = {{"frame", to_json(f)}, {"ladder", lad}, {"solutions", sols}, {"phase", phase}};
    r.tables["cgo.csv"] = t.str();
    return r;
}

inline Report run_carleman(const ExperimentConfig& c, const World& w) {
    Report r("carleman-check");
    const auto& lad = c.ladder("carleman");
    Vec2 th = c.theta0;
    SuiteSpec sb;
    sb.count = c.suite_count;
    sb.seed = c.seed;
    sb.bumps = c.suite_bumps;
    auto suite = make_suite(*w.grid, th, sb);
    SuiteSpec si = sb;
    si.boundary = false;
    auto interior = make_suite(*w.grid, th, si);
    double s = 48 * std::pow(sup_norm(w.A1), 2) + c.carleman_s;
    std::map<std::string, std::vector<double>> C;
    json reps = json::array();
    CsvTable t({"check", "rho", "fitted_C"});
    for (double rho : lad) {
        if (!(rho > s)) throw ConfigError("carleman ladder must exceed s = " + num(s));
        std::vector<CarlemanReport> rs = {check_carleman_convexified(suite, w.A1, w.q1, make_weight(s, rho, th, 1)),
                                          check_carleman_convexified(suite, w.A1, w.q1, make_weight(s, rho, th, -1)),
                                          check_carleman_linear(suite, w.A1, w.q1, rho, th),
                                          check_carleman_negative(interior, w.A1, w.q1, rho, th, 1)};
        std::vector<std::string> names = {"p1a+", "p1a-", "c2a", "p2a"};
        for (std::size_t i = 0; i < rs.size(); ++i) {
            C[names[i]].push_back(rs[i].fitted_C);
            t.row({names[i], num(rho), num(rs[i].fitted_C)});
            json j = to_json(rs[i]);
            j["name"] = names[i];
            reps.push_back(j);
        }
    }
    for (const auto& [name, v] : C) r.checks.push_back(check_le("drift_" + name, ladder_drift(v), c.tol("drift")));
    r.data = {{"ladder", lad}, {"s", s}, {"theta", to_json(th)}, {"reports", reps}};
    r.tables["carleman.csv"] = t.str();
    return r;
}

// Typical size of curl samples for a field with the transform of A: |xi| |F A(xi)|.
inline double curl_scale(const VectorPotential& A, const std::vector<DirectionFrame>& frames) {
    const auto& g = *A.grid;
    auto box = lattice::support_box(A);
    if (!box) return 0;
    auto nodes = lattice::box_nodes(g, *box);
    double s = 0;
    for (const auto& f : frames) {
        double m = 0;
        for (int d = 0; d < 3; ++d)
            m += std::norm(direct_transform(g, nodes, f.xi, [&](std::size_t n) { return cplx(A.a[d][n]); }));
        s += f.xi.squaredNorm() * m;
    }
    return std::sqrt(s / frames.size());
}

inline json recover_result_json(const RecoveryResult& res, double scale) {
    json j = to_json(res);
    j["transform_scale"] = scale;
    return j;
}

inline Report run_recover_da(const ExperimentConfig& c, const World& w) {
    Report r("recover-da");
    const auto& lad = c.ladder("recovery");
    auto res = recover_dA(w.A1, w.A2, FourierProbe{w.probe}, lad);
    double scale = curl_scale(w.A1 - w.A2, w.probe);
    double rms_err = res.rms_rel_err * res.rms_oracle;
    if (res.rms_oracle == 0) rms_err = res.rms_recovered;
    r.checks.push_back(check_le("curl_rms_error", rms_err, c.tol("curl_rel") * res.rms_oracle + c.tol("curl_null") * scale));
    r.data = recover_result_json(res, scale);
    CsvTable t({"xi1", "xi2", "xi3", "pair", "re", "im", "oracle_re", "oracle_im"});
    for (const auto& s : res.samples)
        for (int p = 0; p < 3; ++p)
            t.row({num(s.frame.xi.x()), num(s.frame.xi.y()), num(s.frame.xi.z()),
                   std::to_string(kCurlPairs[p].first + 1) + std::to_string(kCurlPairs[p].second + 1),
                   num(s.recovered[p].real()), num(s.recovered[p].imag()), num(s.oracle[p].real()),
                   num(s.oracle[p].imag())});
    r.tables["recover_da.csv"] = t.str();
    return r;
}

inline Report run_recover_q(const ExperimentConfig& c, const World& w) {
    Report r("recover-q");
    const auto& lad = c.ladder("q");
    std::vector<Vec3> xis;
    for (const auto& f : w.probe) xis.push_back(f.xi);
    auto qs = recover_q(w.q1, xis, lad);
    std::vector<Vec3> neg;
    for (const auto& x : xis) neg.push_back(-x);
    auto qn = recover_q(w.q1, neg, lad);
    bool real = std::all_of(w.q1.v.begin(), w.q1.v.end(), [](cplx z) { return z.imag() == 0; });
    double plateau = 0, conj = 0, scale = 0;
    bool any_plateau = false, monotone = true;
    json rows = json::array();
    CsvTable t({"xi1", "xi2", "xi3", "limit_re", "limit_im", "oracle_re", "oracle_im"});
    for (std::size_t i = 0; i < qs.size(); ++i) {
        const auto& s = qs[i];
        scale = std::max(scale, std::abs(s.oracle));
        if (s.plateau) {
            any_plateau = true;
            for (auto v : s.ladder) plateau = std::max(plateau, std::abs(v - s.oracle));
        } else {
            for (std::size_t k = 1; k < s.ladder.size(); ++k)
                if (std::abs(s.ladder[k] - s.oracle) > std::abs(s.ladder[k - 1] - s.oracle)) monotone = false;
        }
        if (real)
            for (std::size_t k = 0; k < s.ladder.size(); ++k)
                conj = std::max(conj, std::abs(qn[i].ladder[k] - std::conj(s.ladder[k])));
        rows.push_back(to_json(s));
        t.row({num(s.xi.x()), num(s.xi.y()), num(s.xi.z()), num(s.limit.real()), num(s.limit.imag()),
               num(s.oracle.real()), num(s.oracle.imag())});
    }
    double sc = std::max(scale, 1e-300);
    if (any_plateau) r.checks.push_back(check_le("plateau_exact", plateau / sc, c.tol("q_plateau")));
    else r.checks.push_back({"ladder_monotone", monotone ? 1.0 : 0.0, 1.0, ">=", monotone});
    if (real) r.checks.push_back(check_le("conjugate_symmetry", conj / sc, c.tol("q_conjugate")));
    r.data = {{"ladder", lad}, {"samples", rows}, {"real", real}};
    r.tables["recover_q.csv"] = t.str();
    return r;
}

inline BoundarySubset boundary_subset(const ExperimentConfig& c, const World& w,
                                      const std::vector<DirectionFrame>& frames) {
    if (c.boundary_set == "full") return BoundarySubset::full(*w.cs);
    if (c.boundary_set == "cover") return BoundarySubset::covering(*w.cs, frames, c.eps);
    auto V = BoundarySubset::none(*w.cs);
    for (std::size_t i : c.boundary_segments) {
        if (i >= V.segments.size()) throw ConfigError("partial_data.boundary_set: segment index out of range");
        V.segments[i] = 1;
    }
    return V;
}

inline Report run_partial_data(const ExperimentConfig& c, const World& w) {
    Report r("partial-data");
    const auto& lad = c.ladder("partial");
    std::vector<DirectionFrame> frames;
    try {
        frames = frames_near(c.theta0, c.offsets, 1.0, 1.0, w.cs->R);
    } catch (const GeometryError& e) {
        throw ConfigError(std::string("partial_data: ") + e.what());
    }
    auto V = boundary_subset(c, w, frames);
    PartialDataReport rep;
    try {
        rep = partial_data_check(w.A1, w.A2, w.q1, w.q2, V, frames, c.theta0, c.eps, lad);
    } catch (const PartialDataError& e) {
        throw ConfigError(std::string("partial_data: ") + e.what());
    }
    double cs = 0, comp = 0;
    for (const auto& row : rep.rows) {
        cs = std::max(cs, row.cauchy_schwarz);
        comp = std::max(comp, std::abs(row.complement));
    }
    if (rep.full_boundary) r.checks.push_back(check_le("complement_zero", comp, 0.0));
    r.checks.push_back(check_le("cauchy_schwarz", cs, 1.0 + c.tol("cauchy_schwarz")));
    if (rep.A_norm > 0 && rep.fitted_C.size() > 1) r.checks.push_back(check_le("bound_drift", rep.drift, c.tol("drift")));
    r.data = to_json(rep, V);
    CsvTable t({"rho", "theta1", "theta2", "pairing_abs", "complement_abs", "illuminated", "shadowed", "ratio"});
    for (const auto& row : rep.rows)
        t.row({num(row.rho), num(row.theta.x()), num(row.theta.y()), num(std::abs(row.pairing)),
               num(std::abs(row.complement)), num(row.illuminated), num(row.shadowed), num(row.ratio)});
    r.tables["partial_data.csv"] = t.str();
    r.tables["boundary_set.csv"] = boundary_csv(*w.cs, &V);
    return r;
}

inline const std::vector<std::string>& stage_names() {
    static const std::vector<std::string> s = {"frames",     "mollify",   "cgo-build",   "carleman-check",
                                               "recover-da", "recover-q", "partial-data"};
    return s;
}

inline Report run_stage(const std::string& name, const ExperimentConfig& c, const World& w) {
    if (name == "frames") return run_frames(c, w);
    if (name == "mollify") return run_mollify(c, w);
    if (name == "cgo-build") return run_cgo_build(c, w);
    if (name == "carleman-check") return run_carleman(c, w);
    if (name == "recover-da") return run_recover_da(c, w);
    if (name == "recover-q") return run_recover_q(c, w);
    if (name == "partial-data") return run_partial_data(c, w);
    throw ConfigError("unknown subcommand '" + name + "'");
}

// ---------------------------------------------------------------------------
// Summary of report files

struct SummaryRow {
    std::string report, check;
    double value = 0, threshold = 0;
    std::string relation;
    bool pass = false;
};

inline std::vector<SummaryRow> read_summary(const std::vector<std::filesystem::path>& files) {
    std::vector<SummaryRow> rows;
    for (const auto& p : files) {
        std::ifstream in(p);
        if (!in) throw IoError("cannot open report " + p.string());
        json j;
        try {
            j = json::parse(in);
        } catch (const json::parse_error& e) {
            throw IoError("report " + p.string() + " does not parse: " + e.what());
        }
        if (!j.contains("checks") || !j["checks"].is_array()) throw IoError("report " + p.string() + " has no checks");
        for (const auto& k : j["checks"]) {
            auto val = [](const json& v) { return v.is_number() ? v.get<double>() : std::nan(""); };
            rows.push_back({j.value("command", p.stem().string()), k.value("name", "?"), val(k["value"]),
                            val(k["threshold"]), k.value("relation", "<="), k.value("pass", false)});
        }
    }
    return rows;
}

inline std::string render_summary(const std::vector<SummaryRow>& rows) {
    if (rows.empty()) return "no checks run\n";
    std::ostringstream o;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-16s %-32s %14s %3s %-12s %s\n", "report", "check", "value", "", "threshold", "status");
    o << buf;
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%-16s %-32s %14.6g %3s %-12.4g %s\n", r.report.c_str(), r.check.c_str(), r.value,
                      r.relation.c_str(), r.threshold, r.pass ? "PASS" : "FAIL");
        o << buf;
    }
    return o.str();
}

}  // namespace cgo
