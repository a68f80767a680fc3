// Command-line runner: one subcommand per pipeline stage plus `all` and `report`.
//
// Exit status: 0 when every check passes, 2 when a check fails, 1 on usage,
// config or runtime errors.

#include "cgo/experiment.hpp"

#include <cstdlib>
#include <iostream>

#include "CLI11.hpp"

namespace {

struct Options {
    std::string config, out;
    std::optional<std::uint64_t> seed;
    std::string ladder;
    int jobs = 0;
    std::vector<std::string> files;
};

std::vector<double> parse_ladder(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        std::size_t used = 0;
        double v = 0;
        try {
            v = std::stod(tok, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != tok.size()) throw cgo::ConfigError("--ladder: '" + tok + "' is not a number");
        out.push_back(v);
    }
    return out;
}

int run_stages(const std::vector<std::string>& stages, const Options& o) {
    auto cfg = cgo::load_config(o.config);
    if (o.seed) cgo::override_seed(cfg, *o.seed);
    if (!o.ladder.empty()) cgo::override_ladder(cfg, parse_ladder(o.ladder));
    std::filesystem::path dir = o.out.empty() ? std::filesystem::path(cfg.output) : std::filesystem::path(o.out);
    auto world = cgo::build_world(cfg);
    bool pass = true;
    for (const auto& s : stages) {
        auto r = cgo::run_stage(s, cfg, world);
        cgo::write_report(dir, r, cfg);
        for (const auto& c : r.checks)
            std::cout << s << ' ' << c.name << ' ' << cgo::num(c.value) << ' ' << c.relation << ' '
                      << cgo::num(c.threshold) << ' ' << (c.pass ? "PASS" : "FAIL") << '\n';
        pass = pass && r.pass();
    }
    return pass ? 0 : 2;
}

int render(const Options& o) {
    std::vector<std::filesystem::path> files;
    for (const auto& f : o.files) {
        if (!std::filesystem::exists(f)) throw cgo::IoError("report file not found: " + f);
        if (std::filesystem::is_directory(f)) {
            std::vector<std::filesystem::path> in_dir;
            for (const auto& e : std::filesystem::directory_iterator(f))
                if (e.path().extension() == ".json") in_dir.push_back(e.path());
            std::sort(in_dir.begin(), in_dir.end());
            files.insert(files.end(), in_dir.begin(), in_dir.end());
        } else {
            files.push_back(f);
        }
    }
    auto rows = cgo::read_summary(files);
    std::cout << cgo::render_summary(rows);
    bool pass = std::all_of(rows.begin(), rows.end(), [](const cgo::SummaryRow& r) { return r.pass; });
    return pass ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CGO solutions and Fourier recovery for magnetic Schroedinger operators on waveguides"};
    app.set_version_flag("--version", std::string(cgo::kVersion));
    app.require_subcommand(1);
    Options o;

    std::vector<CLI::App*> stage_cmds;
    auto add_common = [&](CLI::App* c) {
        c->add_option("--config", o.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
        c->add_option("--out", o.out, "output directory (overrides config)");
        c->add_option("--seed", o.seed, "random seed (overrides config)");
        c->add_option("--ladder", o.ladder, "rho ladder r1,r2,... applied to every stage");
        c->add_option("--jobs", o.jobs, "worker threads (default: CGO_JOBS or hardware)")->check(CLI::PositiveNumber);
    };
    for (const auto& s : cgo::stage_names()) {
        auto* c = app.add_subcommand(s, "run the " + s + " stage");
        add_common(c);
        stage_cmds.push_back(c);
    }
    auto* all = app.add_subcommand("all", "run every stage");
    add_common(all);
    auto* report = app.add_subcommand("report", "summarise report files or directories");
    report->add_option("files", o.files, "report JSON files or directories");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 1;
    }

    try {
        if (o.jobs > 0) cgo::set_jobs(o.jobs);
        if (report->parsed()) return render(o);
        if (all->parsed()) return run_stages(cgo::stage_names(), o);
        for (auto* c : stage_cmds)
            if (c->parsed()) return run_stages({c->get_name()}, o);
    } catch (const cgo::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
