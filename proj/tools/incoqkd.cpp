// incoqkd: command-line front end of the link simulator.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "incoqkd/error.hpp"
#include "incoqkd/harness.hpp"

namespace fs = std::filesystem;
using namespace incoqkd;

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kSync = 3, kIo = 4 };

struct Common {
    std::string scenario;
    std::optional<std::uint64_t> seed;
    std::string out = ".";
    std::string points;
    std::optional<std::uint64_t> symbols;
    unsigned threads = 1;
};

std::vector<double> parse_points(const std::string& text) {
    std::vector<double> v;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            v.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError("--points: '" + item + "' is not a number");
        }
    }
    if (v.empty()) throw ConfigError("--points is empty");
    return v;
}

Scenario load(const Common& c) {
    if (c.scenario.empty()) throw ConfigError("--scenario is required");
    Scenario s = load_scenario(c.scenario);
    if (c.seed) s.master_seed = *c.seed;
    if (c.symbols) s.symbols = *c.symbols;
    s.validate();
    return s;
}

std::ofstream open_out(const Common& c, const std::string& name) {
    std::error_code ec;
    fs::create_directories(c.out, ec);
    const fs::path p = fs::path(c.out) / name;
    std::ofstream f(p, std::ios::binary);
    if (!f) throw IoError("cannot write " + p.string());
    return f;
}

void write_provenance(std::ostream& out, const std::vector<std::string>& lines) {
    for (const auto& l : lines) out << "# " << l << '\n';
}

void check(std::ostream& f, const std::string& what) {
    f.flush();
    if (!f) throw IoError("write failed: " + what);
}

int cmd_run(const Common& c, bool dump) {
    const auto s = load(c);
    RunOptions opt;
    opt.threads = c.threads;
    opt.keep_tags = dump;
    const auto r = run_single(s, opt);
    print_summary(std::cout, r.report);
    if (r.sync) {
        std::printf("frame sync    shift %llu (peak %.0f, off-peak %.2f +- %.2f)\n",
                    static_cast<unsigned long long>(r.sync->shift), r.sync->peak, r.sync->off_peak_mean,
                    r.sync->off_peak_sigma);
    }
    const auto prov = provenance_lines(s);
    {
        auto f = open_out(c, "report.csv");
        write_provenance(f, prov);
        write_report_csv(f, r.report);
        check(f, "report.csv");
    }
    if (dump) {
        for (int b = 0; b < 2; ++b) {
            const std::string name = "tags_basis" + std::to_string(b) + ".csv";
            auto f = open_out(c, name);
            auto p = prov;
            p.push_back("bob_basis=" + std::to_string(b));
            write_tags_csv(f, r.tags[static_cast<std::size_t>(b)], p);
            check(f, name);
        }
        auto f = open_out(c, "frame.csv");
        write_provenance(f, prov);
        write_frame_csv(f, r.frame, s.encoder.basis_set);
        check(f, "frame.csv");
    }
    return kOk;
}

int write_sweep(const Common& c, const SweepResult& r, const std::string& name) {
    auto f = open_out(c, name);
    write_sweep_csv(f, r);
    check(f, name);
    write_sweep_csv(std::cout, r);
    return kOk;
}

std::vector<double> points_or(const Common& c, const std::vector<double>& fallback, const char* key) {
    if (!c.points.empty()) return parse_points(c.points);
    if (fallback.empty()) throw ConfigError(std::string("no sweep points: pass --points or set ") + key);
    return fallback;
}

int cmd_sweep_ob(const Common& c) {
    const auto s = load(c);
    return write_sweep(c, sweep_ob(s, points_or(c, s.sweep_ob_db, "sweep.ob_db"), c.threads), "sweep_ob.csv");
}

int cmd_sweep_bandwidth(const Common& c) {
    const auto s = load(c);
    return write_sweep(c, sweep_bandwidth(s, points_or(c, s.sweep_bandwidth_nm, "sweep.bandwidth_nm"), c.threads),
                       "sweep_bandwidth.csv");
}

int cmd_sweep_length(const Common& c, std::optional<int> seeds) {
    const auto s = load(c);
    return write_sweep(c,
                       sweep_length(s, points_or(c, s.sweep_length_km, "sweep.length_km"),
                                    seeds.value_or(s.length_seeds), c.threads),
                       "sweep_length.csv");
}

int cmd_drift(const Common& c, std::optional<double> duration, std::optional<double> step) {
    auto s = load(c);
    if (!c.points.empty()) s.probe_lambdas_nm = parse_points(c.points);
    if (duration) s.drift_duration_hours = *duration;
    if (step) s.drift_step_hours = *step;
    s.validate();
    const auto samples = drift_trace(s);
    auto f = open_out(c, "trajectory.csv");
    write_provenance(f, provenance_lines(s));
    write_trajectory_csv(f, samples);
    check(f, "trajectory.csv");
    if (s.probe_lambdas_nm.size() >= 2) {
        std::printf("mean separation %.4f rad between %.1f and %.1f nm over %zu samples\n",
                    mean_probe_separation(samples, s.probe_lambdas_nm[0], s.probe_lambdas_nm[1]),
                    s.probe_lambdas_nm[0], s.probe_lambdas_nm[1], samples.size() / s.probe_lambdas_nm.size());
    }
    return kOk;
}

int cmd_budget(const Common& c, double mu, double lambda, double source_dbm) {
    const auto rates = c.points.empty() ? std::vector<double>{1e8, 1e9} : parse_points(c.points);
    const auto rows = budget(mu, rates, lambda, source_dbm);
    std::printf("mu = %g photons/symbol at %.2f nm, source %.2f dBm\n", mu, lambda, source_dbm);
    std::printf("%12s %14s %14s %12s\n", "rate [Hz]", "launch [dBm]", "source [dBm]", "headroom [dB]");
    for (const auto& r : rows) {
        std::printf("%12.4g %14.3f %14.3f %12.3f\n", r.rate_hz, r.launch_dbm, r.source_dbm, r.headroom_db);
    }
    auto f = open_out(c, "budget.csv");
    write_budget_csv(f, rows, mu, lambda);
    check(f, "budget.csv");
    return kOk;
}

int cmd_calibrate(const Common& c, bool verify) {
    const auto s = load(c);
    const auto res = calibrate(s);
    for (const auto& l : res.log) std::cout << l << '\n';
    {
        auto f = open_out(c, "calibrated.ini");
        f << "; pinned by incoqkd calibrate from " << fs::path(c.scenario).filename().string() << "\n";
        write_scenario(f, res.scenario);
        check(f, "calibrated.ini");
    }
    if (verify) {
        RunOptions opt;
        opt.threads = c.threads;
        const auto r = run_single(res.scenario, opt);
        std::cout << "Monte Carlo check of the pinned scenario:\n";
        print_summary(std::cout, r.report);
    }
    return kOk;
}

int cmd_analyze(const Common& c, const std::string& tags0, const std::string& tags1, const std::string& frame_csv,
                std::optional<double> duration, std::optional<std::uint64_t> shift) {
    const auto s = load(c);
    auto read_tags = [](const std::string& p) {
        std::ifstream in(p);
        if (!in) throw IoError("cannot open tag file " + p);
        return read_tags_csv(in);
    };
    std::array<std::vector<TimeTag>, 2> tags{read_tags(tags0), read_tags(tags1)};
    std::ifstream fin(frame_csv);
    if (!fin) throw IoError("cannot open frame file " + frame_csv);
    const auto frame = read_frame_csv(fin);
    const double dur = duration.value_or(static_cast<double>(s.symbols) / s.rate_hz);
    std::optional<SyncResult> sync;
    const auto report = analyze_tags(s, frame, tags, dur, shift, &sync);
    print_summary(std::cout, report);
    if (sync) std::printf("frame sync    shift %llu\n", static_cast<unsigned long long>(sync->shift));
    auto f = open_out(c, "report.csv");
    write_provenance(f, provenance_lines(s));
    write_report_csv(f, report);
    check(f, "report.csv");
    return kOk;
}

void add_common(CLI::App* app, Common& c, bool scenario_required = true) {
    auto* o = app->add_option("--scenario", c.scenario, "Scenario INI file");
    if (scenario_required) o->required();
    app->add_option("--seed", c.seed, "Master seed (overrides run.master_seed)");
    app->add_option("--out", c.out, "Output directory")->capture_default_str();
    app->add_option("--points", c.points, "Comma-separated sweep points");
    app->add_option("--symbols", c.symbols, "Symbols per run (overrides run.symbols)");
    app->add_option("--threads", c.threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Broadband-source polarization BB84 link simulator"};
    app.set_version_flag("--version", std::string(kToolVersion));
    app.require_subcommand(1);
    Common c;

    auto* run = app.add_subcommand("run", "Simulate one scenario end to end");
    add_common(run, c);
    bool dump = false;
    run->add_flag("--dump-tags", dump, "Also write time tags and the frame");

    auto* sob = app.add_subcommand("sweep-ob", "QBER and raw key versus optical budget");
    add_common(sob, c);
    auto* sbw = app.add_subcommand("sweep-bandwidth", "QBER versus source bandwidth");
    add_common(sbw, c);
    auto* slen = app.add_subcommand("sweep-length", "QBER versus fiber length");
    add_common(slen, c);
    std::optional<int> seeds;
    slen->add_option("--seeds", seeds, "Fiber realizations per length");

    auto* drift = app.add_subcommand("drift-trace", "Poincare trajectories of probe wavelengths");
    add_common(drift, c);
    std::optional<double> duration;
    std::optional<double> step;
    drift->add_option("--duration-hours", duration);
    drift->add_option("--step-hours", step);

    auto* bud = app.add_subcommand("budget", "Launch power and headroom");
    add_common(bud, c, false);
    double mu = 0.1;
    double lambda = 1581.0;
    double source_dbm = -69.8;
    bud->add_option("--mu", mu)->capture_default_str();
    bud->add_option("--lambda-nm", lambda)->capture_default_str();
    bud->add_option("--source-dbm", source_dbm)->capture_default_str();

    auto* cal = app.add_subcommand("calibrate", "Fit calibration parameters and write a pinned scenario");
    add_common(cal, c);
    bool verify = false;
    cal->add_flag("--verify", verify, "Run the pinned scenario once");

    auto* ana = app.add_subcommand("analyze", "Post-process recorded tag and frame CSVs");
    add_common(ana, c);
    std::string tags0;
    std::string tags1;
    std::string frame_csv;
    std::optional<double> ana_duration;
    std::optional<std::uint64_t> shift;
    ana->add_option("--tags0", tags0, "Tags recorded in Bob basis 0")->required();
    ana->add_option("--tags1", tags1, "Tags recorded in Bob basis 1")->required();
    ana->add_option("--frame", frame_csv, "Frame CSV")->required();
    ana->add_option("--duration-s", ana_duration, "Acquisition time (default symbols / rate)");
    ana->add_option("--shift", shift, "Known frame offset (skips synchronization)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfig;
    }

    try {
        if (*run) return cmd_run(c, dump);
        if (*sob) return cmd_sweep_ob(c);
        if (*sbw) return cmd_sweep_bandwidth(c);
        if (*slen) return cmd_sweep_length(c, seeds);
        if (*drift) return cmd_drift(c, duration, step);
        if (*bud) return cmd_budget(c, mu, lambda, source_dbm);
        if (*cal) return cmd_calibrate(c, verify);
        if (*ana) return cmd_analyze(c, tags0, tags1, frame_csv, ana_duration, shift);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kConfig;
    } catch (const SyncError& e) {
        std::cerr << "sync failure: " << e.what() << '\n';
        return kSync;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << '\n';
        return kIo;
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFailure;
    }
    return kFailure;
}
