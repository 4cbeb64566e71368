#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "incoqkd/error.hpp"
#include "incoqkd/harness.hpp"
#include "incoqkd/random.hpp"

namespace incoqkd {

namespace pt = boost::property_tree;

namespace {

std::string trimmed(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& text, double& out) {
    const std::string t = trimmed(text);
    if (t.empty()) return false;
    try {
        std::size_t used = 0;
        out = std::stod(t, &used);
        return used == t.size() && std::isfinite(out);
    } catch (const std::exception&) {
        return false;
    }
}

class Reader {
  public:
    explicit Reader(const pt::ptree& root) : root_(root) {}

    std::vector<std::string> problems;

    const std::string* raw(const std::string& section, const std::string& key) {
        known_.insert(section + "." + key);
        const auto sec = root_.get_child_optional(pt::ptree::path_type(section, '\x01'));
        if (!sec) return nullptr;
        const auto v = sec->get_child_optional(pt::ptree::path_type(key, '\x01'));
        if (!v) return nullptr;
        tmp_ = trimmed(v->data());
        return &tmp_;
    }

    void read(const std::string& sec, const std::string& key, double& out) {
        if (const auto* v = raw(sec, key)) {
            double d = 0.0;
            if (parse_double(*v, d)) {
                out = d;
            } else {
                bad(sec, key, *v, "a number");
            }
        }
    }

    void read(const std::string& sec, const std::string& key, std::optional<double>& out) {
        if (const auto* v = raw(sec, key)) {
            double d = 0.0;
            if (v->empty() || *v == "none") {
                out.reset();
            } else if (parse_double(*v, d)) {
                out = d;
            } else {
                bad(sec, key, *v, "a number or 'none'");
            }
        }
    }

    void read(const std::string& sec, const std::string& key, int& out) {
        if (const auto* v = raw(sec, key)) {
            double d = 0.0;
            if (parse_double(*v, d) && d == std::floor(d) && std::abs(d) < 2e9) {
                out = static_cast<int>(d);
            } else {
                bad(sec, key, *v, "an integer");
            }
        }
    }

    void read(const std::string& sec, const std::string& key, std::uint64_t& out) {
        if (const auto* v = raw(sec, key)) {
            // Plain digits first so large seeds survive exactly; 1e10 style is accepted too.
            const std::string t = *v;
            if (!t.empty() && t.find_first_not_of("0123456789") == std::string::npos) {
                try {
                    out = std::stoull(t);
                    return;
                } catch (const std::exception&) {
                }
            }
            double d = 0.0;
            if (parse_double(t, d) && d >= 0.0 && d == std::floor(d) && d < 1.8e19) {
                out = static_cast<std::uint64_t>(d);
            } else {
                bad(sec, key, t, "a non-negative integer");
            }
        }
    }

    void read(const std::string& sec, const std::string& key, bool& out) {
        if (const auto* v = raw(sec, key)) {
            if (*v == "true" || *v == "1" || *v == "yes") {
                out = true;
            } else if (*v == "false" || *v == "0" || *v == "no") {
                out = false;
            } else {
                bad(sec, key, *v, "true or false");
            }
        }
    }

    void read(const std::string& sec, const std::string& key, std::string& out) {
        if (const auto* v = raw(sec, key)) out = *v;
    }

    void read(const std::string& sec, const std::string& key, std::vector<double>& out) {
        if (const auto* v = raw(sec, key)) {
            std::vector<double> vals;
            std::stringstream ss(*v);
            std::string item;
            bool ok = true;
            while (std::getline(ss, item, ',')) {
                double d = 0.0;
                if (!parse_double(item, d)) ok = false;
                vals.push_back(d);
            }
            if (ok) {
                out = std::move(vals);
            } else {
                bad(sec, key, *v, "a comma-separated list of numbers");
            }
        }
    }

    void read(const std::string& sec, const std::string& key, std::vector<std::string>& out) {
        if (const auto* v = raw(sec, key)) {
            out.clear();
            std::stringstream ss(*v);
            std::string item;
            while (std::getline(ss, item, ',')) {
                if (!trimmed(item).empty()) out.push_back(trimmed(item));
            }
        }
    }

    template <class Enum, class Parse>
    void read_enum(const std::string& sec, const std::string& key, Enum& out, Parse parse) {
        if (const auto* v = raw(sec, key)) {
            try {
                out = parse(*v);
            } catch (const DomainError& e) {
                problems.push_back(sec + "." + key + ": " + e.what());
            }
        }
    }

    void check_unknown() {
        for (const auto& [sec, child] : root_) {
            if (child.empty() && !child.data().empty()) {
                problems.push_back("key '" + sec + "' outside any section");
                continue;
            }
            for (const auto& [key, value] : child) {
                if (!known_.count(sec + "." + key)) problems.push_back("unknown key " + sec + "." + key);
            }
        }
    }

  private:
    void bad(const std::string& sec, const std::string& key, const std::string& v, const char* want) {
        problems.push_back(sec + "." + key + ": '" + v + "' is not " + want);
    }

    const pt::ptree& root_;
    std::set<std::string> known_;
    std::string tmp_;
};

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    // Prefer the shortest representation that round-trips.
    for (int p = 6; p <= 17; ++p) {
        char shorter[40];
        std::snprintf(shorter, sizeof shorter, "%.*g", p, v);
        if (std::stod(shorter) == v) return shorter;
    }
    return buf;
}

std::string join(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += fmt(v[i]);
    }
    return out;
}

std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += v[i];
    }
    return out;
}

std::string_view to_string(SyncMode m) { return m == SyncMode::prbs ? "prbs" : "known"; }

SyncMode parse_sync_mode(std::string_view s) {
    if (s == "prbs") return SyncMode::prbs;
    if (s == "known") return SyncMode::known;
    throw DomainError("unknown sync mode '" + std::string(s) + "' (prbs or known)");
}

}  // namespace

void Scenario::validate() const {
    std::vector<std::string> p;
    auto check = [&](bool ok, const std::string& msg) {
        if (!ok) p.push_back(msg);
    };
    auto domain = [&](const std::string& prefix, auto&& fn) {
        try {
            fn();
        } catch (const DomainError& e) {
            p.push_back(prefix + ": " + e.what());
        }
    };
    domain("source", [&] { spectrum.validate(); });
    check(slices >= 1 && slices <= 100000, "source.slices must lie in [1, 100000]");
    domain("encoder", [&] { encoder.validate(); });
    check(length_km >= 0.0, "fiber.length_km must be non-negative");
    check(pmd_ps_per_sqrtkm >= 0.0, "fiber.pmd_ps_per_sqrtkm must be non-negative");
    check(segments >= 0, "fiber.segments must be non-negative");
    check(atten_db_per_km >= 0.0, "fiber.atten_db_per_km must be non-negative");
    check(drift_rad_per_sqrth >= 0.0, "fiber.drift_rad_per_sqrth must be non-negative");
    for (int c = 0; c < 2; ++c) {
        domain("detector" + std::to_string(c), [&] { detectors[static_cast<std::size_t>(c)].validate(); });
    }
    check(dark_acceptance >= 0.0, "detector.dark_acceptance must be non-negative");
    check(rate_hz > 0.0, "protocol.rate_hz must be positive");
    if (noise_floor) {
        check(mu >= 0.0, "protocol.mu must be non-negative");
    } else {
        check(mu > 0.0, "protocol.mu must be positive (set run.noise_floor = true for mu = 0)");
    }
    check(window_fraction > 0.0 && window_fraction <= 1.0, "protocol.window_fraction must lie in (0, 1]");
    check(prbs_order >= 7 && prbs_order <= 31, "protocol.prbs_order must lie in [7, 31]");
    if (prbs_order >= 7 && prbs_order <= 31) {
        const std::uint64_t period = (std::uint64_t{1} << prbs_order) - 1;
        check(frame_length >= 2 && frame_length <= period,
              "protocol.frame_length must lie in [2, 2^prbs_order - 1] so the frame has no internal repeat");
    }
    check(batches >= 0, "protocol.batches must be non-negative");
    check(symbols >= 2, "run.symbols must be at least 2");
    check(length_seeds >= 1, "sweep.length_seeds must be at least 1");
    check(drift_step_hours > 0.0, "drift.step_hours must be positive");
    check(drift_duration_hours >= 0.0, "drift.duration_hours must be non-negative");
    for (double l : probe_lambdas_nm) check(l > 0.0, "drift.probe_lambdas_nm must be positive");
    for (double l : sweep_bandwidth_nm) check(l > 0.0, "sweep.bandwidth_nm values must be positive");
    for (double l : sweep_length_km) check(l >= 0.0, "sweep.length_km values must be non-negative");
    for (const auto& st : calibration.stages) {
        check(st == "baseline" || st == "bandwidth" || st == "length",
              "calibrate.stages: unknown stage '" + st + "'");
    }
    if (!p.empty()) throw ConfigError(std::move(p));
}

Scenario parse_scenario(std::istream& in, const std::filesystem::path& base_dir) {
    pt::ptree root;
    try {
        pt::read_ini(in, root);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(std::string("malformed scenario file: ") + e.what());
    }
    Reader r(root);
    Scenario s;

    std::string shape;
    double center = std::numeric_limits<double>::quiet_NaN();
    double width = std::numeric_limits<double>::quiet_NaN();
    r.read("source", "preset", s.source_preset);
    r.read("source", "shape", shape);
    r.read("source", "center_nm", center);
    r.read("source", "width_nm", width);
    r.read("source", "spectrum_csv", s.spectrum_csv);
    r.read("source", "slices", s.slices);
    try {
        if (!s.spectrum_csv.empty()) {
            std::filesystem::path p(s.spectrum_csv);
            if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
            s.spectrum_csv = std::filesystem::absolute(p).lexically_normal().string();
            s.spectrum = load_spectrum_csv(s.spectrum_csv);
            s.source_preset.clear();
        } else if (!shape.empty()) {
            const auto sh = parse_spectrum_shape(shape);
            if (sh == SpectrumShape::tabulated) throw DomainError("tabulated shape needs spectrum_csv");
            if (std::isnan(center) || std::isnan(width)) throw DomainError("shape needs center_nm and width_nm");
            s.spectrum = sh == SpectrumShape::rectangular ? SourceSpectrum::rectangular(center, width)
                                                           : SourceSpectrum::gaussian(center, width);
            s.source_preset.clear();
        } else {
            if (s.source_preset.empty()) s.source_preset = "ase-otf";
            s.spectrum = SourceSpectrum::preset(s.source_preset);
        }
    } catch (const Error& e) {
        r.problems.push_back(std::string("source: ") + e.what());
    }

    r.read_enum("encoder", "architecture", s.encoder.architecture, parse_architecture);
    r.read_enum("encoder", "basis_set", s.encoder.basis_set, parse_basis_set);
    r.read("encoder", "extinction_db", s.encoder.extinction_db);
    r.read("encoder", "tx_dgd_ps", s.encoder.tx_dgd_ps);
    r.read("encoder", "carve_duty", s.encoder.carve_duty);
    r.read("encoder", "drive_bandwidth_hz", s.encoder.drive_bandwidth_hz);

    r.read("fiber", "length_km", s.length_km);
    r.read("fiber", "pmd_ps_per_sqrtkm", s.pmd_ps_per_sqrtkm);
    r.read("fiber", "segments", s.segments);
    r.read("fiber", "atten_db_per_km", s.atten_db_per_km);
    r.read("fiber", "drift_rad_per_sqrth", s.drift_rad_per_sqrth);
    r.read("fiber", "seed_index", s.fiber_seed_index);

    for (int c = 0; c < 2; ++c) {
        const std::string sec = "detector" + std::to_string(c);
        auto& d = s.detectors[static_cast<std::size_t>(c)];
        r.read(sec, "efficiency", d.efficiency);
        r.read(sec, "dark_rate_cps", d.dark_rate_cps);
        r.read(sec, "dead_time_s", d.dead_time_s);
        r.read(sec, "jitter_s", d.jitter_s);
    }
    r.read("detectors", "dark_acceptance", s.dark_acceptance);

    r.read("protocol", "rate_hz", s.rate_hz);
    r.read("protocol", "mu", s.mu);
    r.read("protocol", "window_fraction", s.window_fraction);
    r.read("protocol", "window_offset_s", s.window_offset_s);
    r.read("protocol", "prbs_order", s.prbs_order);
    r.read("protocol", "frame_length", s.frame_length);
    r.read_enum("protocol", "double_click", s.double_click, parse_double_click_policy);
    r.read_enum("protocol", "sync", s.sync, parse_sync_mode);
    r.read("protocol", "batches", s.batches);

    r.read("link", "optical_budget_db", s.optical_budget_db);

    r.read("run", "symbols", s.symbols);
    r.read("run", "master_seed", s.master_seed);
    r.read("run", "noise_floor", s.noise_floor);

    r.read("sweep", "ob_db", s.sweep_ob_db);
    r.read("sweep", "bandwidth_nm", s.sweep_bandwidth_nm);
    r.read("sweep", "length_km", s.sweep_length_km);
    r.read("sweep", "length_seeds", s.length_seeds);

    r.read("drift", "duration_hours", s.drift_duration_hours);
    r.read("drift", "step_hours", s.drift_step_hours);
    r.read("drift", "probe_lambdas_nm", s.probe_lambdas_nm);

    auto& c = s.calibration;
    r.read("calibrate", "stages", c.stages);
    r.read("calibrate", "baseline_qber", c.baseline_qber);
    r.read("calibrate", "baseline_raw_key_bps", c.baseline_raw_key_bps);
    r.read("calibrate", "anchor2_ob_db", c.anchor2_ob_db);
    r.read("calibrate", "anchor2_rate_hz", c.anchor2_rate_hz);
    r.read("calibrate", "anchor2_qber", c.anchor2_qber);
    r.read("calibrate", "anchor2_raw_key_bps", c.anchor2_raw_key_bps);
    r.read("calibrate", "bandwidth_nm", c.bandwidth_nm);
    r.read("calibrate", "bandwidth_qber", c.bandwidth_qber);
    r.read("calibrate", "length_km", c.length_km);
    r.read("calibrate", "length_qber", c.length_qber);
    r.read("calibrate", "length_reference_qber", c.length_reference_qber);
    r.read("calibrate", "length_rate_hz", c.length_rate_hz);
    r.read("calibrate", "length_bandwidth_nm", c.length_bandwidth_nm);
    r.read("calibrate", "length_seeds", c.length_seeds);

    r.check_unknown();
    try {
        s.validate();
    } catch (const ConfigError& e) {
        r.problems.insert(r.problems.end(), e.problems().begin(), e.problems().end());
    }
    if (!r.problems.empty()) throw ConfigError(std::move(r.problems));
    return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open scenario file " + path.string());
    return parse_scenario(in, path.parent_path());
}

void write_scenario(std::ostream& out, const Scenario& s) {
    out << "[source]\n";
    if (!s.source_preset.empty()) {
        out << "preset = " << s.source_preset << "\n";
    } else if (!s.spectrum_csv.empty()) {
        out << "spectrum_csv = " << s.spectrum_csv << "\n";
    } else {
        out << "shape = " << to_string(s.spectrum.shape) << "\n";
        out << "center_nm = " << fmt(s.spectrum.center_nm) << "\n";
        out << "width_nm = " << fmt(s.spectrum.width_nm) << "\n";
    }
    out << "slices = " << s.slices << "\n\n";

    const auto& e = s.encoder;
    out << "[encoder]\n";
    out << "architecture = " << to_string(e.architecture) << "\n";
    out << "basis_set = " << to_string(e.basis_set) << "\n";
    out << "extinction_db = " << fmt(e.extinction_db) << "\n";
    out << "tx_dgd_ps = " << fmt(e.tx_dgd_ps) << "\n";
    out << "carve_duty = " << fmt(e.carve_duty) << "\n";
    out << "drive_bandwidth_hz = " << (e.drive_bandwidth_hz ? fmt(*e.drive_bandwidth_hz) : "none") << "\n\n";

    out << "[fiber]\n";
    out << "length_km = " << fmt(s.length_km) << "\n";
    out << "pmd_ps_per_sqrtkm = " << fmt(s.pmd_ps_per_sqrtkm) << "\n";
    out << "segments = " << s.segments << "\n";
    out << "atten_db_per_km = " << fmt(s.atten_db_per_km) << "\n";
    out << "drift_rad_per_sqrth = " << fmt(s.drift_rad_per_sqrth) << "\n";
    out << "seed_index = " << s.fiber_seed_index << "\n\n";

    for (int c = 0; c < 2; ++c) {
        const auto& d = s.detectors[static_cast<std::size_t>(c)];
        out << "[detector" << c << "]\n";
        out << "efficiency = " << fmt(d.efficiency) << "\n";
        out << "dark_rate_cps = " << fmt(d.dark_rate_cps) << "\n";
        out << "dead_time_s = " << fmt(d.dead_time_s) << "\n";
        out << "jitter_s = " << fmt(d.jitter_s) << "\n\n";
    }
    out << "[detectors]\n";
    out << "dark_acceptance = " << fmt(s.dark_acceptance) << "\n\n";

    out << "[protocol]\n";
    out << "rate_hz = " << fmt(s.rate_hz) << "\n";
    out << "mu = " << fmt(s.mu) << "\n";
    out << "window_fraction = " << fmt(s.window_fraction) << "\n";
    out << "window_offset_s = " << fmt(s.window_offset_s) << "\n";
    out << "prbs_order = " << s.prbs_order << "\n";
    out << "frame_length = " << s.frame_length << "\n";
    out << "double_click = " << to_string(s.double_click) << "\n";
    out << "sync = " << to_string(s.sync) << "\n";
    out << "batches = " << s.batches << "\n\n";

    out << "[link]\n";
    out << "optical_budget_db = " << fmt(s.optical_budget_db) << "\n\n";

    out << "[run]\n";
    out << "symbols = " << s.symbols << "\n";
    out << "master_seed = " << s.master_seed << "\n";
    out << "noise_floor = " << (s.noise_floor ? "true" : "false") << "\n\n";

    out << "[sweep]\n";
    out << "ob_db = " << join(s.sweep_ob_db) << "\n";
    out << "bandwidth_nm = " << join(s.sweep_bandwidth_nm) << "\n";
    out << "length_km = " << join(s.sweep_length_km) << "\n";
    out << "length_seeds = " << s.length_seeds << "\n\n";

    out << "[drift]\n";
    out << "duration_hours = " << fmt(s.drift_duration_hours) << "\n";
    out << "step_hours = " << fmt(s.drift_step_hours) << "\n";
    out << "probe_lambdas_nm = " << join(s.probe_lambdas_nm) << "\n\n";

    const auto& c = s.calibration;
    out << "[calibrate]\n";
    out << "stages = " << join(c.stages) << "\n";
    out << "baseline_qber = " << fmt(c.baseline_qber) << "\n";
    out << "baseline_raw_key_bps = " << fmt(c.baseline_raw_key_bps) << "\n";
    out << "anchor2_ob_db = " << (c.anchor2_ob_db ? fmt(*c.anchor2_ob_db) : "none") << "\n";
    out << "anchor2_rate_hz = " << (c.anchor2_rate_hz ? fmt(*c.anchor2_rate_hz) : "none") << "\n";
    out << "anchor2_qber = " << fmt(c.anchor2_qber) << "\n";
    out << "anchor2_raw_key_bps = " << (c.anchor2_raw_key_bps ? fmt(*c.anchor2_raw_key_bps) : "none") << "\n";
    out << "bandwidth_nm = " << fmt(c.bandwidth_nm) << "\n";
    out << "bandwidth_qber = " << fmt(c.bandwidth_qber) << "\n";
    out << "length_km = " << fmt(c.length_km) << "\n";
    out << "length_qber = " << fmt(c.length_qber) << "\n";
    out << "length_reference_qber = " << (c.length_reference_qber ? fmt(*c.length_reference_qber) : "none")
        << "\n";
    out << "length_rate_hz = " << (c.length_rate_hz ? fmt(*c.length_rate_hz) : "none") << "\n";
    out << "length_bandwidth_nm = " << (c.length_bandwidth_nm ? fmt(*c.length_bandwidth_nm) : "none") << "\n";
    out << "length_seeds = " << c.length_seeds << "\n";
}

std::string scenario_text(const Scenario& s) {
    std::ostringstream os;
    write_scenario(os, s);
    return os.str();
}

std::uint64_t scenario_hash(const Scenario& s) { return fnv1a64(scenario_text(s)); }

}  // namespace incoqkd
