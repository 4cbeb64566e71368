// Python bindings: scenarios, single runs, sweeps, calibration and the
// closed-form helpers.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "incoqkd/error.hpp"
#include "incoqkd/harness.hpp"

namespace py = pybind11;
using namespace incoqkd;

namespace {

py::dict report_dict(const QberReport& r) {
    py::dict d;
    d["qber"] = r.qber;
    d["qber_3sigma"] = r.qber_3sigma;
    d["raw_key_bps"] = r.raw_key_bps;
    d["sifted_count"] = r.sifted_count;
    d["error_count"] = r.error_count;
    d["duration_s"] = r.duration_s;
    d["double_click_discards"] = r.double_click_discards;
    d["dop_mean"] = r.dop_mean;
    py::list ch;
    py::list ba;
    for (int i = 0; i < 2; ++i) {
        ch.append(py::make_tuple(r.per_channel[i].sifted, r.per_channel[i].errors));
        ba.append(py::make_tuple(r.per_basis[i].sifted, r.per_basis[i].errors));
    }
    d["per_channel"] = ch;
    d["per_basis"] = ba;
    return d;
}

py::dict sweep_dict(const SweepResult& r) {
    py::dict d;
    d["variable"] = r.variable;
    d["values"] = r.values;
    py::list reports;
    for (const auto& x : r.reports) reports.append(report_dict(x));
    d["reports"] = reports;
    d["seed"] = r.seed;
    d["scenario_hash"] = r.scenario_hash;
    d["version"] = r.version;
    return d;
}

Scenario from_text(const std::string& text, const std::string& base_dir) {
    std::istringstream in(text);
    return parse_scenario(in, base_dir);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Broadband-source polarization BB84 link simulator";
    m.attr("__version__") = std::string(kToolVersion);

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<DomainError>(m, "DomainError", base.ptr());
    py::register_exception<SyncError>(m, "SyncError", base.ptr());
    py::register_exception<IoError>(m, "IoError", base.ptr());

    py::class_<Scenario>(m, "Scenario")
        .def(py::init<>())
        .def_static("load", [](const std::filesystem::path& p) { return load_scenario(p); }, py::arg("path"))
        .def_static("from_text", &from_text, py::arg("text"), py::arg("base_dir") = "")
        .def("text", [](const Scenario& s) { return scenario_text(s); })
        .def("hash", [](const Scenario& s) { return scenario_hash(s); })
        .def("validate", &Scenario::validate)
        .def("with_bandwidth", &with_bandwidth, py::arg("width_nm"))
        .def_readwrite("length_km", &Scenario::length_km)
        .def_readwrite("pmd_ps_per_sqrtkm", &Scenario::pmd_ps_per_sqrtkm)
        .def_readwrite("fiber_seed_index", &Scenario::fiber_seed_index)
        .def_readwrite("dark_acceptance", &Scenario::dark_acceptance)
        .def_readwrite("rate_hz", &Scenario::rate_hz)
        .def_readwrite("mu", &Scenario::mu)
        .def_readwrite("window_fraction", &Scenario::window_fraction)
        .def_readwrite("optical_budget_db", &Scenario::optical_budget_db)
        .def_readwrite("symbols", &Scenario::symbols)
        .def_readwrite("master_seed", &Scenario::master_seed)
        .def_property(
            "extinction_db", [](const Scenario& s) { return s.encoder.extinction_db; },
            [](Scenario& s, double v) { s.encoder.extinction_db = v; })
        .def_property(
            "tx_dgd_ps", [](const Scenario& s) { return s.encoder.tx_dgd_ps; },
            [](Scenario& s, double v) { s.encoder.tx_dgd_ps = v; })
        .def("__repr__", [](const Scenario& s) {
            char buf[128];
            std::snprintf(buf, sizeof buf, "<Scenario %016llx>", static_cast<unsigned long long>(scenario_hash(s)));
            return std::string(buf);
        });

    m.def(
        "run_single",
        [](const Scenario& s, unsigned threads) {
            RunOptions opt;
            opt.threads = threads;
            RunResult r;
            {
                py::gil_scoped_release release;
                r = run_single(s, opt);
            }
            auto d = report_dict(r.report);
            d["true_offset"] = r.true_offset;
            if (r.sync) d["sync_shift"] = r.sync->shift;
            return d;
        },
        py::arg("scenario"), py::arg("threads") = 1);

    m.def(
        "expected_rates",
        [](const Scenario& s) {
            const auto r = expected_rates(s);
            py::dict d;
            d["qber"] = r.qber;
            d["raw_key_bps"] = r.raw_key_bps;
            d["sifted_per_symbol"] = r.sifted_per_symbol;
            d["dop_mean"] = r.dop_mean;
            return d;
        },
        py::arg("scenario"));

    m.def(
        "sweep_ob",
        [](const Scenario& s, const std::vector<double>& v, unsigned threads) {
            SweepResult r;
            {
                py::gil_scoped_release release;
                r = sweep_ob(s, v, threads);
            }
            return sweep_dict(r);
        },
        py::arg("scenario"), py::arg("ob_db"), py::arg("threads") = 1);
    m.def(
        "sweep_bandwidth",
        [](const Scenario& s, const std::vector<double>& v, unsigned threads) {
            SweepResult r;
            {
                py::gil_scoped_release release;
                r = sweep_bandwidth(s, v, threads);
            }
            return sweep_dict(r);
        },
        py::arg("scenario"), py::arg("widths_nm"), py::arg("threads") = 1);
    m.def(
        "sweep_length",
        [](const Scenario& s, const std::vector<double>& v, int seeds, unsigned threads) {
            SweepResult r;
            {
                py::gil_scoped_release release;
                r = sweep_length(s, v, seeds, threads);
            }
            return sweep_dict(r);
        },
        py::arg("scenario"), py::arg("lengths_km"), py::arg("seeds") = 10, py::arg("threads") = 1);

    m.def(
        "calibrate",
        [](const Scenario& s) {
            auto r = calibrate(s);
            return py::make_tuple(r.scenario, r.log);
        },
        py::arg("scenario"), "Returns (pinned scenario, log lines).");

    m.def(
        "drift_trace",
        [](const Scenario& s) {
            py::list out;
            for (const auto& x : drift_trace(s)) {
                out.append(py::make_tuple(x.time_hours, x.lambda_nm, x.s1, x.s2, x.s3));
            }
            return out;
        },
        py::arg("scenario"), "List of (time_hours, lambda_nm, s1, s2, s3).");

    m.def("launch_power_dbm", &launch_power_dbm, py::arg("mu"), py::arg("rate_hz"), py::arg("lambda_nm"));
    m.def("headroom_db", &headroom_db, py::arg("source_dbm"), py::arg("mu"), py::arg("rate_hz"),
          py::arg("lambda_nm"));
    m.def("binary_entropy", &binary_entropy, py::arg("q"));
    m.def("secure_fraction", &secure_fraction, py::arg("q"));
    m.def("qber_threshold", &qber_threshold);
    m.def(
        "degree_of_polarization",
        [](double s0, double s1, double s2, double s3) { return degree_of_polarization({s0, s1, s2, s3}); },
        py::arg("s0"), py::arg("s1"), py::arg("s2"), py::arg("s3"));
    m.def("spearman", &spearman, py::arg("x"), py::arg("y"));
}
