#pragma once

// Scenario files, the end-to-end link pipeline, sweeps, the analytic rate
// model behind calibration, and CSV export.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "incoqkd/encoder.hpp"
#include "incoqkd/fiber.hpp"
#include "incoqkd/protocol.hpp"
#include "incoqkd/receiver.hpp"
#include "incoqkd/source.hpp"

namespace incoqkd {

inline constexpr std::string_view kToolVersion = "incoqkd 0.1.0";

enum class SyncMode { prbs, known };

struct CalibrationTargets {
    std::vector<std::string> stages;  ///< any of baseline, bandwidth, length (in order)

    // baseline: extinction and efficiency from QBER and raw key at the scenario's own settings
    double baseline_qber = 0.0;
    double baseline_raw_key_bps = 0.0;
    // optional second anchor: effective dark acceptance from the QBER at
    // another OB and/or symbol rate, or at the unknown extra loss that gives
    // anchor2_raw_key_bps
    std::optional<double> anchor2_ob_db;
    std::optional<double> anchor2_rate_hz;
    std::optional<double> anchor2_raw_key_bps;
    double anchor2_qber = 0.0;

    // bandwidth: transmitter DGD from one back-to-back bandwidth point
    double bandwidth_nm = 0.0;
    double bandwidth_qber = 0.0;

    // length: PMD coefficient from one fiber point
    double length_km = 0.0;
    double length_qber = 0.0;
    /// When set, only the penalty length_qber - reference is fitted, on top
    /// of the model's own back-to-back QBER at the same settings.
    std::optional<double> length_reference_qber;
    std::optional<double> length_rate_hz;
    std::optional<double> length_bandwidth_nm;
    int length_seeds = 10;
};

struct Scenario {
    // source
    std::string source_preset;  ///< empty when the spectrum is given explicitly
    std::string spectrum_csv;   ///< tabulated spectrum file, relative to the scenario file
    SourceSpectrum spectrum = SourceSpectrum::preset("ase-otf");
    int slices = 128;

    EncoderConfig encoder;

    // fiber
    double length_km = 0.0;
    double pmd_ps_per_sqrtkm = 0.05;
    int segments = 0;
    double atten_db_per_km = 0.2;
    double drift_rad_per_sqrth = 0.1;
    std::uint64_t fiber_seed_index = 0;

    std::array<DetectorParams, 2> detectors{};
    /// Multiplies both dark rates (effective dark acceptance, 1 = nominal).
    double dark_acceptance = 1.0;

    // protocol
    double rate_hz = 1e9;
    double mu = 0.1;
    double window_fraction = 0.5;
    double window_offset_s = 0.0;
    int prbs_order = 17;
    std::uint64_t frame_length = 100000;
    DoubleClickPolicy double_click = DoubleClickPolicy::discard;
    SyncMode sync = SyncMode::prbs;
    int batches = 10;

    double optical_budget_db = 0.0;

    std::uint64_t symbols = 10'000'000;
    std::uint64_t master_seed = 1;
    bool noise_floor = false;  ///< allows mu = 0 and uses the known frame offset

    // sweeps
    std::vector<double> sweep_ob_db;
    std::vector<double> sweep_bandwidth_nm;
    std::vector<double> sweep_length_km;
    int length_seeds = 10;

    // drift trace
    double drift_duration_hours = 5.0;
    double drift_step_hours = 1.0 / 12.0;
    std::vector<double> probe_lambdas_nm{1570.0, 1585.0};

    CalibrationTargets calibration;

    /// Throws ConfigError listing every violated field.
    void validate() const;
};

/// Parse an INI scenario. Unknown keys, malformed values and range
/// violations are all reported together in one ConfigError.
Scenario parse_scenario(std::istream& in, const std::filesystem::path& base_dir = {});
Scenario load_scenario(const std::filesystem::path& path);
/// Canonical INI form; parse_scenario(write_scenario(s)) reproduces s.
void write_scenario(std::ostream& out, const Scenario& s);
std::string scenario_text(const Scenario& s);
/// FNV-1a of the canonical text.
std::uint64_t scenario_hash(const Scenario& s);

/// Everything upstream of the detectors for one scenario.
struct LinkModel {
    SymbolFrame frame;
    FiberModel fiber;
    /// arms[b][j]: detector intensities for frame position j under Bob basis b.
    std::array<std::vector<ArmIntensities>, 2> arms;
    PoincareRotation compensation;
    double dop_mean = 1.0;
    std::uint64_t true_offset = 0;
};

LinkModel build_link(const Scenario& s);

struct RunOptions {
    unsigned threads = 1;
    bool keep_tags = false;
};

struct RunResult {
    QberReport report;
    std::optional<SyncResult> sync;
    std::uint64_t true_offset = 0;
    std::array<std::vector<TimeTag>, 2> tags;  ///< per Bob basis, when keep_tags
    SymbolFrame frame;
};

/// source -> encoder -> fiber -> receiver -> protocol. Bob measures basis 0
/// for the first half of the symbols and basis 1 for the second half.
RunResult run_single(const Scenario& s, const RunOptions& opt = {});

/// Post-processing of recorded tags (one tag list per Bob basis).
QberReport analyze_tags(const Scenario& s, const SymbolFrame& frame,
                        const std::array<std::vector<TimeTag>, 2>& tags, double duration_s,
                        std::optional<std::uint64_t> known_shift = std::nullopt,
                        std::optional<SyncResult>* sync_out = nullptr);

/// Closed-form expectation of the Monte Carlo: per-symbol click
/// probabilities, window acceptance, sifting and a non-paralyzable dead-time
/// live fraction. Double clicks are neglected.
struct ExpectedRates {
    double qber = 0.0;
    double raw_key_bps = 0.0;
    double sifted_per_symbol = 0.0;
    double dop_mean = 1.0;
};

ExpectedRates expected_rates(const Scenario& s, const LinkModel& link);
ExpectedRates expected_rates(const Scenario& s);

struct SweepResult {
    std::string variable;
    std::vector<double> values;
    std::vector<QberReport> reports;
    std::uint64_t seed = 0;
    std::uint64_t scenario_hash = 0;
    std::string version{kToolVersion};
};

/// Sweep points run concurrently on `threads` workers; results do not depend on it.
SweepResult sweep_ob(const Scenario& s, const std::vector<double>& ob_db, unsigned threads = 1);
SweepResult sweep_bandwidth(const Scenario& s, const std::vector<double>& widths_nm, unsigned threads = 1);
/// Each length pools `seeds` fiber realizations; the spread across seeds
/// enters qber_3sigma.
SweepResult sweep_length(const Scenario& s, const std::vector<double>& lengths_km, int seeds,
                         unsigned threads = 1);

/// Same scenario with a different source width (shape and center kept).
Scenario with_bandwidth(const Scenario& s, double width_nm);

std::vector<TrajectorySample> drift_trace(const Scenario& s);

struct BudgetRow {
    double rate_hz = 0.0;
    double launch_dbm = 0.0;
    double source_dbm = 0.0;
    double headroom_db = 0.0;
};

std::vector<BudgetRow> budget(double mu, const std::vector<double>& rates_hz, double lambda_nm,
                              double source_dbm);

struct CalibrationResult {
    Scenario scenario;
    std::vector<std::string> log;
};

/// Fits the stages listed in s.calibration against the analytic model.
CalibrationResult calibrate(const Scenario& s);

std::vector<std::string> provenance_lines(const Scenario& s, std::string_view extra = {});
void write_sweep_csv(std::ostream& out, const SweepResult& r);
void write_budget_csv(std::ostream& out, const std::vector<BudgetRow>& rows, double mu, double lambda_nm);

/// Spearman rank correlation (average ranks for ties).
double spearman(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace incoqkd
