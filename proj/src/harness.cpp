#include "incoqkd/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <numeric>
#include <ostream>
#include <thread>

#include "incoqkd/error.hpp"
#include "incoqkd/random.hpp"

namespace incoqkd {

namespace {

constexpr std::size_t kStates = 6;

std::size_t idx(Bb84State s) { return static_cast<std::size_t>(s); }

// The two states Bob aligns on, with their target axes.
std::pair<Bb84State, Bb84State> reference_states(BasisSet set) {
    return set == BasisSet::HV_DA ? std::pair{Bb84State::H, Bb84State::D}
                                  : std::pair{Bb84State::D, Bb84State::R};
}

template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
    threads = std::max(1U, threads);
    if (threads == 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr err;
    std::mutex m;
    const unsigned w = static_cast<unsigned>(std::min<std::size_t>(threads, n));
    for (unsigned t = 0; t < w; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(m);
                    if (!err) err = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

}  // namespace

namespace {

// Everything between the source and the analyzer that does not depend on the
// symbol sequence: fiber realization, Bob's alignment, and the received
// detector intensities per (previous, current) state pair.
class Optics {
public:
    explicit Optics(const Scenario& s)
        : s_(s),
          base_(slice_spectrum(s.spectrum, s.slices, s.mu)),
          fiber_(build_fiber(s.length_km, s.pmd_ps_per_sqrtkm, s.segments, s.atten_db_per_km,
                             s.drift_rad_per_sqrth, substream_seed(s.master_seed, "fiber", s.fiber_seed_index),
                             base_.center_lambda_nm())),
          ob_(std::pow(10.0, -s.optical_budget_db / 10.0)),
          transitions_(s.encoder.architecture == Architecture::dualpol_iq &&
                       s.encoder.drive_bandwidth_hz.has_value()) {
        // Manual alignment on two reference states.
        const auto [ra, rb] = reference_states(s.encoder.basis_set);
        const StokesVector ma = ensemble_mean(received(ra, ra));
        const StokesVector mb = ensemble_mean(received(rb, rb));
        try {
            compensation_ = align_frame(ma, state_axis(ra), mb, state_axis(rb));
        } catch (const DomainError&) {
            // References fully depolarized: fall back to undoing the fiber at the band center.
            compensation_ = fiber_.rotation_at(base_.center_lambda_nm()).inverse_rotation();
        }
        double dop = 0.0;
        int n = 0;
        for (auto st : kAllStates) {
            if (!in_basis_set(st, s.encoder.basis_set)) continue;
            const auto m = ensemble_mean(received(st, st));
            dop += m.s0 > 0.0 ? degree_of_polarization(m) : 0.0;
            ++n;
        }
        dop_mean_ = dop / n;
    }

    bool transitions() const { return transitions_; }
    const FiberModel& fiber() const { return fiber_; }
    const PoincareRotation& compensation() const { return compensation_; }
    double dop_mean() const { return dop_mean_; }

    const ArmIntensities& arms(int bob_basis, Bb84State prev, Bb84State cur) {
        if (!transitions_) prev = cur;
        auto& slot = arms_[static_cast<std::size_t>(bob_basis)][idx(prev)][idx(cur)];
        if (!slot) {
            AnalyzerConfig an;
            an.axis0 = state_axis(encode_state(bob_basis, 0, s_.encoder.basis_set));
            an.compensation = compensation_;
            slot = arm_intensities(received(prev, cur), an);
        }
        return *slot;
    }

private:
    const SliceEnsemble& received(Bb84State prev, Bb84State cur) {
        auto& slot = rx_[idx(prev)][idx(cur)];
        if (!slot) {
            auto prepared = transitions_ ? prepare_slices(prev, cur, base_, s_.encoder, s_.rate_hz)
                                         : prepare_slices(cur, base_, s_.encoder);
            auto out = propagate(prepared, fiber_);
            out.mu *= ob_;
            slot = std::move(out);
        }
        return *slot;
    }

    const Scenario& s_;
    SliceEnsemble base_;
    FiberModel fiber_;
    double ob_;
    bool transitions_;
    PoincareRotation compensation_;
    double dop_mean_ = 1.0;
    std::array<std::array<std::optional<SliceEnsemble>, kStates>, kStates> rx_;
    std::array<std::array<std::array<std::optional<ArmIntensities>, kStates>, kStates>, 2> arms_;
};

SymbolFrame make_frame(const Scenario& s) {
    return prbs_frame(s.prbs_order, static_cast<std::size_t>(s.frame_length), s.rate_hz, s.mu,
                      substream_seed(s.master_seed, "source"), 0);
}

Bb84State state_of(const Symbol& sym, BasisSet set) { return encode_state(sym.basis, sym.bit, set); }

using PairCounts = std::array<std::array<double, kStates>, kStates>;

// How often each (previous, current) state pair occurs in the frame. Cached:
// calibration evaluates the rate model many times for one frame.
PairCounts frame_pair_counts(const Scenario& s) {
    struct Key {
        int order;
        std::uint64_t length;
        std::uint64_t seed;
        BasisSet set;
        bool operator==(const Key&) const = default;
    };
    static std::mutex m;
    static std::optional<std::pair<Key, PairCounts>> cache;
    const Key key{s.prbs_order, s.frame_length, s.master_seed, s.encoder.basis_set};
    {
        std::lock_guard lock(m);
        if (cache && cache->first == key) return cache->second;
    }
    const auto frame = make_frame(s);
    PairCounts counts{};
    const std::size_t len = frame.size();
    for (std::size_t j = 0; j < len; ++j) {
        const auto prev = state_of(frame.symbols[(j + len - 1) % len], s.encoder.basis_set);
        const auto cur = state_of(frame.symbols[j], s.encoder.basis_set);
        counts[idx(prev)][idx(cur)] += 1.0;
    }
    std::lock_guard lock(m);
    cache = std::pair{key, counts};
    return counts;
}

}  // namespace

LinkModel build_link(const Scenario& s) {
    s.validate();
    Optics optics(s);
    LinkModel link;
    link.frame = make_frame(s);
    link.fiber = optics.fiber();
    link.compensation = optics.compensation();
    link.dop_mean = optics.dop_mean();
    {
        Rng rng = Rng::substream(s.master_seed, "offset", s.fiber_seed_index);
        link.true_offset = rng() % s.frame_length;
    }
    const std::size_t len = link.frame.size();
    for (int b = 0; b < 2; ++b) {
        auto& arms = link.arms[static_cast<std::size_t>(b)];
        arms.resize(len);
        for (std::size_t j = 0; j < len; ++j) {
            const auto prev = state_of(link.frame.symbols[(j + len - 1) % len], s.encoder.basis_set);
            const auto cur = state_of(link.frame.symbols[j], s.encoder.basis_set);
            arms[j] = optics.arms(b, prev, cur);
        }
    }
    return link;
}

namespace {

std::array<DetectorParams, 2> effective_detectors(const Scenario& s) {
    auto d = s.detectors;
    for (auto& x : d) x.dark_rate_cps *= s.dark_acceptance;
    return d;
}

// Fraction of signal clicks inside the detection window: emission uniform over
// the carved pulse, Gaussian jitter, window centred on the pulse plus offset.
// All times in symbol periods; neighbouring periods' windows are included.
double signal_window_acceptance(double duty, double window, double offset, double sigma) {
    if (window >= 1.0) return 1.0;
    if (sigma <= 0.0) {
        double acc = 0.0;
        for (int k = -1; k <= 1; ++k) {
            const double a = std::max(offset - 0.5 * window + k, -0.5 * duty);
            const double b = std::min(offset + 0.5 * window + k, 0.5 * duty);
            acc += std::max(0.0, b - a);
        }
        return acc / duty;
    }
    auto phi = [](double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); };
    auto g = [&](double x) { return x * phi(x) + std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); };
    // integral over t in [-duty/2, duty/2] of Phi((c - t) / sigma)
    auto cdf_int = [&](double c) { return sigma * (g((c + 0.5 * duty) / sigma) - g((c - 0.5 * duty) / sigma)); };
    double acc = 0.0;
    for (int k = -2; k <= 2; ++k) {
        acc += cdf_int(offset + 0.5 * window + k) - cdf_int(offset - 0.5 * window + k);
    }
    return std::clamp(acc / duty, 0.0, 1.0);
}

std::array<std::uint64_t, 2> acquisition_counts(const Scenario& s) {
    return {s.symbols / 2, s.symbols - s.symbols / 2};
}

}  // namespace

QberReport analyze_tags(const Scenario& s, const SymbolFrame& frame,
                        const std::array<std::vector<TimeTag>, 2>& tags, double duration_s,
                        std::optional<std::uint64_t> known_shift, std::optional<SyncResult>* sync_out) {
    RecordSet all;
    Rng dc_rng = Rng::substream(s.master_seed, "double_click", s.fiber_seed_index);
    for (int b = 0; b < 2; ++b) {
        const auto windowed = temporal_filter(tags[static_cast<std::size_t>(b)], s.rate_hz,
                                              s.window_fraction, s.window_offset_s);
        auto rs = make_records(windowed, b, s.double_click, &dc_rng);
        all.records.insert(all.records.end(), rs.records.begin(), rs.records.end());
        all.double_clicks += rs.double_clicks;
    }
    std::uint64_t shift = 0;
    if (known_shift) {
        shift = *known_shift;
    } else {
        const auto sr = frame_synchronize(all.records, frame);
        shift = sr.shift;
        if (sync_out) *sync_out = sr;
    }
    const auto sifted = sift(frame, all.records, shift);
    if (sifted.bits.empty()) throw Error("no sifted bits: increase run.symbols or reduce the optical budget");
    auto report = compute_qber(sifted.bits, duration_s, s.batches);
    report.double_click_discards = all.double_clicks + sifted.double_click_discards;
    return report;
}

RunResult run_single(const Scenario& s, const RunOptions& opt) {
    const auto link = build_link(s);
    const auto det = effective_detectors(s);
    const auto counts = acquisition_counts(s);

    RunResult out;
    out.true_offset = link.true_offset;
    out.frame = link.frame;
    std::array<std::vector<TimeTag>, 2> tags;
    std::uint64_t first = 0;
    for (int b = 0; b < 2; ++b) {
        Transmission tx;
        tx.rate_hz = s.rate_hz;
        tx.carve_duty = s.encoder.carve_duty;
        tx.first_symbol = first;
        tx.count = counts[static_cast<std::size_t>(b)];
        tx.frame_offset = link.true_offset;
        first += tx.count;
        tags[static_cast<std::size_t>(b)] =
            detect_frame(link.arms[static_cast<std::size_t>(b)], tx, det[0], det[1],
                         substream_seed(s.master_seed, "acquisition", 2 * s.fiber_seed_index + b),
                         opt.threads);
    }
    const double duration = static_cast<double>(s.symbols) / s.rate_hz;
    std::optional<std::uint64_t> known;
    if (s.sync == SyncMode::known || s.noise_floor) known = link.true_offset;
    out.report = analyze_tags(s, link.frame, tags, duration, known, &out.sync);
    out.report.dop_mean = link.dop_mean;
    if (opt.keep_tags) out.tags = std::move(tags);
    return out;
}

namespace {

// A group of frame positions sharing Alice's symbol and the detector intensities
// under both Bob bases.
struct Pattern {
    double weight = 0.0;
    int basis = 0;
    int bit = 0;
    std::array<ArmIntensities, 2> arms{};
};

ExpectedRates rates_from_patterns(const Scenario& s, const std::vector<Pattern>& patterns, double dop_mean) {
    const auto det = effective_detectors(s);
    const double period = 1.0 / s.rate_hz;
    const double w_dark = s.window_fraction;
    std::array<double, 2> w_sig{};
    std::array<double, 2> a_dark{};
    for (int c = 0; c < 2; ++c) {
        const auto& dp = det[static_cast<std::size_t>(c)];
        w_sig[c] = signal_window_acceptance(s.encoder.carve_duty, s.window_fraction, s.window_offset_s * s.rate_hz,
                                            dp.jitter_s * s.rate_hz);
        a_dark[c] = dp.dark_rate_cps * period;
    }
    double total = 0.0;
    for (const auto& p : patterns) total += p.weight;

    double sifted = 0.0;
    double errors = 0.0;
    for (int b = 0; b < 2; ++b) {
        std::array<double, 2> live{};
        for (int c = 0; c < 2; ++c) {
            const auto& dp = det[static_cast<std::size_t>(c)];
            double p_mean = 0.0;
            for (const auto& p : patterns) {
                const auto& a = p.arms[static_cast<std::size_t>(b)];
                p_mean += p.weight * -std::expm1(-(dp.efficiency * (c == 0 ? a.mu0 : a.mu1) + a_dark[c]));
            }
            p_mean /= total;
            live[c] = 1.0 / (1.0 + p_mean * s.rate_hz * dp.dead_time_s);
        }
        for (const auto& p : patterns) {
            if (p.basis != b) continue;
            const auto& a = p.arms[static_cast<std::size_t>(b)];
            for (int c = 0; c < 2; ++c) {
                const auto& dp = det[static_cast<std::size_t>(c)];
                const double a_sig = dp.efficiency * (c == 0 ? a.mu0 : a.mu1);
                const double a_tot = a_sig + a_dark[c];
                if (a_tot <= 0.0) continue;
                const double acc = p.weight * -std::expm1(-a_tot) * (a_sig * w_sig[c] + a_dark[c] * w_dark) /
                                   a_tot * live[c];
                sifted += acc;
                if (p.bit != c) errors += acc;
            }
        }
    }
    // Each acquisition covers half the symbols; average over frame positions.
    ExpectedRates r;
    r.sifted_per_symbol = 0.5 * sifted / total;
    r.qber = sifted > 0.0 ? errors / sifted : 0.5;
    r.raw_key_bps = r.sifted_per_symbol * s.rate_hz;
    r.dop_mean = dop_mean;
    return r;
}

}  // namespace

ExpectedRates expected_rates(const Scenario& s, const LinkModel& link) {
    std::vector<Pattern> patterns;
    patterns.reserve(link.frame.size());
    for (std::size_t j = 0; j < link.frame.size(); ++j) {
        const auto& sym = link.frame.symbols[j];
        patterns.push_back({1.0, sym.basis, sym.bit, {link.arms[0][j], link.arms[1][j]}});
    }
    return rates_from_patterns(s, patterns, link.dop_mean);
}

ExpectedRates expected_rates(const Scenario& s) {
    s.validate();
    Optics optics(s);
    const auto counts = frame_pair_counts(s);
    std::vector<Pattern> patterns;
    for (auto prev : kAllStates) {
        for (auto cur : kAllStates) {
            const double w = counts[idx(prev)][idx(cur)];
            if (w == 0.0) continue;
            const auto sym = decode_state(cur, s.encoder.basis_set);
            patterns.push_back({w, sym.basis, sym.bit, {optics.arms(0, prev, cur), optics.arms(1, prev, cur)}});
        }
    }
    return rates_from_patterns(s, patterns, optics.dop_mean());
}

Scenario with_bandwidth(const Scenario& s, double width_nm) {
    Scenario out = s;
    if (s.spectrum.shape == SpectrumShape::tabulated) {
        throw DomainError("bandwidth sweeps need a rectangular or gaussian spectrum");
    }
    out.spectrum = s.spectrum.shape == SpectrumShape::gaussian
                       ? SourceSpectrum::gaussian(s.spectrum.center_nm, width_nm)
                       : SourceSpectrum::rectangular(s.spectrum.center_nm, width_nm);
    out.source_preset.clear();
    out.spectrum_csv.clear();
    return out;
}

namespace {

template <class Make>
SweepResult run_sweep(const Scenario& s, std::string variable, const std::vector<double>& values,
                      unsigned threads, Make make) {
    s.validate();
    SweepResult r;
    r.variable = std::move(variable);
    r.values = values;
    r.seed = s.master_seed;
    r.scenario_hash = scenario_hash(s);
    r.reports.resize(values.size());
    parallel_for(values.size(), threads, [&](std::size_t i) {
        try {
            r.reports[i] = make(values[i]);
        } catch (const SyncError& e) {
            char buf[96];
            std::snprintf(buf, sizeof buf, "sweep point %s = %g: ", r.variable.c_str(), values[i]);
            throw SyncError(buf + std::string(e.what()));
        }
    });
    return r;
}

}  // namespace

SweepResult sweep_ob(const Scenario& s, const std::vector<double>& ob_db, unsigned threads) {
    return run_sweep(s, "ob_db", ob_db, threads, [&](double ob) {
        Scenario p = s;
        p.optical_budget_db = ob;
        return run_single(p).report;
    });
}

SweepResult sweep_bandwidth(const Scenario& s, const std::vector<double>& widths_nm, unsigned threads) {
    if (s.encoder.architecture != Architecture::dualpol_iq) {
        throw ConfigError("sweep-bandwidth needs encoder.architecture = dualpol-iq");
    }
    return run_sweep(s, "bandwidth_nm", widths_nm, threads,
                     [&](double w) { return run_single(with_bandwidth(s, w)).report; });
}

SweepResult sweep_length(const Scenario& s, const std::vector<double>& lengths_km, int seeds,
                         unsigned threads) {
    if (seeds < 1) throw ConfigError("sweep-length needs at least one seed");
    return run_sweep(s, "length_km", lengths_km, threads, [&](double len) {
        QberReport pooled;
        std::vector<double> q;
        double dop = 0.0;
        for (int k = 0; k < seeds; ++k) {
            Scenario p = s;
            p.length_km = len;
            p.fiber_seed_index = s.fiber_seed_index + static_cast<std::uint64_t>(k);
            const auto r = run_single(p).report;
            q.push_back(r.qber);
            dop += r.dop_mean;
            pooled.sifted_count += r.sifted_count;
            pooled.error_count += r.error_count;
            pooled.duration_s += r.duration_s;
            pooled.double_click_discards += r.double_click_discards;
            for (int c = 0; c < 2; ++c) {
                pooled.per_channel[c].sifted += r.per_channel[c].sifted;
                pooled.per_channel[c].errors += r.per_channel[c].errors;
                pooled.per_basis[c].sifted += r.per_basis[c].sifted;
                pooled.per_basis[c].errors += r.per_basis[c].errors;
            }
        }
        const double n = static_cast<double>(pooled.sifted_count);
        pooled.qber = static_cast<double>(pooled.error_count) / n;
        pooled.raw_key_bps = n / pooled.duration_s;
        pooled.dop_mean = dop / seeds;
        double var = pooled.qber * (1.0 - pooled.qber) / n;
        if (seeds > 1) {
            const double m = std::accumulate(q.begin(), q.end(), 0.0) / seeds;
            double s2 = 0.0;
            for (double v : q) s2 += (v - m) * (v - m);
            var += s2 / (seeds - 1);
        }
        pooled.qber_3sigma = 3.0 * std::sqrt(var);
        return pooled;
    });
}

std::vector<TrajectorySample> drift_trace(const Scenario& s) {
    s.validate();
    const auto base = slice_spectrum(s.spectrum, s.slices, s.mu);
    const auto fiber = build_fiber(s.length_km, s.pmd_ps_per_sqrtkm, s.segments, s.atten_db_per_km,
                                   s.drift_rad_per_sqrth,
                                   substream_seed(s.master_seed, "fiber", s.fiber_seed_index),
                                   base.center_lambda_nm());
    Rng rng = Rng::substream(s.master_seed, "drift", s.fiber_seed_index);
    const auto probe = StokesVector::from_axis(state_axis(s.encoder.basis_set == BasisSet::HV_DA
                                                              ? Bb84State::H
                                                              : Bb84State::D));
    return trajectory(fiber, s.probe_lambdas_nm, s.drift_duration_hours, s.drift_step_hours, probe, rng);
}

std::vector<BudgetRow> budget(double mu, const std::vector<double>& rates_hz, double lambda_nm,
                              double source_dbm) {
    std::vector<BudgetRow> rows;
    for (double r : rates_hz) {
        BudgetRow row;
        row.rate_hz = r;
        row.launch_dbm = launch_power_dbm(mu, r, lambda_nm);
        row.source_dbm = source_dbm;
        row.headroom_db = headroom_db(source_dbm, mu, r, lambda_nm);
        rows.push_back(row);
    }
    return rows;
}

std::vector<std::string> provenance_lines(const Scenario& s, std::string_view extra) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(scenario_hash(s)));
    std::vector<std::string> out{std::string("scenario_hash=") + buf,
                                 "seed=" + std::to_string(s.master_seed),
                                 "tool_version=" + std::string(kToolVersion)};
    if (!extra.empty()) out.emplace_back(extra);
    return out;
}

void write_sweep_csv(std::ostream& out, const SweepResult& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "# scenario_hash=%016llx\n# seed=%llu\n# tool_version=%s\n# sweep_var=%s\n",
                  static_cast<unsigned long long>(r.scenario_hash), static_cast<unsigned long long>(r.seed),
                  r.version.c_str(), r.variable.c_str());
    out << buf;
    out << "sweep_var,qber,qber_3sigma,raw_key_bps,sifted_count,dop_mean\n";
    for (std::size_t i = 0; i < r.values.size(); ++i) {
        const auto& q = r.reports[i];
        std::snprintf(buf, sizeof buf, "%.6g,%.8f,%.8f,%.6f,%llu,%.8f\n", r.values[i], q.qber, q.qber_3sigma,
                      q.raw_key_bps, static_cast<unsigned long long>(q.sifted_count), q.dop_mean);
        out << buf;
    }
}

void write_budget_csv(std::ostream& out, const std::vector<BudgetRow>& rows, double mu, double lambda_nm) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "# mu=%g\n# lambda_nm=%g\n# tool_version=%s\n", mu, lambda_nm,
                  std::string(kToolVersion).c_str());
    out << buf;
    out << "rate_hz,launch_dbm,source_dbm,headroom_db\n";
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.6g,%.4f,%.4f,%.4f\n", r.rate_hz, r.launch_dbm, r.source_dbm,
                      r.headroom_db);
        out << buf;
    }
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw DomainError("spearman needs two equal series of length >= 2");
    auto ranks = [](const std::vector<double>& v) {
        std::vector<std::size_t> order(v.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < order.size();) {
            std::size_t j = i;
            while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
            const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
            for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
            i = j + 1;
        }
        return r;
    };
    const auto rx = ranks(x);
    const auto ry = ranks(y);
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace incoqkd
