#include <cmath>
#include <cstdio>
#include <functional>
#include <string>

#include "incoqkd/error.hpp"
#include "incoqkd/harness.hpp"

namespace incoqkd {

namespace {

std::string line(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

/// Root of an increasing function on [lo, hi]; clamps to the bracket ends.
double bisect_increasing(const std::function<double(double)>& g, double target, double lo, double hi,
                         int iters = 60) {
    if (g(lo) >= target) return lo;
    if (g(hi) <= target) return hi;
    for (int i = 0; i < iters; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (g(mid) < target) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

void set_efficiency(Scenario& s, double eta, double ratio1) {
    s.detectors[0].efficiency = eta;
    s.detectors[1].efficiency = std::min(1.0, eta * ratio1);
}

struct Baseline {
    double extinction_db = 0.0;
    double efficiency = 0.0;
    double qber = 0.0;
    double raw = 0.0;
};

// Extinction (visibility) and detector efficiency from one (QBER, raw key) point.
Baseline fit_baseline(Scenario s, double target_qber, double target_raw) {
    const double ratio1 = s.detectors[1].efficiency / s.detectors[0].efficiency;
    double ext = s.encoder.extinction_db;
    double eta = s.detectors[0].efficiency;
    constexpr double kExtMax = 60.0;
    constexpr double kEtaMin = 1e-7;
    const double eta_max = 1.0 / std::max(1.0, ratio1);
    for (int it = 0; it < 40; ++it) {
        const double ext_prev = ext;
        const double eta_prev = eta;
        s.encoder.extinction_db = ext;
        eta = bisect_increasing(
            [&](double e) {
                set_efficiency(s, e, ratio1);
                return expected_rates(s).raw_key_bps;
            },
            target_raw, kEtaMin, eta_max);
        set_efficiency(s, eta, ratio1);
        // QBER falls with extinction; bisect on its negative.
        ext = bisect_increasing(
            [&](double x) {
                s.encoder.extinction_db = x;
                return -expected_rates(s).qber;
            },
            -target_qber, 0.01, kExtMax);
        s.encoder.extinction_db = ext;
        if (std::abs(ext - ext_prev) < 1e-9 * std::max(1.0, ext) &&
            std::abs(eta - eta_prev) < 1e-12 * std::max(1e-6, eta)) {
            break;
        }
    }
    const auto r = expected_rates(s);
    return {ext, eta, r.qber, r.raw_key_bps};
}

// Extra loss that brings the raw key down to `raw` (the second anchor's operating point).
double anchor2_loss(Scenario p, double raw) {
    return bisect_increasing(
        [&](double ob) {
            p.optical_budget_db = ob;
            return -expected_rates(p).raw_key_bps;
        },
        -raw, p.optical_budget_db, p.optical_budget_db + 60.0, 50);
}

}  // namespace

CalibrationResult calibrate(const Scenario& input) {
    input.validate();
    const auto& t = input.calibration;
    if (t.stages.empty()) throw ConfigError("calibrate.stages is empty");
    CalibrationResult out;
    out.scenario = input;
    auto& s = out.scenario;
    const double ratio1 = s.detectors[1].efficiency / s.detectors[0].efficiency;

    auto has = [&](const char* name) {
        for (const auto& st : t.stages) {
            if (st == name) return true;
        }
        return false;
    };
    if (has("baseline") && !(t.baseline_qber > 0.0 && t.baseline_raw_key_bps > 0.0)) {
        throw ConfigError("baseline stage needs calibrate.baseline_qber and calibrate.baseline_raw_key_bps");
    }
    if ((t.anchor2_ob_db || t.anchor2_rate_hz || t.anchor2_raw_key_bps) && !(t.anchor2_qber > 0.0)) {
        throw ConfigError("a second baseline anchor needs calibrate.anchor2_qber");
    }
    if (has("bandwidth") && !(t.bandwidth_nm > 0.0 && t.bandwidth_qber > 0.0)) {
        throw ConfigError("bandwidth stage needs calibrate.bandwidth_nm and calibrate.bandwidth_qber");
    }
    if (has("bandwidth") && s.encoder.architecture != Architecture::dualpol_iq) {
        throw ConfigError("bandwidth stage needs encoder.architecture = dualpol-iq");
    }
    if (has("length") && !(t.length_km > 0.0 && t.length_qber > 0.0)) {
        throw ConfigError("length stage needs calibrate.length_km and calibrate.length_qber");
    }

    auto run_baseline = [&] {
        if (t.anchor2_ob_db || t.anchor2_rate_hz || t.anchor2_raw_key_bps) {
            // Effective dark acceptance from the second anchor, refitting the first each time.
            auto q2 = [&](double k) {
                Scenario p = s;
                p.dark_acceptance = k;
                const auto b = fit_baseline(p, t.baseline_qber, t.baseline_raw_key_bps);
                p.encoder.extinction_db = b.extinction_db;
                set_efficiency(p, b.efficiency, ratio1);
                if (t.anchor2_ob_db) p.optical_budget_db = *t.anchor2_ob_db;
                if (t.anchor2_rate_hz) p.rate_hz = *t.anchor2_rate_hz;
                if (t.anchor2_raw_key_bps) p.optical_budget_db = anchor2_loss(p, *t.anchor2_raw_key_bps);
                return expected_rates(p).qber;
            };
            constexpr double kMaxAcceptance = 10.0;
            if (q2(kMaxAcceptance) >= q2(0.0)) {
                s.dark_acceptance = bisect_increasing(q2, t.anchor2_qber, 0.0, kMaxAcceptance, 40);
            } else {
                s.dark_acceptance = bisect_increasing([&](double k) { return -q2(k); }, -t.anchor2_qber, 0.0,
                                                      kMaxAcceptance, 40);
            }
            out.log.push_back(line("baseline: effective dark acceptance %.4f (anchor QBER %.4f, model %.4f)",
                                   s.dark_acceptance, t.anchor2_qber, q2(s.dark_acceptance)));
            if (t.anchor2_raw_key_bps) {
                Scenario p = s;
                const auto b = fit_baseline(p, t.baseline_qber, t.baseline_raw_key_bps);
                p.encoder.extinction_db = b.extinction_db;
                set_efficiency(p, b.efficiency, ratio1);
                out.log.push_back(line("baseline: second anchor sits %.4f dB below the first (raw key %.2f bit/s)",
                                       anchor2_loss(p, *t.anchor2_raw_key_bps), *t.anchor2_raw_key_bps));
            }
        }
        const auto b = fit_baseline(s, t.baseline_qber, t.baseline_raw_key_bps);
        s.encoder.extinction_db = b.extinction_db;
        set_efficiency(s, b.efficiency, ratio1);
        out.log.push_back(line("baseline: extinction %.4f dB (visibility %.6f), efficiency %.6g", b.extinction_db,
                               s.encoder.visibility(), b.efficiency));
        out.log.push_back(line("baseline: model QBER %.5f (target %.5f), raw key %.2f bit/s (target %.2f)", b.qber,
                               t.baseline_qber, b.raw, t.baseline_raw_key_bps));
        if (std::abs(b.qber - t.baseline_qber) > 1e-4) {
            out.log.push_back("baseline: WARNING target QBER unreachable with the given dark counts");
        }
    };

    auto run_bandwidth = [&] {
        Scenario p = with_bandwidth(s, t.bandwidth_nm);
        const auto [lo, hi] = p.spectrum.support_nm();
        const double dnu = 299792.458 * (1.0 / lo - 1.0 / hi);  // THz
        const double tau_null = 1.0 / dnu;
        const double tau = bisect_increasing(
            [&](double x) {
                p.encoder.tx_dgd_ps = x;
                return expected_rates(p).qber;
            },
            t.bandwidth_qber, 0.0, 0.999 * tau_null);
        s.encoder.tx_dgd_ps = tau;
        p.encoder.tx_dgd_ps = tau;
        const auto r = expected_rates(p);
        out.log.push_back(line("bandwidth: tx_dgd %.5f ps (tau*dnu %.4f at %.2f nm), model QBER %.5f", tau,
                               tau * dnu, t.bandwidth_nm, r.qber));
    };

    auto run_length = [&] {
        Scenario p = t.length_bandwidth_nm ? with_bandwidth(s, *t.length_bandwidth_nm) : s;
        if (t.length_rate_hz) p.rate_hz = *t.length_rate_hz;
        p.length_km = t.length_km;
        const int seeds = std::max(1, t.length_seeds);
        auto mean_q = [&](double pmd) {
            double q = 0.0;
            for (int k = 0; k < seeds; ++k) {
                Scenario x = p;
                x.pmd_ps_per_sqrtkm = pmd;
                x.fiber_seed_index = s.fiber_seed_index + static_cast<std::uint64_t>(k);
                q += expected_rates(x).qber;
            }
            return q / seeds;
        };
        double target = t.length_qber;
        if (t.length_reference_qber) {
            Scenario b2b = p;
            b2b.length_km = 0.0;
            const double q0 = expected_rates(b2b).qber;
            target = q0 + (t.length_qber - *t.length_reference_qber);
            out.log.push_back(line("length: model back-to-back QBER %.5f, target %.5f (penalty %.5f)", q0, target,
                                   t.length_qber - *t.length_reference_qber));
        }
        double hi = 0.05;
        while (mean_q(hi) < target && hi < 20.0) hi *= 2.0;
        const double pmd = bisect_increasing(mean_q, target, 0.0, hi, 40);
        s.pmd_ps_per_sqrtkm = pmd;
        out.log.push_back(line("length: pmd %.5f ps/sqrt(km), model mean QBER %.5f at %.3f km (%g seeds)", pmd,
                               mean_q(pmd), t.length_km, seeds));
    };

    // Baseline and bandwidth interact through the small depolarization the
    // transmitter DGD leaves at the baseline width; iterate them jointly.
    const int rounds = has("baseline") && has("bandwidth") ? 3 : 1;
    for (int r = 0; r < rounds; ++r) {
        const std::size_t mark = out.log.size();
        if (has("baseline")) run_baseline();
        if (has("bandwidth")) run_bandwidth();
        if (r + 1 < rounds) out.log.resize(mark);  // report the final round only
    }
    if (has("length")) run_length();
    return out;
}

}  // namespace incoqkd
