#include "incoqkd/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <memory>
#include <mutex>
#include <ostream>

#include <fftw3.h>

#include "incoqkd/error.hpp"

namespace incoqkd {

std::vector<WindowedTag> temporal_filter(std::span<const TimeTag> tags, double rate_hz,
                                         double window_fraction, double offset_s) {
    if (!(window_fraction > 0.0 && window_fraction <= 1.0)) {
        throw DomainError("window_fraction must lie in (0, 1]");
    }
    if (!(rate_hz > 0.0)) throw DomainError("symbol rate must be positive");
    const double half = 0.5 * window_fraction;
    std::vector<WindowedTag> out;
    out.reserve(tags.size());
    for (const auto& t : tags) {
        const double x = (t.t_s() - offset_s) * rate_hz;
        if (x < 0.0) continue;
        const double idx = std::floor(x);
        const double phase = x - idx;
        if (window_fraction < 1.0 && std::abs(phase - 0.5) > half) continue;
        out.push_back({t.channel, t.t_ps, static_cast<std::uint64_t>(idx)});
    }
    return out;
}

std::string_view to_string(DoubleClickPolicy p) { return p == DoubleClickPolicy::discard ? "discard" : "random"; }

DoubleClickPolicy parse_double_click_policy(std::string_view s) {
    if (s == "discard") return DoubleClickPolicy::discard;
    if (s == "random") return DoubleClickPolicy::random;
    throw DomainError("unknown double-click policy '" + std::string(s) + "'");
}

RecordSet make_records(std::span<const WindowedTag> tags, int bob_basis, DoubleClickPolicy policy,
                       Rng* rng) {
    if (bob_basis != 0 && bob_basis != 1) throw DomainError("Bob basis must be 0 or 1");
    if (policy == DoubleClickPolicy::random && rng == nullptr) {
        throw DomainError("random double-click policy needs a random stream");
    }
    std::vector<WindowedTag> sorted(tags.begin(), tags.end());
    std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
        return a.symbol_index < b.symbol_index;
    });
    RecordSet out;
    out.records.reserve(sorted.size());
    for (std::size_t i = 0; i < sorted.size();) {
        std::size_t j = i;
        bool seen[2] = {false, false};
        while (j < sorted.size() && sorted[j].symbol_index == sorted[i].symbol_index) {
            seen[sorted[j].channel & 1] = true;
            ++j;
        }
        DetectionRecord r;
        r.symbol_index = sorted[i].symbol_index;
        r.bob_basis = static_cast<std::uint8_t>(bob_basis);
        if (seen[0] && seen[1]) {
            ++out.double_clicks;
            if (policy == DoubleClickPolicy::discard) {
                i = j;
                continue;
            }
            r.channel = rng->uniform() < 0.5 ? 0 : 1;
        } else {
            r.channel = seen[0] ? 0 : 1;
        }
        r.bob_bit = static_cast<std::uint8_t>(r.channel);
        out.records.push_back(r);
        i = j;
    }
    return out;
}

namespace {

// The FFTW planner is not re-entrant.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

struct FftwDeleter {
    void operator()(fftw_complex* p) const { fftw_free(p); }
};
using FftwBuffer = std::unique_ptr<fftw_complex[], FftwDeleter>;

FftwBuffer fftw_buffer(std::size_t n) {
    return FftwBuffer(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n)));
}

// Cyclic cross-correlation c[s] = sum_b sum_i y_b[i] x_b[(i + s) mod L].
std::vector<double> correlate(const std::array<std::vector<double>, 2>& x,
                              const std::array<std::vector<double>, 2>& y) {
    const std::size_t n = x[0].size();
    auto in = fftw_buffer(n);
    auto fx = fftw_buffer(n);
    auto fy = fftw_buffer(n);
    auto acc = fftw_buffer(n);
    for (std::size_t k = 0; k < n; ++k) acc[k][0] = acc[k][1] = 0.0;

    const int len = static_cast<int>(n);
    std::unique_lock lock(planner_mutex());
    fftw_plan pfx = fftw_plan_dft_1d(len, in.get(), fx.get(), FFTW_FORWARD, FFTW_ESTIMATE);
    fftw_plan pfy = fftw_plan_dft_1d(len, in.get(), fy.get(), FFTW_FORWARD, FFTW_ESTIMATE);
    fftw_plan pinv = fftw_plan_dft_1d(len, acc.get(), in.get(), FFTW_BACKWARD, FFTW_ESTIMATE);
    lock.unlock();
    for (int b = 0; b < 2; ++b) {
        for (std::size_t k = 0; k < n; ++k) {
            in[k][0] = x[b][k];
            in[k][1] = 0.0;
        }
        fftw_execute(pfx);
        for (std::size_t k = 0; k < n; ++k) {
            in[k][0] = y[b][k];
            in[k][1] = 0.0;
        }
        fftw_execute(pfy);
        for (std::size_t k = 0; k < n; ++k) {
            // conj(Y) * X
            const std::complex<double> X{fx[k][0], fx[k][1]};
            const std::complex<double> Y{fy[k][0], fy[k][1]};
            const auto z = std::conj(Y) * X;
            acc[k][0] += z.real();
            acc[k][1] += z.imag();
        }
    }
    fftw_execute(pinv);
    lock.lock();
    fftw_destroy_plan(pfx);
    fftw_destroy_plan(pfy);
    fftw_destroy_plan(pinv);
    lock.unlock();
    std::vector<double> c(n);
    for (std::size_t k = 0; k < n; ++k) c[k] = std::round(in[k][0] / static_cast<double>(n));
    return c;
}

}  // namespace

SyncResult frame_synchronize(std::span<const DetectionRecord> records, const SymbolFrame& frame,
                             std::uint64_t max_shift) {
    if (records.empty()) throw SyncError("frame synchronization needs at least one record");
    const std::size_t n = frame.size();
    if (n < 2) throw DomainError("frame must hold at least 2 symbols");
    if (max_shift == 0 || max_shift > n) max_shift = n;
    if (max_shift < 2) throw DomainError("max_shift must allow at least two candidate shifts");

    std::array<std::vector<double>, 2> x{std::vector<double>(n), std::vector<double>(n)};
    std::array<std::vector<double>, 2> y{std::vector<double>(n), std::vector<double>(n)};
    for (std::size_t j = 0; j < n; ++j) {
        const auto& s = frame.symbols[j];
        x[s.basis][j] = s.bit ? -1.0 : 1.0;
    }
    for (const auto& r : records) {
        y[r.bob_basis & 1][r.symbol_index % n] += r.bob_bit ? -1.0 : 1.0;
    }
    const auto score = correlate(x, y);

    std::uint64_t best = 0;
    for (std::uint64_t s = 1; s < max_shift; ++s) {
        if (score[s] > score[best]) best = s;
    }
    double sum = 0.0;
    double sq = 0.0;
    for (std::uint64_t s = 0; s < max_shift; ++s) {
        if (s == best) continue;
        sum += score[s];
        sq += score[s] * score[s];
    }
    const double m = static_cast<double>(max_shift - 1);
    SyncResult r;
    r.shift = best;
    r.peak = score[best];
    r.off_peak_mean = sum / m;
    r.off_peak_sigma = std::sqrt(std::max(0.0, sq / m - r.off_peak_mean * r.off_peak_mean));
    if (!(r.peak > r.off_peak_mean + 5.0 * r.off_peak_sigma)) {
        char buf[200];
        std::snprintf(buf, sizeof buf,
                      "no significant correlation peak (best shift %llu: %.0f vs off-peak %.2f +- %.2f, "
                      "%zu records)",
                      static_cast<unsigned long long>(best), r.peak, r.off_peak_mean, r.off_peak_sigma,
                      records.size());
        throw SyncError(buf);
    }
    return r;
}

SiftResult sift(const SymbolFrame& frame, std::span<const DetectionRecord> records, std::uint64_t shift) {
    if (frame.size() == 0) throw DomainError("frame is empty");
    std::vector<DetectionRecord> sorted(records.begin(), records.end());
    std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
        return a.symbol_index < b.symbol_index;
    });
    SiftResult out;
    out.bits.reserve(sorted.size() / 2 + 1);
    for (std::size_t i = 0; i < sorted.size();) {
        std::size_t j = i + 1;
        bool conflict = false;
        while (j < sorted.size() && sorted[j].symbol_index == sorted[i].symbol_index) {
            if (sorted[j].bob_bit != sorted[i].bob_bit || sorted[j].bob_basis != sorted[i].bob_basis) {
                conflict = true;
            }
            ++j;
        }
        const auto& r = sorted[i];
        i = j;
        if (conflict) {
            ++out.double_click_discards;
            continue;
        }
        const auto& a = frame.cyclic(r.symbol_index + shift);
        if (a.basis != r.bob_basis) {
            ++out.basis_mismatches;
            continue;
        }
        out.bits.push_back({a.bit, r.bob_bit, a.basis, r.channel, r.symbol_index});
    }
    return out;
}

QberReport compute_qber(std::span<const SiftedBit> sifted, double duration_s, int batches) {
    if (sifted.empty()) throw DomainError("cannot estimate QBER from an empty sifted key");
    if (!(duration_s > 0.0)) throw DomainError("duration must be positive");
    QberReport r;
    r.duration_s = duration_s;
    for (const auto& b : sifted) {
        const bool err = b.alice_bit != b.bob_bit;
        ++r.sifted_count;
        r.error_count += err;
        auto& ch = r.per_channel[static_cast<std::size_t>(b.channel & 1)];
        ++ch.sifted;
        ch.errors += err;
        auto& ba = r.per_basis[b.basis & 1];
        ++ba.sifted;
        ba.errors += err;
    }
    const double n = static_cast<double>(r.sifted_count);
    r.qber = static_cast<double>(r.error_count) / n;
    r.raw_key_bps = n / duration_s;
    double var = r.qber * (1.0 - r.qber) / n;
    if (batches >= 2 && sifted.size() >= static_cast<std::size_t>(batches)) {
        std::vector<double> q;
        const std::size_t per = sifted.size() / static_cast<std::size_t>(batches);
        for (int k = 0; k < batches; ++k) {
            const std::size_t lo = static_cast<std::size_t>(k) * per;
            const std::size_t hi = k + 1 == batches ? sifted.size() : lo + per;
            std::size_t e = 0;
            for (std::size_t i = lo; i < hi; ++i) e += sifted[i].alice_bit != sifted[i].bob_bit;
            q.push_back(static_cast<double>(e) / static_cast<double>(hi - lo));
        }
        double mean = 0.0;
        for (double v : q) mean += v;
        mean /= static_cast<double>(q.size());
        double s2 = 0.0;
        for (double v : q) s2 += (v - mean) * (v - mean);
        // batch-means variance of the pooled estimate; the larger of the two wins
        const double nb = static_cast<double>(q.size());
        var = std::max(var, s2 / (nb - 1.0) / nb);
    }
    r.qber_3sigma = 3.0 * std::sqrt(var);
    return r;
}

double binary_entropy(double q) {
    if (!(q >= 0.0 && q <= 1.0)) throw DomainError("binary entropy needs 0 <= q <= 1");
    if (q == 0.0 || q == 1.0) return 0.0;
    return -q * std::log2(q) - (1.0 - q) * std::log2(1.0 - q);
}

double secure_fraction(double q) {
    if (!(q >= 0.0 && q < 0.5)) throw DomainError("secure fraction needs 0 <= q < 0.5");
    return std::max(0.0, 1.0 - 2.0 * binary_entropy(q));
}

double qber_threshold() {
    double lo = 0.0;
    double hi = 0.25;
    for (int i = 0; i < 200 && hi - lo > 1e-16; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (1.0 - 2.0 * binary_entropy(mid) > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

void write_report_csv(std::ostream& out, const QberReport& r) {
    out << "qber,qber_3sigma,raw_key_bps,sifted_count,error_count,duration_s,"
           "sifted_ch0,errors_ch0,sifted_ch1,errors_ch1,sifted_basis0,errors_basis0,"
           "sifted_basis1,errors_basis1,double_click_discards,dop_mean\n";
    char buf[512];
    std::snprintf(buf, sizeof buf, "%.8f,%.8f,%.6f,%llu,%llu,%.9f,%llu,%llu,%llu,%llu,%llu,%llu,%llu,%llu,%llu,%.8f\n",
                  r.qber, r.qber_3sigma, r.raw_key_bps, static_cast<unsigned long long>(r.sifted_count),
                  static_cast<unsigned long long>(r.error_count), r.duration_s,
                  static_cast<unsigned long long>(r.per_channel[0].sifted),
                  static_cast<unsigned long long>(r.per_channel[0].errors),
                  static_cast<unsigned long long>(r.per_channel[1].sifted),
                  static_cast<unsigned long long>(r.per_channel[1].errors),
                  static_cast<unsigned long long>(r.per_basis[0].sifted),
                  static_cast<unsigned long long>(r.per_basis[0].errors),
                  static_cast<unsigned long long>(r.per_basis[1].sifted),
                  static_cast<unsigned long long>(r.per_basis[1].errors),
                  static_cast<unsigned long long>(r.double_click_discards), r.dop_mean);
    out << buf;
}

void print_summary(std::ostream& out, const QberReport& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "QBER          %.3f %% (3sigma %.3f %%)\n", 100.0 * r.qber,
                  100.0 * r.qber_3sigma);
    out << buf;
    std::snprintf(buf, sizeof buf, "raw key       %.1f bit/s over %.3f s\n", r.raw_key_bps, r.duration_s);
    out << buf;
    std::snprintf(buf, sizeof buf, "sifted        %llu bits, %llu errors, %llu double clicks discarded\n",
                  static_cast<unsigned long long>(r.sifted_count),
                  static_cast<unsigned long long>(r.error_count),
                  static_cast<unsigned long long>(r.double_click_discards));
    out << buf;
    for (int c = 0; c < 2; ++c) {
        const auto& t = r.per_channel[static_cast<std::size_t>(c)];
        std::snprintf(buf, sizeof buf, "SPAD %d        %.3f %%, %.1f bit/s\n", c, 100.0 * t.qber(),
                      r.raw_key_bps_channel(c));
        out << buf;
    }
    for (int b = 0; b < 2; ++b) {
        const auto& t = r.per_basis[static_cast<std::size_t>(b)];
        std::snprintf(buf, sizeof buf, "basis %d       %.3f %%, %.1f bit/s\n", b, 100.0 * t.qber(),
                      r.duration_s > 0.0 ? t.sifted / r.duration_s : 0.0);
        out << buf;
    }
    std::snprintf(buf, sizeof buf, "secure frac.  %.4f (threshold %.4f)\n",
                  r.qber < 0.5 ? secure_fraction(r.qber) : 0.0, qber_threshold());
    out << buf;
    std::snprintf(buf, sizeof buf, "mean DOP      %.4f\n", r.dop_mean);
    out << buf;
}

}  // namespace incoqkd
