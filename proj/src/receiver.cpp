#include "incoqkd/receiver.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <thread>

#include <Eigen/Geometry>

#include "csv_util.hpp"
#include "incoqkd/error.hpp"
#include "incoqkd/random.hpp"

namespace incoqkd {

void DetectorParams::validate() const {
    if (!(efficiency > 0.0 && efficiency <= 1.0)) throw DomainError("detector efficiency must lie in (0, 1]");
    if (dark_rate_cps < 0.0) throw DomainError("dark count rate must be non-negative");
    if (dead_time_s < 0.0) throw DomainError("dead time must be non-negative");
    if (jitter_s < 0.0) throw DomainError("jitter must be non-negative");
}

PoincareRotation align_compensation(const StokesVector& reference_out, const Vec3& target_axis) {
    const double n = reference_out.polarized_power();
    if (!(n > 0.0)) throw DomainError("alignment impossible: reference has no polarized part");
    if (!(target_axis.norm() > 0.0)) throw DomainError("alignment target must be non-zero");
    const Vec3 a = reference_out.polarized() / n;
    const Vec3 b = target_axis.normalized();
    const double c = std::clamp(a.dot(b), -1.0, 1.0);
    const Vec3 cross = a.cross(b);
    const double s = cross.norm();
    if (s < 1e-12) {
        if (c > 0.0) return PoincareRotation::identity();
        // Antipodal: any perpendicular axis gives a minimal (pi) rotation.
        Vec3 perp = a.cross(Vec3::UnitX());
        if (perp.norm() < 1e-6) perp = a.cross(Vec3::UnitY());
        return PoincareRotation::about_axis(perp, M_PI);
    }
    return PoincareRotation::about_axis(cross, std::atan2(s, c));
}

namespace {

Mat3 orthonormal_frame(const Vec3& a, const Vec3& b) {
    const Vec3 u1 = a.normalized();
    const Vec3 perp = b - b.dot(u1) * u1;
    if (perp.norm() < 1e-9 * b.norm()) {
        throw DomainError("alignment impossible: reference states are collinear");
    }
    const Vec3 u2 = perp.normalized();
    Mat3 m;
    m.col(0) = u1;
    m.col(1) = u2;
    m.col(2) = u1.cross(u2);
    return m;
}

}  // namespace

PoincareRotation align_frame(const StokesVector& ref_a, const Vec3& target_a,
                             const StokesVector& ref_b, const Vec3& target_b) {
    if (!(ref_a.polarized_power() > 0.0) || !(ref_b.polarized_power() > 0.0)) {
        throw DomainError("alignment impossible: reference has no polarized part");
    }
    const Mat3 u = orthonormal_frame(ref_a.polarized(), ref_b.polarized());
    const Mat3 t = orthonormal_frame(target_a, target_b);
    Mat3 r = t * u.transpose();
    // Re-orthogonalize against rounding before the strict rotation check.
    const Eigen::Quaterniond q(r);
    return PoincareRotation(q.normalized().toRotationMatrix());
}

ArmIntensities arm_intensities(const SliceEnsemble& received, const AnalyzerConfig& analyzer) {
    const StokesVector mean = rotate(ensemble_mean(received), analyzer.compensation);
    if (!(mean.s0 > 0.0)) return {};
    const double frac = analyzer_transmission(mean, analyzer.axis0) / mean.s0;
    const double mu0 = received.mu * std::clamp(frac, 0.0, 1.0);
    return {mu0, received.mu - mu0};
}

namespace {

struct ChannelPlan {
    int channel = 0;
    const char* stream = "detector0";
    std::vector<double> a_sig;  // eta * mu per frame position
    double a_dark = 0.0;
    double p_max = 0.0;
    std::int64_t dead_ps = 0;
    double jitter_ps = 0.0;
};

struct ChunkResult {
    std::vector<std::int64_t> t_ps;
    std::int64_t exit_dead_ps = 0;
};

ChannelPlan make_plan(int channel, std::span<const ArmIntensities> arms, const DetectorParams& det,
                      double period_s) {
    det.validate();
    ChannelPlan p;
    p.channel = channel;
    p.stream = channel == 0 ? "detector0" : "detector1";
    p.a_dark = det.dark_rate_cps * period_s;
    p.a_sig.resize(arms.size());
    double a_max = 0.0;
    for (std::size_t j = 0; j < arms.size(); ++j) {
        const double mu = channel == 0 ? arms[j].mu0 : arms[j].mu1;
        if (mu < 0.0) throw DomainError("arm intensity must be non-negative");
        p.a_sig[j] = det.efficiency * mu;
        a_max = std::max(a_max, p.a_sig[j]);
    }
    p.p_max = -std::expm1(-(a_max + p.a_dark));
    p.dead_ps = std::llround(det.dead_time_s * 1e12);
    p.jitter_ps = det.jitter_s * 1e12;
    return p;
}

ChunkResult simulate_chunk(const ChannelPlan& plan, const Transmission& tx, std::uint64_t seed,
                           std::uint64_t chunk, std::int64_t entry_dead_ps) {
    ChunkResult out;
    out.exit_dead_ps = entry_dead_ps;
    if (plan.p_max <= 0.0) return out;

    const double period_ps = 1e12 / tx.rate_hz;
    const std::uint64_t start = tx.first_symbol + chunk * kDetectChunkSymbols;
    const std::uint64_t end = std::min(start + kDetectChunkSymbols, tx.first_symbol + tx.count);
    const std::uint64_t len = plan.a_sig.size();
    const double sig_lo = 0.5 - 0.5 * tx.carve_duty;

    Rng rng = Rng::substream(seed, plan.stream, chunk);
    std::int64_t dead_until = entry_dead_ps;
    std::uint64_t pos = start;
    if (dead_until > 0) {
        pos = std::max(pos, static_cast<std::uint64_t>(static_cast<double>(dead_until) / period_ps));
    }
    while (pos < end) {
        const std::uint64_t g = rng.geometric(plan.p_max);
        if (g >= end - pos) break;
        const std::uint64_t i = pos + g;
        pos = i + 1;
        const double a_sig = plan.a_sig[(i + tx.frame_offset) % len];
        const double a_tot = a_sig + plan.a_dark;
        const double p = -std::expm1(-a_tot);
        if (rng.uniform() * plan.p_max >= p) continue;
        const bool signal = rng.uniform() * a_tot < a_sig;
        const double u = rng.uniform();
        const double frac = signal ? sig_lo + u * tx.carve_duty : u;
        const auto t = static_cast<std::int64_t>(
            std::llround((static_cast<double>(i) + frac) * period_ps));
        if (t < dead_until) continue;
        out.t_ps.push_back(t);
        if (plan.dead_ps > 0) {
            dead_until = t + plan.dead_ps;
            pos = std::max(pos, static_cast<std::uint64_t>(static_cast<double>(dead_until) / period_ps));
        }
    }
    out.exit_dead_ps = dead_until;
    return out;
}

std::vector<std::int64_t> detect_channel(const ChannelPlan& plan, const Transmission& tx,
                                         std::uint64_t seed, unsigned threads) {
    const std::uint64_t n_chunks = (tx.count + kDetectChunkSymbols - 1) / kDetectChunkSymbols;
    const double period_ps = 1e12 / tx.rate_hz;
    std::vector<ChunkResult> results(n_chunks);

    // Speculative pass: every chunk as if the detector entered it live.
    if (threads > 1 && n_chunks > 1) {
        std::atomic<std::uint64_t> next{0};
        std::vector<std::thread> pool;
        const unsigned n = static_cast<unsigned>(std::min<std::uint64_t>(threads, n_chunks));
        for (unsigned w = 0; w < n; ++w) {
            pool.emplace_back([&] {
                for (std::uint64_t k = next++; k < n_chunks; k = next++) {
                    results[k] = simulate_chunk(plan, tx, seed, k, 0);
                }
            });
        }
        for (auto& th : pool) th.join();
    }

    // Merge: a chunk whose start is still inside the previous chunk's dead
    // time is replayed from the same substream with the true entry state.
    std::vector<std::int64_t> tags;
    std::int64_t dead = 0;
    for (std::uint64_t k = 0; k < n_chunks; ++k) {
        const double start_ps = static_cast<double>(tx.first_symbol + k * kDetectChunkSymbols) * period_ps;
        const bool speculative_ok = threads > 1 && n_chunks > 1 && static_cast<double>(dead) <= start_ps;
        if (!speculative_ok) results[k] = simulate_chunk(plan, tx, seed, k, dead);
        const auto& r = results[k];
        tags.insert(tags.end(), r.t_ps.begin(), r.t_ps.end());
        if (!r.t_ps.empty() && plan.dead_ps > 0) dead = r.t_ps.back() + plan.dead_ps;
        dead = std::max(dead, r.exit_dead_ps);
        results[k] = {};
    }

    if (plan.jitter_ps > 0.0) {
        Rng rng = Rng::substream(seed, plan.channel == 0 ? "jitter0" : "jitter1");
        for (auto& t : tags) {
            t = std::max<std::int64_t>(0, t + std::llround(rng.normal(0.0, plan.jitter_ps)));
        }
    }
    return tags;
}

}  // namespace

std::vector<TimeTag> detect_frame(std::span<const ArmIntensities> arms, const Transmission& tx,
                                  const DetectorParams& det0, const DetectorParams& det1,
                                  std::uint64_t seed, unsigned threads) {
    if (arms.empty()) throw DomainError("detect_frame needs at least one frame position");
    if (!(tx.rate_hz > 0.0)) throw DomainError("symbol rate must be positive");
    if (!(tx.carve_duty > 0.0 && tx.carve_duty <= 1.0)) throw DomainError("carve duty must lie in (0, 1]");
    threads = std::max(1U, threads);
    const double period_s = 1.0 / tx.rate_hz;
    std::vector<TimeTag> out;
    for (int c = 0; c < 2; ++c) {
        const auto plan = make_plan(c, arms, c == 0 ? det0 : det1, period_s);
        for (auto t : detect_channel(plan, tx, seed, threads)) out.push_back({c, t});
    }
    std::sort(out.begin(), out.end(), [](const TimeTag& a, const TimeTag& b) {
        return a.t_ps != b.t_ps ? a.t_ps < b.t_ps : a.channel < b.channel;
    });
    return out;
}

std::vector<double> classical_trace(std::span<const Bb84State> states, const Vec3& analyzer_axis,
                                    int samples_per_symbol) {
    std::vector<StokesVector> rx;
    rx.reserve(states.size());
    for (auto s : states) rx.push_back(StokesVector::from_axis(state_axis(s)));
    return classical_trace(rx, analyzer_axis, samples_per_symbol);
}

std::vector<double> classical_trace(std::span<const StokesVector> received, const Vec3& analyzer_axis,
                                    int samples_per_symbol) {
    if (samples_per_symbol < 1) throw DomainError("samples_per_symbol must be at least 1");
    if (!(analyzer_axis.norm() > 0.0)) throw DomainError("analyzer axis must be non-zero");
    const Vec3 axis = analyzer_axis.normalized();
    std::vector<double> out;
    out.reserve(received.size() * static_cast<std::size_t>(samples_per_symbol));
    for (const auto& s : received) {
        if (!(s.s0 > 0.0)) throw DomainError("classical trace needs s0 > 0");
        const auto arms = analyzer_split(s, axis);
        const double level = (arms.pass - arms.block) / s.s0;
        out.insert(out.end(), static_cast<std::size_t>(samples_per_symbol), level);
    }
    return out;
}

void write_tags_csv(std::ostream& out, std::span<const TimeTag> tags,
                    const std::vector<std::string>& provenance) {
    for (const auto& line : provenance) out << "# " << line << '\n';
    out << "channel,t_seconds\n";
    char buf[64];
    for (const auto& t : tags) {
        if (t.t_ps < 0) throw IoError("negative time tag");
        std::snprintf(buf, sizeof buf, "%d,%lld.%012lld\n", t.channel,
                      static_cast<long long>(t.t_ps / kPsPerSecond),
                      static_cast<long long>(t.t_ps % kPsPerSecond));
        out << buf;
    }
}

namespace {

std::int64_t parse_seconds_ps(std::string_view s) {
    const auto dot = s.find('.');
    const auto whole = detail::to_int<std::int64_t>(s.substr(0, dot), "t_seconds");
    std::int64_t frac = 0;
    if (dot != std::string_view::npos) {
        auto digits = s.substr(dot + 1);
        if (digits.size() > 12) {
            // Anything below 1 ps must be zero; otherwise the value is off-grid.
            for (char c : digits.substr(12)) {
                if (c != '0') throw IoError("t_seconds finer than 1 ps: '" + std::string(s) + "'");
            }
            digits = digits.substr(0, 12);
        }
        if (!digits.empty()) frac = detail::to_int<std::int64_t>(digits, "t_seconds");
        for (std::size_t k = digits.size(); k < 12; ++k) frac *= 10;
    }
    if (whole < 0) throw IoError("t_seconds must be non-negative");
    return whole * kPsPerSecond + frac;
}

}  // namespace

std::vector<TimeTag> read_tags_csv(std::istream& in) {
    std::string line;
    if (!detail::next_data_line(in, line)) throw IoError("tag CSV is empty");
    const auto header = detail::split_csv(line);
    if (header.size() != 2 || header[0] != "channel" || header[1] != "t_seconds") {
        throw IoError("tag CSV header must be channel,t_seconds");
    }
    std::vector<TimeTag> tags;
    while (detail::next_data_line(in, line)) {
        const auto f = detail::split_csv(line);
        if (f.size() != 2) throw IoError("tag CSV rows must have 2 columns");
        TimeTag t;
        t.channel = detail::to_int<int>(f[0], "channel");
        if (t.channel != 0 && t.channel != 1) throw IoError("tag channel must be 0 or 1");
        t.t_ps = parse_seconds_ps(f[1]);
        if (!tags.empty() && t.t_ps < tags.back().t_ps) throw IoError("tag CSV times must be non-decreasing");
        tags.push_back(t);
    }
    return tags;
}

}  // namespace incoqkd
