#pragma once

// Bob: polarization alignment, PBS projection, free-running SPAD click
// generation with dark counts and dead time, time tags, and the classical
// balanced-detector trace.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "incoqkd/encoder.hpp"
#include "incoqkd/polarization.hpp"

namespace incoqkd {

struct DetectorParams {
    double efficiency = 0.1;
    double dark_rate_cps = 0.0;
    double dead_time_s = 0.0;
    double jitter_s = 0.0;  ///< Gaussian sigma added to the recorded tag time

    void validate() const;
};

inline constexpr std::int64_t kPsPerSecond = 1'000'000'000'000;

struct TimeTag {
    int channel = 0;
    std::int64_t t_ps = 0;  ///< absolute time, 1 ps resolution

    double t_s() const noexcept { return static_cast<double>(t_ps) * 1e-12; }
    friend bool operator==(const TimeTag&, const TimeTag&) = default;
};

/// One PBS: channel 0 passes `axis0`, channel 1 passes the antipode.
struct AnalyzerConfig {
    Vec3 axis0 = Vec3::UnitX();
    PoincareRotation compensation;

    Vec3 axis1() const { return -axis0; }
};

/// Minimal-angle rotation taking the polarized part of `reference_out` onto
/// `target_axis`. Throws DomainError when the reference is unpolarized.
PoincareRotation align_compensation(const StokesVector& reference_out, const Vec3& target_axis);

/// Rotation taking reference A onto target A exactly and reference B into the
/// half-plane spanned by target A and target B (two-state manual alignment).
PoincareRotation align_frame(const StokesVector& ref_a, const Vec3& target_a,
                             const StokesVector& ref_b, const Vec3& target_b);

/// Mean photon numbers reaching the two detectors for one symbol.
struct ArmIntensities {
    double mu0 = 0.0;
    double mu1 = 0.0;
};

/// Compensate, then split by the analyzer. mu0 + mu1 == received mu.
ArmIntensities arm_intensities(const SliceEnsemble& received, const AnalyzerConfig& analyzer);

/// A contiguous run of transmitted symbols. Absolute symbol i carries frame
/// position (i + frame_offset) mod frame length.
struct Transmission {
    double rate_hz = 1e9;
    double carve_duty = 1.0;
    std::uint64_t first_symbol = 0;
    std::uint64_t count = 0;
    std::uint64_t frame_offset = 0;
};

/// Fixed work unit of detect_frame; independent of the thread count.
inline constexpr std::uint64_t kDetectChunkSymbols = std::uint64_t{1} << 22;

/// Free-running detection of a transmission. `arms[j]` holds the arm
/// intensities of frame position j. Each detector clicks in symbol i with
/// probability 1 - exp(-eta mu_arm - dark T); signal clicks land uniformly in
/// the carved window, dark clicks uniformly over the period. Dead time is
/// non-paralyzable and applied before jitter. Output is sorted by
/// (time, channel). Deterministic in `seed` for any `threads`.
std::vector<TimeTag> detect_frame(std::span<const ArmIntensities> arms, const Transmission& tx,
                                  const DetectorParams& det0, const DetectorParams& det1,
                                  std::uint64_t seed, unsigned threads = 1);

/// Balanced-detector signal (P_pass - P_block) / s0, constant over each symbol.
std::vector<double> classical_trace(std::span<const Bb84State> states, const Vec3& analyzer_axis,
                                    int samples_per_symbol);
std::vector<double> classical_trace(std::span<const StokesVector> received, const Vec3& analyzer_axis,
                                    int samples_per_symbol);

/// CSV with header `channel,t_seconds`; `#` lines before the header carry provenance.
void write_tags_csv(std::ostream& out, std::span<const TimeTag> tags,
                    const std::vector<std::string>& provenance = {});
std::vector<TimeTag> read_tags_csv(std::istream& in);

}  // namespace incoqkd
