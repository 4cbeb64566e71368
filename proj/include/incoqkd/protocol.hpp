#pragma once

// Post-processing: temporal filtering, frame synchronization against the
// PRBS, sifting, QBER / raw-key estimation and the asymptotic secure-key
// bound.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "incoqkd/encoder.hpp"
#include "incoqkd/random.hpp"
#include "incoqkd/receiver.hpp"

namespace incoqkd {

struct WindowedTag {
    int channel = 0;
    std::int64_t t_ps = 0;
    std::uint64_t symbol_index = 0;
};

/// Keeps tags whose phase inside the symbol period lies in the centered
/// window of `window_fraction`; symbol_index = floor((t - offset) rate).
std::vector<WindowedTag> temporal_filter(std::span<const TimeTag> tags, double rate_hz,
                                         double window_fraction, double offset_s = 0.0);

struct DetectionRecord {
    std::uint64_t symbol_index = 0;
    std::uint8_t bob_basis = 0;
    std::uint8_t bob_bit = 0;
    int channel = 0;
    friend bool operator==(const DetectionRecord&, const DetectionRecord&) = default;
};

enum class DoubleClickPolicy { discard, random };

std::string_view to_string(DoubleClickPolicy p);
DoubleClickPolicy parse_double_click_policy(std::string_view s);

struct RecordSet {
    std::vector<DetectionRecord> records;
    std::uint64_t double_clicks = 0;
};

/// One record per symbol with clicks; channel c reads bit c. Symbols with
/// clicks on both channels are discarded (counted) or assigned a random bit.
RecordSet make_records(std::span<const WindowedTag> tags, int bob_basis,
                       DoubleClickPolicy policy = DoubleClickPolicy::discard, Rng* rng = nullptr);

struct SyncResult {
    std::uint64_t shift = 0;
    double peak = 0.0;
    double off_peak_mean = 0.0;
    double off_peak_sigma = 0.0;
};

/// Agreement score per cyclic shift s: sum over records whose basis matches
/// Alice's at position (i + s) of +1 (same bit) or -1. Shifts 0..max_shift-1
/// are searched (0 means the whole frame). Throws SyncError unless the best
/// score exceeds the off-peak mean by 5 standard deviations.
SyncResult frame_synchronize(std::span<const DetectionRecord> records, const SymbolFrame& frame,
                             std::uint64_t max_shift = 0);

struct SiftedBit {
    std::uint8_t alice_bit = 0;
    std::uint8_t bob_bit = 0;
    std::uint8_t basis = 0;
    int channel = 0;
    std::uint64_t symbol_index = 0;
};

struct SiftResult {
    std::vector<SiftedBit> bits;
    std::uint64_t basis_mismatches = 0;
    std::uint64_t double_click_discards = 0;
};

/// Keeps records whose basis equals Alice's at the shifted index. Symbols
/// appearing with conflicting bits are discarded and counted.
SiftResult sift(const SymbolFrame& frame, std::span<const DetectionRecord> records, std::uint64_t shift);

struct ErrorTally {
    std::uint64_t sifted = 0;
    std::uint64_t errors = 0;
    double qber() const noexcept { return sifted ? static_cast<double>(errors) / sifted : 0.0; }
};

struct QberReport {
    double qber = 0.0;
    double qber_3sigma = 0.0;
    double raw_key_bps = 0.0;
    std::uint64_t sifted_count = 0;
    std::uint64_t error_count = 0;
    double duration_s = 0.0;
    std::array<ErrorTally, 2> per_channel{};
    std::array<ErrorTally, 2> per_basis{};
    std::uint64_t double_click_discards = 0;
    double dop_mean = 1.0;  ///< mean received ensemble DOP, filled by the harness

    double raw_key_bps_channel(int c) const {
        return duration_s > 0.0 ? per_channel[static_cast<std::size_t>(c)].sifted / duration_s : 0.0;
    }
};

/// qber_3sigma = 3 sqrt(max(q(1-q)/n, s_b^2/B)) where s_b^2 is the sample
/// variance of the QBER over B = `batches` consecutive batches (0 or 1: binomial only).
/// Throws DomainError on an empty key.
QberReport compute_qber(std::span<const SiftedBit> sifted, double duration_s, int batches = 0);

double binary_entropy(double q);
/// max(0, 1 - 2 h(q)).
double secure_fraction(double q);
/// Positive root of 1 - 2 h(q) by bisection.
double qber_threshold();

void write_report_csv(std::ostream& out, const QberReport& r);
void print_summary(std::ostream& out, const QberReport& r);

}  // namespace incoqkd
