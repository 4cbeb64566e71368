#pragma once

// Alice: PRBS framing, BB84 state mapping for the four-modulator and the
// dual-polarization I/Q encoder, wavelength-dependent preparation and pulse
// carving.

#include <array>
#include <complex>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

#include "incoqkd/polarization.hpp"

namespace incoqkd {

enum class Bb84State : std::uint8_t { H, V, D, A, R, L };

inline constexpr std::array<Bb84State, 6> kAllStates{Bb84State::H, Bb84State::V, Bb84State::D,
                                                     Bb84State::A, Bb84State::R, Bb84State::L};

/// Unit Stokes axis: H=+S1, V=-S1, D=+S2, A=-S2, R=+S3, L=-S3.
Vec3 state_axis(Bb84State s);
std::string_view state_label(Bb84State s);
Bb84State parse_state(std::string_view label);

enum class BasisSet : std::uint8_t { HV_DA, DA_RL };

std::string_view to_string(BasisSet b);
BasisSet parse_basis_set(std::string_view s);

enum class Architecture : std::uint8_t { four_modulator, dualpol_iq };

std::string_view to_string(Architecture a);
Architecture parse_architecture(std::string_view s);

struct EncoderConfig {
    Architecture architecture = Architecture::four_modulator;
    BasisSet basis_set = BasisSet::HV_DA;
    double extinction_db = 30.0;  ///< intensity extinction ratio of state preparation
    double tx_dgd_ps = 0.0;       ///< X/Y group delay inside the I/Q modulator
    double carve_duty = 1.0;      ///< emitting fraction of each symbol period
    std::optional<double> drive_bandwidth_hz;  ///< first-order low-pass on the phase drive

    /// Polarized fraction (ER - 1) / (ER + 1) left by finite extinction.
    double visibility() const;
    void validate() const;
};

struct Symbol {
    std::uint8_t basis = 0;
    std::uint8_t bit = 0;
    friend bool operator==(const Symbol&, const Symbol&) = default;
};

/// One PRBS period's worth of symbols. Transmission repeats the frame
/// cyclically; absolute symbol i carries symbols[(i + offset) % size()].
struct SymbolFrame {
    std::vector<Symbol> symbols;
    double rate_hz = 1e9;
    double mu = 0.1;
    int prbs_order = 15;
    std::uint64_t frame_id = 0;
    std::uint64_t seed = 0;

    std::size_t size() const noexcept { return symbols.size(); }
    const Symbol& cyclic(std::uint64_t i) const { return symbols[i % symbols.size()]; }
};

/// Maximal-length Fibonacci LFSR, orders 7..31.
class Lfsr {
  public:
    /// `state` is reduced into [1, 2^order - 1].
    Lfsr(int order, std::uint64_t state);

    int order() const noexcept { return order_; }
    std::uint64_t period() const noexcept { return (std::uint64_t{1} << order_) - 1; }
    std::uint64_t state() const noexcept { return state_; }
    std::uint8_t next();

  private:
    int order_;
    std::uint32_t taps_;
    std::uint64_t state_;
};

/// Raw PRBS bits; the start state is a pure function of (seed, frame_id).
std::vector<std::uint8_t> prbs_bits(int order, std::size_t count, std::uint64_t seed,
                                    std::uint64_t frame_id = 0);

/// Consecutive bit pairs become (basis, bit): even bits select the basis.
SymbolFrame prbs_frame(int order, std::size_t length, double rate_hz, double mu,
                       std::uint64_t seed, std::uint64_t frame_id = 0);

Bb84State encode_state(int basis_index, int bit, BasisSet set);
/// Inverse of encode_state; throws DomainError when `s` is not in `set`.
Symbol decode_state(Bb84State s, BasisSet set);
bool in_basis_set(Bb84State s, BasisSet set);

/// Balanced X/Y with relative phase phi: polarized part (0, cos phi, sin phi).
StokesVector phase_to_stokes(double phi);
/// Nearest of D (0), R (pi/2), A (pi), L (3pi/2).
Bb84State phase_to_state(double phi);
/// Drive phase of D/R/A/L; throws DomainError for H and V.
double state_phase(Bb84State s);

/// Time-averaged phasor exp(i phi(t)) over the emission window when the drive
/// moves from `from` to `to` through a first-order low-pass. Returns
/// exp(i to) when the drive bandwidth is unlimited.
std::complex<double> settled_phasor(Bb84State from, Bb84State to, const EncoderConfig& cfg,
                                    double rate_hz);

/// Stamp `state` onto every slice (weights and mu untouched).
SliceEnsemble prepare_slices(Bb84State state, const SliceEnsemble& ensemble,
                             const EncoderConfig& cfg);

/// As prepare_slices, with the drive transition from `previous` folded in.
SliceEnsemble prepare_slices(Bb84State previous, Bb84State state, const SliceEnsemble& ensemble,
                             const EncoderConfig& cfg, double rate_hz);

/// Emission gate of a carved symbol stream: light leaves only during the
/// central `duty` fraction of each period, with the per-symbol mean photon
/// number unchanged.
struct EmissionGate {
    double period_s = 1e-9;
    double duty = 1.0;

    double window_s() const noexcept { return period_s * duty; }
    double window_start_s(std::uint64_t symbol) const noexcept {
        return period_s * (static_cast<double>(symbol) + 0.5 - 0.5 * duty);
    }
    double window_end_s(std::uint64_t symbol) const noexcept {
        return window_start_s(symbol) + window_s();
    }
    /// Emission instant for a uniform draw u in [0, 1).
    double emission_time_s(std::uint64_t symbol, double u) const noexcept {
        return window_start_s(symbol) + u * window_s();
    }
};

EmissionGate carve(const SymbolFrame& frame, double duty);

/// CSV columns: symbol_index, basis_index, bit, state_label.
void write_frame_csv(std::ostream& out, const SymbolFrame& frame, BasisSet set);
/// Reads symbols only; rate/mu/order keep their defaults.
SymbolFrame read_frame_csv(std::istream& in);

}  // namespace incoqkd
