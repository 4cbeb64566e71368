#include "incoqkd/encoder.hpp"

#include <bit>
#include <cmath>
#include <istream>
#include <ostream>

#include "csv_util.hpp"
#include "incoqkd/error.hpp"
#include "incoqkd/random.hpp"
#include "incoqkd/source.hpp"

namespace incoqkd {

namespace {

// Feedback taps (1-based stage numbers) of primitive polynomials, one per order.
constexpr std::array<std::array<int, 4>, 25> kLfsrTaps{{
    {7, 6, 0, 0},    {8, 6, 5, 4},    {9, 5, 0, 0},    {10, 7, 0, 0},   {11, 9, 0, 0},
    {12, 6, 4, 1},   {13, 4, 3, 1},   {14, 5, 3, 1},   {15, 14, 0, 0},  {16, 15, 13, 4},
    {17, 14, 0, 0},  {18, 11, 0, 0},  {19, 6, 2, 1},   {20, 17, 0, 0},  {21, 19, 0, 0},
    {22, 21, 0, 0},  {23, 18, 0, 0},  {24, 23, 22, 17}, {25, 22, 0, 0}, {26, 6, 2, 1},
    {27, 5, 2, 1},   {28, 25, 0, 0},  {29, 27, 0, 0},  {30, 6, 4, 1},   {31, 28, 0, 0},
}};

constexpr int kMinOrder = 7;
constexpr int kMaxOrder = 31;

}  // namespace

Vec3 state_axis(Bb84State s) {
    switch (s) {
        case Bb84State::H: return {1.0, 0.0, 0.0};
        case Bb84State::V: return {-1.0, 0.0, 0.0};
        case Bb84State::D: return {0.0, 1.0, 0.0};
        case Bb84State::A: return {0.0, -1.0, 0.0};
        case Bb84State::R: return {0.0, 0.0, 1.0};
        case Bb84State::L: return {0.0, 0.0, -1.0};
    }
    return {0.0, 0.0, 0.0};
}

std::string_view state_label(Bb84State s) {
    static constexpr std::array<std::string_view, 6> labels{"H", "V", "D", "A", "R", "L"};
    return labels[static_cast<std::size_t>(s)];
}

Bb84State parse_state(std::string_view label) {
    for (auto s : kAllStates) {
        if (state_label(s) == label) return s;
    }
    throw DomainError("unknown BB84 state '" + std::string(label) + "'");
}

std::string_view to_string(BasisSet b) { return b == BasisSet::HV_DA ? "HV_DA" : "DA_RL"; }

BasisSet parse_basis_set(std::string_view s) {
    if (s == "HV_DA") return BasisSet::HV_DA;
    if (s == "DA_RL") return BasisSet::DA_RL;
    throw DomainError("unknown basis set '" + std::string(s) + "'");
}

std::string_view to_string(Architecture a) {
    return a == Architecture::four_modulator ? "four-modulator" : "dualpol-iq";
}

Architecture parse_architecture(std::string_view s) {
    if (s == "four-modulator") return Architecture::four_modulator;
    if (s == "dualpol-iq") return Architecture::dualpol_iq;
    throw DomainError("unknown encoder architecture '" + std::string(s) + "'");
}

double EncoderConfig::visibility() const {
    const double er = std::pow(10.0, extinction_db / 10.0);
    return (er - 1.0) / (er + 1.0);
}

void EncoderConfig::validate() const {
    if (!(extinction_db > 0.0)) throw DomainError("extinction_db must be positive");
    if (tx_dgd_ps < 0.0) throw DomainError("tx_dgd_ps must be non-negative");
    if (architecture == Architecture::four_modulator && tx_dgd_ps != 0.0) {
        throw DomainError("four-modulator architecture has no transmitter DGD");
    }
    if (architecture == Architecture::dualpol_iq && basis_set != BasisSet::DA_RL) {
        throw DomainError("dualpol-iq encoder only prepares states in the S2/S3 plane (DA_RL)");
    }
    if (!(carve_duty > 0.0 && carve_duty <= 1.0)) throw DomainError("carve_duty must lie in (0, 1]");
    if (drive_bandwidth_hz && !(*drive_bandwidth_hz > 0.0)) {
        throw DomainError("drive_bandwidth_hz must be positive when set");
    }
}

Lfsr::Lfsr(int order, std::uint64_t state) : order_(order), taps_(0) {
    if (order < kMinOrder || order > kMaxOrder) {
        throw DomainError("unsupported PRBS order " + std::to_string(order) + " (7..31)");
    }
    for (int t : kLfsrTaps[static_cast<std::size_t>(order - kMinOrder)]) {
        if (t > 0) taps_ |= std::uint32_t{1} << (t - 1);
    }
    state_ = state % period() + 1;
}

std::uint8_t Lfsr::next() {
    const auto out = static_cast<std::uint8_t>((state_ >> (order_ - 1)) & 1U);
    const auto fb = static_cast<std::uint64_t>(std::popcount(state_ & taps_) & 1);
    state_ = ((state_ << 1) | fb) & period();
    return out;
}

std::vector<std::uint8_t> prbs_bits(int order, std::size_t count, std::uint64_t seed,
                                    std::uint64_t frame_id) {
    Lfsr lfsr(order, splitmix64(seed ^ splitmix64(frame_id)));
    std::vector<std::uint8_t> bits(count);
    for (auto& b : bits) b = lfsr.next();
    return bits;
}

SymbolFrame prbs_frame(int order, std::size_t length, double rate_hz, double mu,
                       std::uint64_t seed, std::uint64_t frame_id) {
    if (length < 2) throw DomainError("frame length must be at least 2");
    if (!(rate_hz > 0.0)) throw DomainError("symbol rate must be positive");
    if (mu < 0.0) throw DomainError("mean photon number must be non-negative");
    const auto bits = prbs_bits(order, 2 * length, seed, frame_id);
    SymbolFrame f;
    f.rate_hz = rate_hz;
    f.mu = mu;
    f.prbs_order = order;
    f.frame_id = frame_id;
    f.seed = seed;
    f.symbols.resize(length);
    for (std::size_t i = 0; i < length; ++i) {
        f.symbols[i] = Symbol{bits[2 * i], bits[2 * i + 1]};
    }
    return f;
}

Bb84State encode_state(int basis_index, int bit, BasisSet set) {
    if ((basis_index != 0 && basis_index != 1) || (bit != 0 && bit != 1)) {
        throw DomainError("basis index and bit must be 0 or 1");
    }
    static constexpr Bb84State hv_da[2][2]{{Bb84State::H, Bb84State::V},
                                           {Bb84State::D, Bb84State::A}};
    static constexpr Bb84State da_rl[2][2]{{Bb84State::D, Bb84State::A},
                                           {Bb84State::R, Bb84State::L}};
    return set == BasisSet::HV_DA ? hv_da[basis_index][bit] : da_rl[basis_index][bit];
}

bool in_basis_set(Bb84State s, BasisSet set) {
    if (set == BasisSet::HV_DA) return s == Bb84State::H || s == Bb84State::V || s == Bb84State::D || s == Bb84State::A;
    return s == Bb84State::D || s == Bb84State::A || s == Bb84State::R || s == Bb84State::L;
}

Symbol decode_state(Bb84State s, BasisSet set) {
    for (std::uint8_t b = 0; b < 2; ++b) {
        for (std::uint8_t v = 0; v < 2; ++v) {
            if (encode_state(b, v, set) == s) return {b, v};
        }
    }
    throw DomainError("state " + std::string(state_label(s)) + " is outside basis set " +
                      std::string(to_string(set)));
}

StokesVector phase_to_stokes(double phi) { return {1.0, 0.0, std::cos(phi), std::sin(phi)}; }

Bb84State phase_to_state(double phi) {
    static constexpr Bb84State ring[4]{Bb84State::D, Bb84State::R, Bb84State::A, Bb84State::L};
    double q = std::fmod(phi / (0.5 * M_PI), 4.0);
    if (q < 0.0) q += 4.0;
    return ring[static_cast<int>(std::lround(q)) % 4];
}

double state_phase(Bb84State s) {
    switch (s) {
        case Bb84State::D: return 0.0;
        case Bb84State::R: return 0.5 * M_PI;
        case Bb84State::A: return M_PI;
        case Bb84State::L: return 1.5 * M_PI;
        default: break;
    }
    throw DomainError("state " + std::string(state_label(s)) + " has no I/Q drive phase");
}

std::complex<double> settled_phasor(Bb84State from, Bb84State to, const EncoderConfig& cfg,
                                    double rate_hz) {
    const double target = state_phase(to);
    if (!cfg.drive_bandwidth_hz) return std::polar(1.0, target);
    const double start = state_phase(from);
    const double tau = 1.0 / (2.0 * M_PI * *cfg.drive_bandwidth_hz);
    const double period = 1.0 / rate_hz;
    const double t0 = period * (0.5 - 0.5 * cfg.carve_duty);
    const double width = period * cfg.carve_duty;
    constexpr int kSamples = 256;
    std::complex<double> acc{};
    for (int k = 0; k < kSamples; ++k) {
        const double t = t0 + width * (k + 0.5) / kSamples;
        acc += std::polar(1.0, target + (start - target) * std::exp(-t / tau));
    }
    return acc / static_cast<double>(kSamples);
}

namespace {

SliceEnsemble stamp(const SliceEnsemble& ensemble, const EncoderConfig& cfg, Bb84State state,
                    std::complex<double> phasor) {
    ensemble.validate();
    cfg.validate();
    if (!in_basis_set(state, cfg.basis_set)) {
        throw DomainError("state " + std::string(state_label(state)) + " is outside basis set " +
                          std::string(to_string(cfg.basis_set)));
    }
    const double v = cfg.visibility();
    SliceEnsemble out = ensemble;
    if (cfg.architecture == Architecture::four_modulator) {
        const auto s = StokesVector::from_axis(state_axis(state), 1.0, v);
        for (auto& sl : out.slices) sl.state = s;
        return out;
    }
    const double lambda0 = ensemble.center_lambda_nm();
    const double k = 2.0 * M_PI * phys::kSpeedOfLightNmPerPs * cfg.tx_dgd_ps;
    for (auto& sl : out.slices) {
        const double dphi = k * (1.0 / sl.lambda_nm - 1.0 / lambda0);
        const auto p = phasor * std::polar(1.0, dphi);
        sl.state = {1.0, 0.0, v * p.real(), v * p.imag()};
    }
    return out;
}

}  // namespace

SliceEnsemble prepare_slices(Bb84State state, const SliceEnsemble& ensemble,
                             const EncoderConfig& cfg) {
    std::complex<double> phasor{1.0, 0.0};
    if (cfg.architecture == Architecture::dualpol_iq && in_basis_set(state, BasisSet::DA_RL)) {
        phasor = std::polar(1.0, state_phase(state));
    }
    return stamp(ensemble, cfg, state, phasor);
}

SliceEnsemble prepare_slices(Bb84State previous, Bb84State state, const SliceEnsemble& ensemble,
                             const EncoderConfig& cfg, double rate_hz) {
    if (cfg.architecture != Architecture::dualpol_iq || !cfg.drive_bandwidth_hz ||
        !in_basis_set(state, BasisSet::DA_RL) || !in_basis_set(previous, BasisSet::DA_RL)) {
        return prepare_slices(state, ensemble, cfg);
    }
    return stamp(ensemble, cfg, state, settled_phasor(previous, state, cfg, rate_hz));
}

EmissionGate carve(const SymbolFrame& frame, double duty) {
    if (!(duty > 0.0 && duty <= 1.0)) throw DomainError("carving duty must lie in (0, 1]");
    if (!(frame.rate_hz > 0.0)) throw DomainError("symbol rate must be positive");
    return EmissionGate{1.0 / frame.rate_hz, duty};
}

void write_frame_csv(std::ostream& out, const SymbolFrame& frame, BasisSet set) {
    out << "symbol_index,basis_index,bit,state_label\n";
    for (std::size_t i = 0; i < frame.size(); ++i) {
        const auto& s = frame.symbols[i];
        out << i << ',' << int(s.basis) << ',' << int(s.bit) << ','
            << state_label(encode_state(s.basis, s.bit, set)) << '\n';
    }
}

SymbolFrame read_frame_csv(std::istream& in) {
    std::string line;
    if (!detail::next_data_line(in, line)) throw IoError("frame CSV is empty");
    const auto header = detail::split_csv(line);
    if (header.size() != 4 || header[0] != "symbol_index") {
        throw IoError("frame CSV header must be symbol_index,basis_index,bit,state_label");
    }
    SymbolFrame f;
    std::uint64_t expected = 0;
    while (detail::next_data_line(in, line)) {
        const auto c = detail::split_csv(line);
        if (c.size() != 4) throw IoError("frame CSV rows must have 4 columns");
        const auto idx = detail::to_int<std::uint64_t>(c[0], "symbol_index");
        if (idx != expected++) throw IoError("frame CSV symbol_index must count up from 0");
        const auto basis = detail::to_int<unsigned>(c[1], "basis_index");
        const auto bit = detail::to_int<unsigned>(c[2], "bit");
        if (basis > 1 || bit > 1) throw IoError("frame CSV basis_index and bit must be 0 or 1");
        f.symbols.push_back(Symbol{static_cast<std::uint8_t>(basis), static_cast<std::uint8_t>(bit)});
    }
    if (f.symbols.size() < 2) throw IoError("frame CSV must hold at least 2 symbols");
    return f;
}

}  // namespace incoqkd
