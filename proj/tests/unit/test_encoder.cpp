#include <doctest.h>

#include <cmath>
#include <complex>
#include <set>
#include <sstream>

#include "incoqkd/encoder.hpp"
#include "incoqkd/error.hpp"
#include "incoqkd/source.hpp"

using namespace incoqkd;

namespace {

double sinc(double x) { return x == 0.0 ? 1.0 : std::sin(M_PI * x) / (M_PI * x); }

// Optical bandwidth in THz of a wavelength band.
double band_thz(double lo_nm, double hi_nm) { return 299792.458 * (1.0 / lo_nm - 1.0 / hi_nm); }

}  // namespace

TEST_SUITE("encoder") {

TEST_CASE("LFSR has maximal period") {
    for (int order = 7; order <= 20; ++order) {
        Lfsr l(order, 1);
        const std::uint64_t start = l.state();
        std::uint64_t steps = 0;
        std::uint64_t ones = 0;
        do {
            ones += l.next();
            ++steps;
        } while (l.state() != start && steps <= l.period());
        CHECK_MESSAGE(steps == l.period(), "order " << order);
        // a maximal sequence has 2^(n-1) ones per period
        CHECK(ones == (std::uint64_t{1} << (order - 1)));
    }
    CHECK_THROWS_AS(Lfsr(6, 1), DomainError);
    CHECK_THROWS_AS(Lfsr(32, 1), DomainError);
}

TEST_CASE("LFSR state is never zero") {
    Lfsr l(9, 0);
    CHECK(l.state() != 0);
    Lfsr m(9, l.period());
    CHECK(m.state() != 0);
}

TEST_CASE("PRBS frame: even bits give the basis, deterministic in the seed") {
    const auto bits = prbs_bits(15, 200, 42, 3);
    const auto frame = prbs_frame(15, 100, 1e9, 0.1, 42, 3);
    REQUIRE(frame.size() == 100);
    for (std::size_t i = 0; i < 100; ++i) {
        CHECK(frame.symbols[i].basis == bits[2 * i]);
        CHECK(frame.symbols[i].bit == bits[2 * i + 1]);
    }
    CHECK(prbs_frame(15, 100, 1e9, 0.1, 42, 3).symbols == frame.symbols);
    CHECK(prbs_frame(15, 100, 1e9, 0.1, 43, 3).symbols != frame.symbols);
    CHECK(prbs_frame(15, 100, 1e9, 0.1, 42, 4).symbols != frame.symbols);
}

TEST_CASE("PRBS symbols are balanced") {
    const auto f = prbs_frame(17, 100000, 1e9, 0.1, 7);
    std::array<int, 4> n{};
    for (const auto& s : f.symbols) ++n[2 * s.basis + s.bit];
    for (int c : n) CHECK(std::abs(c - 25000) < 600);
}

TEST_CASE("state mapping is a bijection in both basis sets") {
    for (auto set : {BasisSet::HV_DA, BasisSet::DA_RL}) {
        std::set<Bb84State> seen;
        for (int b = 0; b < 2; ++b) {
            for (int bit = 0; bit < 2; ++bit) {
                const auto st = encode_state(b, bit, set);
                CHECK(in_basis_set(st, set));
                seen.insert(st);
                const auto back = decode_state(st, set);
                CHECK(back.basis == b);
                CHECK(back.bit == bit);
            }
        }
        CHECK(seen.size() == 4);
    }
    CHECK(encode_state(0, 0, BasisSet::HV_DA) == Bb84State::H);
    CHECK(encode_state(1, 1, BasisSet::HV_DA) == Bb84State::A);
    CHECK(encode_state(1, 0, BasisSet::DA_RL) == Bb84State::R);
    CHECK_THROWS_AS(decode_state(Bb84State::H, BasisSet::DA_RL), DomainError);
    CHECK_THROWS_AS(encode_state(2, 0, BasisSet::HV_DA), DomainError);
}

TEST_CASE("bits of one basis are antipodal, bases are conjugate") {
    for (auto set : {BasisSet::HV_DA, BasisSet::DA_RL}) {
        for (int b = 0; b < 2; ++b) {
            CHECK(state_axis(encode_state(b, 0, set)).dot(state_axis(encode_state(b, 1, set))) ==
                  doctest::Approx(-1.0));
            CHECK(std::abs(state_axis(encode_state(b, 0, set)).dot(state_axis(encode_state(1 - b, 0, set)))) <
                  1e-12);
        }
    }
}

TEST_CASE("labels round-trip") {
    for (auto s : kAllStates) CHECK(parse_state(state_label(s)) == s);
    CHECK_THROWS_AS(parse_state("X"), DomainError);
}

TEST_CASE("phase steering in the S2/S3 plane") {
    auto s = phase_to_stokes(0.0);
    CHECK(s.s2 == doctest::Approx(1.0));
    s = phase_to_stokes(M_PI / 2);
    CHECK(s.s3 == doctest::Approx(1.0));
    s = phase_to_stokes(M_PI);
    CHECK(s.s2 == doctest::Approx(-1.0));
    CHECK(phase_to_state(0.1) == Bb84State::D);
    CHECK(phase_to_state(M_PI / 2 - 0.2) == Bb84State::R);
    CHECK(phase_to_state(M_PI + 0.3) == Bb84State::A);
    CHECK(phase_to_state(-M_PI / 2) == Bb84State::L);
    for (auto st : {Bb84State::D, Bb84State::R, Bb84State::A, Bb84State::L}) {
        CHECK(phase_to_state(state_phase(st)) == st);
    }
    CHECK_THROWS_AS(state_phase(Bb84State::H), DomainError);
}

TEST_CASE("visibility from extinction ratio") {
    EncoderConfig c;
    c.extinction_db = 20.0;
    CHECK(c.visibility() == doctest::Approx(99.0 / 101.0));
    c.extinction_db = 300.0;
    CHECK(c.visibility() == 1.0);
}

TEST_CASE("four-modulator preparation is wavelength independent") {
    EncoderConfig c;
    c.extinction_db = 20.0;
    const auto base = slice_spectrum(SourceSpectrum::preset("geonsi-unfiltered"), 32, 0.1);
    const auto e = prepare_slices(Bb84State::V, base, c);
    for (const auto& s : e.slices) {
        CHECK(s.state.s0 == doctest::Approx(1.0));
        CHECK(s.state.s1 == doctest::Approx(-c.visibility()));
    }
    CHECK(e.mu == 0.1);
}

TEST_CASE("transmitter DGD depolarizes as |sinc(tau dnu)|") {
    EncoderConfig c;
    c.architecture = Architecture::dualpol_iq;
    c.basis_set = BasisSet::DA_RL;
    c.extinction_db = 300.0;
    const auto spec = SourceSpectrum::rectangular(1578.0, 1.0);
    const auto base = slice_spectrum(spec, 1000);
    const double dnu = band_thz(1577.5, 1578.5);
    for (double x : {0.25, 0.5, 0.75, 1.0}) {
        c.tx_dgd_ps = x / dnu;
        for (auto st : {Bb84State::D, Bb84State::R}) {
            const auto m = ensemble_mean(prepare_slices(st, base, c));
            CHECK(degree_of_polarization(m) == doctest::Approx(std::abs(sinc(x))).epsilon(1e-3));
        }
    }
}

TEST_CASE("DGD leaves the center wavelength on its nominal state") {
    EncoderConfig c;
    c.architecture = Architecture::dualpol_iq;
    c.basis_set = BasisSet::DA_RL;
    c.tx_dgd_ps = 0.4;
    c.extinction_db = 300.0;
    const auto base = slice_spectrum(SourceSpectrum::rectangular(1578.0, 2.0), 101);
    const auto m = ensemble_mean(prepare_slices(Bb84State::R, base, c));
    // symmetric spectrum: the mean stays on the R axis
    CHECK(m.s3 > 0.0);
    CHECK(std::abs(m.s2) < 1e-3 * m.s3);
}

TEST_CASE("drive bandwidth: unlimited settles exactly, slow drive blurs") {
    EncoderConfig c;
    c.architecture = Architecture::dualpol_iq;
    c.basis_set = BasisSet::DA_RL;
    auto p = settled_phasor(Bb84State::D, Bb84State::R, c, 1e9);
    CHECK(p.real() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(p.imag() == doctest::Approx(1.0));
    c.drive_bandwidth_hz = 20e9;
    const auto fast = settled_phasor(Bb84State::D, Bb84State::A, c, 1e9);
    c.drive_bandwidth_hz = 0.5e9;
    const auto slow = settled_phasor(Bb84State::D, Bb84State::A, c, 1e9);
    CHECK(std::abs(fast - std::polar(1.0, M_PI)) < std::abs(slow - std::polar(1.0, M_PI)));
    CHECK(std::abs(slow) <= 1.0 + 1e-12);
    // no transition, nothing to blur
    const auto same = settled_phasor(Bb84State::R, Bb84State::R, c, 1e9);
    CHECK(std::abs(same - std::polar(1.0, M_PI / 2)) < 1e-12);
}

TEST_CASE("configuration checks") {
    EncoderConfig c;
    c.tx_dgd_ps = 0.1;
    CHECK_THROWS_AS(c.validate(), DomainError);
    c = {};
    c.architecture = Architecture::dualpol_iq;
    c.basis_set = BasisSet::HV_DA;
    CHECK_THROWS_AS(c.validate(), DomainError);
    c = {};
    c.carve_duty = 0.0;
    CHECK_THROWS_AS(c.validate(), DomainError);
    c.carve_duty = 0.5;
    CHECK_NOTHROW(c.validate());
}

TEST_CASE("carving gate") {
    const auto f = prbs_frame(9, 100, 1e9, 0.1, 1);
    const auto g = carve(f, 0.5);
    CHECK(g.period_s == doctest::Approx(1e-9));
    CHECK(g.window_s() == doctest::Approx(0.5e-9));
    CHECK(g.window_start_s(3) == doctest::Approx(3.25e-9));
    CHECK(g.window_end_s(3) == doctest::Approx(3.75e-9));
    CHECK(g.emission_time_s(3, 0.5) == doctest::Approx(3.5e-9));
    CHECK_THROWS_AS(carve(f, 1.5), DomainError);
}

TEST_CASE("frame CSV round trip") {
    const auto f = prbs_frame(11, 500, 1e9, 0.1, 9);
    std::stringstream ss;
    write_frame_csv(ss, f, BasisSet::DA_RL);
    const std::string text = ss.str();
    CHECK(text.rfind("symbol_index,basis_index,bit,state_label\n", 0) == 0);
    const auto back = read_frame_csv(ss);
    CHECK(back.symbols == f.symbols);
    std::istringstream bad("symbol_index,basis_index,bit,state_label\n0,0,1,V\n2,1,0,D\n");
    CHECK_THROWS(read_frame_csv(bad));
}

}  // TEST_SUITE
