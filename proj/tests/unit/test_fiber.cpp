#include <doctest.h>

#include <cmath>
#include <sstream>

#include "incoqkd/encoder.hpp"
#include "incoqkd/error.hpp"
#include "incoqkd/fiber.hpp"
#include "incoqkd/source.hpp"

using namespace incoqkd;

TEST_SUITE("fiber") {

TEST_CASE("attenuation") {
    const auto f = build_fiber(10.0, 0.05, 0, 0.2, 0.0, 1);
    CHECK(f.transmittance() == doctest::Approx(std::pow(10.0, -0.2)));
    auto e = slice_spectrum(SourceSpectrum::preset("ase-otf"), 8, 0.1);
    e = propagate(e, f);
    CHECK(e.mu == doctest::Approx(0.1 * std::pow(10.0, -0.2)));
}

TEST_CASE("zero length is an identity channel") {
    const auto f = build_fiber(0.0, 0.05, 0, 0.2, 0.0, 1);
    CHECK(f.segments.empty());
    CHECK(f.transmittance() == 1.0);
    EncoderConfig c;
    auto e = prepare_slices(Bb84State::D, slice_spectrum(SourceSpectrum::preset("ase-otf"), 8, 0.1), c);
    const auto out = propagate(e, f);
    for (std::size_t i = 0; i < e.size(); ++i) CHECK(out.slices[i].state == e.slices[i].state);
}

TEST_CASE("segment DGDs add in quadrature to pmd sqrt(L)") {
    double mean = 0.0;
    const int n = 10000;
    for (int k = 0; k < n; ++k) {
        const auto f = build_fiber(12.8, 0.05, 0, 0.2, 0.0, static_cast<std::uint64_t>(k));
        mean += f.rss_dgd_ps();
    }
    mean /= n;
    CHECK(mean == doctest::Approx(0.05 * std::sqrt(12.8)).epsilon(0.02));
    CHECK(build_fiber(4.0, 0.1, 0, 0.2, 0.0, 3).segments.size() == 16);
    CHECK(build_fiber(40.0, 0.1, 0, 0.2, 0.0, 3).segments.size() == 40);
    CHECK(build_fiber(4.0, 0.1, 5, 0.2, 0.0, 3).segments.size() == 5);
}

TEST_CASE("output DGD follows the Maxwellian mean of the concatenation") {
    // mean |tau| = sqrt(8 / (3 pi)) * rms for a vector sum of many random segments
    double mean = 0.0;
    const int n = 3000;
    const double rms = 0.5 * std::sqrt(9.0);
    for (int k = 0; k < n; ++k) {
        const auto f = build_fiber(9.0, 0.5, 64, 0.2, 0.0, 1000 + static_cast<std::uint64_t>(k), 1550.0);
        mean += f.differential_group_delay_ps(1550.0);
    }
    mean /= n;
    CHECK(mean == doctest::Approx(std::sqrt(8.0 / (3.0 * M_PI)) * rms).epsilon(0.04));
}

TEST_CASE("single segment: DGD and depolarization oracle") {
    FiberModel f;
    f.length_km = 1.0;
    f.ref_lambda_nm = 1578.0;
    f.segments = {FiberSegment{Vec3::UnitX(), 0.0, 2.0}};
    CHECK(f.differential_group_delay_ps(1578.0) == doctest::Approx(2.0).epsilon(1e-4));
    // D launched at 45 deg to the eigenaxis: worst case
    EncoderConfig c;
    c.extinction_db = 300.0;
    const auto base = slice_spectrum(SourceSpectrum::rectangular(1578.0, 1.0), 1000, 0.1);
    const double dnu = 299792.458 * (1.0 / 1577.5 - 1.0 / 1578.5);
    const auto out = propagate(prepare_slices(Bb84State::D, base, c), f);
    const double x = 2.0 * dnu;
    CHECK(degree_of_polarization(ensemble_mean(out)) ==
          doctest::Approx(std::abs(std::sin(M_PI * x) / (M_PI * x))).epsilon(1e-3));
    // along the eigenaxis nothing happens
    const auto h = propagate(prepare_slices(Bb84State::H, base, c), f);
    CHECK(degree_of_polarization(ensemble_mean(h)) == doctest::Approx(1.0));
}

TEST_CASE("propagation keeps every slice fully polarized") {
    const auto f = build_fiber(5.0, 0.5, 0, 0.2, 0.0, 8);
    EncoderConfig c;
    c.extinction_db = 300.0;
    const auto out = propagate(prepare_slices(Bb84State::H, slice_spectrum(SourceSpectrum::preset("geonsi-filtered"), 64), c), f);
    for (const auto& s : out.slices) CHECK(degree_of_polarization(s.state) == doctest::Approx(1.0));
}

TEST_CASE("drift: zero rate freezes the fiber, small steps move it a little") {
    const auto f = build_fiber(5.0, 0.1, 0, 0.2, 0.0, 8, 1578.0);
    Rng rng(1);
    const auto g = drift_step(f, 1.0, rng);
    for (std::size_t i = 0; i < f.segments.size(); ++i) {
        CHECK(g.segments[i].retardance_at_ref == f.segments[i].retardance_at_ref);
    }
    auto h = build_fiber(5.0, 0.1, 0, 0.2, 0.1, 8, 1578.0);
    const auto moved = drift_step(h, 1.0 / 12.0, rng);
    double dmax = 0.0;
    for (std::size_t i = 0; i < h.segments.size(); ++i) {
        CHECK(moved.segments[i].axis.norm() == doctest::Approx(1.0));
        CHECK(moved.segments[i].dgd_ps == h.segments[i].dgd_ps);
        dmax = std::max(dmax, (moved.segments[i].axis - h.segments[i].axis).norm());
    }
    CHECK(dmax > 0.0);
    CHECK(dmax < 0.2);
}

TEST_CASE("trajectory: sample grid, unit vectors, reproducible") {
    const auto f = build_fiber(9.1, 0.05, 0, 0.2, 0.1, 2, 1578.0);
    Rng a(5);
    Rng b(5);
    const StokesVector in{1, 0, 1, 0};
    const auto t1 = trajectory(f, {1570.0, 1585.0}, 5.0, 1.0 / 12.0, in, a);
    const auto t2 = trajectory(f, {1570.0, 1585.0}, 5.0, 1.0 / 12.0, in, b);
    CHECK(t1.size() == 2 * 61);
    for (std::size_t i = 0; i < t1.size(); ++i) {
        CHECK(t1[i].s1 == t2[i].s1);
        CHECK(std::hypot(t1[i].s1, t1[i].s2, t1[i].s3) == doctest::Approx(1.0));
    }
    CHECK(t1.back().time_hours == doctest::Approx(5.0));
    std::ostringstream os;
    write_trajectory_csv(os, t1);
    CHECK(os.str().rfind("time_hours,lambda_nm,s1,s2,s3\n", 0) == 0);
    const double sep = mean_probe_separation(t1, 1570.0, 1585.0);
    CHECK(sep >= 0.0);
    CHECK(sep <= M_PI);
}

TEST_CASE("argument checks") {
    CHECK_THROWS_AS(build_fiber(-1.0, 0.05), DomainError);
    CHECK_THROWS_AS(build_fiber(1.0, -0.05), DomainError);
    CHECK_THROWS_AS(build_fiber(1.0, 0.05, -2), DomainError);
}

}  // TEST_SUITE
