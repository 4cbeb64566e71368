#include <doctest.h>

#include <cmath>
#include <sstream>

#include "incoqkd/error.hpp"
#include "incoqkd/source.hpp"

using namespace incoqkd;

TEST_SUITE("source") {

TEST_CASE("launch power against first principles") {
    // E = h c / lambda; P = mu R E
    const double e = 6.62607015e-34 * 299792458.0 / 1581e-9;
    const double p_mw = 0.1 * 1e8 * e / 1e-3;
    CHECK(launch_power_dbm(0.1, 1e8, 1581.0) == doctest::Approx(10.0 * std::log10(p_mw)).epsilon(1e-12));
    CHECK(launch_power_dbm(0.1, 1e8, 1581.0) == doctest::Approx(-89.009).epsilon(1e-5));
    CHECK(photon_energy_j(1581.0) == doctest::Approx(e));
}

TEST_CASE("launch power scales 10 dB per decade of rate") {
    const double a = launch_power_dbm(0.1, 1e8, 1550.0);
    const double b = launch_power_dbm(0.1, 1e9, 1550.0);
    CHECK(b - a == doctest::Approx(10.0));
    CHECK(headroom_db(-69.8, 0.1, 1e8, 1550.0) == doctest::Approx(-69.8 - a));
    CHECK_THROWS_AS(launch_power_dbm(0.0, 1e8, 1581.0), DomainError);
}

TEST_CASE("slicing: weights sum to one, midpoints inside the band") {
    for (const char* name : {"geonsi-unfiltered", "geonsi-filtered", "ase-filtered", "ase-otf"}) {
        const auto spec = SourceSpectrum::preset(name);
        const auto e = slice_spectrum(spec, 64, 0.1);
        double w = 0.0;
        for (const auto& s : e.slices) w += s.weight;
        CHECK(w == doctest::Approx(1.0));
        CHECK(e.mu == 0.1);
        const auto [lo, hi] = spec.support_nm();
        CHECK(e.slices.front().lambda_nm > lo);
        CHECK(e.slices.back().lambda_nm < hi);
        CHECK_NOTHROW(e.validate());
    }
    CHECK_THROWS_AS(SourceSpectrum::preset("laser"), DomainError);
}

TEST_CASE("rectangular slices are equal, gaussian slices peak at the center") {
    const auto r = slice_spectrum(SourceSpectrum::rectangular(1578, 1), 10);
    for (const auto& s : r.slices) CHECK(s.weight == doctest::Approx(0.1));
    const auto g = slice_spectrum(SourceSpectrum::gaussian(1581, 20), 11);
    CHECK(g.slices[5].weight > g.slices[4].weight);
    CHECK(g.slices[5].weight > g.slices[6].weight);
    CHECK(g.slices[5].lambda_nm == doctest::Approx(1581.0));
    // mass within +-FWHM/2 of a gaussian is erf(sqrt(ln 2)) = 0.7610
    const auto spec = SourceSpectrum::gaussian(1581, 20);
    const double total = spec.cumulative(spec.support_nm().second);
    CHECK((spec.cumulative(1591) - spec.cumulative(1571)) / total == doctest::Approx(0.76100).epsilon(1e-3));
}

TEST_CASE("Poisson photon counts: mean and variance") {
    Rng rng(17);
    for (double mean : {0.1, 2.0, 40.0}) {
        const int n = 200000;
        double s = 0.0;
        double s2 = 0.0;
        for (int i = 0; i < n; ++i) {
            const double k = static_cast<double>(sample_photon_count(mean, rng));
            s += k;
            s2 += k * k;
        }
        const double m = s / n;
        const double v = s2 / n - m * m;
        CHECK(m == doctest::Approx(mean).epsilon(5.0 * std::sqrt(mean / n) / mean));
        CHECK(v == doctest::Approx(mean).epsilon(0.03));
    }
    CHECK(sample_photon_count(0.0, rng) == 0);
}

TEST_CASE("zero-photon fraction at mu = 0.1") {
    Rng rng(23);
    const int n = 1000000;
    int zeros = 0;
    for (int i = 0; i < n; ++i) zeros += sample_photon_count(0.1, rng) == 0;
    const double p0 = std::exp(-0.1);
    CHECK(std::abs(zeros / double(n) - p0) < 5.0 * std::sqrt(p0 * (1 - p0) / n));
}

TEST_CASE("spectrum CSV") {
    std::istringstream in("wavelength_nm,relative_density\n1570,0.5\n1580,1.0\n1590,0.25\n");
    const auto spec = read_spectrum_csv(in);
    CHECK(spec.shape == SpectrumShape::tabulated);
    CHECK(spec.table.size() == 3);
    const auto e = slice_spectrum(spec, 20);
    double w = 0.0;
    for (const auto& s : e.slices) w += s.weight;
    CHECK(w == doctest::Approx(1.0));
    std::istringstream bad("wavelength_nm,relative_density\n1570,0.5\n1560,1.0\n");
    CHECK_THROWS(read_spectrum_csv(bad));
}

}  // TEST_SUITE
