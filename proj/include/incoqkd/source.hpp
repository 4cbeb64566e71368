#pragma once

// Incoherent emitter: spectrum, spectral slicing, photon budget and
// per-symbol photon statistics.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "incoqkd/polarization.hpp"
#include "incoqkd/random.hpp"

namespace incoqkd {

namespace phys {
inline constexpr double kPlanck = 6.62607015e-34;       // J s
inline constexpr double kSpeedOfLight = 299792458.0;    // m/s
inline constexpr double kSpeedOfLightNmPerPs = 299792.458;
}  // namespace phys

enum class SpectrumShape { rectangular, gaussian, tabulated };

std::string_view to_string(SpectrumShape s);
SpectrumShape parse_spectrum_shape(std::string_view s);

struct SourceSpectrum {
    SpectrumShape shape = SpectrumShape::rectangular;
    double center_nm = 1578.0;
    /// Full width (rectangular) or FWHM (gaussian); unused for tabulated.
    double width_nm = 1.0;
    /// (lambda_nm, relative density), strictly increasing in lambda.
    std::vector<std::pair<double, double>> table;

    static SourceSpectrum rectangular(double center_nm, double width_nm);
    static SourceSpectrum gaussian(double center_nm, double fwhm_nm);
    static SourceSpectrum tabulated(std::vector<std::pair<double, double>> table);

    /// "geonsi-unfiltered", "geonsi-filtered", "ase-filtered", "ase-otf".
    static SourceSpectrum preset(std::string_view name);

    /// Gaussian spectra are cut at +-3 FWHM.
    std::pair<double, double> support_nm() const;
    /// Unnormalized integral of the density from the lower support edge to `lambda_nm`.
    double cumulative(double lambda_nm) const;

    void validate() const;
};

/// Equal-width bins over the support; each slice sits at its bin midpoint and
/// carries the bin's share of the integrated density. Slices start unpolarized.
SliceEnsemble slice_spectrum(const SourceSpectrum& spec, int n, double mu = 0.0);

double photon_energy_j(double lambda_nm);

double launch_power_dbm(double mu, double rate_hz, double lambda_nm);

double headroom_db(double source_dbm, double mu, double rate_hz, double lambda_nm);

/// Poisson-distributed photon count.
std::uint64_t sample_photon_count(double mean, Rng& rng);

/// Two-column CSV (wavelength_nm, relative_density) with a header line.
SourceSpectrum read_spectrum_csv(std::istream& in);
SourceSpectrum load_spectrum_csv(const std::filesystem::path& path);

}  // namespace incoqkd
