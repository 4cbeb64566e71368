#include "incoqkd/source.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "csv_util.hpp"
#include "incoqkd/error.hpp"

namespace incoqkd {

namespace {

constexpr double kGaussianCutFwhm = 3.0;

double gaussian_sigma(double fwhm) { return fwhm / (2.0 * std::sqrt(2.0 * std::log(2.0))); }

}  // namespace

std::string_view to_string(SpectrumShape s) {
    switch (s) {
        case SpectrumShape::rectangular: return "rectangular";
        case SpectrumShape::gaussian: return "gaussian";
        case SpectrumShape::tabulated: return "tabulated";
    }
    return "?";
}

SpectrumShape parse_spectrum_shape(std::string_view s) {
    if (s == "rectangular") return SpectrumShape::rectangular;
    if (s == "gaussian") return SpectrumShape::gaussian;
    if (s == "tabulated") return SpectrumShape::tabulated;
    throw DomainError("unknown spectrum shape '" + std::string(s) + "'");
}

SourceSpectrum SourceSpectrum::rectangular(double center_nm, double width_nm) {
    SourceSpectrum s;
    s.shape = SpectrumShape::rectangular;
    s.center_nm = center_nm;
    s.width_nm = width_nm;
    s.validate();
    return s;
}

SourceSpectrum SourceSpectrum::gaussian(double center_nm, double fwhm_nm) {
    SourceSpectrum s;
    s.shape = SpectrumShape::gaussian;
    s.center_nm = center_nm;
    s.width_nm = fwhm_nm;
    s.validate();
    return s;
}

SourceSpectrum SourceSpectrum::tabulated(std::vector<std::pair<double, double>> table) {
    SourceSpectrum s;
    s.shape = SpectrumShape::tabulated;
    s.table = std::move(table);
    s.validate();
    if (!s.table.empty()) {
        s.center_nm = 0.5 * (s.table.front().first + s.table.back().first);
        s.width_nm = s.table.back().first - s.table.front().first;
    }
    return s;
}

SourceSpectrum SourceSpectrum::preset(std::string_view name) {
    // Ge-on-Si emission peak (~20 nm around 1581 nm), the same emitter behind
    // the 14-nm BPF at 1590 nm, the ASE seed behind a 25-GHz BPF at 1539.1 nm,
    // and a 1-nm tunable-filter slice at 1578 nm.
    if (name == "geonsi-unfiltered") return gaussian(1581.0, 20.0);
    if (name == "geonsi-filtered") return rectangular(1590.0, 14.0);
    if (name == "ase-filtered") return rectangular(1539.1, 0.2);
    if (name == "ase-otf") return rectangular(1578.0, 1.0);
    throw DomainError("unknown spectrum preset '" + std::string(name) + "'");
}

void SourceSpectrum::validate() const {
    if (shape == SpectrumShape::tabulated) {
        if (table.size() < 2) throw DomainError("tabulated spectrum needs at least 2 points");
        for (std::size_t i = 0; i < table.size(); ++i) {
            if (table[i].second < 0.0) throw DomainError("spectral density must be non-negative");
            if (i > 0 && !(table[i].first > table[i - 1].first)) {
                throw DomainError("tabulated wavelengths must be strictly increasing");
            }
        }
        if (cumulative(table.back().first) <= 0.0) {
            throw DomainError("tabulated spectrum has zero total power");
        }
        return;
    }
    if (!(width_nm > 0.0)) throw DomainError("spectral width must be positive");
    if (!(center_nm > 0.0)) throw DomainError("center wavelength must be positive");
}

std::pair<double, double> SourceSpectrum::support_nm() const {
    switch (shape) {
        case SpectrumShape::rectangular:
            return {center_nm - 0.5 * width_nm, center_nm + 0.5 * width_nm};
        case SpectrumShape::gaussian:
            return {center_nm - kGaussianCutFwhm * width_nm, center_nm + kGaussianCutFwhm * width_nm};
        case SpectrumShape::tabulated:
            return {table.front().first, table.back().first};
    }
    return {center_nm, center_nm};
}

double SourceSpectrum::cumulative(double lambda_nm) const {
    const auto [lo, hi] = support_nm();
    const double x = std::clamp(lambda_nm, lo, hi);
    switch (shape) {
        case SpectrumShape::rectangular:
            return x - lo;
        case SpectrumShape::gaussian: {
            const double k = 1.0 / (std::sqrt(2.0) * gaussian_sigma(width_nm));
            return 0.5 * (std::erf((x - center_nm) * k) - std::erf((lo - center_nm) * k));
        }
        case SpectrumShape::tabulated: {
            // Exact integral of the piecewise-linear density.
            double acc = 0.0;
            for (std::size_t i = 1; i < table.size(); ++i) {
                const auto [x0, y0] = table[i - 1];
                const auto [x1, y1] = table[i];
                if (x <= x0) break;
                const double xe = std::min(x, x1);
                const double ye = y0 + (y1 - y0) * (xe - x0) / (x1 - x0);
                acc += 0.5 * (y0 + ye) * (xe - x0);
            }
            return acc;
        }
    }
    return 0.0;
}

SliceEnsemble slice_spectrum(const SourceSpectrum& spec, int n, double mu) {
    spec.validate();
    if (n < 1) throw DomainError("slice count must be at least 1");
    if (mu < 0.0) throw DomainError("mean photon number must be non-negative");

    const auto [lo, hi] = spec.support_nm();
    const double total = spec.cumulative(hi);
    const double step = (hi - lo) / n;

    SliceEnsemble e;
    e.mu = mu;
    e.slices.reserve(static_cast<std::size_t>(n));
    double prev = 0.0;
    double wsum = 0.0;
    for (int i = 0; i < n; ++i) {
        const double edge = (i + 1 == n) ? hi : lo + step * (i + 1);
        const double c = spec.cumulative(edge);
        SpectralSlice s;
        s.lambda_nm = lo + step * (i + 0.5);
        s.weight = (c - prev) / total;
        prev = c;
        wsum += s.weight;
        e.slices.push_back(s);
    }
    for (auto& s : e.slices) s.weight /= wsum;
    return e;
}

double photon_energy_j(double lambda_nm) {
    return phys::kPlanck * phys::kSpeedOfLight / (lambda_nm * 1e-9);
}

double launch_power_dbm(double mu, double rate_hz, double lambda_nm) {
    if (!(mu > 0.0) || !(rate_hz > 0.0) || !(lambda_nm > 0.0)) {
        throw DomainError("launch power needs positive mu, rate and wavelength");
    }
    const double watts = mu * rate_hz * photon_energy_j(lambda_nm);
    return 10.0 * std::log10(watts / 1e-3);
}

double headroom_db(double source_dbm, double mu, double rate_hz, double lambda_nm) {
    return source_dbm - launch_power_dbm(mu, rate_hz, lambda_nm);
}

std::uint64_t sample_photon_count(double mean, Rng& rng) {
    if (mean < 0.0) throw DomainError("photon mean must be non-negative");
    if (mean == 0.0) return 0;
    std::poisson_distribution<std::uint64_t> dist(mean);
    return dist(rng);
}

SourceSpectrum read_spectrum_csv(std::istream& in) {
    std::string line;
    if (!detail::next_data_line(in, line)) throw IoError("spectrum CSV is empty");
    // The first data line is the mandatory header.
    const auto header = detail::split_csv(line);
    if (header.size() != 2) throw IoError("spectrum CSV header must have 2 columns");
    if (detail::is_number(header[0])) throw IoError("spectrum CSV header line is missing");
    std::vector<std::pair<double, double>> table;
    while (detail::next_data_line(in, line)) {
        const auto f = detail::split_csv(line);
        if (f.size() != 2) throw IoError("spectrum CSV rows must have 2 columns");
        table.emplace_back(detail::to_double(f[0], "wavelength_nm"),
                           detail::to_double(f[1], "relative_density"));
    }
    try {
        return SourceSpectrum::tabulated(std::move(table));
    } catch (const DomainError& e) {
        throw IoError(std::string("invalid spectrum table: ") + e.what());
    }
}

SourceSpectrum load_spectrum_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open spectrum file " + path.string());
    return read_spectrum_csv(in);
}

}  // namespace incoqkd
