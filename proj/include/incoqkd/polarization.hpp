#pragma once

// Stokes/Jones polarization calculus.
//
// Sign convention: right-circular light has S3 = +1, i.e. ey leads ex by
// pi/2, so (1, i)/sqrt(2) maps to (1, 0, 0, 1). The factor two between
// physical angles and angles on the Poincare sphere lives entirely in
// jones_to_stokes; everything else works in Stokes space.
//
// s0 carries whatever unit the caller uses (photons/symbol, mW); nothing
// here converts it.

#include <complex>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace incoqkd {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Relative tolerance for cone and orthogonality checks.
inline constexpr double kPolarizationTolerance = 1e-9;

struct JonesVector {
    std::complex<double> ex{};
    std::complex<double> ey{};

    double intensity() const noexcept { return std::norm(ex) + std::norm(ey); }
    JonesVector normalized() const;
};

struct StokesVector {
    double s0 = 0.0;
    double s1 = 0.0;
    double s2 = 0.0;
    double s3 = 0.0;

    StokesVector() = default;
    StokesVector(double s0_, double s1_, double s2_, double s3_)
        : s0(s0_), s1(s1_), s2(s2_), s3(s3_) {}

    /// Power s0 with polarized part `dop * s0` along `axis` (normalized here).
    static StokesVector from_axis(const Vec3& axis, double power = 1.0, double dop = 1.0);
    static StokesVector unpolarized(double power = 1.0) { return {power, 0.0, 0.0, 0.0}; }

    Vec3 polarized() const { return {s1, s2, s3}; }
    double polarized_power() const { return polarized().norm(); }

    /// s1^2 + s2^2 + s3^2 <= s0^2 within the relative tolerance, and s0 >= 0.
    bool is_physical(double rel_tol = kPolarizationTolerance) const;

    StokesVector& operator+=(const StokesVector& o) {
        s0 += o.s0;
        s1 += o.s1;
        s2 += o.s2;
        s3 += o.s3;
        return *this;
    }
    friend StokesVector operator*(double k, const StokesVector& s) {
        return {k * s.s0, k * s.s1, k * s.s2, k * s.s3};
    }
    friend bool operator==(const StokesVector&, const StokesVector&) = default;
};

/// Lossless birefringence (rotation of the polarized part) followed by a
/// polarization-independent transmittance.
class PoincareRotation {
  public:
    PoincareRotation() = default;
    /// Throws DomainError unless `m` is a proper rotation and 0 < t <= 1.
    explicit PoincareRotation(const Mat3& m, double transmittance = 1.0);

    static PoincareRotation identity() { return {}; }
    /// Right-handed rotation by `angle` about `axis` (normalized here).
    static PoincareRotation about_axis(const Vec3& axis, double angle, double transmittance = 1.0);

    const Mat3& matrix() const noexcept { return m_; }
    double transmittance() const noexcept { return t_; }

    /// Undoes the birefringence; the inverse carries no loss.
    PoincareRotation inverse_rotation() const;
    /// Apply `rhs` first, then `*this`.
    PoincareRotation operator*(const PoincareRotation& rhs) const;

  private:
    struct Unchecked {};
    PoincareRotation(const Mat3& m, double t, Unchecked) : m_(m), t_(t) {}

    Mat3 m_ = Mat3::Identity();
    double t_ = 1.0;
};

/// One spectral component of a broadband signal.
struct SpectralSlice {
    double lambda_nm = 0.0;
    double weight = 0.0;  ///< fraction of total power
    StokesVector state = StokesVector::unpolarized();
};

/// Incoherent superposition of slices; `mu` is the mean photon number per symbol.
struct SliceEnsemble {
    std::vector<SpectralSlice> slices;
    double mu = 0.0;

    bool empty() const noexcept { return slices.empty(); }
    std::size_t size() const noexcept { return slices.size(); }
    /// Power-weighted mean optical frequency expressed as a wavelength.
    double center_lambda_nm() const;
    /// Throws DomainError on weights not summing to 1, non-increasing lambda, or mu < 0.
    void validate() const;
};

StokesVector jones_to_stokes(const JonesVector& j);

double degree_of_polarization(const StokesVector& s);

StokesVector rotate(const StokesVector& s, const PoincareRotation& r);

/// Power in the pass arm of an analyzer whose pass state is `axis`.
double analyzer_transmission(const StokesVector& s, const Vec3& axis);

struct ArmPowers {
    double pass = 0.0;
    double block = 0.0;
};

/// Both PBS arms; block = s0 - pass, so the arms sum to s0 up to rounding.
ArmPowers analyzer_split(const StokesVector& s, const Vec3& axis);

/// Weighted component-wise sum of the slice states.
StokesVector ensemble_mean(std::span<const SpectralSlice> slices);
inline StokesVector ensemble_mean(const SliceEnsemble& e) { return ensemble_mean(e.slices); }

/// Angle in [0, pi] between the polarized parts of two states.
double angular_separation(const StokesVector& a, const StokesVector& b);

}  // namespace incoqkd
