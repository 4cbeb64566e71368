#include "incoqkd/polarization.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Geometry>

#include "incoqkd/error.hpp"

namespace incoqkd {

JonesVector JonesVector::normalized() const {
    const double n = std::sqrt(intensity());
    if (!(n > 0.0)) throw DomainError("cannot normalize a zero Jones vector");
    return {ex / n, ey / n};
}

StokesVector StokesVector::from_axis(const Vec3& axis, double power, double dop) {
    const double n = axis.norm();
    if (!(n > 0.0)) throw DomainError("Stokes axis must be non-zero");
    const Vec3 p = axis * (power * dop / n);
    return {power, p.x(), p.y(), p.z()};
}

bool StokesVector::is_physical(double rel_tol) const {
    if (s0 < 0.0) return false;
    const double pol2 = s1 * s1 + s2 * s2 + s3 * s3;
    return pol2 <= s0 * s0 * (1.0 + rel_tol) + 1e-300;
}

PoincareRotation::PoincareRotation(const Mat3& m, double transmittance)
    : m_(m), t_(transmittance) {
    if (!(transmittance > 0.0 && transmittance <= 1.0)) {
        throw DomainError("transmittance must lie in (0, 1]");
    }
    const double orth = (m * m.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
    if (orth > kPolarizationTolerance || std::abs(m.determinant() - 1.0) > kPolarizationTolerance) {
        throw DomainError("Poincare rotation matrix must be orthogonal with determinant +1");
    }
}

PoincareRotation PoincareRotation::about_axis(const Vec3& axis, double angle, double transmittance) {
    const double n = axis.norm();
    if (!(n > 0.0)) throw DomainError("rotation axis must be non-zero");
    if (!(transmittance > 0.0 && transmittance <= 1.0)) {
        throw DomainError("transmittance must lie in (0, 1]");
    }
    const Mat3 m = Eigen::AngleAxisd(angle, axis / n).toRotationMatrix();
    return {m, transmittance, Unchecked{}};
}

PoincareRotation PoincareRotation::inverse_rotation() const {
    return {m_.transpose(), 1.0, Unchecked{}};
}

PoincareRotation PoincareRotation::operator*(const PoincareRotation& rhs) const {
    return {m_ * rhs.m_, t_ * rhs.t_, Unchecked{}};
}

double SliceEnsemble::center_lambda_nm() const {
    if (slices.empty()) throw DomainError("empty ensemble has no center");
    double inv = 0.0;
    double wsum = 0.0;
    for (const auto& s : slices) {
        inv += s.weight / s.lambda_nm;
        wsum += s.weight;
    }
    return wsum / inv;
}

void SliceEnsemble::validate() const {
    if (slices.empty()) throw DomainError("ensemble has no slices");
    if (mu < 0.0) throw DomainError("mean photon number must be non-negative");
    double wsum = 0.0;
    for (std::size_t i = 0; i < slices.size(); ++i) {
        if (slices[i].weight < 0.0) throw DomainError("slice weight must be non-negative");
        if (i > 0 && !(slices[i].lambda_nm > slices[i - 1].lambda_nm)) {
            throw DomainError("slice wavelengths must be strictly increasing");
        }
        wsum += slices[i].weight;
    }
    if (std::abs(wsum - 1.0) > 1e-9) throw DomainError("slice weights must sum to 1");
}

StokesVector jones_to_stokes(const JonesVector& j) {
    const double ix = std::norm(j.ex);
    const double iy = std::norm(j.ey);
    if (!(ix + iy > 0.0)) throw DomainError("invalid state: zero Jones vector");
    // With ey = i*ex (ey leading), ex*conj(ey) = -i|ex|^2, so S3 uses conj(ex)*ey.
    const std::complex<double> c = std::conj(j.ex) * j.ey;
    return {ix + iy, ix - iy, 2.0 * c.real(), 2.0 * c.imag()};
}

double degree_of_polarization(const StokesVector& s) {
    if (!(s.s0 > 0.0)) throw DomainError("degree of polarization undefined for s0 = 0");
    return std::min(1.0, s.polarized_power() / s.s0);
}

StokesVector rotate(const StokesVector& s, const PoincareRotation& r) {
    const Vec3 p = r.matrix() * s.polarized();
    const double t = r.transmittance();
    return {t * s.s0, t * p.x(), t * p.y(), t * p.z()};
}

ArmPowers analyzer_split(const StokesVector& s, const Vec3& axis) {
    const double proj = axis.dot(s.polarized());
    ArmPowers a;
    a.pass = 0.5 * (s.s0 + proj);
    a.block = s.s0 - a.pass;
    return a;
}

double analyzer_transmission(const StokesVector& s, const Vec3& axis) {
    return analyzer_split(s, axis).pass;
}

StokesVector ensemble_mean(std::span<const SpectralSlice> slices) {
    if (slices.empty()) throw DomainError("ensemble_mean of an empty ensemble");
    StokesVector acc{};
    for (const auto& sl : slices) acc += sl.weight * sl.state;
    return acc;
}

double angular_separation(const StokesVector& a, const StokesVector& b) {
    const double na = a.polarized_power();
    const double nb = b.polarized_power();
    if (!(na > 0.0) || !(nb > 0.0)) {
        throw DomainError("angular separation needs non-zero polarized parts");
    }
    const double c = std::clamp(a.polarized().dot(b.polarized()) / (na * nb), -1.0, 1.0);
    return std::acos(c);
}

}  // namespace incoqkd
