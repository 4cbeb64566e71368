#pragma once

// Single-mode fiber as concatenated random waveplates: attenuation,
// wavelength-dependent birefringence and slow environmental drift.

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "incoqkd/polarization.hpp"
#include "incoqkd/random.hpp"

namespace incoqkd {

struct FiberSegment {
    Vec3 axis = Vec3::UnitX();      ///< birefringence axis on the Poincare sphere (unit)
    double retardance_at_ref = 0.0; ///< radians at ref_lambda_nm
    double dgd_ps = 0.0;
};

struct FiberModel {
    double length_km = 0.0;
    double atten_db_per_km = 0.2;
    std::vector<FiberSegment> segments;
    double ref_lambda_nm = 1550.0;
    double drift_rate = 0.0;  ///< rad / sqrt(hour)
    std::uint64_t seed = 0;

    /// Power transmittance 10^(-alpha L / 10).
    double transmittance() const;
    /// Root-sum-square of the segment DGDs.
    double rss_dgd_ps() const;
    /// Birefringence of the whole fiber at `lambda_nm`.
    PoincareRotation rotation_at(double lambda_nm) const;
    /// Magnitude of the output PMD vector, by finite difference of rotation_at.
    double differential_group_delay_ps(double lambda_nm) const;
};

/// n_segments = 0 selects max(16, ceil(length_km)). Zero length gives an
/// identity channel without segments.
FiberModel build_fiber(double length_km, double pmd_coeff_ps_sqrtkm, int n_segments = 0,
                       double atten_db_per_km = 0.2, double drift_rate = 0.0,
                       std::uint64_t seed = 0, double ref_lambda_nm = 1550.0);

/// Every slice through every segment; mu scaled by the fiber transmittance.
SliceEnsemble propagate(const SliceEnsemble& ensemble, const FiberModel& fiber);

/// Random-walk step of every segment's axis and retardance with scale
/// drift_rate * sqrt(dt_hours).
FiberModel drift_step(const FiberModel& fiber, double dt_hours, Rng& rng);

struct TrajectorySample {
    double time_hours = 0.0;
    double lambda_nm = 0.0;
    double s1 = 0.0;
    double s2 = 0.0;
    double s3 = 0.0;
};

/// Samples at t = 0, step, 2 step, ... <= duration; the fiber drifts with
/// `rng` between samples. Outputs are normalized Stokes vectors.
std::vector<TrajectorySample> trajectory(const FiberModel& fiber,
                                         const std::vector<double>& probe_lambdas_nm,
                                         double duration_hours, double step_hours,
                                         const StokesVector& input_state, Rng& rng);

void write_trajectory_csv(std::ostream& out, const std::vector<TrajectorySample>& samples);

/// Mean over sample times of the angle between two probes' output states.
double mean_probe_separation(const std::vector<TrajectorySample>& samples, double lambda_a_nm,
                             double lambda_b_nm);

}  // namespace incoqkd
