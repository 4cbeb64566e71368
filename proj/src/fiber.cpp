#include "incoqkd/fiber.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>

#include <Eigen/Geometry>

#include "incoqkd/error.hpp"
#include "incoqkd/source.hpp"

namespace incoqkd {

namespace {

Vec3 random_unit_vector(Rng& rng) {
    // Uniform on the sphere: z uniform in [-1, 1], azimuth uniform.
    const double z = 2.0 * rng.uniform() - 1.0;
    const double phi = 2.0 * M_PI * rng.uniform();
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    return {r * std::cos(phi), r * std::sin(phi), z};
}

double retardance(const FiberSegment& s, double lambda_nm, double ref_lambda_nm) {
    return s.retardance_at_ref +
           2.0 * M_PI * phys::kSpeedOfLightNmPerPs * s.dgd_ps * (1.0 / lambda_nm - 1.0 / ref_lambda_nm);
}

}  // namespace

double FiberModel::transmittance() const {
    return std::pow(10.0, -atten_db_per_km * length_km / 10.0);
}

double FiberModel::rss_dgd_ps() const {
    double acc = 0.0;
    for (const auto& s : segments) acc += s.dgd_ps * s.dgd_ps;
    return std::sqrt(acc);
}

PoincareRotation FiberModel::rotation_at(double lambda_nm) const {
    Mat3 m = Mat3::Identity();
    for (const auto& s : segments) {
        m = Eigen::AngleAxisd(retardance(s, lambda_nm, ref_lambda_nm), s.axis).toRotationMatrix() * m;
    }
    return PoincareRotation(m);
}

double FiberModel::differential_group_delay_ps(double lambda_nm) const {
    if (segments.empty()) return 0.0;
    const double c = phys::kSpeedOfLightNmPerPs;
    const double omega = 2.0 * M_PI * c / lambda_nm;
    const double d_omega = 1e-4;  // rad/ps
    const double lambda2 = 2.0 * M_PI * c / (omega + d_omega);
    const Mat3 dr = rotation_at(lambda2).matrix() * rotation_at(lambda_nm).matrix().transpose();
    return Eigen::AngleAxisd(dr).angle() / d_omega;
}

FiberModel build_fiber(double length_km, double pmd_coeff_ps_sqrtkm, int n_segments,
                       double atten_db_per_km, double drift_rate, std::uint64_t seed,
                       double ref_lambda_nm) {
    if (length_km < 0.0) throw DomainError("fiber length must be non-negative");
    if (pmd_coeff_ps_sqrtkm < 0.0) throw DomainError("PMD coefficient must be non-negative");
    if (n_segments < 0) throw DomainError("segment count must be non-negative");
    if (atten_db_per_km < 0.0) throw DomainError("attenuation must be non-negative");
    if (drift_rate < 0.0) throw DomainError("drift rate must be non-negative");
    if (!(ref_lambda_nm > 0.0)) throw DomainError("reference wavelength must be positive");

    FiberModel f;
    f.length_km = length_km;
    f.atten_db_per_km = atten_db_per_km;
    f.ref_lambda_nm = ref_lambda_nm;
    f.drift_rate = drift_rate;
    f.seed = seed;
    if (length_km == 0.0) return f;

    const int n = n_segments > 0 ? n_segments
                                 : std::max(16, static_cast<int>(std::ceil(length_km)));
    Rng rng(seed);
    f.segments.resize(static_cast<std::size_t>(n));
    double sq = 0.0;
    for (auto& s : f.segments) {
        s.axis = random_unit_vector(rng);
        s.retardance_at_ref = 2.0 * M_PI * rng.uniform();
        // Segment lengths vary by +-50% around the mean section.
        s.dgd_ps = 0.5 + rng.uniform();
        sq += s.dgd_ps * s.dgd_ps;
    }
    const double target = pmd_coeff_ps_sqrtkm * std::sqrt(length_km);
    const double k = target / std::sqrt(sq);
    for (auto& s : f.segments) s.dgd_ps *= k;
    return f;
}

SliceEnsemble propagate(const SliceEnsemble& ensemble, const FiberModel& fiber) {
    SliceEnsemble out = ensemble;
    out.mu = ensemble.mu * fiber.transmittance();
    if (fiber.segments.empty()) return out;
    for (auto& sl : out.slices) {
        const Vec3 p = fiber.rotation_at(sl.lambda_nm).matrix() * sl.state.polarized();
        sl.state = {sl.state.s0, p.x(), p.y(), p.z()};
    }
    return out;
}

FiberModel drift_step(const FiberModel& fiber, double dt_hours, Rng& rng) {
    if (!(dt_hours > 0.0)) throw DomainError("drift step must be positive");
    FiberModel out = fiber;
    const double sigma = fiber.drift_rate * std::sqrt(dt_hours);
    if (sigma == 0.0) return out;
    for (auto& s : out.segments) {
        // Rotate the axis by a small random angle about a random perpendicular.
        const Vec3 kick{rng.normal(0.0, sigma), rng.normal(0.0, sigma), rng.normal(0.0, sigma)};
        const Vec3 tangential = kick - kick.dot(s.axis) * s.axis;
        const double angle = tangential.norm();
        if (angle > 0.0) {
            s.axis = Eigen::AngleAxisd(angle, s.axis.cross(tangential).normalized()) * s.axis;
            s.axis.normalize();
        }
        s.retardance_at_ref = std::remainder(s.retardance_at_ref + rng.normal(0.0, sigma), 2.0 * M_PI);
        if (s.retardance_at_ref < 0.0) s.retardance_at_ref += 2.0 * M_PI;
    }
    return out;
}

std::vector<TrajectorySample> trajectory(const FiberModel& fiber,
                                         const std::vector<double>& probe_lambdas_nm,
                                         double duration_hours, double step_hours,
                                         const StokesVector& input_state, Rng& rng) {
    if (!(step_hours > 0.0)) throw DomainError("trajectory step must be positive");
    if (duration_hours < 0.0) throw DomainError("trajectory duration must be non-negative");
    if (probe_lambdas_nm.empty()) throw DomainError("at least one probe wavelength is required");
    if (!(input_state.polarized_power() > 0.0)) throw DomainError("probe input must be polarized");

    const auto steps = static_cast<std::size_t>(std::floor(duration_hours / step_hours + 1e-9));
    std::vector<TrajectorySample> out;
    out.reserve((steps + 1) * probe_lambdas_nm.size());
    FiberModel f = fiber;
    const Vec3 in = input_state.polarized().normalized();
    for (std::size_t k = 0; k <= steps; ++k) {
        if (k > 0) f = drift_step(f, step_hours, rng);
        for (double lambda : probe_lambdas_nm) {
            const Vec3 p = f.rotation_at(lambda).matrix() * in;
            out.push_back({static_cast<double>(k) * step_hours, lambda, p.x(), p.y(), p.z()});
        }
    }
    return out;
}

void write_trajectory_csv(std::ostream& out, const std::vector<TrajectorySample>& samples) {
    out << "time_hours,lambda_nm,s1,s2,s3\n";
    char buf[160];
    for (const auto& s : samples) {
        std::snprintf(buf, sizeof buf, "%.6f,%.4f,%.9f,%.9f,%.9f\n", s.time_hours, s.lambda_nm, s.s1,
                      s.s2, s.s3);
        out << buf;
    }
}

double mean_probe_separation(const std::vector<TrajectorySample>& samples, double lambda_a_nm,
                             double lambda_b_nm) {
    std::map<double, std::pair<const TrajectorySample*, const TrajectorySample*>> by_time;
    for (const auto& s : samples) {
        if (s.lambda_nm == lambda_a_nm) by_time[s.time_hours].first = &s;
        if (s.lambda_nm == lambda_b_nm) by_time[s.time_hours].second = &s;
    }
    double acc = 0.0;
    std::size_t n = 0;
    for (const auto& [t, pair] : by_time) {
        if (!pair.first || !pair.second) continue;
        const StokesVector a{1.0, pair.first->s1, pair.first->s2, pair.first->s3};
        const StokesVector b{1.0, pair.second->s1, pair.second->s2, pair.second->s3};
        acc += angular_separation(a, b);
        ++n;
    }
    if (n == 0) throw DomainError("trajectory holds no samples for both probe wavelengths");
    return acc / static_cast<double>(n);
}

}  // namespace incoqkd
