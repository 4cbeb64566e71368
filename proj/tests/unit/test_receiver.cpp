#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "incoqkd/error.hpp"
#include "incoqkd/receiver.hpp"
#include "incoqkd/source.hpp"

using namespace incoqkd;

namespace {

std::vector<ArmIntensities> uniform_arms(std::size_t n, double mu0, double mu1) {
    return std::vector<ArmIntensities>(n, ArmIntensities{mu0, mu1});
}

Vec3 random_unit(Rng& rng) {
    const double z = 2.0 * rng.uniform() - 1.0;
    const double phi = 2.0 * M_PI * rng.uniform();
    const double r = std::sqrt(1.0 - z * z);
    return {r * std::cos(phi), r * std::sin(phi), z};
}

}  // namespace

TEST_SUITE("receiver") {

TEST_CASE("compensation maps the reference onto the target") {
    Rng rng(4);
    for (int i = 0; i < 200; ++i) {
        const auto ref = StokesVector::from_axis(random_unit(rng), 1.0, 0.3 + 0.7 * rng.uniform());
        const Vec3 target = random_unit(rng);
        const auto r = align_compensation(ref, target);
        const auto out = rotate(ref, r);
        CHECK((out.polarized().normalized() - target).norm() < 1e-9);
    }
    // antipodal case
    const auto r = align_compensation({1, -1, 0, 0}, {1, 0, 0});
    CHECK(rotate({1, -1, 0, 0}, r).s1 == doctest::Approx(1.0));
    CHECK_THROWS_AS(align_compensation({1, 0, 0, 0}, {1, 0, 0}), DomainError);
}

TEST_CASE("two-state alignment undoes an unknown rotation") {
    Rng rng(9);
    for (int i = 0; i < 100; ++i) {
        const auto fiber = PoincareRotation::about_axis(random_unit(rng), 2 * M_PI * rng.uniform());
        const auto h = rotate({1, 1, 0, 0}, fiber);
        const auto d = rotate({1, 0, 1, 0}, fiber);
        const auto comp = align_frame(h, {1, 0, 0}, d, {0, 1, 0});
        for (const Vec3& v : {Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)}) {
            const auto in = StokesVector::from_axis(v);
            const auto out = rotate(rotate(in, fiber), comp);
            CHECK((out.polarized() - v).norm() < 1e-9);
        }
    }
}

TEST_CASE("arm intensities sum to the received mu") {
    SliceEnsemble e;
    e.mu = 0.05;
    e.slices = {{1578, 0.5, {1, 0.6, 0.8, 0}}, {1579, 0.5, {1, 0, 0, 1}}};
    AnalyzerConfig an;
    an.axis0 = {1, 0, 0};
    const auto a = arm_intensities(e, an);
    CHECK(a.mu0 + a.mu1 == doctest::Approx(0.05));
    CHECK(a.mu0 == doctest::Approx(0.05 * 0.5 * (1 + 0.3)));
}

TEST_CASE("click fraction 1 - exp(-eta mu)") {
    DetectorParams d;
    d.efficiency = 0.1;
    Transmission tx;
    tx.count = 4'000'000;
    const auto arms = uniform_arms(1000, 0.1, 0.0);
    const auto tags = detect_frame(arms, tx, d, d, 77);
    const double p = -std::expm1(-0.01);  // 0.00995
    const double n = static_cast<double>(tx.count);
    CHECK(p == doctest::Approx(0.00995).epsilon(1e-3));
    for (const auto& t : tags) CHECK(t.channel == 0);
    CHECK(std::abs(tags.size() / n - p) < 5.0 * std::sqrt(p * (1 - p) / n));
}

TEST_CASE("signal lands inside the carved window, dark counts anywhere") {
    DetectorParams d;
    d.efficiency = 1.0;
    Transmission tx;
    tx.count = 200000;
    tx.carve_duty = 0.25;
    const auto tags = detect_frame(uniform_arms(64, 0.2, 0.0), tx, d, d, 5);
    REQUIRE(!tags.empty());
    for (const auto& t : tags) {
        const double phase = std::fmod(static_cast<double>(t.t_ps), 1000.0) / 1000.0;
        CHECK(phase >= 0.375 - 1e-3);
        CHECK(phase <= 0.625 + 1e-3);
    }
    DetectorParams dark;
    dark.efficiency = 0.1;
    dark.dark_rate_cps = 1e7;  // 0.01 per ns
    const auto noise = detect_frame(uniform_arms(64, 0.0, 0.0), tx, dark, dark, 6);
    std::array<int, 4> quarter{};
    for (const auto& t : noise) ++quarter[static_cast<std::size_t>((t.t_ps % 1000) / 250)];
    for (int q : quarter) CHECK(std::abs(q - static_cast<double>(noise.size()) / 4) < 5 * std::sqrt(noise.size() / 4.0));
    const double expect = 2.0 * -std::expm1(-0.01) * tx.count;
    CHECK(std::abs(noise.size() - expect) < 5 * std::sqrt(expect));
}

TEST_CASE("dead time: gaps never shorter, rate follows 1/(1 + R tau)") {
    DetectorParams d;
    d.efficiency = 0.5;
    d.dead_time_s = 1e-6;
    Transmission tx;
    tx.count = 20'000'000;
    const auto tags = detect_frame(uniform_arms(128, 0.02, 0.0), tx, d, d, 12);
    std::int64_t min_gap = INT64_MAX;
    for (std::size_t i = 1; i < tags.size(); ++i) min_gap = std::min(min_gap, tags[i].t_ps - tags[i - 1].t_ps);
    CHECK(min_gap >= 1'000'000);
    const double p = -std::expm1(-0.01);
    const double r_true = p * 1e9;
    const double expect = r_true / (1.0 + r_true * 1e-6) * (tx.count * 1e-9);
    CHECK(tags.size() == doctest::Approx(expect).epsilon(0.02));
}

TEST_CASE("identical tags for any thread count, with and without dead time") {
    DetectorParams d0;
    d0.efficiency = 0.1;
    d0.dark_rate_cps = 2000;
    d0.dead_time_s = 25e-6;
    d0.jitter_s = 50e-12;
    DetectorParams d1 = d0;
    d1.dark_rate_cps = 1000;
    Transmission tx;
    tx.count = 30'000'000;
    tx.frame_offset = 17;
    std::vector<ArmIntensities> arms;
    Rng rng(1);
    for (int i = 0; i < 1000; ++i) arms.push_back({0.2 * rng.uniform(), 0.2 * rng.uniform()});
    const auto one = detect_frame(arms, tx, d0, d1, 99, 1);
    const auto four = detect_frame(arms, tx, d0, d1, 99, 4);
    CHECK(one == four);
    d0.dead_time_s = d1.dead_time_s = 0.0;
    CHECK(detect_frame(arms, tx, d0, d1, 99, 1) == detect_frame(arms, tx, d0, d1, 99, 3));
    CHECK(std::is_sorted(one.begin(), one.end(),
                         [](const TimeTag& a, const TimeTag& b) { return a.t_ps < b.t_ps; }));
}

TEST_CASE("classical trace: three levels through one basis") {
    const std::vector<Bb84State> st{Bb84State::H, Bb84State::V, Bb84State::D, Bb84State::A};
    const auto tr = classical_trace(st, {1, 0, 0}, 4);
    REQUIRE(tr.size() == 16);
    std::set<double> levels;
    for (double v : tr) levels.insert(std::round(v * 1e9) / 1e9);
    CHECK(levels == std::set<double>{-1.0, 0.0, 1.0});
    const std::vector<StokesVector> rx{{1, 0.5, 0, 0}, {1, -0.5, 0, 0}};
    const auto half = classical_trace(rx, {1, 0, 0}, 1);
    CHECK(half[0] == doctest::Approx(0.5));
    CHECK(half[1] == doctest::Approx(-0.5));
}

TEST_CASE("tag CSV round trip is exact to the picosecond") {
    std::vector<TimeTag> tags{{0, 0}, {1, 1}, {0, 999'999'999'999}, {1, 1'000'000'000'001}, {0, 123'456'789'012'345}};
    std::stringstream ss;
    write_tags_csv(ss, tags, {"seed=1"});
    const std::string text = ss.str();
    CHECK(text.rfind("# seed=1\nchannel,t_seconds\n", 0) == 0);
    CHECK(text.find("1,1.000000000001\n") != std::string::npos);
    CHECK(read_tags_csv(ss) == tags);
    std::istringstream bad("channel,t_seconds\n0,2.0\n1,1.0\n");
    CHECK_THROWS_AS(read_tags_csv(bad), IoError);
    std::istringstream bad_ch("channel,t_seconds\n2,1.0\n");
    CHECK_THROWS_AS(read_tags_csv(bad_ch), IoError);
}

TEST_CASE("detector parameter checks") {
    DetectorParams d;
    d.efficiency = 1.5;
    CHECK_THROWS_AS(d.validate(), DomainError);
    d.efficiency = 0.1;
    d.dead_time_s = -1;
    CHECK_THROWS_AS(d.validate(), DomainError);
}

}  // TEST_SUITE
