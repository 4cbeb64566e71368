#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "incoqkd/error.hpp"
#include "incoqkd/protocol.hpp"

using namespace incoqkd;

namespace {

// Records that Bob would produce for a perfect channel with the frame
// advanced by `shift`, flipping a fraction `flip` of the bits.
std::vector<DetectionRecord> perfect_records(const SymbolFrame& f, std::uint64_t shift, std::size_t n,
                                             double flip, Rng& rng) {
    std::vector<DetectionRecord> out;
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint64_t idx = 3 * i + 1;
        const auto& a = f.cyclic(idx + shift);
        DetectionRecord r;
        r.symbol_index = idx;
        r.bob_basis = static_cast<std::uint8_t>(rng.uniform() < 0.5 ? 0 : 1);
        r.bob_bit = r.bob_basis == a.basis ? a.bit : static_cast<std::uint8_t>(rng.uniform() < 0.5);
        if (rng.uniform() < flip) r.bob_bit ^= 1;
        r.channel = r.bob_bit;
        out.push_back(r);
    }
    return out;
}

}  // namespace

TEST_SUITE("protocol") {

TEST_CASE("temporal filter keeps the centred window only") {
    // 1 GHz: period 1000 ps, window 0.5 keeps phases [0.25, 0.75]
    const std::vector<TimeTag> tags{{0, 100}, {0, 260}, {1, 500}, {0, 740}, {1, 760}, {0, 3500}};
    const auto w = temporal_filter(tags, 1e9, 0.5);
    REQUIRE(w.size() == 4);
    CHECK(w[0].t_ps == 260);
    CHECK(w[2].channel == 0);
    CHECK(w[3].symbol_index == 3);
    CHECK(temporal_filter(tags, 1e9, 1.0).size() == tags.size());
    // an offset moves the window with the tags
    const auto shifted = temporal_filter(tags, 1e9, 0.1, 0.25e-9);
    REQUIRE(shifted.size() == 2);
    CHECK(shifted[0].t_ps == 740);
    CHECK(shifted[1].t_ps == 760);
    CHECK_THROWS_AS(temporal_filter(tags, 1e9, 0.0), DomainError);
}

TEST_CASE("narrowing the window never adds tags") {
    Rng rng(3);
    std::vector<TimeTag> tags;
    std::int64_t t = 0;
    for (int i = 0; i < 5000; ++i) {
        t += 1 + static_cast<std::int64_t>(rng.uniform() * 700);
        tags.push_back({i & 1, t});
    }
    std::size_t prev = tags.size();
    for (double w : {1.0, 0.9, 0.7, 0.5, 0.3, 0.1, 0.01}) {
        const auto kept = temporal_filter(tags, 1e9, w).size();
        CHECK(kept <= prev);
        prev = kept;
    }
}

TEST_CASE("double clicks are discarded or randomized") {
    const std::vector<WindowedTag> tags{{0, 0, 5}, {1, 0, 5}, {1, 0, 6}, {0, 0, 7}, {0, 0, 7}};
    const auto d = make_records(tags, 1);
    CHECK(d.double_clicks == 1);
    REQUIRE(d.records.size() == 2);
    CHECK(d.records[0] == DetectionRecord{6, 1, 1, 1});
    CHECK(d.records[1] == DetectionRecord{7, 1, 0, 0});
    Rng rng(1);
    const auto r = make_records(tags, 0, DoubleClickPolicy::random, &rng);
    CHECK(r.double_clicks == 1);
    CHECK(r.records.size() == 3);
    CHECK_THROWS_AS(make_records(tags, 0, DoubleClickPolicy::random, nullptr), DomainError);
    CHECK(parse_double_click_policy("random") == DoubleClickPolicy::random);
    CHECK_THROWS_AS(parse_double_click_policy("keep"), DomainError);
}

TEST_CASE("synchronization recovers the frame offset") {
    const auto f = prbs_frame(15, 20000, 1e9, 0.1, 7);
    Rng rng(11);
    for (std::uint64_t shift : {0ULL, 1ULL, 4321ULL, 19999ULL}) {
        const auto rec = perfect_records(f, shift, 3000, 0.05, rng);
        const auto s = frame_synchronize(rec, f);
        CHECK(s.shift == shift);
        CHECK(s.peak > s.off_peak_mean + 5 * s.off_peak_sigma);
    }
}

TEST_CASE("synchronization fails loudly on uncorrelated data") {
    const auto f = prbs_frame(15, 20000, 1e9, 0.1, 7);
    Rng rng(2);
    auto rec = perfect_records(f, 100, 3000, 0.5, rng);
    CHECK_THROWS_AS(frame_synchronize(rec, f), SyncError);
    CHECK_THROWS_AS(frame_synchronize({}, f), SyncError);
}

TEST_CASE("QBER against a brute-force oracle") {
    const auto f = prbs_frame(13, 8000, 1e9, 0.1, 5);
    Rng rng(21);
    const std::uint64_t shift = 977;
    const auto rec = perfect_records(f, shift, 6000, 0.07, rng);
    const auto s = sift(f, rec, shift);
    // oracle: direct loop over the records
    std::uint64_t kept = 0, errors = 0, mismatched = 0;
    for (const auto& r : rec) {
        const auto& a = f.symbols[(r.symbol_index + shift) % f.size()];
        if (a.basis != r.bob_basis) {
            ++mismatched;
            continue;
        }
        ++kept;
        errors += a.bit != r.bob_bit;
    }
    CHECK(s.bits.size() == kept);
    CHECK(s.basis_mismatches == mismatched);
    const auto q = compute_qber(s.bits, 2.0);
    CHECK(q.error_count == errors);
    CHECK(q.qber == doctest::Approx(static_cast<double>(errors) / kept));
    CHECK(q.raw_key_bps == doctest::Approx(kept / 2.0));
    CHECK(q.per_basis[0].sifted + q.per_basis[1].sifted == kept);
    CHECK(q.per_channel[0].errors + q.per_channel[1].errors == errors);
    CHECK(q.qber_3sigma == doctest::Approx(3 * std::sqrt(q.qber * (1 - q.qber) / kept)));
    CHECK(std::abs(q.qber - 0.07) < 5 * std::sqrt(0.07 * 0.93 / kept));
}

TEST_CASE("batch-means error bar never undercuts the binomial one") {
    std::vector<SiftedBit> bits;
    for (int i = 0; i < 10000; ++i) {
        // all errors crowd the first half: strongly non-stationary
        bits.push_back({0, static_cast<std::uint8_t>(i < 5000 && i % 5 == 0), 0, 0, static_cast<std::uint64_t>(i)});
    }
    const auto plain = compute_qber(bits, 1.0);
    const auto batched = compute_qber(bits, 1.0, 10);
    CHECK(plain.qber == batched.qber);
    CHECK(batched.qber_3sigma > plain.qber_3sigma);
    CHECK_THROWS_AS(compute_qber({}, 1.0), DomainError);
}

TEST_CASE("QBER is invariant under relabeling both parties' bits") {
    const auto f = prbs_frame(13, 8000, 1e9, 0.1, 5);
    Rng rng(8);
    const auto rec = perfect_records(f, 0, 4000, 0.1, rng);
    auto s = sift(f, rec, 0);
    const auto q = compute_qber(s.bits, 1.0).qber;
    for (auto& b : s.bits) {
        b.alice_bit ^= 1;
        b.bob_bit ^= 1;
    }
    CHECK(compute_qber(s.bits, 1.0).qber == q);
}

TEST_CASE("conflicting duplicate records are discarded") {
    const auto f = prbs_frame(13, 8000, 1e9, 0.1, 5);
    const auto a = f.symbols[10];
    const std::vector<DetectionRecord> rec{{10, a.basis, 0, 0}, {10, a.basis, 1, 1}};
    const auto s = sift(f, rec, 0);
    CHECK(s.bits.empty());
    CHECK(s.double_click_discards == 1);
}

TEST_CASE("binary entropy and the secure-key threshold") {
    CHECK(binary_entropy(0.0) == 0.0);
    CHECK(binary_entropy(0.5) == doctest::Approx(1.0));
    CHECK(binary_entropy(0.11) == doctest::Approx(0.4999157).epsilon(1e-6));
    const double t = qber_threshold();
    CHECK(t == doctest::Approx(0.110028).epsilon(1e-5));
    CHECK(std::abs(1 - 2 * binary_entropy(t)) < 1e-12);
    CHECK(secure_fraction(0.0) == 1.0);
    CHECK(secure_fraction(0.2) == 0.0);
    double prev = 2.0;
    for (double q = 0.0; q < 0.12; q += 0.001) {
        const double r = secure_fraction(q);
        CHECK(r <= prev);
        prev = r;
    }
    CHECK_THROWS_AS(binary_entropy(-0.1), DomainError);
    CHECK_THROWS_AS(secure_fraction(0.5), DomainError);
}

TEST_CASE("report CSV has one header and one row") {
    QberReport r;
    r.qber = 0.05;
    r.sifted_count = 10;
    std::ostringstream os;
    write_report_csv(os, r);
    const auto text = os.str();
    CHECK(std::count(text.begin(), text.end(), '\n') == 2);
    CHECK(text.rfind("qber,qber_3sigma,raw_key_bps", 0) == 0);
}

}  // TEST_SUITE
