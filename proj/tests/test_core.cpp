#include <catch2/catch_amalgamated.hpp>

#include "prn/core.hpp"
#include "prn/rng.hpp"

using namespace prn;

TEST_CASE("tiou identity, disjoint, and partial overlap", "[core]") {
    const auto a = TemporalSegment::make(0.2, 0.6);
    CHECK(tiou(a, a) == 1.0);

    CHECK(tiou(TemporalSegment::make(0.0, 0.3), TemporalSegment::make(0.5, 0.9)) == 0.0);

    // intersection 0.25, union 0.75
    const double v = tiou(TemporalSegment::make(0.0, 0.5), TemporalSegment::make(0.25, 0.75));
    CHECK(v == Catch::Approx(0.25 / 0.75).epsilon(1e-12));
}

TEST_CASE("tiou treats touching endpoints as disjoint", "[core]") {
    CHECK(tiou(TemporalSegment::make(0.0, 0.5), TemporalSegment::make(0.5, 1.0)) == 0.0);
}

TEST_CASE("tiou is symmetric and bounded on random segments", "[core]") {
    Rng rng(123);
    for (int i = 0; i < 2000; ++i) {
        const double s1 = rng.uniform(0.0, 0.98);
        const double e1 = rng.uniform(s1 + 0.01, 1.0);
        const double s2 = rng.uniform(0.0, 0.98);
        const double e2 = rng.uniform(s2 + 0.01, 1.0);
        const TemporalSegment a{s1, e1};
        const TemporalSegment b{s2, e2};
        const double ab = tiou(a, b);
        const double ba = tiou(b, a);
        CHECK(ab == ba);
        CHECK(ab >= 0.0);
        CHECK(ab <= 1.0);
    }
}

TEST_CASE("tiou decreases monotonically as one interval translates away", "[core]") {
    const auto a = TemporalSegment::make(0.3, 0.5);
    double prev = 1.0;
    for (int step = 0; step <= 20; ++step) {
        const double shift = 0.02 * step;
        if (0.3 + shift >= 0.98)
            break;
        const TemporalSegment b{0.3 + shift, std::min(1.0, 0.5 + shift)};
        const double v = tiou(a, b);
        CHECK(v <= prev);
        prev = v;
    }
    CHECK(prev == 0.0); // ended fully disjoint
}

TEST_CASE("to_normalized scales and clamps", "[core]") {
    const auto a = to_normalized({10.0, 20.0}, 100.0);
    CHECK(a.start == Catch::Approx(0.1).epsilon(1e-15));
    CHECK(a.end == Catch::Approx(0.2).epsilon(1e-15));

    const auto full = to_normalized({0.0, 100.0}, 100.0);
    CHECK(full.start == 0.0);
    CHECK(full.end == 1.0);

    // end beyond duration clamps to 1.0
    const auto clamped = to_normalized({90.0, 150.0}, 100.0);
    CHECK(clamped.start == Catch::Approx(0.9).epsilon(1e-15));
    CHECK(clamped.end == 1.0);
}

TEST_CASE("to_normalized rejects degenerate input", "[core]") {
    CHECK_THROWS_AS(to_normalized({20.0, 10.0}, 100.0), InvalidSegment);
    CHECK_THROWS_AS(to_normalized({100.0, 110.0}, 100.0), InvalidSegment);
    CHECK_THROWS_AS(to_normalized({5.0, 5.0}, 100.0), InvalidSegment);
}

TEST_CASE("segment factory enforces the invariant", "[core]") {
    CHECK_THROWS_AS(TemporalSegment::make(0.5, 0.5), InvalidSegment);
    CHECK_THROWS_AS(TemporalSegment::make(-0.1, 0.5), InvalidSegment);
    CHECK_THROWS_AS(TemporalSegment::make(0.2, 1.1), InvalidSegment);
    CHECK_NOTHROW(TemporalSegment::make(0.0, 1.0));
}

TEST_CASE("proposal ordering breaks ties by start then duration", "[core]") {
    Proposal a;
    a.segment = TemporalSegment{0.1, 0.5};
    a.score = 0.7;
    Proposal b;
    b.segment = TemporalSegment{0.2, 0.5};
    b.score = 0.7;
    CHECK(proposal_order(a, b));
    CHECK_FALSE(proposal_order(b, a));

    Proposal c = a;
    c.segment = TemporalSegment{0.1, 0.4};
    CHECK(proposal_order(c, a)); // same score, same start, shorter first
}

TEST_CASE("ground truth db counts and labels", "[core]") {
    GroundTruthDB db;
    GroundTruthDB::Video v;
    v.duration_seconds = 60.0;
    v.annotations.emplace_back("B", TemporalSegment{0.1, 0.2});
    v.annotations.emplace_back("A", TemporalSegment{0.4, 0.6});
    db.videos["v1"] = v;
    db.videos["v2"] = GroundTruthDB::Video{30.0, {{"A", TemporalSegment{0.5, 0.9}}}};

    CHECK(db.total_instances() == 3);
    CHECK(db.labels() == std::vector<std::string>{"A", "B"});
    CHECK(db.segments_of("v2").size() == 1);
    CHECK(db.segments_of("missing").empty());
}
