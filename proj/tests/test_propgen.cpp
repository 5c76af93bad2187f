#include <catch2/catch_amalgamated.hpp>

#include "prn/propgen.hpp"
#include "prn/rng.hpp"
#include "prn/synth.hpp"

using namespace prn;
using namespace prn::propgen;

namespace {

ingest::FeatureSequence random_seq(std::size_t t, std::size_t c, std::uint64_t seed) {
    ingest::FeatureSequence seq;
    seq.video_id = "rand";
    seq.data = Matrix(t, c);
    Rng rng(seed);
    for (auto& x : seq.data.v)
        x = rng.uniform(-1.0, 1.0);
    return seq;
}

/*
 * Straightforward re-implementation of the head forward pass, written as
 * plain nested loops with no prefix sums or layout tricks. Serves as the
 * independent oracle for forward_head.
 */
ConfidenceMaps naive_forward_head(const ingest::FeatureSequence& seq, const HeadWeights& w) {
    const std::size_t t = seq.t();
    auto conv3 = [&](const Matrix& in, const Matrix& weights,
                     const std::vector<double>& bias, std::size_t out_ch) {
        Matrix out(t, out_ch);
        for (std::size_t j = 0; j < out_ch; ++j)
            for (std::size_t r = 0; r < t; ++r) {
                double acc = bias[j];
                for (std::size_t ch = 0; ch < in.cols; ++ch)
                    for (int k = -1; k <= 1; ++k) {
                        const long rr = static_cast<long>(r) + k;
                        if (rr < 0 || rr >= static_cast<long>(t))
                            continue;
                        acc += weights(j, ch * 3 + static_cast<std::size_t>(k + 1)) *
                               in(static_cast<std::size_t>(rr), ch);
                    }
                out(r, j) = std::max(0.0, acc);
            }
        return out;
    };
    const Matrix y1 = conv3(seq.data, w.conv1_w, w.conv1_b, w.h);
    const Matrix y2 = conv3(y1, w.conv2_w, w.conv2_b, w.h);

    auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
    ConfidenceMaps maps = ConfidenceMaps::zeros(t, w.d_max);
    for (std::size_t r = 0; r < t; ++r) {
        double s = w.start_b, e = w.end_b;
        for (std::size_t j = 0; j < w.h; ++j) {
            s += w.start_w[j] * y2(r, j);
            e += w.end_w[j] * y2(r, j);
        }
        maps.p_start[r] = sig(s);
        maps.p_end[r] = sig(e);
    }
    for (std::size_t d = 0; d < w.d_max; ++d)
        for (std::size_t i = 0; i < t; ++i) {
            if (i + d + 1 > t)
                continue;
            double cc = w.map_b[0], cr = w.map_b[1];
            for (std::size_t j = 0; j < w.h; ++j) {
                double mean = 0.0;
                for (std::size_t r = i; r <= i + d; ++r)
                    mean += y2(r, j);
                mean /= static_cast<double>(d + 1);
                cc += w.map_w(0, j) * mean;
                cr += w.map_w(1, j) * mean;
            }
            maps.m_cc(d, i) = sig(cc);
            maps.m_cr(d, i) = sig(cr);
        }
    return maps;
}

} // namespace

TEST_CASE("oracle maps are all zero without annotations", "[propgen]") {
    const ConfidenceMaps maps = oracle_confidence_maps({}, 10, 10);
    for (double x : maps.p_start)
        CHECK(x == 0.0);
    for (double x : maps.p_end)
        CHECK(x == 0.0);
    for (double x : maps.m_cc.v)
        CHECK(x == 0.0);
    for (double x : maps.m_cr.v)
        CHECK(x == 0.0);
}

TEST_CASE("oracle map for a full-extent segment", "[propgen]") {
    const std::size_t t = 16;
    const ConfidenceMaps maps =
        oracle_confidence_maps({TemporalSegment{0.0, 1.0}}, t, t);
    CHECK(maps.m_cc(t - 1, 0) == 1.0);
    CHECK(maps.m_cr(t - 1, 0) == 1.0);
}

TEST_CASE("oracle map values match direct tiou arithmetic", "[propgen]") {
    const ConfidenceMaps maps =
        oracle_confidence_maps({TemporalSegment{0.2, 0.6}}, 10, 10);
    // snippets 2..5 span [0.2, 0.6] exactly
    CHECK(maps.m_cc(3, 2) == 1.0);
    // cell (3,1) spans [0.1, 0.5]: tiou = 0.3 / 0.5
    CHECK(maps.m_cc(3, 1) == Catch::Approx(0.6).epsilon(1e-12));

    // triangular bumps at the rounded boundary indices
    CHECK(maps.p_start[2] == 1.0);
    CHECK(maps.p_start[1] == 0.5);
    CHECK(maps.p_start[3] == 0.5);
    CHECK(maps.p_start[0] == 0.0);
    CHECK(maps.p_end[6] == 1.0);
    CHECK(maps.p_end[5] == 0.5);
    CHECK(maps.p_end[7] == 0.5);
    CHECK(maps.p_end[8] == 0.0);
}

TEST_CASE("oracle maps keep invalid cells at zero", "[propgen]") {
    const ConfidenceMaps maps =
        oracle_confidence_maps({TemporalSegment{0.1, 0.9}}, 8, 8);
    for (std::size_t d = 0; d < 8; ++d)
        for (std::size_t i = 0; i < 8; ++i)
            if (i + d + 1 > 8) {
                CHECK(maps.m_cc(d, i) == 0.0);
                CHECK(maps.m_cr(d, i) == 0.0);
            }
}

TEST_CASE("zero head weights give sigmoid(0) everywhere valid", "[propgen]") {
    HeadWeights w;
    w.t = 12;
    w.c = 3;
    w.h = 4;
    w.d_max = 12;
    w.conv1_w = Matrix(4, 9);
    w.conv1_b.assign(4, 0.0);
    w.conv2_w = Matrix(4, 12);
    w.conv2_b.assign(4, 0.0);
    w.start_w.assign(4, 0.0);
    w.end_w.assign(4, 0.0);
    w.map_w = Matrix(2, 4);
    w.map_b.assign(2, 0.0);

    const auto seq = random_seq(12, 3, 5);
    const ConfidenceMaps maps = forward_head(seq, w);
    for (double x : maps.p_start)
        CHECK(x == 0.5);
    for (double x : maps.p_end)
        CHECK(x == 0.5);
    for (std::size_t d = 0; d < 12; ++d)
        for (std::size_t i = 0; i < 12; ++i) {
            const double expect = (i + d + 1 <= 12) ? 0.5 : 0.0;
            CHECK(maps.m_cc(d, i) == expect);
            CHECK(maps.m_cr(d, i) == expect);
        }
}

TEST_CASE("head outputs stay inside (0,1) on valid cells", "[propgen]") {
    const HeadWeights w = init_head_weights(30, 6, 8, 30, 77);
    const auto seq = random_seq(30, 6, 78);
    const ConfidenceMaps maps = forward_head(seq, w);
    for (double x : maps.p_start) {
        CHECK(x > 0.0);
        CHECK(x < 1.0);
    }
    for (std::size_t d = 0; d < 30; ++d)
        for (std::size_t i = 0; i < 30; ++i)
            if (i + d + 1 <= 30) {
                CHECK(maps.m_cc(d, i) > 0.0);
                CHECK(maps.m_cc(d, i) < 1.0);
            }
}

TEST_CASE("head forward pass is deterministic", "[propgen]") {
    const HeadWeights w = init_head_weights(40, 8, 16, 40, 123);
    const auto seq = random_seq(40, 8, 124);
    const ConfidenceMaps a = forward_head(seq, w);
    const ConfidenceMaps b = forward_head(seq, w);
    CHECK(a.p_start == b.p_start);
    CHECK(a.p_end == b.p_end);
    CHECK(a.m_cc == b.m_cc);
    CHECK(a.m_cr == b.m_cr);
}

TEST_CASE("head forward pass matches the naive re-implementation", "[propgen]") {
    const HeadWeights w = init_head_weights(100, 8, 16, 100, 2024);
    const auto seq = random_seq(100, 8, 2025);
    const ConfidenceMaps fast = forward_head(seq, w);
    const ConfidenceMaps slow = naive_forward_head(seq, w);
    REQUIRE(fast.t == slow.t);
    for (std::size_t i = 0; i < fast.t; ++i) {
        CHECK(fast.p_start[i] == Catch::Approx(slow.p_start[i]).margin(1e-12));
        CHECK(fast.p_end[i] == Catch::Approx(slow.p_end[i]).margin(1e-12));
    }
    for (std::size_t i = 0; i < fast.m_cc.v.size(); ++i) {
        CHECK(fast.m_cc.v[i] == Catch::Approx(slow.m_cc.v[i]).margin(1e-12));
        CHECK(fast.m_cr.v[i] == Catch::Approx(slow.m_cr.v[i]).margin(1e-12));
    }
}

TEST_CASE("head rejects mismatched feature shape", "[propgen]") {
    const HeadWeights w = init_head_weights(20, 4, 8, 20, 9);
    CHECK_THROWS_AS(forward_head(random_seq(21, 4, 1), w), ShapeMismatch);
    CHECK_THROWS_AS(forward_head(random_seq(20, 5, 1), w), ShapeMismatch);
}

TEST_CASE("decoding all-zero maps yields no proposals", "[propgen]") {
    const ConfidenceMaps maps = ConfidenceMaps::zeros(10, 10);
    CHECK(decode_proposals(maps, 0.5, 100).empty());
}

TEST_CASE("one-hot boundaries decode to a single exact proposal", "[propgen]") {
    ConfidenceMaps maps = ConfidenceMaps::zeros(10, 10);
    maps.p_start[2] = 1.0;
    maps.p_end[6] = 1.0;
    for (std::size_t d = 0; d < 10; ++d)
        for (std::size_t i = 0; i < 10; ++i)
            if (maps.cell_valid(d, i)) {
                maps.m_cc(d, i) = 1.0;
                maps.m_cr(d, i) = 1.0;
            }
    const auto proposals = decode_proposals(maps, 0.5, 100);
    REQUIRE(proposals.size() == 1);
    CHECK(proposals[0].segment.start == Catch::Approx(0.2).epsilon(1e-15));
    CHECK(proposals[0].segment.end == Catch::Approx(0.6).epsilon(1e-15));
    CHECK(proposals[0].score == 1.0);
}

TEST_CASE("equal scores rank earlier start first, then shorter span", "[propgen]") {
    ConfidenceMaps maps = ConfidenceMaps::zeros(12, 12);
    maps.p_start[2] = 1.0;
    maps.p_start[4] = 1.0;
    maps.p_end[8] = 1.0;
    for (std::size_t d = 0; d < 12; ++d)
        for (std::size_t i = 0; i < 12; ++i)
            if (maps.cell_valid(d, i)) {
                maps.m_cc(d, i) = 1.0;
                maps.m_cr(d, i) = 1.0;
            }
    const auto proposals = decode_proposals(maps, 1.0, 100);
    REQUIRE(proposals.size() == 2);
    CHECK(proposals[0].segment.start == Catch::Approx(2.0 / 12.0));
    CHECK(proposals[1].segment.start == Catch::Approx(4.0 / 12.0));

    ConfidenceMaps maps2 = ConfidenceMaps::zeros(12, 12);
    maps2.p_start[2] = 1.0;
    maps2.p_end[6] = 1.0;
    maps2.p_end[8] = 1.0;
    for (std::size_t d = 0; d < 12; ++d)
        for (std::size_t i = 0; i < 12; ++i)
            if (maps2.cell_valid(d, i)) {
                maps2.m_cc(d, i) = 1.0;
                maps2.m_cr(d, i) = 1.0;
            }
    const auto p2 = decode_proposals(maps2, 1.0, 100);
    REQUIRE(p2.size() == 2);
    CHECK(p2[0].segment.end == Catch::Approx(6.0 / 12.0)); // shorter first
}

TEST_CASE("every decoded proposal is valid with score in [0,1]", "[propgen]") {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t t = 8 + rng.uniform_int(24);
        ConfidenceMaps maps = ConfidenceMaps::zeros(t, t);
        for (auto& x : maps.p_start)
            x = rng.uniform();
        for (auto& x : maps.p_end)
            x = rng.uniform();
        for (std::size_t d = 0; d < t; ++d)
            for (std::size_t i = 0; i < t; ++i)
                if (maps.cell_valid(d, i)) {
                    maps.m_cc(d, i) = rng.uniform();
                    maps.m_cr(d, i) = rng.uniform();
                }
        for (const auto& p : decode_proposals(maps, 0.5, 50)) {
            CHECK(p.segment.valid());
            CHECK(p.score >= 0.0);
            CHECK(p.score <= 1.0);
        }
    }
}

TEST_CASE("increasing max_proposals only extends the list", "[propgen]") {
    Rng rng(32);
    ConfidenceMaps maps = ConfidenceMaps::zeros(20, 20);
    for (auto& x : maps.p_start)
        x = rng.uniform();
    for (auto& x : maps.p_end)
        x = rng.uniform();
    for (std::size_t d = 0; d < 20; ++d)
        for (std::size_t i = 0; i < 20; ++i)
            if (maps.cell_valid(d, i)) {
                maps.m_cc(d, i) = rng.uniform();
                maps.m_cr(d, i) = rng.uniform();
            }
    const auto small = decode_proposals(maps, 0.5, 10);
    const auto large = decode_proposals(maps, 0.5, 40);
    REQUIRE(small.size() <= large.size());
    for (std::size_t i = 0; i < small.size(); ++i) {
        CHECK(small[i].segment == large[i].segment);
        CHECK(small[i].score == large[i].score);
    }
}

TEST_CASE("decoding oracle maps recalls every grid-aligned segment", "[propgen]") {
    // randomized synthetic ground truth via the synth generator: boundaries
    // are grid-aligned and distinct by construction
    synth::SynthConfig cfg;
    cfg.videos = 12;
    cfg.seed = 400;
    const synth::SynthDataset ds = synth::generate(cfg);
    for (const auto& [vid, video] : ds.gt.videos) {
        std::vector<TemporalSegment> gt;
        for (const auto& [label, seg] : video.annotations)
            gt.push_back(seg);
        const ConfidenceMaps maps = oracle_confidence_maps(gt, cfg.grid_t, cfg.grid_t);
        const auto proposals =
            decode_proposals(maps, 0.5, std::max<std::size_t>(gt.size(), 100));
        for (const TemporalSegment& g : gt) {
            double best = 0.0;
            for (const auto& p : proposals)
                best = std::max(best, tiou(p.segment, g));
            CHECK(best >= 0.95);
        }
    }
}

TEST_CASE("score fusion modes", "[propgen]") {
    CHECK(fuse_score(0.8, 0.5, 0.9, 0.4, ScoreFusion::GeometricMean) ==
          Catch::Approx(0.8 * 0.5 * std::sqrt(0.9 * 0.4)).epsilon(1e-15));
    CHECK(fuse_score(0.8, 0.5, 0.9, 0.4, ScoreFusion::Product) ==
          Catch::Approx(0.8 * 0.5 * 0.9 * 0.4).epsilon(1e-15));
    CHECK(fuse_score(0.8, 0.5, 0.9, 0.4, ScoreFusion::MapsOnly) ==
          Catch::Approx(0.9 * 0.4).epsilon(1e-15));
    CHECK_THROWS_AS(score_fusion_from_string("nope"), ConfigError);
}

TEST_CASE("confidence map files round trip", "[propgen]") {
    const auto dir = std::filesystem::temp_directory_path() / "prn_propgen_tests";
    std::filesystem::create_directories(dir);
    const auto path = (dir / "maps.prnm").string();

    Rng rng(55);
    ConfidenceMaps maps = ConfidenceMaps::zeros(14, 14);
    for (auto& x : maps.p_start)
        x = static_cast<double>(static_cast<float>(rng.uniform()));
    for (auto& x : maps.p_end)
        x = static_cast<double>(static_cast<float>(rng.uniform()));
    for (std::size_t d = 0; d < 14; ++d)
        for (std::size_t i = 0; i < 14; ++i)
            if (maps.cell_valid(d, i)) {
                maps.m_cc(d, i) = static_cast<double>(static_cast<float>(rng.uniform()));
                maps.m_cr(d, i) = static_cast<double>(static_cast<float>(rng.uniform()));
            }
    save_maps(maps, path);
    const ConfidenceMaps loaded = load_maps(path);
    CHECK(loaded.p_start == maps.p_start);
    CHECK(loaded.p_end == maps.p_end);
    CHECK(loaded.m_cc == maps.m_cc);
    CHECK(loaded.m_cr == maps.m_cr);
}

TEST_CASE("proposal files round trip", "[propgen]") {
    const auto dir = std::filesystem::temp_directory_path() / "prn_propgen_tests";
    std::filesystem::create_directories(dir);
    const auto path = (dir / "props.json").string();

    std::map<std::string, std::vector<Proposal>> props;
    Proposal p;
    p.segment = TemporalSegment{0.25, 0.75};
    p.score = 0.625;
    p.components = {0.9, 0.8, 0.7, 0.6};
    p.refined_score = 0.55;
    props["v1"].push_back(p);
    save_proposals(props, path);
    const auto loaded = load_proposals(path);
    REQUIRE(loaded.count("v1") == 1);
    REQUIRE(loaded.at("v1").size() == 1);
    const Proposal& q = loaded.at("v1")[0];
    CHECK(q.segment == p.segment);
    CHECK(q.score == p.score);
    CHECK(q.components.p_start == 0.9);
    CHECK(q.components.map_cr == 0.6);
    REQUIRE(q.refined_score.has_value());
    CHECK(*q.refined_score == 0.55);
}
