#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "prn/core.hpp"
#include "prn/ingest.hpp"
#include "prn/rng.hpp"

namespace prn::synth {

/*
 * Seeded synthetic dataset: per video, a handful of non-overlapping action
 * segments whose boundaries sit exactly on the decode grid, features that
 * carry the segment-indicator signal plus noise, and classification scores
 * that favour the annotated labels. Everything derives from one seed.
 */
struct SynthConfig {
    std::size_t videos = 50;
    std::size_t grid_t = 100; // decode grid the segments are aligned to
    std::size_t c = 8;
    std::size_t min_gt = 1;
    std::size_t max_gt = 4;
    std::uint64_t seed = 7;
};

struct SynthDataset {
    GroundTruthDB gt;
    std::vector<ingest::FeatureSequence> features;
    std::map<std::string, ingest::ClassificationScores> classification;
};

inline const std::array<const char*, 5>& synth_labels() {
    static const std::array<const char*, 5> labels = {
        "LongJump", "HighJump", "Diving", "Surfing", "PlayingGuitar"};
    return labels;
}

inline SynthDataset generate(const SynthConfig& cfg) {
    Rng rng(cfg.seed);
    SynthDataset ds;
    const double grid = static_cast<double>(cfg.grid_t);

    for (std::size_t v = 0; v < cfg.videos; ++v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "synth_%04zu", v);
        const std::string vid(buf);

        // grid-aligned, non-overlapping segments with >= 2 snippets of gap
        // and end index <= grid_t - 1 (keeps every boundary on the decode
        // grid and every bump index inside the boundary vectors)
        const std::size_t want =
            cfg.min_gt + rng.uniform_int(cfg.max_gt - cfg.min_gt + 1);
        std::vector<std::pair<std::size_t, std::size_t>> spans; // index pairs
        for (std::size_t tries = 0; spans.size() < want && tries < 200; ++tries) {
            const std::size_t len = 3 + rng.uniform_int(23);       // 3..25 snippets
            if (len + 1 >= cfg.grid_t)
                continue;
            const std::size_t start = rng.uniform_int(cfg.grid_t - 1 - len);
            const std::size_t end = start + len; // index <= grid_t - 1
            bool ok = true;
            for (const auto& [s, e] : spans)
                if (!(end + 2 <= s || e + 2 <= start)) {
                    ok = false;
                    break;
                }
            if (ok)
                spans.emplace_back(start, end);
        }
        std::sort(spans.begin(), spans.end());

        GroundTruthDB::Video video;
        video.duration_seconds = rng.uniform(30.0, 300.0);
        std::vector<std::string> used_labels;
        for (const auto& [s, e] : spans) {
            const std::string label =
                synth_labels()[rng.uniform_int(synth_labels().size())];
            video.annotations.emplace_back(
                label, TemporalSegment{static_cast<double>(s) / grid,
                                       static_cast<double>(e) / grid});
            used_labels.push_back(label);
        }
        ds.gt.videos.emplace(vid, video);

        // features: per-channel amplitude on the inside-segment indicator
        // plus Gaussian noise; raw length varies around the decode grid
        const std::size_t t_raw = cfg.grid_t - 10 + rng.uniform_int(21);
        ingest::FeatureSequence seq;
        seq.video_id = vid;
        seq.data = Matrix(t_raw, cfg.c);
        std::vector<double> amp(cfg.c);
        for (std::size_t ch = 0; ch < cfg.c; ++ch)
            amp[ch] = rng.uniform(0.5, 1.5);
        for (std::size_t r = 0; r < t_raw; ++r) {
            const double u = (static_cast<double>(r) + 0.5) / static_cast<double>(t_raw);
            double ind = 0.0;
            for (const auto& [label, seg] : video.annotations)
                if (u >= seg.start && u < seg.end) {
                    ind = 1.0;
                    break;
                }
            for (std::size_t ch = 0; ch < cfg.c; ++ch)
                seq.data(r, ch) = amp[ch] * ind + 0.1 * rng.normal();
        }
        ds.features.push_back(std::move(seq));

        // classification: annotated labels high, one distractor low
        ingest::ClassificationScores cs;
        cs.video_id = vid;
        std::sort(used_labels.begin(), used_labels.end());
        used_labels.erase(std::unique(used_labels.begin(), used_labels.end()),
                          used_labels.end());
        double score = rng.uniform(0.75, 0.95);
        for (const std::string& label : used_labels) {
            cs.entries.emplace_back(label, score);
            score *= rng.uniform(0.35, 0.6);
        }
        for (const char* label : synth_labels()) {
            if (std::find(used_labels.begin(), used_labels.end(), label) !=
                used_labels.end())
                continue;
            cs.entries.emplace_back(label, score * rng.uniform(0.05, 0.3));
            break;
        }
        std::stable_sort(cs.entries.begin(), cs.entries.end(),
                         [](const auto& a, const auto& b) {
                             if (a.second != b.second)
                                 return a.second > b.second;
                             return a.first < b.first;
                         });
        ds.classification.emplace(vid, std::move(cs));
    }
    return ds;
}

} // namespace prn::synth
