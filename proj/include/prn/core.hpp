#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "prn/errors.hpp"

namespace prn {

/*
 * Temporal interval in normalized video time. The unit interval is the
 * canonical coordinate frame everywhere inside the pipeline; seconds only
 * appear at I/O boundaries.
 */
struct TemporalSegment {
    double start = 0.0; // in [0, 1)
    double end = 0.0;   // in (start, 1]

    static TemporalSegment make(double s, double e) {
        if (!(s >= 0.0 && s < e && e <= 1.0)) {
            std::ostringstream os;
            os << "invalid segment [" << s << ", " << e << "]";
            throw InvalidSegment(os.str());
        }
        return TemporalSegment{s, e};
    }

    double length() const { return end - start; }

    bool valid() const { return start >= 0.0 && start < end && end <= 1.0; }

    bool operator==(const TemporalSegment& o) const {
        return start == o.start && end == o.end;
    }
};

// Temporal intersection-over-union. Touching endpoints have intersection
// length zero and therefore tIoU 0.
inline double tiou(const TemporalSegment& a, const TemporalSegment& b) {
    const double inter =
        std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
    if (inter <= 0.0)
        return 0.0;
    const double uni = (a.end - a.start) + (b.end - b.start) - inter;
    return inter / uni;
}

// Seconds -> normalized time. The end is clamped to the video extent; a
// segment starting at or beyond the duration has no visible extent at all
// and is rejected.
inline TemporalSegment to_normalized(std::pair<double, double> seconds_segment,
                                     double duration_seconds) {
    const double s = seconds_segment.first;
    const double e = seconds_segment.second;
    if (duration_seconds <= 0.0)
        throw InvalidSegment("duration must be positive");
    if (!(s >= 0.0) || s >= e) {
        std::ostringstream os;
        os << "invalid segment [" << s << ", " << e << "] s";
        throw InvalidSegment(os.str());
    }
    if (s >= duration_seconds) {
        std::ostringstream os;
        os << "segment start " << s << " s is at or beyond duration "
           << duration_seconds << " s";
        throw InvalidSegment(os.str());
    }
    return TemporalSegment{s / duration_seconds,
                           std::min(1.0, e / duration_seconds)};
}

struct Proposal {
    struct Components {
        double p_start = 0.0;
        double p_end = 0.0;
        double map_cc = 0.0;
        double map_cr = 0.0;
    };

    TemporalSegment segment;
    double score = 0.0;
    Components components;
    std::optional<double> refined_score;
};

struct Detection {
    TemporalSegment segment;
    std::string label;
    double score = 0.0;
};

// Canonical ranking order: score descending, ties broken by earlier start,
// then shorter duration. Every sorted proposal list in the pipeline uses
// this comparison so that output files are bit-stable.
inline bool proposal_order(const Proposal& a, const Proposal& b) {
    if (a.score != b.score)
        return a.score > b.score;
    if (a.segment.start != b.segment.start)
        return a.segment.start < b.segment.start;
    return a.segment.length() < b.segment.length();
}

inline bool detection_order(const Detection& a, const Detection& b) {
    if (a.score != b.score)
        return a.score > b.score;
    if (a.segment.start != b.segment.start)
        return a.segment.start < b.segment.start;
    if (a.segment.length() != b.segment.length())
        return a.segment.length() < b.segment.length();
    return a.label < b.label;
}

struct GroundTruthDB {
    struct Video {
        double duration_seconds = 0.0;
        std::vector<std::pair<std::string, TemporalSegment>> annotations;
    };

    // std::map keeps video iteration order deterministic.
    std::map<std::string, Video> videos;

    std::size_t total_instances() const {
        std::size_t n = 0;
        for (const auto& [id, v] : videos)
            n += v.annotations.size();
        return n;
    }

    // sorted unique labels across the database
    std::vector<std::string> labels() const {
        std::vector<std::string> out;
        for (const auto& [id, v] : videos)
            for (const auto& [label, seg] : v.annotations)
                out.push_back(label);
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

    std::vector<TemporalSegment> segments_of(const std::string& video_id) const {
        std::vector<TemporalSegment> out;
        auto it = videos.find(video_id);
        if (it == videos.end())
            return out;
        for (const auto& [label, seg] : it->second.annotations)
            out.push_back(seg);
        return out;
    }
};

} // namespace prn
