#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "prn/core.hpp"
#include "prn/errors.hpp"

namespace prn::metrics {

inline std::vector<double> default_tiou_thresholds() {
    // 0.5, 0.55, ..., 0.95 - ten values
    std::vector<double> out;
    for (int i = 0; i < 10; ++i)
        out.push_back(0.5 + 0.05 * static_cast<double>(i));
    return out;
}

inline std::vector<std::size_t> default_an_grid() {
    std::vector<std::size_t> out(100);
    for (std::size_t i = 0; i < 100; ++i)
        out[i] = i + 1;
    return out;
}

struct EvalConfig {
    std::vector<double> tiou_thresholds = default_tiou_thresholds();
    std::vector<std::size_t> an_grid = default_an_grid();
    std::vector<double> proposal_recall_thresholds = default_tiou_thresholds();

    bool valid() const {
        auto increasing = [](const auto& xs) {
            for (std::size_t i = 1; i < xs.size(); ++i)
                if (!(xs[i] > xs[i - 1]))
                    return false;
            return true;
        };
        return !tiou_thresholds.empty() && increasing(tiou_thresholds) &&
               !an_grid.empty() && increasing(an_grid) &&
               !proposal_recall_thresholds.empty() &&
               increasing(proposal_recall_thresholds);
    }
};

using ProposalMap = std::map<std::string, std::vector<Proposal>>;
using DetectionMap = std::map<std::string, std::vector<Detection>>;

namespace detail {

// Greedy one-to-one matching in list order: each candidate takes the
// unmatched reference segment of highest tIoU >= tau (earlier reference
// wins ties). Returns the number of matched references.
inline std::size_t greedy_match_count(const std::vector<TemporalSegment>& candidates,
                                      const std::vector<TemporalSegment>& refs,
                                      double tau) {
    std::vector<bool> taken(refs.size(), false);
    std::size_t matched = 0;
    for (const TemporalSegment& c : candidates) {
        double best = 0.0;
        std::size_t best_idx = refs.size();
        for (std::size_t g = 0; g < refs.size(); ++g) {
            if (taken[g])
                continue;
            const double ov = tiou(c, refs[g]);
            if (ov >= tau && ov > best) {
                best = ov;
                best_idx = g;
            }
        }
        if (best_idx < refs.size()) {
            taken[best_idx] = true;
            ++matched;
        }
    }
    return matched;
}

} // namespace detail

/*
 * AR@AN: keep the top `an` proposals per video, greedily match them
 * one-to-one against ground truth at each recall threshold, and average
 * the recall over the thresholds.
 */
inline double ar_at_an(const ProposalMap& proposals, const GroundTruthDB& gt,
                       std::size_t an, const std::vector<double>& recall_thresholds) {
    if (an < 1)
        throw ValueError("an must be >= 1");
    if (recall_thresholds.empty())
        throw ValueError("no recall thresholds");
    const std::size_t total = gt.total_instances();
    if (total == 0)
        throw NoGroundTruth("ground truth has no instances");

    double ar = 0.0;
    for (double tau : recall_thresholds) {
        std::size_t recalled = 0;
        for (const auto& [vid, video] : gt.videos) {
            if (video.annotations.empty())
                continue;
            std::vector<TemporalSegment> refs;
            for (const auto& [label, seg] : video.annotations)
                refs.push_back(seg);

            std::vector<TemporalSegment> cands;
            auto it = proposals.find(vid);
            if (it != proposals.end()) {
                const std::size_t use = std::min<std::size_t>(an, it->second.size());
                for (std::size_t i = 0; i < use; ++i)
                    cands.push_back(it->second[i].segment);
            }
            recalled += detail::greedy_match_count(cands, refs, tau);
        }
        ar += static_cast<double>(recalled) / static_cast<double>(total);
    }
    return ar / static_cast<double>(recall_thresholds.size());
}

// Normalized trapezoidal area under the AR-vs-AN curve: a constant curve
// AR == r yields exactly r. A single-point grid degenerates to AR itself.
inline double auc_ar_an(const ProposalMap& proposals, const GroundTruthDB& gt,
                        const EvalConfig& cfg,
                        std::vector<std::pair<std::size_t, double>>* curve_out = nullptr) {
    if (!cfg.valid())
        throw ValueError("invalid eval config");
    std::vector<double> ar(cfg.an_grid.size());
    for (std::size_t i = 0; i < cfg.an_grid.size(); ++i)
        ar[i] = ar_at_an(proposals, gt, cfg.an_grid[i], cfg.proposal_recall_thresholds);
    if (curve_out) {
        curve_out->clear();
        for (std::size_t i = 0; i < ar.size(); ++i)
            curve_out->emplace_back(cfg.an_grid[i], ar[i]);
    }
    if (cfg.an_grid.size() == 1)
        return ar[0];
    double area = 0.0;
    for (std::size_t i = 1; i < cfg.an_grid.size(); ++i) {
        const double dx = static_cast<double>(cfg.an_grid[i] - cfg.an_grid[i - 1]);
        area += 0.5 * (ar[i] + ar[i - 1]) * dx;
    }
    const double extent =
        static_cast<double>(cfg.an_grid.back() - cfg.an_grid.front());
    return area / extent;
}

namespace detail {

struct ClassDetection {
    std::string video_id;
    TemporalSegment segment;
    double score = 0.0;
};

inline bool class_detection_order(const ClassDetection& a, const ClassDetection& b) {
    if (a.score != b.score)
        return a.score > b.score;
    if (a.video_id != b.video_id)
        return a.video_id < b.video_id;
    if (a.segment.start != b.segment.start)
        return a.segment.start < b.segment.start;
    return a.segment.length() < b.segment.length();
}

} // namespace detail

/*
 * Interpolated average precision for a single class at threshold tau.
 * Detections are walked in global score order; a detection is a true
 * positive if it greedily claims an unmatched ground-truth instance of its
 * video at tIoU >= tau. Precision is made non-increasing (the envelope)
 * before summing over recall steps of size 1/|gt|.
 */
inline double average_precision(std::vector<detail::ClassDetection> detections,
                                const std::map<std::string, std::vector<TemporalSegment>>& gt,
                                double tau) {
    std::size_t gt_count = 0;
    for (const auto& [vid, segs] : gt)
        gt_count += segs.size();
    if (gt_count == 0)
        return 0.0;
    if (detections.empty())
        return 0.0;

    std::stable_sort(detections.begin(), detections.end(), detail::class_detection_order);

    std::map<std::string, std::vector<bool>> taken;
    for (const auto& [vid, segs] : gt)
        taken[vid].assign(segs.size(), false);

    const std::size_t n = detections.size();
    std::vector<bool> is_tp(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        auto it = gt.find(detections[i].video_id);
        if (it == gt.end())
            continue;
        const auto& segs = it->second;
        auto& used = taken[detections[i].video_id];
        double best = 0.0;
        std::size_t best_idx = segs.size();
        for (std::size_t g = 0; g < segs.size(); ++g) {
            if (used[g])
                continue;
            const double ov = tiou(detections[i].segment, segs[g]);
            if (ov >= tau && ov > best) {
                best = ov;
                best_idx = g;
            }
        }
        if (best_idx < segs.size()) {
            used[best_idx] = true;
            is_tp[i] = true;
        }
    }

    std::vector<double> precision(n);
    std::size_t tp = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (is_tp[i])
            ++tp;
        precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
    }
    // envelope: make precision non-increasing from the right
    for (std::size_t i = n - 1; i > 0; --i)
        precision[i - 1] = std::max(precision[i - 1], precision[i]);

    double ap = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        if (is_tp[i])
            ap += precision[i];
    return ap / static_cast<double>(gt_count);
}

namespace detail {

inline std::map<std::string, std::map<std::string, std::vector<TemporalSegment>>>
gt_by_label(const GroundTruthDB& gt) {
    std::map<std::string, std::map<std::string, std::vector<TemporalSegment>>> out;
    for (const auto& [vid, video] : gt.videos)
        for (const auto& [label, seg] : video.annotations)
            out[label][vid].push_back(seg);
    return out;
}

inline std::map<std::string, std::vector<ClassDetection>>
detections_by_label(const DetectionMap& detections) {
    std::map<std::string, std::vector<ClassDetection>> out;
    for (const auto& [vid, dets] : detections)
        for (const Detection& d : dets)
            out[d.label].push_back(ClassDetection{vid, d.segment, d.score});
    return out;
}

} // namespace detail

// Unweighted mean of per-class AP over the classes present in ground truth.
inline double mean_ap(const DetectionMap& detections, const GroundTruthDB& gt, double tau,
                      std::map<std::string, double>* per_class_out = nullptr) {
    const auto gt_classes = detail::gt_by_label(gt);
    if (gt_classes.empty())
        throw NoGroundTruth("ground truth has no instances");
    auto det_classes = detail::detections_by_label(detections);

    double sum = 0.0;
    for (const auto& [label, gt_of_class] : gt_classes) {
        std::vector<detail::ClassDetection> dets;
        auto it = det_classes.find(label);
        if (it != det_classes.end())
            dets = it->second;
        const double ap = average_precision(std::move(dets), gt_of_class, tau);
        if (per_class_out)
            (*per_class_out)[label] = ap;
        sum += ap;
    }
    return sum / static_cast<double>(gt_classes.size());
}

// Mean of mean_ap over the threshold grid.
inline double average_map(const DetectionMap& detections, const GroundTruthDB& gt,
                          const EvalConfig& cfg,
                          std::map<double, double>* per_threshold_out = nullptr) {
    if (!cfg.valid())
        throw ValueError("invalid eval config");
    double sum = 0.0;
    for (double tau : cfg.tiou_thresholds) {
        const double m = mean_ap(detections, gt, tau);
        if (per_threshold_out)
            (*per_threshold_out)[tau] = m;
        sum += m;
    }
    return sum / static_cast<double>(cfg.tiou_thresholds.size());
}

} // namespace prn::metrics
