#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "prn/core.hpp"
#include "prn/errors.hpp"
#include "prn/ingest.hpp"
#include "prn/propgen.hpp"

namespace prn::postproc {

struct NmsConfig {
    double sigma = 0.4;        // Gaussian decay width
    double score_floor = 5e-4; // drop proposals decayed below this
    std::size_t top_k = 100;   // max selections

    bool valid() const { return sigma > 0.0 && score_floor >= 0.0 && score_floor < 1.0 && top_k >= 1; }
};

/*
 * Soft-NMS with Gaussian decay: greedily select the best remaining
 * proposal, then decay every other remaining score by
 * exp(-tiou(selected, other)^2 / sigma). Selected proposals keep the score
 * they had at selection time, so the output is already sorted descending.
 */
inline std::vector<Proposal> soft_nms(std::vector<Proposal> proposals, const NmsConfig& cfg) {
    if (!cfg.valid())
        throw ValueError("invalid NMS config");

    std::vector<Proposal> out;
    out.reserve(std::min(cfg.top_k, proposals.size()));
    std::vector<Proposal> pool = std::move(proposals);

    while (!pool.empty() && out.size() < cfg.top_k) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < pool.size(); ++i)
            if (proposal_order(pool[i], pool[best]))
                best = i;
        Proposal selected = pool[best];
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(best));
        out.push_back(selected);

        std::vector<Proposal> next;
        next.reserve(pool.size());
        for (Proposal& p : pool) {
            const double overlap = tiou(selected.segment, p.segment);
            p.score *= std::exp(-(overlap * overlap) / cfg.sigma);
            if (p.score >= cfg.score_floor)
                next.push_back(p);
        }
        pool = std::move(next);
    }
    return out;
}

/*
 * "proposal + classification": every proposal is paired with each of the
 * video's top-k class labels; detection score is the product of proposal
 * and classification scores.
 */
inline std::vector<Detection> fuse_classification(const std::vector<Proposal>& proposals,
                                                  const ingest::ClassificationScores& cls,
                                                  std::size_t top_k_classes) {
    if (top_k_classes < 1)
        throw ValueError("top_k_classes must be >= 1");
    if (cls.entries.empty())
        throw EmptyClassification("no classification scores for video '" +
                                  cls.video_id + "'");
    const std::size_t use = std::min(top_k_classes, cls.entries.size());
    std::vector<Detection> out;
    out.reserve(proposals.size() * use);
    for (const Proposal& p : proposals)
        for (std::size_t i = 0; i < use; ++i) {
            Detection d;
            d.segment = p.segment;
            d.label = cls.entries[i].first;
            d.score = p.score * cls.entries[i].second;
            out.push_back(d);
        }
    std::stable_sort(out.begin(), out.end(), detection_order);
    return out;
}

using DetectionRuns = std::vector<std::map<std::string, std::vector<Detection>>>;

namespace detail {

inline Proposal as_proposal(const Detection& d) {
    Proposal p;
    p.segment = d.segment;
    p.score = d.score;
    return p;
}

} // namespace detail

/*
 * Detection-level ensembling: scale each run by its normalized weight,
 * pool everything per video, then soft-NMS within each label group.
 */
inline std::map<std::string, std::vector<Detection>>
ensemble(const DetectionRuns& runs, const std::vector<double>& weights,
         const NmsConfig& cfg) {
    if (runs.empty() || runs.size() != weights.size())
        throw LengthMismatch("ensemble: " + std::to_string(runs.size()) + " runs vs " +
                             std::to_string(weights.size()) + " weights");
    double wsum = 0.0;
    for (double w : weights) {
        if (w <= 0.0)
            throw ValueError("ensemble weights must be positive");
        wsum += w;
    }

    // gather weighted detections per video and label
    std::map<std::string, std::map<std::string, std::vector<Proposal>>> grouped;
    for (std::size_t r = 0; r < runs.size(); ++r) {
        const double w = weights[r] / wsum;
        for (const auto& [vid, dets] : runs[r])
            for (const Detection& d : dets) {
                Proposal p = detail::as_proposal(d);
                p.score *= w;
                grouped[vid][d.label].push_back(p);
            }
    }

    std::map<std::string, std::vector<Detection>> out;
    for (auto& [vid, by_label] : grouped) {
        std::vector<Detection> merged;
        for (auto& [label, props] : by_label) {
            const std::vector<Proposal> kept = soft_nms(std::move(props), cfg);
            for (const Proposal& p : kept) {
                Detection d;
                d.segment = p.segment;
                d.label = label;
                d.score = p.score;
                merged.push_back(d);
            }
        }
        std::stable_sort(merged.begin(), merged.end(), detection_order);
        out.emplace(vid, std::move(merged));
    }
    return out;
}

// Map-level ensembling for runs that share (t, d_max): elementwise weighted
// average of all four confidence fields.
inline propgen::ConfidenceMaps ensemble_maps(const std::vector<propgen::ConfidenceMaps>& maps_list,
                                             const std::vector<double>& weights) {
    if (maps_list.empty() || maps_list.size() != weights.size())
        throw LengthMismatch("ensemble_maps: " + std::to_string(maps_list.size()) +
                             " maps vs " + std::to_string(weights.size()) + " weights");
    const std::size_t t = maps_list.front().t;
    const std::size_t d = maps_list.front().d_max;
    double wsum = 0.0;
    for (double w : weights) {
        if (w <= 0.0)
            throw ValueError("ensemble weights must be positive");
        wsum += w;
    }
    for (const auto& m : maps_list)
        if (m.t != t || m.d_max != d)
            throw ShapeMismatch("ensemble_maps: confidence maps disagree on shape");

    propgen::ConfidenceMaps out = propgen::ConfidenceMaps::zeros(t, d);
    for (std::size_t r = 0; r < maps_list.size(); ++r) {
        const double w = weights[r] / wsum;
        const auto& m = maps_list[r];
        for (std::size_t i = 0; i < t; ++i) {
            out.p_start[i] += w * m.p_start[i];
            out.p_end[i] += w * m.p_end[i];
        }
        for (std::size_t i = 0; i < out.m_cc.v.size(); ++i) {
            out.m_cc.v[i] += w * m.m_cc.v[i];
            out.m_cr.v[i] += w * m.m_cr.v[i];
        }
    }
    out.zero_invalid_cells();
    return out;
}

// --- submission-format detection files -------------------------------------
// {"version": "1.3", "results": {"<vid>": [{"label", "score",
//  "segment": [s_seconds, e_seconds]}]}, "external_data": {}}

inline void save_detections(const std::map<std::string, std::vector<Detection>>& detections,
                            const GroundTruthDB& gt, const std::string& path) {
    nlohmann::json results = nlohmann::json::object();
    for (const auto& [vid, dets] : detections) {
        auto it = gt.videos.find(vid);
        if (it == gt.videos.end())
            throw ValueError("no duration known for video '" + vid + "'");
        const double dur = it->second.duration_seconds;
        nlohmann::json arr = nlohmann::json::array();
        for (const Detection& d : dets) {
            nlohmann::json dj;
            dj["label"] = d.label;
            dj["score"] = d.score;
            dj["segment"] = {d.segment.start * dur, d.segment.end * dur};
            arr.push_back(dj);
        }
        results[vid] = std::move(arr);
    }
    nlohmann::json j;
    j["version"] = "1.3";
    j["results"] = std::move(results);
    j["external_data"] = nlohmann::json::object();

    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write " + path);
    out << j.dump(2) << "\n";
}

inline std::map<std::string, std::vector<Detection>>
load_detections(const std::string& path, const GroundTruthDB& gt) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(path + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("results") || !j["results"].is_object())
        throw SchemaError(path + ": expected submission object with \"results\"");

    std::map<std::string, std::vector<Detection>> out;
    for (const auto& [vid, arr] : j["results"].items()) {
        if (!arr.is_array())
            throw SchemaError(path + ": results for '" + vid + "' must be an array");
        auto it = gt.videos.find(vid);
        if (it == gt.videos.end())
            throw ValueError(path + ": unknown video '" + vid + "'");
        const double dur = it->second.duration_seconds;
        std::vector<Detection> dets;
        for (const auto& e : arr) {
            if (!e.is_object() || !e.contains("label") || !e.contains("score") ||
                !e.contains("segment") || !e["segment"].is_array() ||
                e["segment"].size() != 2)
                throw SchemaError(path + ": malformed detection for '" + vid + "'");
            Detection d;
            d.label = e["label"].get<std::string>();
            d.score = e["score"].get<double>();
            d.segment = to_normalized(
                {e["segment"][0].get<double>(), e["segment"][1].get<double>()}, dur);
            dets.push_back(d);
        }
        out.emplace(vid, std::move(dets));
    }
    return out;
}

} // namespace prn::postproc
