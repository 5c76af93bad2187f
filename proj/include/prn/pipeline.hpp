#pragma once

#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "prn/config.hpp"
#include "prn/core.hpp"
#include "prn/ingest.hpp"
#include "prn/metrics.hpp"
#include "prn/postproc.hpp"
#include "prn/propgen.hpp"
#include "prn/relation.hpp"
#include "prn/synth.hpp"

namespace prn::pipeline {

namespace fs = std::filesystem;

// Bounded worker pool over [0, n): items are independent, workers pull the
// next index from an atomic counter. Results must be written to per-index
// slots by the callback, which keeps outputs deterministic.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
    if (workers == 0)
        workers = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    workers = std::min(workers, n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i)
            fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr error;
    std::mutex error_mutex;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&]() {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n)
                    return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error)
                        error = std::current_exception();
                }
            }
        });
    for (auto& th : pool)
        th.join();
    if (error)
        std::rethrow_exception(error);
}

inline std::vector<std::string> list_feature_files(const std::string& dir) {
    if (!fs::is_directory(dir))
        throw IoError("features directory not found: " + dir);
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file())
            continue;
        const std::string ext = entry.path().extension().string();
        if (ext == ".prnf" || ext == ".csv")
            files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    if (files.empty())
        throw IoError("no feature files (*.prnf, *.csv) in " + dir);
    return files;
}

inline std::map<std::string, ingest::FeatureSequence>
load_all_features(const std::string& dir, std::size_t parallelism) {
    const std::vector<std::string> files = list_feature_files(dir);
    std::vector<ingest::FeatureSequence> loaded(files.size());
    parallel_for(files.size(), parallelism,
                 [&](std::size_t i) { loaded[i] = ingest::load_features(files[i]); });
    std::map<std::string, ingest::FeatureSequence> out;
    for (auto& seq : loaded)
        out.emplace(seq.video_id, std::move(seq));
    return out;
}

inline double max_tiou_with_gt(const TemporalSegment& seg,
                               const std::vector<TemporalSegment>& gt) {
    double best = 0.0;
    for (const TemporalSegment& g : gt)
        best = std::max(best, tiou(seg, g));
    return best;
}

// Relation training set: one sample per video with proposals, pooled from
// that video's features, with max-tIoU-against-GT targets. Video order is
// the sorted proposal-map order, so the dataset is reproducible.
inline std::vector<relation::RelationSample>
build_relation_dataset(const std::map<std::string, ingest::FeatureSequence>& features,
                       const metrics::ProposalMap& proposals, const GroundTruthDB& gt,
                       const relation::PoolingConfig& pooling) {
    std::vector<relation::RelationSample> dataset;
    for (const auto& [vid, props] : proposals) {
        if (props.empty())
            continue;
        auto fit = features.find(vid);
        if (fit == features.end())
            throw ValueError("no features for video '" + vid + "'");
        relation::RelationSample sample;
        sample.x = relation::stack_proposal_features(fit->second, props, pooling);
        const std::vector<TemporalSegment> segs = gt.segments_of(vid);
        sample.targets.reserve(props.size());
        for (const Proposal& p : props)
            sample.targets.push_back(max_tiou_with_gt(p.segment, segs));
        dataset.push_back(std::move(sample));
    }
    if (dataset.empty())
        throw ValueError("relation dataset is empty (no videos with proposals)");
    return dataset;
}

// --- synthetic fixture on disk ---------------------------------------------

inline void write_synth_fixture(const synth::SynthDataset& ds, const std::string& dir) {
    fs::create_directories(fs::path(dir) / "features");
    for (const auto& seq : ds.features)
        ingest::save_features_binary(seq,
                                     (fs::path(dir) / "features" / (seq.video_id + ".prnf")).string());
    ingest::save_annotations(ds.gt, (fs::path(dir) / "annotations.json").string());
    ingest::save_classification(ds.classification,
                                (fs::path(dir) / "classification.json").string());
}

// --- evaluation reports -----------------------------------------------------

struct ProposalEvalReport {
    std::map<std::size_t, double> ar_at_an; // reported AN points
    double auc = 0.0;
    std::vector<std::pair<std::size_t, double>> curve; // full AR-vs-AN curve
};

inline ProposalEvalReport evaluate_proposals(const metrics::ProposalMap& proposals,
                                             const GroundTruthDB& gt,
                                             const metrics::EvalConfig& cfg) {
    ProposalEvalReport report;
    report.auc = metrics::auc_ar_an(proposals, gt, cfg, &report.curve);
    for (std::size_t an : {std::size_t(1), std::size_t(5), std::size_t(10),
                           std::size_t(50), std::size_t(100)})
        report.ar_at_an[an] =
            metrics::ar_at_an(proposals, gt, an, cfg.proposal_recall_thresholds);
    return report;
}

inline void save_proposal_report(const ProposalEvalReport& report, const std::string& json_path,
                                 const std::string& curve_csv_path) {
    nlohmann::json j;
    for (const auto& [an, ar] : report.ar_at_an)
        j["AR@" + std::to_string(an)] = ar;
    j["AUC"] = report.auc;
    std::ofstream out(json_path);
    if (!out)
        throw IoError("cannot write " + json_path);
    out << j.dump(2) << "\n";

    std::ofstream csv(curve_csv_path);
    if (!csv)
        throw IoError("cannot write " + curve_csv_path);
    csv << "an,ar\n";
    csv.precision(17);
    for (const auto& [an, ar] : report.curve)
        csv << an << "," << ar << "\n";
}

struct DetectionEvalReport {
    double average_map = 0.0;
    std::map<double, double> map_per_threshold;
    std::map<std::string, std::map<double, double>> ap_per_class;
};

inline DetectionEvalReport evaluate_detections(const metrics::DetectionMap& detections,
                                               const GroundTruthDB& gt,
                                               const metrics::EvalConfig& cfg) {
    DetectionEvalReport report;
    double sum = 0.0;
    for (double tau : cfg.tiou_thresholds) {
        std::map<std::string, double> per_class;
        const double m = metrics::mean_ap(detections, gt, tau, &per_class);
        report.map_per_threshold[tau] = m;
        for (const auto& [label, ap] : per_class)
            report.ap_per_class[label][tau] = ap;
        sum += m;
    }
    report.average_map = sum / static_cast<double>(cfg.tiou_thresholds.size());
    return report;
}

inline void save_detection_report(const DetectionEvalReport& report,
                                  const std::string& json_path) {
    nlohmann::json j;
    j["average_mAP"] = report.average_map;
    nlohmann::json per_thr = nlohmann::json::object();
    for (const auto& [tau, m] : report.map_per_threshold) {
        char key[16];
        std::snprintf(key, sizeof(key), "%.2f", tau);
        per_thr[key] = m;
    }
    j["mAP_per_threshold"] = std::move(per_thr);
    nlohmann::json per_class = nlohmann::json::object();
    for (const auto& [label, row] : report.ap_per_class) {
        nlohmann::json r = nlohmann::json::object();
        for (const auto& [tau, ap] : row) {
            char key[16];
            std::snprintf(key, sizeof(key), "%.2f", tau);
            r[key] = ap;
        }
        per_class[label] = std::move(r);
    }
    j["AP_per_class"] = std::move(per_class);
    std::ofstream out(json_path);
    if (!out)
        throw IoError("cannot write " + json_path);
    out << j.dump(2) << "\n";
}

} // namespace prn::pipeline
