#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "prn/errors.hpp"
#include "prn/metrics.hpp"

namespace prn::cfg {

/*
 * Structured pipeline configuration. Every field has a documented default;
 * a JSON config file overrides defaults, and command-line flags with the
 * same dotted name override the file.
 */
struct PipelineConfig {
    struct Paths {
        std::string features_dir;
        std::string annotations;
        std::string classification;
        std::string head_weights;
        std::string relation_weights;
        std::string output_dir = "out";
    } paths;

    struct Propgen {
        std::size_t t = 100;
        std::size_t d_max = 0; // 0 means "equal to t" (full square map)
        double boundary_ratio = 0.5;
        std::size_t max_proposals = 100;
        std::string score_fusion = "geometric"; // geometric | product | maps
        std::size_t head_hidden = 32;

        std::size_t effective_d_max() const { return d_max == 0 ? t : d_max; }
    } propgen;

    struct Relation {
        std::size_t k = 8;
        double context_ratio = 0.5;
        std::size_t d_att = 64;
        std::size_t h_r = 64;
        std::string combine_mode = "multiply"; // replace | multiply | average
        double lr = 0.05;
        std::size_t epochs = 200;
        std::string order = "fixed"; // fixed | shuffle
    } relation;

    struct Postproc {
        double sigma = 0.4;
        double score_floor = 5e-4;
        std::size_t top_k = 100;
        std::size_t top_k_classes = 2;
        std::vector<double> ensemble_weights;
        std::string ensemble_level = "detections"; // detections | maps
    } postproc;

    struct Metrics {
        std::vector<double> tiou_thresholds = metrics::default_tiou_thresholds();
        std::vector<std::size_t> an_grid = metrics::default_an_grid();
        std::vector<double> recall_thresholds = metrics::default_tiou_thresholds();
    } metrics_cfg;

    struct Augment {
        double forward_frac = 0.25;
        double backward_frac = 0.25;
        std::size_t step = 1;
        std::string mode = "append"; // replace | append
    } augment;

    struct Synth {
        std::size_t videos = 50;
        std::size_t t = 100;
        std::size_t c = 8;
        std::size_t min_gt = 1;
        std::size_t max_gt = 4;
    } synth;

    std::uint64_t seed = 7;
    std::size_t parallelism = 0; // 0 = hardware concurrency

    metrics::EvalConfig eval_config() const {
        metrics::EvalConfig ec;
        ec.tiou_thresholds = metrics_cfg.tiou_thresholds;
        ec.an_grid = metrics_cfg.an_grid;
        ec.proposal_recall_thresholds = metrics_cfg.recall_thresholds;
        if (!ec.valid())
            throw ConfigError("metrics config: threshold/AN grids must be strictly increasing");
        return ec;
    }
};

inline nlohmann::json to_json(const PipelineConfig& c) {
    nlohmann::json j;
    j["paths"] = {{"features_dir", c.paths.features_dir},
                  {"annotations", c.paths.annotations},
                  {"classification", c.paths.classification},
                  {"head_weights", c.paths.head_weights},
                  {"relation_weights", c.paths.relation_weights},
                  {"output_dir", c.paths.output_dir}};
    j["propgen"] = {{"t", c.propgen.t},
                    {"d_max", c.propgen.d_max},
                    {"boundary_ratio", c.propgen.boundary_ratio},
                    {"max_proposals", c.propgen.max_proposals},
                    {"score_fusion", c.propgen.score_fusion},
                    {"head_hidden", c.propgen.head_hidden}};
    j["relation"] = {{"k", c.relation.k},
                     {"context_ratio", c.relation.context_ratio},
                     {"d_att", c.relation.d_att},
                     {"h_r", c.relation.h_r},
                     {"combine_mode", c.relation.combine_mode},
                     {"lr", c.relation.lr},
                     {"epochs", c.relation.epochs},
                     {"order", c.relation.order}};
    j["postproc"] = {{"sigma", c.postproc.sigma},
                     {"score_floor", c.postproc.score_floor},
                     {"top_k", c.postproc.top_k},
                     {"top_k_classes", c.postproc.top_k_classes},
                     {"ensemble_weights", c.postproc.ensemble_weights},
                     {"ensemble_level", c.postproc.ensemble_level}};
    j["metrics"] = {{"tiou_thresholds", c.metrics_cfg.tiou_thresholds},
                    {"an_grid", c.metrics_cfg.an_grid},
                    {"recall_thresholds", c.metrics_cfg.recall_thresholds}};
    j["augment"] = {{"forward_frac", c.augment.forward_frac},
                    {"backward_frac", c.augment.backward_frac},
                    {"step", c.augment.step},
                    {"mode", c.augment.mode}};
    j["synth"] = {{"videos", c.synth.videos},
                  {"t", c.synth.t},
                  {"c", c.synth.c},
                  {"min_gt", c.synth.min_gt},
                  {"max_gt", c.synth.max_gt}};
    j["seed"] = c.seed;
    j["parallelism"] = c.parallelism;
    return j;
}

namespace detail {

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& slot) {
    if (!j.contains(key))
        return;
    try {
        slot = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config field '") + key + "': " + e.what());
    }
}

} // namespace detail

inline void merge_json(PipelineConfig& c, const nlohmann::json& j) {
    if (!j.is_object())
        throw ConfigError("config root must be an object");
    for (const auto& [key, val] : j.items()) {
        if (key == "paths") {
            detail::maybe(val, "features_dir", c.paths.features_dir);
            detail::maybe(val, "annotations", c.paths.annotations);
            detail::maybe(val, "classification", c.paths.classification);
            detail::maybe(val, "head_weights", c.paths.head_weights);
            detail::maybe(val, "relation_weights", c.paths.relation_weights);
            detail::maybe(val, "output_dir", c.paths.output_dir);
        } else if (key == "propgen") {
            detail::maybe(val, "t", c.propgen.t);
            detail::maybe(val, "d_max", c.propgen.d_max);
            detail::maybe(val, "boundary_ratio", c.propgen.boundary_ratio);
            detail::maybe(val, "max_proposals", c.propgen.max_proposals);
            detail::maybe(val, "score_fusion", c.propgen.score_fusion);
            detail::maybe(val, "head_hidden", c.propgen.head_hidden);
        } else if (key == "relation") {
            detail::maybe(val, "k", c.relation.k);
            detail::maybe(val, "context_ratio", c.relation.context_ratio);
            detail::maybe(val, "d_att", c.relation.d_att);
            detail::maybe(val, "h_r", c.relation.h_r);
            detail::maybe(val, "combine_mode", c.relation.combine_mode);
            detail::maybe(val, "lr", c.relation.lr);
            detail::maybe(val, "epochs", c.relation.epochs);
            detail::maybe(val, "order", c.relation.order);
        } else if (key == "postproc") {
            detail::maybe(val, "sigma", c.postproc.sigma);
            detail::maybe(val, "score_floor", c.postproc.score_floor);
            detail::maybe(val, "top_k", c.postproc.top_k);
            detail::maybe(val, "top_k_classes", c.postproc.top_k_classes);
            detail::maybe(val, "ensemble_weights", c.postproc.ensemble_weights);
            detail::maybe(val, "ensemble_level", c.postproc.ensemble_level);
        } else if (key == "metrics") {
            detail::maybe(val, "tiou_thresholds", c.metrics_cfg.tiou_thresholds);
            detail::maybe(val, "an_grid", c.metrics_cfg.an_grid);
            detail::maybe(val, "recall_thresholds", c.metrics_cfg.recall_thresholds);
        } else if (key == "augment") {
            detail::maybe(val, "forward_frac", c.augment.forward_frac);
            detail::maybe(val, "backward_frac", c.augment.backward_frac);
            detail::maybe(val, "step", c.augment.step);
            detail::maybe(val, "mode", c.augment.mode);
        } else if (key == "synth") {
            detail::maybe(val, "videos", c.synth.videos);
            detail::maybe(val, "t", c.synth.t);
            detail::maybe(val, "c", c.synth.c);
            detail::maybe(val, "min_gt", c.synth.min_gt);
            detail::maybe(val, "max_gt", c.synth.max_gt);
        } else if (key == "seed") {
            detail::maybe(j, "seed", c.seed);
        } else if (key == "parallelism") {
            detail::maybe(j, "parallelism", c.parallelism);
        } else {
            throw ConfigError("unknown config section '" + key + "'");
        }
    }
}

inline PipelineConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open config " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    PipelineConfig c;
    merge_json(c, j);
    return c;
}

inline void write_config_example(const PipelineConfig& c, const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write " + path);
    out << to_json(c).dump(2) << "\n";
}

} // namespace prn::cfg
