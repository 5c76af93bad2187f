#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "prn/core.hpp"
#include "prn/errors.hpp"
#include "prn/ingest.hpp"
#include "prn/manifest.hpp"
#include "prn/matrix.hpp"
#include "prn/rng.hpp"

namespace prn::propgen {

/*
 * Boundary probabilities plus the two boundary-matching confidence maps.
 * Map cell (d, i) scores the candidate segment [i/T, (i+d+1)/T]; cells with
 * i + d + 1 > T fall outside the video and are kept at zero.
 */
struct ConfidenceMaps {
    std::vector<double> p_start; // length t
    std::vector<double> p_end;   // length t
    Matrix m_cc;                 // d_max x t
    Matrix m_cr;                 // d_max x t
    std::size_t t = 0;
    std::size_t d_max = 0;

    static ConfidenceMaps zeros(std::size_t t, std::size_t d_max) {
        ConfidenceMaps m;
        m.t = t;
        m.d_max = d_max;
        m.p_start.assign(t, 0.0);
        m.p_end.assign(t, 0.0);
        m.m_cc = Matrix(d_max, t);
        m.m_cr = Matrix(d_max, t);
        return m;
    }

    bool cell_valid(std::size_t d, std::size_t i) const { return i + d + 1 <= t; }

    TemporalSegment cell_segment(std::size_t d, std::size_t i) const {
        return TemporalSegment{static_cast<double>(i) / static_cast<double>(t),
                               static_cast<double>(i + d + 1) / static_cast<double>(t)};
    }

    void zero_invalid_cells() {
        for (std::size_t d = 0; d < d_max; ++d)
            for (std::size_t i = 0; i < t; ++i)
                if (!cell_valid(d, i)) {
                    m_cc(d, i) = 0.0;
                    m_cr(d, i) = 0.0;
                }
    }
};

namespace detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double relu(double x) { return x > 0.0 ? x : 0.0; }

// triangular boundary bump: 1 at the index itself, 0.5 one snippet away
inline double bump(long delta) {
    if (delta == 0)
        return 1.0;
    if (delta == 1 || delta == -1)
        return 0.5;
    return 0.0;
}

inline long clamp_index(long idx, long t) {
    return std::max(0L, std::min(idx, t - 1));
}

} // namespace detail

/*
 * Ground-truth oracle: map cells carry the best tIoU against any annotated
 * segment, boundary probabilities carry a triangular bump of half-width one
 * snippet around each rounded ground-truth boundary index.
 */
inline ConfidenceMaps oracle_confidence_maps(const std::vector<TemporalSegment>& gt,
                                             std::size_t t, std::size_t d_max) {
    ConfidenceMaps maps = ConfidenceMaps::zeros(t, d_max);
    if (gt.empty())
        return maps;

    const long tl = static_cast<long>(t);
    for (const TemporalSegment& g : gt) {
        const long si = detail::clamp_index(std::lround(g.start * static_cast<double>(t)), tl);
        const long ei = detail::clamp_index(std::lround(g.end * static_cast<double>(t)), tl);
        for (long i = 0; i < tl; ++i) {
            maps.p_start[i] = std::max(maps.p_start[i], detail::bump(i - si));
            maps.p_end[i] = std::max(maps.p_end[i], detail::bump(i - ei));
        }
    }
    for (std::size_t d = 0; d < d_max; ++d)
        for (std::size_t i = 0; i < t; ++i) {
            if (!maps.cell_valid(d, i))
                continue;
            const TemporalSegment cand = maps.cell_segment(d, i);
            double best = 0.0;
            for (const TemporalSegment& g : gt)
                best = std::max(best, tiou(cand, g));
            maps.m_cc(d, i) = best;
            maps.m_cr(d, i) = best;
        }
    return maps;
}

/*
 * Minimal learned head: two kernel-3 temporal convolutions with ReLU, two
 * kernel-1 sigmoid boundary heads, and a span-pooled 1x1 sigmoid map head.
 * Weights are loaded from a tensor manifest; training this head is not part
 * of the pipeline.
 */
struct HeadWeights {
    std::size_t t = 0;
    std::size_t c = 0;
    std::size_t h = 0;
    std::size_t d_max = 0;

    Matrix conv1_w; // h x (c*3), column index ch*3 + k
    std::vector<double> conv1_b;
    Matrix conv2_w; // h x (h*3)
    std::vector<double> conv2_b;
    std::vector<double> start_w; // h
    double start_b = 0.0;
    std::vector<double> end_w; // h
    double end_b = 0.0;
    Matrix map_w; // 2 x h, row 0 -> m_cc, row 1 -> m_cr
    std::vector<double> map_b; // 2

    bool finite() const {
        auto ok = [](const std::vector<double>& xs) {
            for (double x : xs)
                if (!std::isfinite(x))
                    return false;
            return true;
        };
        return ok(conv1_w.v) && ok(conv1_b) && ok(conv2_w.v) && ok(conv2_b) &&
               ok(start_w) && ok(end_w) && ok(map_w.v) && ok(map_b) &&
               std::isfinite(start_b) && std::isfinite(end_b);
    }
};

inline HeadWeights init_head_weights(std::size_t t, std::size_t c, std::size_t h,
                                     std::size_t d_max, std::uint64_t seed) {
    HeadWeights w;
    w.t = t;
    w.c = c;
    w.h = h;
    w.d_max = d_max;
    Rng rng(seed);
    auto fill = [&rng](Matrix& m, std::size_t fan_in) {
        const double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (double& x : m.v)
            x = rng.uniform(-a, a);
    };
    auto fillv = [&rng](std::vector<double>& v, std::size_t fan_in) {
        const double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (double& x : v)
            x = rng.uniform(-a, a);
    };
    w.conv1_w = Matrix(h, c * 3);
    fill(w.conv1_w, c * 3);
    w.conv1_b.assign(h, 0.0);
    w.conv2_w = Matrix(h, h * 3);
    fill(w.conv2_w, h * 3);
    w.conv2_b.assign(h, 0.0);
    w.start_w.assign(h, 0.0);
    fillv(w.start_w, h);
    w.end_w.assign(h, 0.0);
    fillv(w.end_w, h);
    w.map_w = Matrix(2, h);
    fill(w.map_w, h);
    w.map_b.assign(2, 0.0);
    return w;
}

inline manifest::TensorFile to_manifest(const HeadWeights& w) {
    manifest::TensorFile tf;
    tf.dims["t"] = static_cast<std::int64_t>(w.t);
    tf.dims["c"] = static_cast<std::int64_t>(w.c);
    tf.dims["h"] = static_cast<std::int64_t>(w.h);
    tf.dims["d_max"] = static_cast<std::int64_t>(w.d_max);
    auto add = [&tf](const std::string& name, std::vector<std::size_t> shape,
                     std::vector<double> data) {
        manifest::Tensor t;
        t.shape = std::move(shape);
        t.data = std::move(data);
        tf.tensors.emplace_back(name, std::move(t));
    };
    add("conv1.weight", {w.h, w.c, 3}, w.conv1_w.v);
    add("conv1.bias", {w.h}, w.conv1_b);
    add("conv2.weight", {w.h, w.h, 3}, w.conv2_w.v);
    add("conv2.bias", {w.h}, w.conv2_b);
    add("start.weight", {w.h}, w.start_w);
    add("start.bias", {1}, {w.start_b});
    add("end.weight", {w.h}, w.end_w);
    add("end.bias", {1}, {w.end_b});
    add("map.weight", {2, w.h}, w.map_w.v);
    add("map.bias", {2}, w.map_b);
    return tf;
}

inline HeadWeights head_weights_from_manifest(const manifest::TensorFile& tf) {
    HeadWeights w;
    w.t = static_cast<std::size_t>(tf.dim("t"));
    w.c = static_cast<std::size_t>(tf.dim("c"));
    w.h = static_cast<std::size_t>(tf.dim("h"));
    w.d_max = static_cast<std::size_t>(tf.dim("d_max"));
    auto mat = [&tf](const std::string& name, std::size_t rows, std::size_t cols) {
        const manifest::Tensor& t = tf.get(name);
        if (t.count() != rows * cols)
            throw ShapeMismatch("tensor '" + name + "' has " + std::to_string(t.count()) +
                                " values, expected " + std::to_string(rows * cols));
        Matrix m(rows, cols);
        m.v = t.data;
        return m;
    };
    auto vec = [&tf](const std::string& name, std::size_t n) {
        const manifest::Tensor& t = tf.get(name);
        if (t.count() != n)
            throw ShapeMismatch("tensor '" + name + "' has " + std::to_string(t.count()) +
                                " values, expected " + std::to_string(n));
        return t.data;
    };
    w.conv1_w = mat("conv1.weight", w.h, w.c * 3);
    w.conv1_b = vec("conv1.bias", w.h);
    w.conv2_w = mat("conv2.weight", w.h, w.h * 3);
    w.conv2_b = vec("conv2.bias", w.h);
    w.start_w = vec("start.weight", w.h);
    w.start_b = vec("start.bias", 1)[0];
    w.end_w = vec("end.weight", w.h);
    w.end_b = vec("end.bias", 1)[0];
    w.map_w = mat("map.weight", 2, w.h);
    w.map_b = vec("map.bias", 2);
    if (!w.finite())
        throw FormatError("head weights contain non-finite values");
    return w;
}

inline ConfidenceMaps forward_head(const ingest::FeatureSequence& seq, const HeadWeights& w) {
    const std::size_t t = seq.t();
    const std::size_t c = seq.c();
    if (t != w.t || c != w.c)
        throw ShapeMismatch("feature shape " + std::to_string(t) + "x" + std::to_string(c) +
                            " does not match head weights " + std::to_string(w.t) + "x" +
                            std::to_string(w.c));
    const std::size_t h = w.h;

    // conv1: kernel 3, zero padded, C -> H, ReLU
    Matrix y1(t, h);
    for (std::size_t r = 0; r < t; ++r)
        for (std::size_t j = 0; j < h; ++j) {
            double acc = w.conv1_b[j];
            for (std::size_t k = 0; k < 3; ++k) {
                const long rr = static_cast<long>(r) + static_cast<long>(k) - 1;
                if (rr < 0 || rr >= static_cast<long>(t))
                    continue;
                for (std::size_t ch = 0; ch < c; ++ch)
                    acc += w.conv1_w(j, ch * 3 + k) * seq.data(rr, ch);
            }
            y1(r, j) = detail::relu(acc);
        }

    // conv2: kernel 3, H -> H, ReLU
    Matrix y2(t, h);
    for (std::size_t r = 0; r < t; ++r)
        for (std::size_t j = 0; j < h; ++j) {
            double acc = w.conv2_b[j];
            for (std::size_t k = 0; k < 3; ++k) {
                const long rr = static_cast<long>(r) + static_cast<long>(k) - 1;
                if (rr < 0 || rr >= static_cast<long>(t))
                    continue;
                for (std::size_t ch = 0; ch < h; ++ch)
                    acc += w.conv2_w(j, ch * 3 + k) * y1(rr, ch);
            }
            y2(r, j) = detail::relu(acc);
        }

    ConfidenceMaps maps = ConfidenceMaps::zeros(t, w.d_max);
    for (std::size_t r = 0; r < t; ++r) {
        double s = w.start_b;
        double e = w.end_b;
        for (std::size_t j = 0; j < h; ++j) {
            s += w.start_w[j] * y2(r, j);
            e += w.end_w[j] * y2(r, j);
        }
        maps.p_start[r] = detail::sigmoid(s);
        maps.p_end[r] = detail::sigmoid(e);
    }

    // span pooling via prefix sums over the snippet axis
    Matrix prefix(t + 1, h);
    for (std::size_t r = 0; r < t; ++r)
        for (std::size_t j = 0; j < h; ++j)
            prefix(r + 1, j) = prefix(r, j) + y2(r, j);

    for (std::size_t d = 0; d < w.d_max; ++d)
        for (std::size_t i = 0; i < t; ++i) {
            if (!maps.cell_valid(d, i))
                continue;
            const double span = static_cast<double>(d + 1);
            double cc = w.map_b[0];
            double cr = w.map_b[1];
            for (std::size_t j = 0; j < h; ++j) {
                const double pooled = (prefix(i + d + 1, j) - prefix(i, j)) / span;
                cc += w.map_w(0, j) * pooled;
                cr += w.map_w(1, j) * pooled;
            }
            maps.m_cc(d, i) = detail::sigmoid(cc);
            maps.m_cr(d, i) = detail::sigmoid(cr);
        }
    maps.zero_invalid_cells();
    return maps;
}

// How the four confidences combine into a proposal score.
enum class ScoreFusion { GeometricMean, Product, MapsOnly };

inline ScoreFusion score_fusion_from_string(const std::string& s) {
    if (s == "geometric")
        return ScoreFusion::GeometricMean;
    if (s == "product")
        return ScoreFusion::Product;
    if (s == "maps")
        return ScoreFusion::MapsOnly;
    throw ConfigError("unknown score fusion '" + s + "'");
}

inline double fuse_score(double ps, double pe, double cc, double cr, ScoreFusion mode) {
    switch (mode) {
    case ScoreFusion::Product:
        return ps * pe * cc * cr;
    case ScoreFusion::MapsOnly:
        return cc * cr;
    case ScoreFusion::GeometricMean:
    default:
        return ps * pe * std::sqrt(cc * cr);
    }
}

namespace detail {

// Candidate boundaries: strict local maxima, or above ratio * global max.
// Edge positions compare against their single neighbour.
inline std::vector<std::size_t> boundary_candidates(const std::vector<double>& p,
                                                    double boundary_ratio) {
    std::vector<std::size_t> out;
    const std::size_t t = p.size();
    if (t == 0)
        return out;
    const double pmax = *std::max_element(p.begin(), p.end());
    const double floor = boundary_ratio * pmax;
    for (std::size_t i = 0; i < t; ++i) {
        const bool left_ok = i == 0 || p[i] > p[i - 1];
        const bool right_ok = i + 1 == t || p[i] > p[i + 1];
        const bool local_max = t > 1 && left_ok && right_ok;
        if (local_max || p[i] > floor)
            out.push_back(i);
    }
    return out;
}

} // namespace detail

inline std::vector<Proposal> decode_proposals(const ConfidenceMaps& maps,
                                              double boundary_ratio,
                                              std::size_t max_proposals,
                                              ScoreFusion fusion = ScoreFusion::GeometricMean) {
    const std::vector<std::size_t> starts =
        detail::boundary_candidates(maps.p_start, boundary_ratio);
    const std::vector<std::size_t> ends =
        detail::boundary_candidates(maps.p_end, boundary_ratio);

    std::vector<Proposal> out;
    for (std::size_t i : starts)
        for (std::size_t j : ends) {
            if (j <= i)
                continue;
            const std::size_t d = j - i - 1;
            if (d >= maps.d_max)
                continue;
            Proposal p;
            p.segment = TemporalSegment{static_cast<double>(i) / static_cast<double>(maps.t),
                                        static_cast<double>(j) / static_cast<double>(maps.t)};
            p.components.p_start = maps.p_start[i];
            p.components.p_end = maps.p_end[j];
            p.components.map_cc = maps.m_cc(d, i);
            p.components.map_cr = maps.m_cr(d, i);
            p.score = fuse_score(p.components.p_start, p.components.p_end,
                                 p.components.map_cc, p.components.map_cr, fusion);
            out.push_back(p);
        }
    std::stable_sort(out.begin(), out.end(), proposal_order);
    if (out.size() > max_proposals)
        out.resize(max_proposals);
    return out;
}

// --- confidence map files ("PRNM": magic, version, T, D, then f32 fields) ---

inline constexpr char kMapsMagic[4] = {'P', 'R', 'N', 'M'};

inline void save_maps(const ConfidenceMaps& maps, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot write " + path);
    out.write(kMapsMagic, 4);
    ingest::detail::write_u32_le(out, 1);
    ingest::detail::write_u32_le(out, static_cast<std::uint32_t>(maps.t));
    ingest::detail::write_u32_le(out, static_cast<std::uint32_t>(maps.d_max));
    auto dump = [&out](const std::vector<double>& xs) {
        for (double x : xs)
            ingest::detail::write_f32_le(out, static_cast<float>(x));
    };
    dump(maps.p_start);
    dump(maps.p_end);
    dump(maps.m_cc.v);
    dump(maps.m_cr.v);
}

inline ConfidenceMaps load_maps(const std::string& path) {
    const auto bytes = ingest::detail::read_file_bytes(path);
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kMapsMagic, 4) != 0)
        throw FormatError(path + ": not a confidence map file");
    const std::uint32_t version = ingest::detail::read_u32_le(bytes.data() + 4);
    if (version != 1)
        throw FormatError(path + ": unsupported map file version " + std::to_string(version));
    const std::uint32_t t = ingest::detail::read_u32_le(bytes.data() + 8);
    const std::uint32_t d = ingest::detail::read_u32_le(bytes.data() + 12);
    const std::size_t values = std::size_t(2) * t + std::size_t(2) * d * t;
    if (bytes.size() != 16 + 4 * values)
        throw FormatError(path + ": shape mismatch");
    ConfidenceMaps maps = ConfidenceMaps::zeros(t, d);
    std::size_t off = 16;
    auto take = [&bytes, &off, &path](double& slot) {
        const float f = ingest::detail::f32_from_le(bytes.data() + off);
        if (!std::isfinite(f))
            throw FormatError(path + ": non-finite value at byte offset " + std::to_string(off));
        slot = static_cast<double>(f);
        off += 4;
    };
    for (auto& x : maps.p_start)
        take(x);
    for (auto& x : maps.p_end)
        take(x);
    for (auto& x : maps.m_cc.v)
        take(x);
    for (auto& x : maps.m_cr.v)
        take(x);
    return maps;
}

// --- proposal files: {"<video_id>": [{"segment", "score", "components"}]} ---

inline nlohmann::json proposal_to_json(const Proposal& p) {
    nlohmann::json j;
    j["segment"] = {p.segment.start, p.segment.end};
    j["score"] = p.score;
    j["components"] = {{"p_start", p.components.p_start},
                       {"p_end", p.components.p_end},
                       {"map_cc", p.components.map_cc},
                       {"map_cr", p.components.map_cr}};
    if (p.refined_score)
        j["refined_score"] = *p.refined_score;
    return j;
}

inline void save_proposals(const std::map<std::string, std::vector<Proposal>>& proposals,
                           const std::string& path) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [vid, list] : proposals) {
        nlohmann::json arr = nlohmann::json::array();
        for (const Proposal& p : list)
            arr.push_back(proposal_to_json(p));
        j[vid] = std::move(arr);
    }
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write " + path);
    out << j.dump(2) << "\n";
}

inline std::map<std::string, std::vector<Proposal>>
load_proposals(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(path + ": " + e.what());
    }
    if (!j.is_object())
        throw SchemaError(path + ": expected top-level object");
    std::map<std::string, std::vector<Proposal>> out;
    for (const auto& [vid, arr] : j.items()) {
        if (!arr.is_array())
            throw SchemaError(path + ": entry for '" + vid + "' must be an array");
        std::vector<Proposal> list;
        for (const auto& e : arr) {
            if (!e.contains("segment") || !e["segment"].is_array() ||
                e["segment"].size() != 2 || !e.contains("score"))
                throw SchemaError(path + ": malformed proposal for '" + vid + "'");
            Proposal p;
            p.segment = TemporalSegment::make(e["segment"][0].get<double>(),
                                              e["segment"][1].get<double>());
            p.score = e["score"].get<double>();
            if (e.contains("components")) {
                const auto& c = e["components"];
                p.components.p_start = c.value("p_start", 0.0);
                p.components.p_end = c.value("p_end", 0.0);
                p.components.map_cc = c.value("map_cc", 0.0);
                p.components.map_cr = c.value("map_cr", 0.0);
            }
            if (e.contains("refined_score"))
                p.refined_score = e["refined_score"].get<double>();
            list.push_back(p);
        }
        out.emplace(vid, std::move(list));
    }
    return out;
}

} // namespace prn::propgen
