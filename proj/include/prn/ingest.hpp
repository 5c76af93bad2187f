#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "prn/core.hpp"
#include "prn/errors.hpp"
#include "prn/matrix.hpp"

namespace prn::ingest {

/*
 * Per-snippet video features, T rows by C channels. Values are stored as
 * doubles in memory; the binary file format keeps 32-bit floats, so a
 * load/save round trip is bit-exact.
 */
struct FeatureSequence {
    std::string video_id;
    Matrix data; // t x c

    std::size_t t() const { return data.rows; }
    std::size_t c() const { return data.cols; }
};

struct ClassificationScores {
    std::string video_id;
    std::vector<std::pair<std::string, double>> entries; // sorted by score desc
};

namespace detail {

inline std::uint32_t read_u32_le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) |
           (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) |
           (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void write_u32_le(std::ostream& os, std::uint32_t x) {
    unsigned char b[4] = {static_cast<unsigned char>(x & 0xff),
                          static_cast<unsigned char>((x >> 8) & 0xff),
                          static_cast<unsigned char>((x >> 16) & 0xff),
                          static_cast<unsigned char>((x >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline float f32_from_le(const unsigned char* p) {
    std::uint32_t bits = read_u32_le(p);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

inline void write_f32_le(std::ostream& os, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    write_u32_le(os, bits);
}

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    return bytes;
}

inline std::string stem_of(const std::string& path) {
    std::size_t slash = path.find_last_of("/\\");
    std::string name = slash == std::string::npos ? path : path.substr(slash + 1);
    std::size_t dot = name.find_last_of('.');
    return dot == std::string::npos ? name : name.substr(0, dot);
}

} // namespace detail

inline constexpr char kFeatureMagic[4] = {'P', 'R', 'N', 'F'};
inline constexpr std::uint32_t kFeatureFormatVersion = 1;

// Binary feature layout: "PRNF", version u32 LE, T u32 LE, C u32 LE, then
// T*C little-endian f32 values, snippet-major.
inline FeatureSequence load_features_binary(const std::string& path) {
    const auto bytes = detail::read_file_bytes(path);
    if (bytes.size() < 16)
        throw FormatError(path + ": truncated header (file is " +
                          std::to_string(bytes.size()) + " bytes, header is 16)");
    if (std::memcmp(bytes.data(), kFeatureMagic, 4) != 0)
        throw FormatError(path + ": bad magic at byte offset 0");
    const std::uint32_t version = detail::read_u32_le(bytes.data() + 4);
    if (version != kFeatureFormatVersion)
        throw FormatError(path + ": unsupported format version " +
                          std::to_string(version) + " at byte offset 4");
    const std::uint32_t t = detail::read_u32_le(bytes.data() + 8);
    const std::uint32_t c = detail::read_u32_le(bytes.data() + 12);
    if (t == 0 || c == 0)
        throw FormatError(path + ": zero dimension in header");
    const std::size_t expected = 16 + std::size_t(4) * t * c;
    if (bytes.size() != expected)
        throw FormatError(path + ": shape mismatch, header declares " +
                          std::to_string(t) + "x" + std::to_string(c) +
                          " (" + std::to_string(expected) + " bytes) but file has " +
                          std::to_string(bytes.size()));

    FeatureSequence seq;
    seq.video_id = detail::stem_of(path);
    seq.data = Matrix(t, c);
    for (std::size_t i = 0; i < std::size_t(t) * c; ++i) {
        const std::size_t off = 16 + 4 * i;
        const float f = detail::f32_from_le(bytes.data() + off);
        if (!std::isfinite(f))
            throw FormatError(path + ": non-finite value at byte offset " +
                              std::to_string(off));
        seq.data.v[i] = static_cast<double>(f);
    }
    return seq;
}

// CSV feature layout: one snippet per line, C comma-separated floats.
inline FeatureSequence load_features_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open " + path);

    FeatureSequence seq;
    seq.video_id = detail::stem_of(path);

    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() && in.peek() == EOF)
            break; // trailing newline
        std::vector<double> row;
        std::stringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            try {
                std::size_t pos = 0;
                const double x = std::stod(tok, &pos);
                while (pos < tok.size() && std::isspace(static_cast<unsigned char>(tok[pos])))
                    ++pos;
                if (pos != tok.size())
                    throw std::invalid_argument(tok);
                if (!std::isfinite(x))
                    throw FormatError(path + ": non-finite value at line " +
                                      std::to_string(line_no));
                row.push_back(x);
            } catch (const std::invalid_argument&) {
                throw FormatError(path + ": unparseable value '" + tok +
                                  "' at line " + std::to_string(line_no));
            } catch (const std::out_of_range&) {
                throw FormatError(path + ": out-of-range value at line " +
                                  std::to_string(line_no));
            }
        }
        if (row.empty())
            throw FormatError(path + ": empty row at line " + std::to_string(line_no));
        if (!rows.empty() && row.size() != rows.front().size())
            throw FormatError(path + ": row of length " + std::to_string(row.size()) +
                              " at line " + std::to_string(line_no) +
                              ", expected " + std::to_string(rows.front().size()));
        rows.push_back(std::move(row));
    }
    if (rows.empty())
        throw FormatError(path + ": no rows");

    seq.data = Matrix(rows.size(), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c)
            seq.data(r, c) = rows[r][c];
    return seq;
}

// Sniffs the format from the first four bytes.
inline FeatureSequence load_features(const std::string& path) {
    {
        std::ifstream probe(path, std::ios::binary);
        if (!probe)
            throw IoError("cannot open " + path);
        char head[4] = {0, 0, 0, 0};
        probe.read(head, 4);
        if (probe.gcount() == 4 && std::memcmp(head, kFeatureMagic, 4) == 0)
            return load_features_binary(path);
    }
    return load_features_csv(path);
}

inline void save_features_binary(const FeatureSequence& seq, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot write " + path);
    out.write(kFeatureMagic, 4);
    detail::write_u32_le(out, kFeatureFormatVersion);
    detail::write_u32_le(out, static_cast<std::uint32_t>(seq.t()));
    detail::write_u32_le(out, static_cast<std::uint32_t>(seq.c()));
    for (double x : seq.data.v)
        detail::write_f32_le(out, static_cast<float>(x));
    if (!out)
        throw IoError("write failed: " + path);
}

/*
 * Per-channel linear interpolation onto target_t sample positions evenly
 * spaced over [0, t-1]. Resampling to the same length is an exact identity,
 * so resampling is idempotent at fixed length.
 */
inline FeatureSequence resample_features(const FeatureSequence& seq, std::size_t target_t) {
    if (seq.t() < 1)
        throw ShapeMismatch("resample: empty sequence");
    if (target_t < 2)
        throw ValueError("resample: target length must be at least 2");

    FeatureSequence out;
    out.video_id = seq.video_id;
    out.data = Matrix(target_t, seq.c());

    if (seq.t() == 1) {
        for (std::size_t i = 0; i < target_t; ++i)
            for (std::size_t c = 0; c < seq.c(); ++c)
                out.data(i, c) = seq.data(0, c);
        return out;
    }

    const double scale = static_cast<double>(seq.t() - 1) / static_cast<double>(target_t - 1);
    for (std::size_t i = 0; i < target_t; ++i) {
        const double pos = static_cast<double>(i) * scale;
        std::size_t lo = static_cast<std::size_t>(pos);
        if (lo >= seq.t() - 1)
            lo = seq.t() - 2;
        const double frac = pos - static_cast<double>(lo);
        for (std::size_t c = 0; c < seq.c(); ++c) {
            const double a = seq.data(lo, c);
            const double b = seq.data(lo + 1, c);
            out.data(i, c) = frac == 0.0 ? a : a + (b - a) * frac;
        }
    }
    return out;
}

// Annotation JSON: {"database": {"<id>": {"duration": s, "annotations":
// [{"label": "...", "segment": [s, e]}]}}} with segments in seconds.
// Invalid entries are collected and reported together.
inline GroundTruthDB load_annotations(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(path + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("database") || !j["database"].is_object())
        throw SchemaError(path + ": expected top-level object with a \"database\" object");

    GroundTruthDB db;
    std::vector<std::string> bad;
    for (const auto& [vid, entry] : j["database"].items()) {
        if (!entry.is_object() || !entry.contains("duration") ||
            !entry["duration"].is_number())
            throw SchemaError(path + ": video '" + vid + "' lacks a numeric duration");
        GroundTruthDB::Video v;
        v.duration_seconds = entry["duration"].get<double>();
        if (v.duration_seconds <= 0.0)
            throw SchemaError(path + ": video '" + vid + "' has non-positive duration");
        if (entry.contains("annotations")) {
            if (!entry["annotations"].is_array())
                throw SchemaError(path + ": video '" + vid + "' annotations must be an array");
            for (const auto& ann : entry["annotations"]) {
                if (!ann.is_object() || !ann.contains("label") || !ann.contains("segment") ||
                    !ann["label"].is_string() || !ann["segment"].is_array() ||
                    ann["segment"].size() != 2 || !ann["segment"][0].is_number() ||
                    !ann["segment"][1].is_number())
                    throw SchemaError(path + ": video '" + vid +
                                      "' has a malformed annotation entry");
                const double s = ann["segment"][0].get<double>();
                const double e = ann["segment"][1].get<double>();
                try {
                    TemporalSegment seg = to_normalized({s, e}, v.duration_seconds);
                    v.annotations.emplace_back(ann["label"].get<std::string>(), seg);
                } catch (const InvalidSegment&) {
                    std::ostringstream os;
                    os << vid << ": [" << s << ", " << e << "]";
                    bad.push_back(os.str());
                }
            }
        }
        db.videos.emplace(vid, std::move(v));
    }
    if (!bad.empty()) {
        std::ostringstream os;
        os << path << ": " << bad.size() << " invalid annotation(s): ";
        for (std::size_t i = 0; i < bad.size(); ++i)
            os << (i ? "; " : "") << bad[i];
        throw InvalidSegment(os.str());
    }
    return db;
}

// Inverse of load_annotations: segments are written back in seconds.
inline void save_annotations(const GroundTruthDB& db, const std::string& path) {
    nlohmann::json database = nlohmann::json::object();
    for (const auto& [vid, v] : db.videos) {
        nlohmann::json entry;
        entry["duration"] = v.duration_seconds;
        nlohmann::json anns = nlohmann::json::array();
        for (const auto& [label, seg] : v.annotations) {
            nlohmann::json a;
            a["label"] = label;
            a["segment"] = {seg.start * v.duration_seconds, seg.end * v.duration_seconds};
            anns.push_back(a);
        }
        entry["annotations"] = std::move(anns);
        database[vid] = std::move(entry);
    }
    nlohmann::json j;
    j["database"] = std::move(database);
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write " + path);
    out << j.dump(2) << "\n";
}

inline void save_classification(const std::map<std::string, ClassificationScores>& cls,
                                const std::string& path) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [vid, cs] : cls) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& [label, score] : cs.entries) {
            nlohmann::json e;
            e["label"] = label;
            e["score"] = score;
            arr.push_back(e);
        }
        j[vid] = std::move(arr);
    }
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write " + path);
    out << j.dump(2) << "\n";
}

// Classification JSON: {"<video_id>": [{"label": "...", "score": x}]}.
// Entries come back sorted by descending score.
inline std::map<std::string, ClassificationScores>
load_classification(const std::string& path) {
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

    std::map<std::string, ClassificationScores> out;
    for (const auto& [vid, arr] : j.items()) {
        if (!arr.is_array())
            throw SchemaError(path + ": entry for '" + vid + "' must be an array");
        ClassificationScores cs;
        cs.video_id = vid;
        for (const auto& e : arr) {
            if (!e.is_object() || !e.contains("label") || !e.contains("score") ||
                !e["label"].is_string() || !e["score"].is_number())
                throw SchemaError(path + ": malformed score entry for '" + vid + "'");
            const std::string label = e["label"].get<std::string>();
            const double score = e["score"].get<double>();
            if (score < 0.0 || score > 1.0)
                throw ValueError(path + ": score " + std::to_string(score) +
                                 " for '" + vid + "/" + label + "' outside [0, 1]");
            for (const auto& [l, s] : cs.entries)
                if (l == label)
                    throw SchemaError(path + ": duplicate label '" + label +
                                      "' for '" + vid + "'");
            cs.entries.emplace_back(label, score);
        }
        std::stable_sort(cs.entries.begin(), cs.entries.end(),
                         [](const auto& a, const auto& b) {
                             if (a.second != b.second)
                                 return a.second > b.second;
                             return a.first < b.first;
                         });
        out.emplace(vid, std::move(cs));
    }
    return out;
}

} // namespace prn::ingest
