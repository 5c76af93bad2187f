#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "prn/errors.hpp"
#include "prn/ingest.hpp"

namespace prn::manifest {

/*
 * Weight storage shared by the proposal head and the relation module: a
 * JSON manifest {"dims": {...}, "tensors": [{"name", "shape", "data_file"}]}
 * next to raw little-endian f32 blobs, one per tensor. Values are exact
 * f32 on disk, so load/save round-trips are byte-identical.
 */
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    std::size_t count() const {
        std::size_t n = 1;
        for (std::size_t s : shape)
            n *= s;
        return n;
    }
};

struct TensorFile {
    std::map<std::string, std::int64_t> dims;
    std::vector<std::pair<std::string, Tensor>> tensors; // manifest order

    const Tensor& get(const std::string& name) const {
        for (const auto& [n, t] : tensors)
            if (n == name)
                return t;
        throw SchemaError("manifest: missing tensor '" + name + "'");
    }

    std::int64_t dim(const std::string& name) const {
        auto it = dims.find(name);
        if (it == dims.end())
            throw SchemaError("manifest: missing dim '" + name + "'");
        return it->second;
    }
};

inline std::string data_file_name(const std::string& tensor_name) {
    std::string out = tensor_name;
    for (char& ch : out)
        if (ch == '.' || ch == '/')
            ch = '_';
    return out + ".f32";
}

inline void save(const TensorFile& tf, const std::string& manifest_path) {
    namespace fs = std::filesystem;
    const fs::path mpath(manifest_path);
    const fs::path dir = mpath.has_parent_path() ? mpath.parent_path() : fs::path(".");
    std::error_code ec;
    fs::create_directories(dir, ec);

    nlohmann::json j;
    j["dims"] = nlohmann::json::object();
    for (const auto& [k, v] : tf.dims)
        j["dims"][k] = v;
    j["tensors"] = nlohmann::json::array();
    for (const auto& [name, tensor] : tf.tensors) {
        const std::string data_file = data_file_name(name);
        nlohmann::json tj;
        tj["name"] = name;
        tj["shape"] = tensor.shape;
        tj["data_file"] = data_file;
        j["tensors"].push_back(tj);

        std::ofstream out(dir / data_file, std::ios::binary);
        if (!out)
            throw IoError("cannot write " + (dir / data_file).string());
        for (double x : tensor.data)
            ingest::detail::write_f32_le(out, static_cast<float>(x));
    }

    std::ofstream out(mpath);
    if (!out)
        throw IoError("cannot write " + manifest_path);
    out << j.dump(2) << "\n";
}

inline TensorFile load(const std::string& manifest_path) {
    namespace fs = std::filesystem;
    std::ifstream in(manifest_path);
    if (!in)
        throw IoError("cannot open " + manifest_path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(manifest_path + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("dims") || !j.contains("tensors") ||
        !j["dims"].is_object() || !j["tensors"].is_array())
        throw SchemaError(manifest_path + ": expected {dims, tensors}");

    const fs::path dir = fs::path(manifest_path).has_parent_path()
                             ? fs::path(manifest_path).parent_path()
                             : fs::path(".");
    TensorFile tf;
    for (const auto& [k, v] : j["dims"].items()) {
        if (!v.is_number())
            throw SchemaError(manifest_path + ": dim '" + k + "' must be a number");
        tf.dims[k] = v.get<std::int64_t>();
    }
    for (const auto& tj : j["tensors"]) {
        if (!tj.is_object() || !tj.contains("name") || !tj.contains("shape") ||
            !tj.contains("data_file"))
            throw SchemaError(manifest_path + ": malformed tensor entry");
        Tensor t;
        const std::string name = tj["name"].get<std::string>();
        for (const auto& s : tj["shape"])
            t.shape.push_back(s.get<std::size_t>());
        const fs::path data_path = dir / tj["data_file"].get<std::string>();
        const auto bytes = ingest::detail::read_file_bytes(data_path.string());
        const std::size_t expected = t.count() * 4;
        if (bytes.size() != expected)
            throw FormatError(data_path.string() + ": expected " +
                              std::to_string(expected) + " bytes for tensor '" + name +
                              "', found " + std::to_string(bytes.size()));
        t.data.resize(t.count());
        for (std::size_t i = 0; i < t.count(); ++i) {
            const float f = ingest::detail::f32_from_le(bytes.data() + 4 * i);
            if (!std::isfinite(f))
                throw FormatError(data_path.string() + ": non-finite value at byte offset " +
                                  std::to_string(4 * i));
            t.data[i] = static_cast<double>(f);
        }
        tf.tensors.emplace_back(name, std::move(t));
    }
    return tf;
}

} // namespace prn::manifest
