#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "odgen/core/error.hpp"
#include "odgen/nn/module.hpp"

// Checkpoint container: 8-byte magic, u32 version, u64 header length, JSON
// header (metadata + tensor directory), then raw little-endian f32 data.

namespace odgen::nn {

inline constexpr char kCkptMagic[8] = {'O', 'D', 'G', 'N', 'C', 'K', 'P', 'T'};
inline constexpr uint32_t kCkptVersion = 1;

inline void save_checkpoint(const std::string& path, const ParamList<float>& params,
                            const nlohmann::json& meta) {
    nlohmann::json dir = nlohmann::json::array();
    uint64_t offset = 0;
    for (const auto& p : params) {
        dir.push_back({{"name", p.name},
                       {"shape", p.tensor.shape()},
                       {"dtype", "f32"},
                       {"offset", offset},
                       {"count", p.tensor.numel()}});
        offset += static_cast<uint64_t>(p.tensor.numel()) * sizeof(float);
    }
    nlohmann::json header = {{"meta", meta}, {"tensors", dir}};
    const std::string hs = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path);
    out.write(kCkptMagic, 8);
    const uint32_t version = kCkptVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    const uint64_t hlen = hs.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& p : params) {
        out.write(reinterpret_cast<const char*>(p.tensor.val()),
                  static_cast<std::streamsize>(p.tensor.numel() * sizeof(float)));
    }
    if (!out) throw IoError("short write on checkpoint " + path);
}

struct LoadedCheckpoint {
    nlohmann::json meta;
    std::map<std::string, std::pair<std::vector<int>, std::vector<float>>> tensors;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kCkptMagic, 8) != 0) {
        throw IoError("not a checkpoint file: " + path);
    }
    uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (version != kCkptVersion) {
        throw IoError(strfmt("unsupported checkpoint version %u in %s", version, path.c_str()));
    }
    uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    std::string hs(hlen, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(hlen));
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(hs);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(strfmt("bad checkpoint header in %s: %s", path.c_str(), e.what()));
    }

    LoadedCheckpoint ckpt;
    ckpt.meta = header.value("meta", nlohmann::json::object());
    const std::streampos data_start = in.tellg();
    for (const auto& entry : header.at("tensors")) {
        const std::string name = entry.at("name").get<std::string>();
        const auto shape = entry.at("shape").get<std::vector<int>>();
        const uint64_t offset = entry.at("offset").get<uint64_t>();
        const int64_t count = entry.at("count").get<int64_t>();
        std::vector<float> vals(static_cast<size_t>(count));
        in.seekg(data_start + static_cast<std::streamoff>(offset));
        in.read(reinterpret_cast<char*>(vals.data()),
                static_cast<std::streamsize>(count * sizeof(float)));
        if (!in) throw IoError("truncated checkpoint " + path);
        ckpt.tensors.emplace(name, std::make_pair(shape, std::move(vals)));
    }
    return ckpt;
}

// Copies stored values into an existing parameter list, matching by name.
inline void restore_params(const LoadedCheckpoint& ckpt, const ParamList<float>& params) {
    for (const auto& p : params) {
        auto it = ckpt.tensors.find(p.name);
        if (it == ckpt.tensors.end()) {
            throw IoError("checkpoint is missing tensor " + p.name);
        }
        if (it->second.first != p.tensor.shape() ||
            static_cast<int64_t>(it->second.second.size()) != p.tensor.numel()) {
            throw ShapeMismatchError("checkpoint tensor " + p.name + " has wrong shape");
        }
        std::copy(it->second.second.begin(), it->second.second.end(),
                  const_cast<float*>(p.tensor.val()));
    }
}

}  // namespace odgen::nn
