// Single-file checkpoint archive.
//
// Layout: 8-byte magic, little-endian u64 header length, JSON header, raw
// float32 array data. The header carries the iteration counter, the resolved
// training config, optimizer step counts, metric history, and one
// {name, shape, offset} record per array. Round-trips are bit-exact.
#pragma once

#include <nlohmann/json.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "aptx/tensor.hpp"

namespace aptx {

inline constexpr char kCheckpointMagic[8] = {'A', 'P', 'T', 'X', 'C', 'K', 'P', '1'};

struct CheckpointData {
    nlohmann::json header;  // everything except the arrays
    std::vector<std::pair<std::string, Tensor<float>>> arrays;

    const Tensor<float>* find(const std::string& name) const {
        for (const auto& [n, t] : arrays)
            if (n == name) return &t;
        return nullptr;
    }
};

inline void save_checkpoint(const std::filesystem::path& path, const CheckpointData& ckpt) {
    nlohmann::json header = ckpt.header;
    nlohmann::json records = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : ckpt.arrays) {
        const std::uint64_t nbytes = static_cast<std::uint64_t>(t.numel()) * sizeof(float);
        records.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset},
                           {"nbytes", nbytes}});
        offset += nbytes;
    }
    header["arrays"] = std::move(records);
    const std::string header_bytes = header.dump();

    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError(cat("cannot write checkpoint: ", path.string()));
        out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
        const std::uint64_t len = header_bytes.size();
        out.write(reinterpret_cast<const char*>(&len), sizeof(len));
        out.write(header_bytes.data(), static_cast<std::streamsize>(header_bytes.size()));
        for (const auto& [name, t] : ckpt.arrays)
            out.write(reinterpret_cast<const char*>(t.data()),
                      static_cast<std::streamsize>(t.numel() * sizeof(float)));
        if (!out) throw IoError(cat("checkpoint write failed: ", path.string()));
    }
    // Atomic replace so an interrupted run never leaves a torn file behind.
    std::filesystem::rename(tmp, path);
}

inline CheckpointData load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(cat("cannot open checkpoint: ", path.string()));
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw IoError(cat("not a checkpoint file: ", path.string()));
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string header_bytes(len, '\0');
    in.read(header_bytes.data(), static_cast<std::streamsize>(len));
    if (!in) throw IoError(cat("truncated checkpoint header: ", path.string()));
    CheckpointData ckpt;
    ckpt.header = nlohmann::json::parse(header_bytes);
    for (const auto& rec : ckpt.header.at("arrays")) {
        Shape shape = rec.at("shape").get<Shape>();
        Tensor<float> t(shape);
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.numel() * sizeof(float)));
        if (!in) throw IoError(cat("truncated checkpoint data: ", path.string()));
        ckpt.arrays.emplace_back(rec.at("name").get<std::string>(), std::move(t));
    }
    ckpt.header.erase("arrays");
    return ckpt;
}

}  // namespace aptx
