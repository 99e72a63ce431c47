// Dataset persistence and paired mini-batch loading.
//
// A dataset is a directory of sim/real PNG pairs plus a JSON manifest. The
// manifest carries everything needed to regenerate each pair bit-exactly
// from its scene seed.
#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <unordered_map>

#include "aptx/scene.hpp"

namespace aptx {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct ManifestEntry {
    std::int64_t index = 0;
    std::string sim_path;
    std::string real_path;
    std::uint64_t scene_seed = 0;
    int lighting_band = 0;
};

struct DatasetManifest {
    int version = 1;
    std::int64_t height = 0, width = 0;
    std::vector<ManifestEntry> entries;
    StyleGapConfig gap;
    std::uint64_t generator_seed = 0;
    GenerationConfig generation;
    fs::path dir;  // directory holding the manifest; not serialized

    std::int64_t size() const { return static_cast<std::int64_t>(entries.size()); }
    fs::path sim_file(std::int64_t i) const { return dir / entries[static_cast<std::size_t>(i)].sim_path; }
    fs::path real_file(std::int64_t i) const { return dir / entries[static_cast<std::size_t>(i)].real_path; }
};

inline json gap_to_json(const StyleGapConfig& g) {
    return json{{"noise-sigma", g.noise_sigma},
                {"blur-radius", g.blur_radius},
                {"tone-curve-gamma", g.tone_curve_gamma},
                {"color-shift", {g.color_shift[0], g.color_shift[1], g.color_shift[2]}},
                {"texture-amplitude", g.texture_amplitude}};
}

inline StyleGapConfig gap_from_json(const json& j) {
    StyleGapConfig g;
    g.noise_sigma = j.at("noise-sigma").get<double>();
    g.blur_radius = j.at("blur-radius").get<double>();
    g.tone_curve_gamma = j.at("tone-curve-gamma").get<double>();
    const auto& cs = j.at("color-shift");
    g.color_shift = {cs.at(0).get<double>(), cs.at(1).get<double>(), cs.at(2).get<double>()};
    g.texture_amplitude = j.at("texture-amplitude").get<double>();
    return g;
}

inline json manifest_to_json(const DatasetManifest& m) {
    json entries = json::array();
    for (const auto& e : m.entries)
        entries.push_back(json{{"index", e.index},
                               {"sim-path", e.sim_path},
                               {"real-path", e.real_path},
                               {"scene-seed", e.scene_seed},
                               {"lighting-band", e.lighting_band}});
    return json{{"version", m.version},
                {"image-size", {m.height, m.width}},
                {"entries", std::move(entries)},
                {"style-gap", gap_to_json(m.gap)},
                {"generator-seed", m.generator_seed},
                {"generation",
                 {{"min-objects", m.generation.min_objects},
                  {"max-objects", m.generation.max_objects},
                  {"jitter", m.generation.jitter_magnitude}}}};
}

inline DatasetManifest manifest_from_json(const json& j, fs::path dir) {
    DatasetManifest m;
    m.version = j.at("version").get<int>();
    m.height = j.at("image-size").at(0).get<std::int64_t>();
    m.width = j.at("image-size").at(1).get<std::int64_t>();
    for (const auto& je : j.at("entries")) {
        ManifestEntry e;
        e.index = je.at("index").get<std::int64_t>();
        e.sim_path = je.at("sim-path").get<std::string>();
        e.real_path = je.at("real-path").get<std::string>();
        e.scene_seed = je.at("scene-seed").get<std::uint64_t>();
        e.lighting_band = je.value("lighting-band", 0);
        m.entries.push_back(std::move(e));
    }
    m.gap = gap_from_json(j.at("style-gap"));
    m.generator_seed = j.at("generator-seed").get<std::uint64_t>();
    if (j.contains("generation")) {
        m.generation.min_objects = j["generation"].at("min-objects").get<int>();
        m.generation.max_objects = j["generation"].at("max-objects").get<int>();
        m.generation.jitter_magnitude = j["generation"].at("jitter").get<double>();
    }
    m.dir = std::move(dir);
    for (std::size_t i = 0; i < m.entries.size(); ++i)
        if (m.entries[i].index != static_cast<std::int64_t>(i))
            throw ConfigError(cat("manifest entry ", i, " has index ", m.entries[i].index,
                                  "; indices must be 0..N-1 with no gaps"));
    return m;
}

inline void save_manifest(const DatasetManifest& m, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError(cat("cannot write manifest: ", path.string()));
    out << manifest_to_json(m).dump(2) << "\n";
    if (!out) throw IoError(cat("manifest write failed: ", path.string()));
}

inline DatasetManifest load_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError(cat("cannot open manifest: ", path.string()));
    json j;
    in >> j;
    return manifest_from_json(j, path.parent_path());
}

// Per-scene seeds derive from (generator seed, index), so content is
// independent of generation order.
inline std::uint64_t scene_seed_for(std::uint64_t generator_seed, std::int64_t index) {
    return derive(generator_seed, "scene", static_cast<std::uint64_t>(index));
}

inline DatasetManifest make_dataset(std::int64_t n, std::uint64_t seed, const StyleGapConfig& gap,
                                    const GenerationConfig& generation, std::int64_t image_size,
                                    const fs::path& out_dir) {
    if (n < 1) throw ConfigError(cat("dataset size must be >= 1, got ", n));
    gap.validate();
    generation.validate();
    detail::validate_render_size(image_size, image_size);

    std::error_code ec;
    fs::create_directories(out_dir / "sim", ec);
    fs::create_directories(out_dir / "real", ec);
    if (!fs::is_directory(out_dir / "sim") || !fs::is_directory(out_dir / "real"))
        throw IoError(cat("cannot create dataset directories under ", out_dir.string()));

    DatasetManifest m;
    m.height = m.width = image_size;
    m.gap = gap;
    m.generator_seed = seed;
    m.generation = generation;
    m.dir = out_dir;
    m.entries.reserve(static_cast<std::size_t>(n));
    char name[32];
    for (std::int64_t i = 0; i < n; ++i) {
        const std::uint64_t sseed = scene_seed_for(seed, i);
        const SceneSpec spec = generate_scene(sseed, generation);
        std::snprintf(name, sizeof(name), "%06lld.png", static_cast<long long>(i));
        ManifestEntry e;
        e.index = i;
        e.sim_path = std::string("sim/") + name;
        e.real_path = std::string("real/") + name;
        e.scene_seed = sseed;
        e.lighting_band = lighting_band(spec.lighting);
        try {
            encode_png(out_dir / e.sim_path, render_sim(spec, image_size, image_size));
            encode_png(out_dir / e.real_path, render_real(spec, gap, image_size, image_size));
        } catch (const IoError& err) {
            throw IoError(cat("dataset write failed at entry ", i, ": ", err.what()));
        }
        m.entries.push_back(std::move(e));
    }
    save_manifest(m, out_dir / "manifest.json");
    return m;
}

struct PairedBatch {
    Tensor<float> sim;   // [B, crop, crop, 3] in [-1,1]
    Tensor<float> real;  // [B, crop, crop, 3]
    std::vector<std::int64_t> indices;
};

// Decoded-image cache keyed by entry index; read-only after fill, shared by
// repeated batch loads over the same manifest.
class ImageCache {
public:
    const Image& sim(const DatasetManifest& m, std::int64_t i) {
        return fetch(sim_, m.sim_file(i), i);
    }
    const Image& real(const DatasetManifest& m, std::int64_t i) {
        return fetch(real_, m.real_file(i), i);
    }

private:
    const Image& fetch(std::unordered_map<std::int64_t, Image>& map, const fs::path& path,
                       std::int64_t i) {
        auto it = map.find(i);
        if (it == map.end()) it = map.emplace(i, decode_png(path)).first;
        return it->second;
    }
    std::unordered_map<std::int64_t, Image> sim_, real_;
};

// One crop offset per pair, applied to both members; offsets drawn
// uniformly over the full valid lattice from rng_seed.
inline PairedBatch load_paired_batch(const DatasetManifest& manifest,
                                     std::span<const std::int64_t> indices, std::int64_t crop,
                                     std::uint64_t rng_seed, ImageCache* cache = nullptr) {
    if (crop < 1 || crop > manifest.height || crop > manifest.width)
        throw ConfigError(cat("crop ", crop, " exceeds image size ", manifest.height, "x",
                              manifest.width));
    const std::int64_t batch = static_cast<std::int64_t>(indices.size());
    PairedBatch out;
    out.sim = Tensor<float>(Shape{batch, crop, crop, 3});
    out.real = Tensor<float>(Shape{batch, crop, crop, 3});
    out.indices.assign(indices.begin(), indices.end());
    Rng rng(rng_seed);
    ImageCache local;
    ImageCache& c = cache ? *cache : local;
    for (std::int64_t b = 0; b < batch; ++b) {
        const std::int64_t idx = indices[static_cast<std::size_t>(b)];
        if (idx < 0 || idx >= manifest.size())
            throw LookupError(cat("batch index ", idx, " out of range [0,", manifest.size(), ")"));
        const std::int64_t top = rng.uniform_int(manifest.height - crop + 1);
        const std::int64_t left = rng.uniform_int(manifest.width - crop + 1);
        const Image& sim = c.sim(manifest, idx);
        const Image& real = c.real(manifest, idx);
        if (sim.dim(0) != manifest.height || sim.dim(1) != manifest.width ||
            real.dim(0) != manifest.height || real.dim(1) != manifest.width)
            throw IoError(cat("entry ", idx, " decodes to a size different from the manifest"));
        for (std::int64_t y = 0; y < crop; ++y)
            for (std::int64_t x = 0; x < crop; ++x)
                for (std::int64_t ch = 0; ch < 3; ++ch) {
                    out.sim.at(b, y, x, ch) = sim.at(top + y, left + x, ch);
                    out.real.at(b, y, x, ch) = real.at(top + y, left + x, ch);
                }
    }
    return out;
}

}  // namespace aptx
