// Procedural paired-scene generation.
//
// A SceneSpec is a seeded 2-D composition (road band, buildings, light
// discs, foliage blobs) rendered twice: render_sim produces a flat-shaded,
// noiseless image, render_real re-renders the same spec with layout jitter
// and a configurable appearance gap (texture, blur, tone curve, color shift,
// sensor noise). Identical inputs give bit-identical outputs.
#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "aptx/core.hpp"
#include "aptx/image.hpp"
#include "aptx/rng.hpp"

namespace aptx {

enum class ShapeKind : int { kRoadBand = 0, kBuilding = 1, kLightDisc = 2, kFoliageBlob = 3 };

struct SceneObject {
    ShapeKind kind = ShapeKind::kBuilding;
    double cx = 0.5, cy = 0.5;   // center, normalized [0,1]
    double sx = 0.1, sy = 0.1;   // extent, normalized
    std::array<double, 3> color{0.5, 0.5, 0.5};
};

struct SceneSpec {
    std::uint64_t seed = 0;
    std::vector<SceneObject> objects;
    std::array<double, 3> background{0.5, 0.5, 0.5};
    double lighting = 1.0;  // [0.5, 1.5]
    // Per-object center offsets applied only by the "real" renderer.
    std::vector<std::array<double, 2>> jitter;
};

struct GenerationConfig {
    int min_objects = 3;
    int max_objects = 8;
    double jitter_magnitude = 0.02;  // normalized units

    void validate() const {
        if (min_objects < 1 || max_objects < min_objects)
            throw ConfigError(cat("invalid object count range [", min_objects, ",", max_objects,
                                  "]"));
        if (jitter_magnitude < 0 || !std::isfinite(jitter_magnitude))
            throw ConfigError("jitter magnitude must be finite and >= 0");
    }
};

struct StyleGapConfig {
    double noise_sigma = 0.0;
    double blur_radius = 0.0;
    double tone_curve_gamma = 1.0;
    std::array<double, 3> color_shift{0.0, 0.0, 0.0};
    double texture_amplitude = 0.0;

    void validate() const {
        const bool finite = std::isfinite(noise_sigma) && std::isfinite(blur_radius) &&
                            std::isfinite(tone_curve_gamma) && std::isfinite(texture_amplitude) &&
                            std::isfinite(color_shift[0]) && std::isfinite(color_shift[1]) &&
                            std::isfinite(color_shift[2]);
        if (!finite) throw ConfigError("style gap parameters must be finite");
        if (noise_sigma < 0 || blur_radius < 0 || texture_amplitude < 0)
            throw ConfigError("style gap magnitudes must be >= 0");
        if (tone_curve_gamma <= 0) throw ConfigError("tone curve gamma must be > 0");
    }

    bool is_zero() const {
        return noise_sigma == 0 && blur_radius == 0 && tone_curve_gamma == 1 &&
               texture_amplitude == 0 && color_shift[0] == 0 && color_shift[1] == 0 &&
               color_shift[2] == 0;
    }
};

// Lighting bands partition [0.5, 1.5] into thirds; used to match style
// sources to inputs with similar illumination.
inline int lighting_band(double lighting) {
    if (lighting < 0.5 + 1.0 / 3.0) return 0;
    if (lighting < 0.5 + 2.0 / 3.0) return 1;
    return 2;
}

inline SceneSpec generate_scene(std::uint64_t seed, const GenerationConfig& cfg) {
    cfg.validate();
    Rng rng(derive(seed, "scene-gen"));
    SceneSpec spec;
    spec.seed = seed;
    spec.lighting = rng.uniform(0.5, 1.5);
    spec.background = {rng.uniform(0.25, 0.75), rng.uniform(0.3, 0.8), rng.uniform(0.35, 0.9)};
    const int count =
        cfg.min_objects + static_cast<int>(rng.uniform_int(cfg.max_objects - cfg.min_objects + 1));
    spec.objects.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        SceneObject obj;
        obj.kind = static_cast<ShapeKind>(rng.uniform_int(4));
        switch (obj.kind) {
            case ShapeKind::kRoadBand:
                obj.cx = 0.5;
                obj.sx = 1.0;
                obj.cy = rng.uniform(0.45, 0.85);
                obj.sy = rng.uniform(0.08, 0.2);
                {
                    const double g = rng.uniform(0.15, 0.35);
                    obj.color = {g, g, g * rng.uniform(0.95, 1.1)};
                }
                break;
            case ShapeKind::kBuilding:
                obj.sx = rng.uniform(0.08, 0.3);
                obj.sy = rng.uniform(0.1, 0.4);
                obj.cx = rng.uniform(obj.sx / 2, 1.0 - obj.sx / 2);
                obj.cy = rng.uniform(obj.sy / 2, 0.6);
                obj.color = {rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8)};
                break;
            case ShapeKind::kLightDisc:
                obj.sx = obj.sy = rng.uniform(0.03, 0.1);
                obj.cx = rng.uniform(obj.sx / 2, 1.0 - obj.sx / 2);
                obj.cy = rng.uniform(obj.sy / 2, 0.5);
                obj.color = {rng.uniform(0.75, 1.0), rng.uniform(0.7, 1.0), rng.uniform(0.5, 0.9)};
                break;
            case ShapeKind::kFoliageBlob:
                obj.sx = obj.sy = rng.uniform(0.08, 0.22);
                obj.cx = rng.uniform(obj.sx / 2, 1.0 - obj.sx / 2);
                obj.cy = rng.uniform(0.3, 0.85);
                obj.color = {rng.uniform(0.05, 0.25), rng.uniform(0.3, 0.65),
                             rng.uniform(0.05, 0.25)};
                break;
        }
        spec.objects.push_back(obj);
    }
    spec.jitter.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i)
        spec.jitter.push_back({rng.uniform(-cfg.jitter_magnitude, cfg.jitter_magnitude),
                               rng.uniform(-cfg.jitter_magnitude, cfg.jitter_magnitude)});
    return spec;
}

namespace detail {

inline double clamp01(double v) { return v < 0 ? 0 : (v > 1 ? 1 : v); }

// Keep jittered centers inside the frame.
inline double clamp_center(double c, double extent) {
    const double half = std::min(extent / 2, 0.5);
    return std::min(std::max(c, half), 1.0 - half);
}

struct RenderObject {
    SceneObject obj;
    std::array<std::array<double, 3>, 3> blob_offsets;  // {dx, dy, radius-scale}
};

inline bool inside(const RenderObject& ro, double x, double y) {
    const SceneObject& o = ro.obj;
    switch (o.kind) {
        case ShapeKind::kRoadBand:
            return std::abs(y - o.cy) <= o.sy / 2;
        case ShapeKind::kBuilding:
            return std::abs(x - o.cx) <= o.sx / 2 && std::abs(y - o.cy) <= o.sy / 2;
        case ShapeKind::kLightDisc: {
            const double r = o.sx / 2;
            const double dx = x - o.cx, dy = y - o.cy;
            return dx * dx + dy * dy <= r * r;
        }
        case ShapeKind::kFoliageBlob: {
            for (const auto& b : ro.blob_offsets) {
                const double r = o.sx / 2 * b[2];
                const double dx = x - (o.cx + b[0]), dy = y - (o.cy + b[1]);
                if (dx * dx + dy * dy <= r * r) return true;
            }
            return false;
        }
    }
    return false;
}

// Blob sub-circles derive from the scene seed and object index only, so the
// sim and real renderers agree on silhouettes.
inline std::array<std::array<double, 3>, 3> blob_offsets(std::uint64_t scene_seed,
                                                         std::size_t obj_index, double extent) {
    Rng rng(derive(scene_seed, "blob", obj_index));
    std::array<std::array<double, 3>, 3> out{};
    for (auto& b : out)
        b = {rng.uniform(-extent / 4, extent / 4), rng.uniform(-extent / 4, extent / 4),
             rng.uniform(0.55, 0.95)};
    return out;
}

// Flat-shaded paint of a list of objects over the background.
inline std::vector<double> paint(const SceneSpec& spec, const std::vector<RenderObject>& objects,
                                 std::int64_t h, std::int64_t w, double texture_amplitude) {
    std::vector<double> rgb(static_cast<std::size_t>(h * w * 3));
    // Value-noise lattice for the "real" texture pass.
    constexpr int kLattice = 9;
    std::array<double, kLattice * kLattice> noise_grid{};
    if (texture_amplitude > 0) {
        Rng trng(derive(spec.seed, "texture"));
        for (auto& v : noise_grid) v = trng.uniform(-1.0, 1.0);
    }
    auto noise_at = [&](double x, double y) {
        const double gx = x * (kLattice - 1), gy = y * (kLattice - 1);
        const int x0 = std::min(static_cast<int>(gx), kLattice - 2);
        const int y0 = std::min(static_cast<int>(gy), kLattice - 2);
        const double fx = gx - x0, fy = gy - y0;
        const double sx = fx * fx * (3 - 2 * fx);
        const double sy = fy * fy * (3 - 2 * fy);
        const double a = noise_grid[static_cast<std::size_t>(y0 * kLattice + x0)];
        const double b = noise_grid[static_cast<std::size_t>(y0 * kLattice + x0 + 1)];
        const double c = noise_grid[static_cast<std::size_t>((y0 + 1) * kLattice + x0)];
        const double d = noise_grid[static_cast<std::size_t>((y0 + 1) * kLattice + x0 + 1)];
        return (a * (1 - sx) + b * sx) * (1 - sy) + (c * (1 - sx) + d * sx) * sy;
    };
    for (std::int64_t py = 0; py < h; ++py) {
        const double y = (static_cast<double>(py) + 0.5) / static_cast<double>(h);
        for (std::int64_t px = 0; px < w; ++px) {
            const double x = (static_cast<double>(px) + 0.5) / static_cast<double>(w);
            const std::array<double, 3>* color = &spec.background;
            bool on_object = false;
            for (const auto& ro : objects) {
                if (inside(ro, x, y)) {
                    color = &ro.obj.color;
                    on_object = true;
                }
            }
            double albedo_scale = 1.0;
            if (texture_amplitude > 0 && on_object)
                albedo_scale = 1.0 + texture_amplitude * noise_at(x, y);
            double* out = rgb.data() + (py * w + px) * 3;
            for (int c = 0; c < 3; ++c)
                out[c] = clamp01((*color)[static_cast<std::size_t>(c)] * albedo_scale *
                                 spec.lighting);
        }
    }
    return rgb;
}

inline void gaussian_blur(std::vector<double>& rgb, std::int64_t h, std::int64_t w, double sigma) {
    const int half = std::max(1, static_cast<int>(std::ceil(2.5 * sigma)));
    std::vector<double> kernel(static_cast<std::size_t>(2 * half + 1));
    double ksum = 0;
    for (int i = -half; i <= half; ++i) {
        kernel[static_cast<std::size_t>(i + half)] = std::exp(-0.5 * (i / sigma) * (i / sigma));
        ksum += kernel[static_cast<std::size_t>(i + half)];
    }
    for (auto& k : kernel) k /= ksum;
    auto reflect = [](std::int64_t i, std::int64_t n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - 1 - i;
        return i;
    };
    std::vector<double> tmp(rgb.size());
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                double s = 0;
                for (int i = -half; i <= half; ++i)
                    s += kernel[static_cast<std::size_t>(i + half)] *
                         rgb[static_cast<std::size_t>((y * w + reflect(x + i, w)) * 3 + c)];
                tmp[static_cast<std::size_t>((y * w + x) * 3 + c)] = s;
            }
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                double s = 0;
                for (int i = -half; i <= half; ++i)
                    s += kernel[static_cast<std::size_t>(i + half)] *
                         tmp[static_cast<std::size_t>((reflect(y + i, h) * w + x) * 3 + c)];
                rgb[static_cast<std::size_t>((y * w + x) * 3 + c)] = s;
            }
}

inline void validate_render_size(std::int64_t h, std::int64_t w) {
    if (h < kGeneratorDownsample || w < kGeneratorDownsample || h % kGeneratorDownsample != 0 ||
        w % kGeneratorDownsample != 0)
        throw ConfigError(cat("render size ", h, "x", w, " must be a positive multiple of ",
                              kGeneratorDownsample));
}

inline Image to_image(const std::vector<double>& rgb, std::int64_t h, std::int64_t w) {
    Image img(Shape{h, w, 3});
    for (std::int64_t i = 0; i < h * w * 3; ++i)
        img[i] = static_cast<float>(rgb[static_cast<std::size_t>(i)] * 2.0 - 1.0);
    return img;
}

inline std::vector<RenderObject> render_objects(const SceneSpec& spec, bool apply_jitter) {
    std::vector<RenderObject> out;
    out.reserve(spec.objects.size());
    for (std::size_t i = 0; i < spec.objects.size(); ++i) {
        RenderObject ro;
        ro.obj = spec.objects[i];
        if (apply_jitter && i < spec.jitter.size()) {
            if (ro.obj.kind != ShapeKind::kRoadBand)
                ro.obj.cx = clamp_center(ro.obj.cx + spec.jitter[i][0], ro.obj.sx);
            ro.obj.cy = clamp_center(ro.obj.cy + spec.jitter[i][1], ro.obj.sy);
        }
        if (ro.obj.kind == ShapeKind::kFoliageBlob)
            ro.blob_offsets = blob_offsets(spec.seed, i, ro.obj.sx);
        out.push_back(ro);
    }
    return out;
}

}  // namespace detail

inline Image render_sim(const SceneSpec& spec, std::int64_t h, std::int64_t w) {
    detail::validate_render_size(h, w);
    if (spec.objects.empty()) throw ConfigError("scene has no objects");
    const auto objects = detail::render_objects(spec, /*apply_jitter=*/false);
    const auto rgb = detail::paint(spec, objects, h, w, 0.0);
    return detail::to_image(rgb, h, w);
}

// Appearance-gap pipeline, applied in order: layout jitter, texture
// modulation, blur, tone curve, color shift, additive noise. Stages at their
// neutral value are skipped entirely so the zero-gap configuration is
// bit-identical to render_sim.
inline Image render_real(const SceneSpec& spec, const StyleGapConfig& gap, std::int64_t h,
                         std::int64_t w) {
    detail::validate_render_size(h, w);
    gap.validate();
    if (spec.objects.empty()) throw ConfigError("scene has no objects");
    const auto objects = detail::render_objects(spec, /*apply_jitter=*/true);
    auto rgb = detail::paint(spec, objects, h, w, gap.texture_amplitude);
    if (gap.blur_radius > 0) detail::gaussian_blur(rgb, h, w, gap.blur_radius);
    if (gap.tone_curve_gamma != 1.0)
        for (auto& v : rgb) v = std::pow(detail::clamp01(v), gap.tone_curve_gamma);
    if (gap.color_shift != std::array<double, 3>{0, 0, 0})
        for (std::size_t i = 0; i < rgb.size(); ++i) rgb[i] += gap.color_shift[i % 3];
    if (gap.noise_sigma > 0) {
        Rng nrng(derive(spec.seed, "sensor-noise"));
        for (auto& v : rgb) v += gap.noise_sigma * nrng.normal();
    }
    for (auto& v : rgb) v = detail::clamp01(v);
    return detail::to_image(rgb, h, w);
}

}  // namespace aptx
