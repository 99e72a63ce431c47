// Evaluation protocol: for each held-out sim image, draw a style reference
// from the style-source manifest (matched by lighting band), translate with
// the EMA generator, and report Frechet distances of the generated and sim
// sets against the held-out real set, plus style-classifier score
// distributions and side-by-side grids.
#pragma once

#include <functional>
#include <set>

#include "aptx/fid.hpp"
#include "aptx/train.hpp"

namespace aptx {

inline constexpr std::uint64_t kDefaultFidExtractorSeed = 4242;
inline constexpr std::int64_t kDefaultFidFeatureDim = 192;

struct EvalReport {
    double fid_gen_vs_real = 0;
    double fid_sim_vs_real = 0;
    std::vector<double> style_scores_sim, style_scores_gen, style_scores_real;
    std::vector<std::string> grid_paths;
    std::uint64_t extractor_seed = kDefaultFidExtractorSeed;
    std::int64_t feature_dim = kDefaultFidFeatureDim;

    json to_json() const {
        return json{{"fid-gen-vs-real", fid_gen_vs_real},
                    {"fid-sim-vs-real", fid_sim_vs_real},
                    {"style-scores",
                     {{"sim", style_scores_sim},
                      {"gen", style_scores_gen},
                      {"real", style_scores_real}}},
                    {"grids", grid_paths},
                    {"extractor",
                     {{"seed", extractor_seed},
                      {"feature-dim", feature_dim},
                      {"provenance",
                       "fixed-seed random convolutional extractor; scores are comparable "
                       "across runs of this tool, not to InceptionV3-based FID"}}}};
    }
};

// Rows of equal-size images composited left-to-right into one PNG.
inline void write_grid(const fs::path& path,
                       const std::vector<std::array<Image, 3>>& rows) {
    if (rows.empty()) throw ConfigError("write_grid: no rows");
    const std::int64_t h = rows[0][0].dim(0), w = rows[0][0].dim(1);
    Image grid(Shape{static_cast<std::int64_t>(rows.size()) * h, 3 * w, 3});
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (int col = 0; col < 3; ++col) {
            const Image& cell = rows[r][static_cast<std::size_t>(col)];
            if (cell.dim(0) != h || cell.dim(1) != w)
                throw ShapeError("write_grid: cells must share a size");
            for (std::int64_t y = 0; y < h; ++y)
                for (std::int64_t x = 0; x < w; ++x)
                    for (std::int64_t c = 0; c < 3; ++c)
                        grid.at(static_cast<std::int64_t>(r) * h + y, col * w + x, c) =
                            cell.at(y, x, c);
        }
    encode_png(path, grid);
}

// Evaluation-time models: EMA weights for G and S, stored weights for W_s.
struct EvalModels {
    TrainConfig cfg;
    Generator<float> g;
    StyleEncoder<float> s;
    StyleClassifier<float> ws;

    explicit EvalModels(const CheckpointData& ckpt)
        : cfg(train_config_from_json(ckpt.header.at("config"))),
          g(cfg.model, derive(cfg.seed, "g")),
          s(cfg.model, derive(cfg.seed, "s")),
          ws(cfg.model, derive(cfg.seed, "ws")) {
        auto load = [&](const char* ema_prefix, const char* raw_prefix, ParamSet<float>& ps) {
            for (auto& [name, var] : ps.items) {
                const Tensor<float>* t = ckpt.find(cat(ema_prefix, ".", name));
                if (!t) t = ckpt.find(cat(raw_prefix, ".", name));
                if (!t) throw IoError(cat("checkpoint missing array for ", raw_prefix, ".", name));
                var.value() = *t;
            }
        };
        load("ema.g", "g", g.params);
        load("ema.s", "s", s.params);
        load("ws", "ws", ws.params);
    }

    // y_hat = G(x, S(style) - S(x))
    Image translate(const Image& sim, const Image& style) const {
        NoGradGuard ng;
        Var<float> x(image_to_nchw(sim));
        Var<float> y(image_to_nchw(style));
        const auto delta = style_difference(s(y), s(x));
        return nchw_to_image(g(x, delta).value());
    }

    double style_score(const Image& img) const {
        NoGradGuard ng;
        Var<float> x(image_to_nchw(img));
        return static_cast<double>(ws(s(x)).value()[0]);
    }
};

namespace detail {

inline void check_disjoint(const DatasetManifest& test, const DatasetManifest& style_source) {
    std::set<std::uint64_t> test_seeds;
    for (const auto& e : test.entries) test_seeds.insert(e.scene_seed);
    for (const auto& e : style_source.entries)
        if (test_seeds.count(e.scene_seed))
            throw ContaminationError(cat("test and style-source manifests share scene seed ",
                                         e.scene_seed, "; they must be disjoint"));
}

}  // namespace detail

// Pipeline core, parameterized on the translator so the protocol can be
// exercised with a known-identity translation. The style path draws only
// style-source real images; a provenance assertion rejects any draw that
// resolves to a test-real file.
inline EvalReport evaluate_core(
    const DatasetManifest& test, const DatasetManifest& style_source, std::uint64_t seed,
    const fs::path& out_dir,
    const std::function<Image(const Image& sim, const Image& style)>& translate,
    const std::function<double(const Image&)>& style_score,
    std::uint64_t extractor_seed = kDefaultFidExtractorSeed,
    std::int64_t feature_dim = kDefaultFidFeatureDim, std::int64_t grid_rows = 8) {
    detail::check_disjoint(test, style_source);
    if (test.size() < 2) throw SamplingError("evaluation needs >= 2 test pairs");
    fs::create_directories(out_dir);

    std::set<std::string> test_real_paths;
    for (std::int64_t i = 0; i < test.size(); ++i)
        test_real_paths.insert(fs::weakly_canonical(test.real_file(i)).string());

    // Style candidates grouped by lighting band.
    std::vector<std::vector<std::int64_t>> by_band(3);
    for (std::int64_t i = 0; i < style_source.size(); ++i)
        by_band[static_cast<std::size_t>(
                    style_source.entries[static_cast<std::size_t>(i)].lighting_band)]
            .push_back(i);

    std::vector<Image> sims, gens, reals;
    sims.reserve(static_cast<std::size_t>(test.size()));
    for (std::int64_t i = 0; i < test.size(); ++i) {
        const auto& entry = test.entries[static_cast<std::size_t>(i)];
        Rng rng(derive(seed, "style-draw", static_cast<std::uint64_t>(i)));
        const auto& band = by_band[static_cast<std::size_t>(entry.lighting_band)];
        std::int64_t style_idx;
        if (!band.empty()) {
            style_idx = band[static_cast<std::size_t>(rng.uniform_int(
                static_cast<std::int64_t>(band.size())))];
        } else {
            style_idx = rng.uniform_int(style_source.size());
        }
        const fs::path style_path = style_source.real_file(style_idx);
        if (test_real_paths.count(fs::weakly_canonical(style_path).string()))
            throw ContaminationError(cat("style draw resolved to a test-real file: ",
                                         style_path.string()));
        const Image sim = decode_png(test.sim_file(i));
        const Image style = decode_png(style_path);
        sims.push_back(sim);
        gens.push_back(translate(sim, style));
        reals.push_back(decode_png(test.real_file(i)));
    }

    const auto extractor = FrozenConvStack<float>::fid_backbone(extractor_seed, feature_dim);
    const auto stats_gen = compute_feature_stats(extract_features(gens, extractor));
    const auto stats_sim = compute_feature_stats(extract_features(sims, extractor));
    const auto stats_real = compute_feature_stats(extract_features(reals, extractor));

    EvalReport report;
    report.extractor_seed = extractor_seed;
    report.feature_dim = feature_dim;
    report.fid_gen_vs_real = frechet_distance(stats_gen, stats_real);
    report.fid_sim_vs_real = frechet_distance(stats_sim, stats_real);
    if (style_score) {
        for (const auto& img : sims) report.style_scores_sim.push_back(style_score(img));
        for (const auto& img : gens) report.style_scores_gen.push_back(style_score(img));
        for (const auto& img : reals) report.style_scores_real.push_back(style_score(img));
    }

    std::vector<std::array<Image, 3>> rows;
    const std::int64_t k = std::min<std::int64_t>(grid_rows, test.size());
    for (std::int64_t i = 0; i < k; ++i)
        rows.push_back({sims[static_cast<std::size_t>(i)], gens[static_cast<std::size_t>(i)],
                        reals[static_cast<std::size_t>(i)]});
    const fs::path grid_path = out_dir / "grid_0.png";
    write_grid(grid_path, rows);
    report.grid_paths.push_back(grid_path.string());

    std::ofstream out(out_dir / "report.json");
    if (!out) throw IoError(cat("cannot write report: ", (out_dir / "report.json").string()));
    out << report.to_json().dump(2) << "\n";
    return report;
}

// Full protocol from a training checkpoint (EMA parameters).
inline EvalReport evaluate(const CheckpointData& ckpt, const DatasetManifest& test,
                           const DatasetManifest& style_source, std::uint64_t seed,
                           const fs::path& out_dir,
                           std::uint64_t extractor_seed = kDefaultFidExtractorSeed,
                           std::int64_t feature_dim = kDefaultFidFeatureDim,
                           std::int64_t grid_rows = 8) {
    EvalModels models(ckpt);
    return evaluate_core(
        test, style_source, seed, out_dir,
        [&](const Image& sim, const Image& style) { return models.translate(sim, style); },
        [&](const Image& img) { return models.style_score(img); }, extractor_seed, feature_dim,
        grid_rows);
}

}  // namespace aptx
