// aptx command-line tool: dataset generation, training, inference,
// evaluation, and grid rendering for approximately-paired sim-to-real
// image translation.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.
#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

#include "aptx/config.hpp"
#include "aptx/evaluate.hpp"

namespace {

using namespace aptx;

int run_make_dataset(const CLI::App& cmd) {
    const auto n = cmd.get_option("--n")->as<std::int64_t>();
    const auto seed = cmd.get_option("--seed")->as<std::uint64_t>();
    const auto out = cmd.get_option("--out")->as<std::string>();
    const auto size = cmd.get_option("--size")->as<std::int64_t>();
    StyleGapConfig gap;
    gap.noise_sigma = cmd.get_option("--noise")->as<double>();
    gap.blur_radius = cmd.get_option("--blur")->as<double>();
    gap.tone_curve_gamma = cmd.get_option("--gamma")->as<double>();
    gap.texture_amplitude = cmd.get_option("--texture")->as<double>();
    if (cmd.get_option("--color-shift")->count() > 0) {
        const auto shift = cmd.get_option("--color-shift")->as<std::vector<double>>();
        if (shift.size() != 3) throw ConfigError("--color-shift expects three values");
        gap.color_shift = {shift[0], shift[1], shift[2]};
    }
    GenerationConfig gen;
    gen.min_objects = cmd.get_option("--min-objects")->as<int>();
    gen.max_objects = cmd.get_option("--max-objects")->as<int>();
    gen.jitter_magnitude = cmd.get_option("--jitter")->as<double>();
    const auto manifest = make_dataset(n, seed, gap, gen, size, out);
    std::cout << (manifest.dir / "manifest.json").string() << "\n";
    return 0;
}

int run_train(const CLI::App& cmd) {
    const auto manifest_path = cmd.get_option("--manifest")->as<std::string>();
    const auto out = cmd.get_option("--out")->as<std::string>();
    const auto resume = cmd.get_option("--resume")->as<std::string>();
    const auto stop_at = cmd.get_option("--stop-at")->as<std::int64_t>();
    auto manifest = load_manifest(manifest_path);

    std::optional<Trainer<float>> trainer;
    if (!resume.empty()) {
        trainer.emplace(Trainer<float>::restore(resume, std::move(manifest), out));
    } else {
        // defaults < config file (--config or APTX_CONFIG) < flags
        json file_json;
        const json* file_ptr = nullptr;
        std::string config_path = cmd.get_option("--config")->as<std::string>();
        if (config_path.empty()) {
            if (const char* env = std::getenv("APTX_CONFIG")) config_path = env;
        }
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in) throw IoError(cat("cannot open config file: ", config_path));
            in >> file_json;
            file_ptr = &file_json;
        }
        json flags = json::object();
        auto set_if = [&](const char* flag, const char* path, auto parse) {
            const auto* opt = cmd.get_option(flag);
            if (opt->count() > 0) flags[json::json_pointer("/" + std::string(path))] = parse(opt);
        };
        auto as_i64 = [](const CLI::Option* o) { return o->as<std::int64_t>(); };
        auto as_int = [](const CLI::Option* o) { return o->as<int>(); };
        auto as_f64 = [](const CLI::Option* o) { return o->as<double>(); };
        auto as_u64 = [](const CLI::Option* o) { return o->as<std::uint64_t>(); };
        set_if("--iters", "max-iterations", as_i64);
        set_if("--batch", "batch-size", as_int);
        set_if("--crop", "crop", as_i64);
        set_if("--lr", "lr", as_f64);
        set_if("--lr-constant", "lr-constant-iters", as_i64);
        set_if("--seed", "seed", as_u64);
        set_if("--ema-decay", "ema-decay", as_f64);
        set_if("--smooth", "smooth", as_f64);
        set_if("--pretrain-epochs", "pretrain-epochs", as_int);
        set_if("--pretrain-lr-scale", "pretrain-lr-scale", as_f64);
        if (cmd.get_option("--projected")->count() > 0) flags["projected"] = true;
        set_if("--base-width", "base-width", as_int);
        set_if("--style-dim", "style-dim", as_int);
        set_if("--gen-blocks", "gen-blocks", as_int);
        set_if("--ckpt-every", "ckpt-every", as_i64);
        set_if("--w-cls", "weights/cls", as_f64);
        set_if("--w-sty", "weights/sty", as_f64);
        set_if("--w-nce", "weights/nce", as_f64);
        set_if("--w-idt", "weights/idt", as_f64);
        set_if("--w-lum", "weights/lum", as_f64);
        set_if("--bce-joint", "bce-joint-weight", as_f64);
        set_if("--nce-n", "nce-samples", as_i64);
        set_if("--nce-tau", "nce-tau", as_f64);
        set_if("--ws-lr-scale", "ws-lr-scale", as_f64);
        const auto resolved = ResolvedConfig::resolve(file_ptr, flags);
        if (cmd.get_option("--show-config")->count() > 0) {
            std::cout << resolved.describe();
            return 0;
        }
        trainer.emplace(resolved.config, std::move(manifest), out);
    }
    trainer->train(stop_at);
    std::cout << trainer->latest_checkpoint_path().string() << "\n";
    if (!trainer->history().empty())
        std::cout << trainer->history().back().to_json().dump() << "\n";
    return 0;
}

int run_infer(const CLI::App& cmd) {
    const auto ckpt_path = cmd.get_option("--checkpoint")->as<std::string>();
    const auto inputs = cmd.get_option("--input")->as<std::vector<std::string>>();
    const auto style_path = cmd.get_option("--style")->as<std::string>();
    const auto style_manifest_path = cmd.get_option("--style-manifest")->as<std::string>();
    const auto seed = cmd.get_option("--seed")->as<std::uint64_t>();
    const auto out_dir = fs::path(cmd.get_option("--out")->as<std::string>());
    if (style_path.empty() && style_manifest_path.empty())
        throw ConfigError("one of --style or --style-manifest is required");

    const EvalModels models(load_checkpoint(ckpt_path));
    fs::create_directories(out_dir);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        Image input;
        try {
            input = decode_png(inputs[i]);
        } catch (const IoError& e) {
            throw IoError(cat("cannot read input image ", inputs[i], ": ", e.what()));
        }
        Image style;
        if (!style_path.empty()) {
            style = decode_png(style_path);
        } else {
            const auto style_manifest = load_manifest(style_manifest_path);
            Rng rng(derive(seed, "infer-style", i));
            style = decode_png(style_manifest.real_file(rng.uniform_int(style_manifest.size())));
        }
        const Image out = models.translate(input, style);
        const auto out_path = out_dir / (fs::path(inputs[i]).stem().string() + "_gen.png");
        encode_png(out_path, out);
        std::cout << out_path.string() << "\n";
    }
    return 0;
}

int run_eval(const CLI::App& cmd) {
    const auto ckpt = load_checkpoint(cmd.get_option("--checkpoint")->as<std::string>());
    const auto test = load_manifest(cmd.get_option("--test-manifest")->as<std::string>());
    const auto style = load_manifest(cmd.get_option("--style-manifest")->as<std::string>());
    const auto seed = cmd.get_option("--seed")->as<std::uint64_t>();
    const auto out = fs::path(cmd.get_option("--out")->as<std::string>());
    const auto extractor_seed = cmd.get_option("--extractor-seed")->as<std::uint64_t>();
    const auto feature_dim = cmd.get_option("--feature-dim")->as<std::int64_t>();
    const auto grid_rows = cmd.get_option("--grid-rows")->as<std::int64_t>();
    const auto report = evaluate(ckpt, test, style, seed, out, extractor_seed, feature_dim,
                                 grid_rows);
    std::cout << "fid-gen-vs-real " << report.fid_gen_vs_real << "\n";
    std::cout << "fid-sim-vs-real " << report.fid_sim_vs_real << "\n";
    std::cout << (out / "report.json").string() << "\n";
    return 0;
}

int run_grid(const CLI::App& cmd) {
    const auto ckpt = load_checkpoint(cmd.get_option("--checkpoint")->as<std::string>());
    const auto manifest = load_manifest(cmd.get_option("--manifest")->as<std::string>());
    const auto rows = cmd.get_option("--rows")->as<std::int64_t>();
    const auto seed = cmd.get_option("--seed")->as<std::uint64_t>();
    const auto out = fs::path(cmd.get_option("--out")->as<std::string>());
    if (rows > manifest.size())
        throw ConfigError(cat("--rows ", rows, " exceeds manifest size ", manifest.size()));

    const EvalModels models(ckpt);
    // Cells at the training crop resolution, center-cropped.
    const std::int64_t cell = std::min<std::int64_t>(models.cfg.crop, manifest.height);
    const std::int64_t top = (manifest.height - cell) / 2;
    const std::int64_t left = (manifest.width - cell) / 2;
    Rng rng(derive(seed, "grid-rows"));
    const auto picks = rng.sample_distinct(manifest.size(), rows);
    std::vector<std::array<Image, 3>> cells;
    for (const auto idx : picks) {
        const Image sim = crop(decode_png(manifest.sim_file(idx)), top, left, cell);
        const Image real = crop(decode_png(manifest.real_file(idx)), top, left, cell);
        cells.push_back({sim, models.translate(sim, real), real});
    }
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_grid(out, cells);
    std::cout << out.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"approximately-paired sim-to-real image translation"};
    app.require_subcommand(1);

    auto* mk = app.add_subcommand("make-dataset",
                                  "generate an approximately-paired sim/real dataset");
    mk->add_option("--n", "number of image pairs")->required()->check(CLI::PositiveNumber);
    mk->add_option("--seed", "dataset generator seed")->default_val(0);
    mk->add_option("--out", "output directory")->required();
    mk->add_option("--size", "square image size")->default_val(128);
    mk->add_option("--noise", "sensor noise sigma of the real renderer")->default_val(0.0);
    mk->add_option("--blur", "gaussian blur radius of the real renderer")->default_val(0.0);
    mk->add_option("--gamma", "tone-curve gamma of the real renderer")->default_val(1.0);
    mk->add_option("--texture", "albedo texture amplitude of the real renderer")
        ->default_val(0.0);
    mk->add_option("--color-shift", "per-channel additive color shift (three values)")
        ->expected(3);
    mk->add_option("--min-objects", "minimum objects per scene")->default_val(3);
    mk->add_option("--max-objects", "maximum objects per scene")->default_val(8);
    mk->add_option("--jitter", "layout jitter magnitude of the real renderer")
        ->default_val(0.02);

    auto* tr = app.add_subcommand("train", "train the translation model");
    tr->add_option("--manifest", "training dataset manifest")->required();
    tr->add_option("--out", "run directory for checkpoints and metrics")->required();
    tr->add_option("--config", "JSON config file (or set APTX_CONFIG)");
    tr->add_option("--resume",
                   "checkpoint to continue from (training config comes from the checkpoint)");
    tr->add_option("--stop-at", "pause after this iteration without altering the LR schedule")
        ->default_val(-1);
    tr->add_flag("--show-config", "print the resolved config with provenance and exit");
    tr->add_option("--iters", "max-iterations")->default_val(3000);
    tr->add_option("--batch", "batch-size")->default_val(8);
    tr->add_option("--crop", "training crop size")->default_val(64);
    tr->add_option("--lr", "learning rate")->default_val(1e-4);
    tr->add_option("--lr-constant", "iterations before linear LR decay")->default_val(600);
    tr->add_option("--seed", "training seed")->default_val(0);
    tr->add_option("--ema-decay", "EMA decay for G and S")->default_val(0.999);
    tr->add_option("--smooth", "one-sided label smoothing")->default_val(0.1);
    tr->add_option("--pretrain-epochs", "style classifier pre-training epochs")->default_val(1);
    tr->add_option("--pretrain-lr-scale", "LR multiplier during pre-training")
        ->default_val(10.0);
    tr->add_flag("--projected", "discriminate on frozen extractor features instead of RGB");
    tr->add_option("--base-width", "channel width multiplier base")->default_val(16);
    tr->add_option("--style-dim", "style code dimension d")->default_val(64);
    tr->add_option("--gen-blocks", "generator ResNet blocks")->default_val(4);
    tr->add_option("--ckpt-every", "checkpoint cadence in iterations")->default_val(500);
    tr->add_option("--w-cls", "BCE weight during pre-training")->default_val(1.0);
    tr->add_option("--w-sty", "style reconstruction weight")->default_val(1.0);
    tr->add_option("--w-nce", "PatchNCE weight")->default_val(0.5);
    tr->add_option("--w-idt", "identity weight")->default_val(0.5);
    tr->add_option("--w-lum", "luminance weight")->default_val(0.1);
    tr->add_option("--bce-joint", "BCE weight after pre-training")->default_val(0.01);
    tr->add_option("--nce-n", "PatchNCE samples per tap")->default_val(64);
    tr->add_option("--nce-tau", "PatchNCE temperature")->default_val(0.07);
    tr->add_option("--ws-lr-scale", "classifier LR multiplier after pre-training")
        ->default_val(0.1);

    auto* in = app.add_subcommand("infer", "translate sim images with a trained model");
    in->add_option("--checkpoint", "trained checkpoint")->required();
    in->add_option("--input", "input PNG images")->required()->expected(-1);
    in->add_option("--style", "style reference PNG (may be the input itself)");
    in->add_option("--style-manifest", "manifest to sample a style image from");
    in->add_option("--seed", "style sampling seed")->default_val(0);
    in->add_option("--out", "output directory")->required();

    auto* ev = app.add_subcommand("eval", "Frechet-distance evaluation of a checkpoint");
    ev->add_option("--checkpoint", "trained checkpoint")->required();
    ev->add_option("--test-manifest", "held-out dataset manifest")->required();
    ev->add_option("--style-manifest", "style-source manifest (training data)")->required();
    ev->add_option("--seed", "style sampling seed")->default_val(0);
    ev->add_option("--out", "output directory for the report and grids")->required();
    ev->add_option("--extractor-seed", "frozen feature extractor seed")
        ->default_val(aptx::kDefaultFidExtractorSeed);
    ev->add_option("--feature-dim", "feature extractor width")
        ->default_val(aptx::kDefaultFidFeatureDim);
    ev->add_option("--grid-rows", "rows in the side-by-side grid")->default_val(8);

    auto* gr = app.add_subcommand("grid", "render a sim | generated | real comparison grid");
    gr->add_option("--checkpoint", "trained checkpoint")->required();
    gr->add_option("--manifest", "dataset manifest to draw rows from")->required();
    gr->add_option("--rows", "number of rows")->default_val(8)->check(CLI::PositiveNumber);
    gr->add_option("--seed", "row sampling seed")->default_val(0);
    gr->add_option("--out", "output PNG path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);  // prints help, exit 0
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (mk->parsed()) return run_make_dataset(*mk);
        if (tr->parsed()) return run_train(*tr);
        if (in->parsed()) return run_infer(*in);
        if (ev->parsed()) return run_eval(*ev);
        if (gr->parsed()) return run_grid(*gr);
    } catch (const ConfigError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const ArgumentError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
