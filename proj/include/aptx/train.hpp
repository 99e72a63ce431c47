// Training orchestration: classifier pre-training, alternating D / (G,S)
// optimization on approximately-paired batches, LR scheduling, EMA tracking,
// metrics logging, and checkpointing. Fully deterministic given the config
// seed; every random draw derives from (seed, purpose, iteration).
#pragma once

#include <fstream>
#include <optional>

#include "aptx/checkpoint.hpp"
#include "aptx/dataset.hpp"
#include "aptx/losses.hpp"
#include "aptx/optim.hpp"

namespace aptx {

// Seed of the frozen projected-GAN feature extractor; constant so runs are
// comparable across configs.
inline constexpr std::uint64_t kProjectedExtractorSeed = 1337;

struct TrainConfig {
    std::int64_t max_iterations = 3000;
    int batch_size = 8;
    std::int64_t crop = 64;
    double lr = 1e-4;
    double beta1 = 0.5, beta2 = 0.99;
    std::int64_t lr_constant_iters = 600;
    LossWeights weights;            // weights.cls applies during pre-training
    double bce_joint_weight = 0.01; // BCE weight after pre-training
    double ema_decay = 0.999;
    double smooth = 0.1;
    int pretrain_epochs = 1;
    double pretrain_lr_scale = 10.0;  // pre-training runs hotter; W_s is later
                                      // fine-tuned at ws_lr_scale * lr
    bool projected = false;
    std::uint64_t seed = 0;
    ModelConfig model;
    std::int64_t nce_samples = 64;
    double nce_tau = 0.07;
    std::int64_t ckpt_every = 500;
    double ws_lr_scale = 0.1;
    bool style_recon_detach_target = false;

    void validate() const {
        if (max_iterations < 0) throw ConfigError("max-iterations must be >= 0");
        if (lr_constant_iters > max_iterations)
            throw ConfigError(cat("lr-constant-iters ", lr_constant_iters,
                                  " exceeds max-iterations ", max_iterations));
        if (batch_size < 1) throw ConfigError("batch-size must be >= 1");
        if (crop < kStyleEncoderStride || crop % kStyleEncoderStride != 0)
            throw ConfigError(cat("crop ", crop, " must be a positive multiple of ",
                                  kStyleEncoderStride));
        if (ema_decay < 0 || ema_decay >= 1) throw ConfigError("ema-decay must be in [0,1)");
        if (pretrain_epochs < 0) throw ConfigError("pretrain-epochs must be >= 0");
        if (pretrain_lr_scale <= 0) throw ConfigError("pretrain-lr-scale must be > 0");
        if (nce_samples < 1) throw ConfigError("nce-samples must be >= 1");
        if (nce_tau <= 0) throw ConfigError("nce-tau must be > 0");
        if (ckpt_every < 1) throw ConfigError("ckpt-every must be >= 1");
        weights.validate();
    }
};

inline json train_config_to_json(const TrainConfig& c) {
    return json{{"max-iterations", c.max_iterations},
                {"batch-size", c.batch_size},
                {"crop", c.crop},
                {"lr", c.lr},
                {"betas", {c.beta1, c.beta2}},
                {"lr-constant-iters", c.lr_constant_iters},
                {"weights",
                 {{"cls", c.weights.cls},
                  {"sty", c.weights.sty},
                  {"nce", c.weights.nce},
                  {"idt", c.weights.idt},
                  {"lum", c.weights.lum}}},
                {"bce-joint-weight", c.bce_joint_weight},
                {"ema-decay", c.ema_decay},
                {"smooth", c.smooth},
                {"pretrain-epochs", c.pretrain_epochs},
                {"pretrain-lr-scale", c.pretrain_lr_scale},
                {"projected", c.projected},
                {"seed", c.seed},
                {"style-dim", c.model.style_dim},
                {"base-width", c.model.base_width},
                {"gen-blocks", c.model.gen_blocks},
                {"modulate-encoder-blocks", c.model.modulate_encoder_blocks},
                {"nce-samples", c.nce_samples},
                {"nce-tau", c.nce_tau},
                {"ckpt-every", c.ckpt_every},
                {"ws-lr-scale", c.ws_lr_scale},
                {"style-recon-detach-target", c.style_recon_detach_target}};
}

inline TrainConfig train_config_from_json(const json& j) {
    TrainConfig c;
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("max-iterations", c.max_iterations);
    get("batch-size", c.batch_size);
    get("crop", c.crop);
    get("lr", c.lr);
    if (j.contains("betas")) {
        c.beta1 = j.at("betas").at(0).get<double>();
        c.beta2 = j.at("betas").at(1).get<double>();
    }
    get("lr-constant-iters", c.lr_constant_iters);
    if (j.contains("weights")) {
        const auto& w = j.at("weights");
        c.weights.cls = w.value("cls", c.weights.cls);
        c.weights.sty = w.value("sty", c.weights.sty);
        c.weights.nce = w.value("nce", c.weights.nce);
        c.weights.idt = w.value("idt", c.weights.idt);
        c.weights.lum = w.value("lum", c.weights.lum);
    }
    get("bce-joint-weight", c.bce_joint_weight);
    get("ema-decay", c.ema_decay);
    get("smooth", c.smooth);
    get("pretrain-epochs", c.pretrain_epochs);
    get("pretrain-lr-scale", c.pretrain_lr_scale);
    get("projected", c.projected);
    get("seed", c.seed);
    get("style-dim", c.model.style_dim);
    get("base-width", c.model.base_width);
    get("gen-blocks", c.model.gen_blocks);
    get("modulate-encoder-blocks", c.model.modulate_encoder_blocks);
    get("nce-samples", c.nce_samples);
    get("nce-tau", c.nce_tau);
    get("ckpt-every", c.ckpt_every);
    get("ws-lr-scale", c.ws_lr_scale);
    get("style-recon-detach-target", c.style_recon_detach_target);
    return c;
}

// Constant for lr-constant-iters iterations, then linear decay to zero at
// max-iterations.
inline double lr_schedule(std::int64_t iter, const TrainConfig& cfg) {
    if (iter < 0 || iter > cfg.max_iterations)
        throw ArgumentError(cat("lr_schedule: iteration ", iter, " outside [0,",
                                cfg.max_iterations, "]"));
    if (iter < cfg.lr_constant_iters || cfg.max_iterations == cfg.lr_constant_iters)
        return cfg.lr;
    const double span = static_cast<double>(cfg.max_iterations - cfg.lr_constant_iters);
    return cfg.lr * static_cast<double>(cfg.max_iterations - iter) / span;
}

struct MetricsRow {
    std::int64_t iter = 0;
    double lr = 0, d_loss = 0, gan = 0, bce = 0, sty = 0, nce = 0, idt = 0, lum = 0, total = 0;

    json to_json() const {
        return json{{"iter", iter}, {"lr", lr},   {"d_loss", d_loss}, {"gan", gan},
                    {"bce", bce},   {"sty", sty}, {"nce", nce},       {"idt", idt},
                    {"lum", lum},   {"total", total}};
    }
    static MetricsRow from_json(const json& j) {
        MetricsRow r;
        r.iter = j.at("iter").get<std::int64_t>();
        r.lr = j.at("lr").get<double>();
        r.d_loss = j.at("d_loss").get<double>();
        r.gan = j.at("gan").get<double>();
        r.bce = j.at("bce").get<double>();
        r.sty = j.at("sty").get<double>();
        r.nce = j.at("nce").get<double>();
        r.idt = j.at("idt").get<double>();
        r.lum = j.at("lum").get<double>();
        r.total = j.at("total").get<double>();
        return r;
    }
};

// Frozen feature projection for the projected-GAN variant; the extractor
// carries no gradient state and never changes.
template <class T>
Var<T> project_features(const Var<T>& img, const FrozenConvStack<T>& extractor) {
    return extractor(img);
}

template <class T = float>
class Trainer {
public:
    Trainer(TrainConfig cfg, DatasetManifest manifest, fs::path out_dir)
        : cfg_(std::move(cfg)),
          manifest_(std::move(manifest)),
          out_dir_(std::move(out_dir)),
          g_(cfg_.model, derive(cfg_.seed, "g")),
          s_(cfg_.model, derive(cfg_.seed, "s")),
          d_(cfg_.model, derive(cfg_.seed, "d"), cfg_.projected),
          ws_(cfg_.model, derive(cfg_.seed, "ws")) {
        cfg_.validate();
        if (manifest_.size() < 1) throw ConfigError("training dataset is empty");
        if (cfg_.crop > manifest_.height || cfg_.crop > manifest_.width)
            throw ConfigError(cat("crop ", cfg_.crop, " exceeds dataset image size ",
                                  manifest_.height, "x", manifest_.width));
        if (cfg_.projected)
            projector_.emplace(FrozenConvStack<T>::projected(cfg_.model, kProjectedExtractorSeed));
        adam_g_ = make_adam(g_.params);
        adam_s_ = make_adam(s_.params);
        adam_d_ = make_adam(d_.params);
        adam_ws_ = make_adam(ws_.params);
        if (!out_dir_.empty()) fs::create_directories(out_dir_);
    }

    const TrainConfig& config() const { return cfg_; }
    Generator<T>& generator() { return g_; }
    StyleEncoder<T>& style_encoder() { return s_; }
    Discriminator<T>& discriminator() { return d_; }
    StyleClassifier<T>& style_classifier() { return ws_; }
    EmaState<T>& ema_generator() { return ema_g_; }
    EmaState<T>& ema_style_encoder() { return ema_s_; }
    std::int64_t iteration() const { return iteration_; }
    bool pretrained() const { return pretrained_; }
    const std::vector<MetricsRow>& history() const { return history_; }

    PairedBatch batch_for_iteration(std::int64_t iter) {
        Rng rng(derive(cfg_.seed, "batch-index", static_cast<std::uint64_t>(iter)));
        std::vector<std::int64_t> indices(static_cast<std::size_t>(cfg_.batch_size));
        for (auto& idx : indices) idx = rng.uniform_int(manifest_.size());
        return load_paired_batch(manifest_, indices, cfg_.crop,
                                 derive(cfg_.seed, "crop", static_cast<std::uint64_t>(iter)),
                                 &cache_);
    }

    // One pass over the dataset minimizing the style BCE; updates S and W_s
    // at the base learning rate.
    void pretrain_style_classifier() {
        const std::int64_t n = manifest_.size();
        const std::int64_t steps_per_epoch = (n + cfg_.batch_size - 1) / cfg_.batch_size;
        for (int epoch = 0; epoch < cfg_.pretrain_epochs; ++epoch) {
            Rng order_rng(derive(cfg_.seed, "pretrain-order", static_cast<std::uint64_t>(epoch)));
            const auto order = order_rng.sample_distinct(n, n);
            for (std::int64_t step = 0; step < steps_per_epoch; ++step) {
                const std::int64_t lo = step * cfg_.batch_size;
                const std::int64_t hi = std::min<std::int64_t>(lo + cfg_.batch_size, n);
                const std::span<const std::int64_t> idx(order.data() + lo,
                                                        static_cast<std::size_t>(hi - lo));
                const auto batch = load_paired_batch(
                    manifest_, idx, cfg_.crop,
                    derive(cfg_.seed, "pretrain-crop",
                           static_cast<std::uint64_t>(epoch) * 1000003ull +
                               static_cast<std::uint64_t>(step)),
                    &cache_);
                Var<T> sim(nhwc_to_nchw(batch.sim).template cast<T>());
                Var<T> real(nhwc_to_nchw(batch.real).template cast<T>());
                auto loss = mul_scalar(bce_style_loss(ws_(s_(real)), ws_(s_(sim))),
                                       static_cast<T>(cfg_.weights.cls));
                zero_all_grads();
                loss.backward();
                adam_s_.step(s_.params, cfg_.lr * cfg_.pretrain_lr_scale);
                adam_ws_.step(ws_.params, cfg_.lr * cfg_.pretrain_lr_scale);
            }
        }
        pretrained_ = true;
    }

    // Fraction of correct real/sim calls made by the style classifier over a
    // manifest (each pair contributes two predictions).
    double classifier_accuracy(const DatasetManifest& eval_manifest) {
        NoGradGuard ng;
        std::int64_t correct = 0, total = 0;
        ImageCache cache;
        const std::int64_t chunk = 16;
        for (std::int64_t lo = 0; lo < eval_manifest.size(); lo += chunk) {
            const std::int64_t hi = std::min(lo + chunk, eval_manifest.size());
            std::vector<std::int64_t> idx;
            for (std::int64_t i = lo; i < hi; ++i) idx.push_back(i);
            const auto batch = load_paired_batch(eval_manifest, idx, cfg_.crop,
                                                 derive(cfg_.seed, "acc-crop",
                                                        static_cast<std::uint64_t>(lo)),
                                                 &cache);
            const auto p_real = ws_(s_(Var<T>(nhwc_to_nchw(batch.real).template cast<T>())));
            const auto p_sim = ws_(s_(Var<T>(nhwc_to_nchw(batch.sim).template cast<T>())));
            for (std::int64_t b = 0; b < hi - lo; ++b) {
                correct += p_real.value()[b] > T(0.5) ? 1 : 0;
                correct += p_sim.value()[b] < T(0.5) ? 1 : 0;
                total += 2;
            }
        }
        return static_cast<double>(correct) / static_cast<double>(total);
    }

    // Discriminator update. The style difference and the generated image are
    // computed without gradient, so only D moves.
    double d_step(const PairedBatch& batch, double lr) {
        Var<T> sim(nhwc_to_nchw(batch.sim).template cast<T>());
        Var<T> real(nhwc_to_nchw(batch.real).template cast<T>());
        Tensor<T> fake_value;
        {
            NoGradGuard ng;
            auto delta = style_difference(s_(real), s_(sim));
            fake_value = g_(sim, delta).value();
        }
        Var<T> fake(std::move(fake_value));
        auto d_real = d_(disc_input(real));
        auto d_fake = d_(disc_input(fake));
        auto loss = d_loss(d_real, d_fake, static_cast<T>(cfg_.smooth));
        const double value = static_cast<double>(loss.value().scalar());
        if (!std::isfinite(value)) throw NumericError("d_step: non-finite discriminator loss");
        zero_all_grads();
        loss.backward();
        adam_d_.step(d_.params, lr);
        return value;
    }

    struct GStepResult {
        double gan = 0, bce = 0, sty = 0, nce = 0, idt = 0, lum = 0, total = 0;
    };

    // Generator/style-encoder/classifier update against the frozen D.
    GStepResult g_step(const PairedBatch& batch, double lr, std::int64_t iter) {
        Var<T> sim(nhwc_to_nchw(batch.sim).template cast<T>());
        Var<T> real(nhwc_to_nchw(batch.real).template cast<T>());
        auto s_x = s_(sim);
        auto s_y = s_(real);
        auto delta = style_difference(s_y, s_x);
        auto fwd = g_.forward(sim, delta);
        const auto& y_hat = fwd.output;

        GLossComponents<T> comps;
        comps.gan = g_adv_loss(d_(disc_input(y_hat)));
        comps.bce = bce_style_loss(ws_(s_y), ws_(s_x));
        auto s_y_hat = s_(y_hat);
        comps.sty = style_recon_loss(cfg_.style_recon_detach_target ? s_y.detach() : s_y, s_y_hat);
        auto gen_taps = g_.encode(y_hat, style_difference(s_y, s_y_hat));
        comps.nce = patch_nce_loss(gen_taps, fwd.taps, cfg_.nce_samples,
                                   static_cast<T>(cfg_.nce_tau),
                                   derive(cfg_.seed, "nce", static_cast<std::uint64_t>(iter)));
        Var<T> zero_style(Tensor<T>(Shape{sim.value().dim(0), cfg_.model.style_dim}));
        comps.idt = identity_loss(g_(sim, zero_style), sim);
        comps.lum = luminance_loss(sim, y_hat);

        LossWeights w = cfg_.weights;
        w.cls = cfg_.bce_joint_weight;
        auto total = total_g_loss(comps, w);

        zero_all_grads();
        total.backward();
        adam_g_.step(g_.params, lr);
        adam_s_.step(s_.params, lr);
        adam_ws_.step(ws_.params, lr * cfg_.ws_lr_scale);

        GStepResult out;
        out.gan = static_cast<double>(comps.gan.value().scalar());
        out.bce = static_cast<double>(comps.bce.value().scalar());
        out.sty = static_cast<double>(comps.sty.value().scalar());
        out.nce = static_cast<double>(comps.nce.value().scalar());
        out.idt = static_cast<double>(comps.idt.value().scalar());
        out.lum = static_cast<double>(comps.lum.value().scalar());
        out.total = static_cast<double>(total.value().scalar());
        return out;
    }

    void ensure_ema() {
        if (!ema_g_.initialized) ema_g_.reset_to(g_.params);
        if (!ema_s_.initialized) ema_s_.reset_to(s_.params);
    }

    // Run (or continue) the full schedule: pre-train once, then alternate
    // one d_step and one g_step per iteration, updating EMA after each
    // g_step and checkpointing every ckpt_every iterations plus at the end.
    void train(std::int64_t stop_at = -1) {
        const std::int64_t stop = stop_at < 0 ? cfg_.max_iterations
                                              : std::min(stop_at, cfg_.max_iterations);
        if (iteration_ == 0 && !pretrained_ && cfg_.pretrain_epochs > 0)
            pretrain_style_classifier();
        pretrained_ = true;
        ensure_ema();
        rewrite_metrics_file();
        std::ofstream metrics(metrics_path(), std::ios::app);
        if (!metrics) throw IoError(cat("cannot open metrics log: ", metrics_path().string()));
        while (iteration_ < stop) {
            const std::int64_t iter = iteration_;
            const double lr = lr_schedule(iter, cfg_);
            try {
                const auto batch = batch_for_iteration(iter);
                MetricsRow row;
                row.iter = iter + 1;
                row.lr = lr;
                row.d_loss = d_step(batch, lr);
                const auto gs = g_step(batch, lr, iter);
                ema_g_.update(g_.params, cfg_.ema_decay);
                ema_s_.update(s_.params, cfg_.ema_decay);
                row.gan = gs.gan;
                row.bce = gs.bce;
                row.sty = gs.sty;
                row.nce = gs.nce;
                row.idt = gs.idt;
                row.lum = gs.lum;
                row.total = gs.total;
                history_.push_back(row);
                metrics << row.to_json().dump() << "\n";
                metrics.flush();
            } catch (const NumericError& e) {
                throw NumericError(cat("iteration ", iter + 1, ": ", e.what()));
            }
            ++iteration_;
            if (iteration_ % cfg_.ckpt_every == 0 && iteration_ < stop) save_snapshot();
        }
        save_snapshot();
    }

    fs::path metrics_path() const { return out_dir_ / "metrics.jsonl"; }
    fs::path latest_checkpoint_path() const { return out_dir_ / "checkpoint_latest.aptx"; }
    fs::path snapshot_path(std::int64_t iter) const {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "checkpoint_%06lld.aptx", static_cast<long long>(iter));
        return out_dir_ / buf;
    }

    void save_snapshot() {
        save(snapshot_path(iteration_));
        save(latest_checkpoint_path());
    }

    CheckpointData make_checkpoint() const {
        CheckpointData ckpt;
        ckpt.header["iteration"] = iteration_;
        ckpt.header["pretrained"] = pretrained_;
        ckpt.header["config"] = train_config_to_json(cfg_);
        ckpt.header["adam-steps"] = {{"g", adam_g_.t}, {"s", adam_s_.t}, {"d", adam_d_.t},
                                     {"ws", adam_ws_.t}};
        json hist = json::array();
        for (const auto& row : history_) hist.push_back(row.to_json());
        ckpt.header["metrics"] = std::move(hist);
        auto push_params = [&](const char* prefix, const ParamSet<T>& ps) {
            for (const auto& [name, var] : ps.items)
                ckpt.arrays.emplace_back(cat(prefix, ".", name),
                                         var.value().template cast<float>());
        };
        push_params("g", g_.params);
        push_params("s", s_.params);
        push_params("d", d_.params);
        push_params("ws", ws_.params);
        auto push_ema = [&](const char* prefix, const EmaState<T>& ema, const ParamSet<T>& ps) {
            for (std::size_t i = 0; i < ema.shadow.size(); ++i)
                ckpt.arrays.emplace_back(cat(prefix, ".", ps.items[i].first),
                                         ema.shadow[i].template cast<float>());
        };
        if (ema_g_.initialized) push_ema("ema.g", ema_g_, g_.params);
        if (ema_s_.initialized) push_ema("ema.s", ema_s_, s_.params);
        auto push_adam = [&](const char* prefix, const Adam<T>& adam, const ParamSet<T>& ps) {
            for (std::size_t i = 0; i < adam.m.size(); ++i) {
                ckpt.arrays.emplace_back(cat(prefix, ".m.", ps.items[i].first),
                                         adam.m[i].template cast<float>());
                ckpt.arrays.emplace_back(cat(prefix, ".v.", ps.items[i].first),
                                         adam.v[i].template cast<float>());
            }
        };
        push_adam("adam.g", adam_g_, g_.params);
        push_adam("adam.s", adam_s_, s_.params);
        push_adam("adam.d", adam_d_, d_.params);
        push_adam("adam.ws", adam_ws_, ws_.params);
        return ckpt;
    }

    void save(const fs::path& path) const { save_checkpoint(path, make_checkpoint()); }

    // Rebuild a trainer from a checkpoint; the dataset manifest is supplied
    // by the caller (paths are not baked into checkpoints).
    static Trainer restore(const CheckpointData& ckpt, DatasetManifest manifest,
                           fs::path out_dir) {
        TrainConfig cfg = train_config_from_json(ckpt.header.at("config"));
        Trainer tr(std::move(cfg), std::move(manifest), std::move(out_dir));
        tr.iteration_ = ckpt.header.at("iteration").get<std::int64_t>();
        tr.pretrained_ = ckpt.header.at("pretrained").get<bool>();
        auto load_params = [&](const char* prefix, ParamSet<T>& ps) {
            for (auto& [name, var] : ps.items) {
                const auto* t = ckpt.find(cat(prefix, ".", name));
                if (!t) throw IoError(cat("checkpoint missing array ", prefix, ".", name));
                var.value() = t->template cast<T>();
            }
        };
        load_params("g", tr.g_.params);
        load_params("s", tr.s_.params);
        load_params("d", tr.d_.params);
        load_params("ws", tr.ws_.params);
        auto load_ema = [&](const char* prefix, EmaState<T>& ema, const ParamSet<T>& ps) {
            ema.shadow.clear();
            for (const auto& [name, var] : ps.items) {
                const auto* t = ckpt.find(cat(prefix, ".", name));
                if (!t) return;  // checkpoint predates EMA init
                ema.shadow.push_back(t->template cast<T>());
            }
            ema.initialized = ema.shadow.size() == ps.items.size();
        };
        load_ema("ema.g", tr.ema_g_, tr.g_.params);
        load_ema("ema.s", tr.ema_s_, tr.s_.params);
        auto load_adam = [&](const char* prefix, Adam<T>& adam, const ParamSet<T>& ps,
                             const char* tkey) {
            adam.t = ckpt.header.at("adam-steps").at(tkey).get<std::int64_t>();
            for (std::size_t i = 0; i < ps.items.size(); ++i) {
                const auto* m = ckpt.find(cat(prefix, ".m.", ps.items[i].first));
                const auto* v = ckpt.find(cat(prefix, ".v.", ps.items[i].first));
                if (!m || !v)
                    throw IoError(cat("checkpoint missing optimizer state for ", prefix));
                adam.m[i] = m->template cast<T>();
                adam.v[i] = v->template cast<T>();
            }
        };
        load_adam("adam.g", tr.adam_g_, tr.g_.params, "g");
        load_adam("adam.s", tr.adam_s_, tr.s_.params, "s");
        load_adam("adam.d", tr.adam_d_, tr.d_.params, "d");
        load_adam("adam.ws", tr.adam_ws_, tr.ws_.params, "ws");
        for (const auto& row : ckpt.header.at("metrics"))
            tr.history_.push_back(MetricsRow::from_json(row));
        return tr;
    }

    static Trainer restore(const fs::path& ckpt_path, DatasetManifest manifest,
                           fs::path out_dir) {
        return restore(load_checkpoint(ckpt_path), std::move(manifest), std::move(out_dir));
    }

    const FrozenConvStack<T>* projector() const {
        return projector_ ? &*projector_ : nullptr;
    }

private:
    Adam<T> make_adam(const ParamSet<T>& ps) {
        Adam<T> adam;
        adam.beta1 = cfg_.beta1;
        adam.beta2 = cfg_.beta2;
        adam.init(ps);
        return adam;
    }

    Var<T> disc_input(const Var<T>& img) {
        return projector_ ? (*projector_)(img) : img;
    }

    void zero_all_grads() {
        for (auto* ps : {&g_.params, &s_.params, &d_.params, &ws_.params})
            for (auto& [name, var] : ps->items) var.zero_grad();
    }

    // Metrics on disk always mirror the in-memory history, so a resumed run
    // rewrites rows past the checkpoint instead of appending duplicates.
    void rewrite_metrics_file() {
        if (out_dir_.empty()) return;
        std::ofstream metrics(metrics_path(), std::ios::trunc);
        if (!metrics) throw IoError(cat("cannot open metrics log: ", metrics_path().string()));
        for (const auto& row : history_) metrics << row.to_json().dump() << "\n";
    }

    TrainConfig cfg_;
    DatasetManifest manifest_;
    fs::path out_dir_;
    Generator<T> g_;
    StyleEncoder<T> s_;
    Discriminator<T> d_;
    StyleClassifier<T> ws_;
    std::optional<FrozenConvStack<T>> projector_;
    Adam<T> adam_g_, adam_s_, adam_d_, adam_ws_;
    EmaState<T> ema_g_, ema_s_;
    std::int64_t iteration_ = 0;
    bool pretrained_ = false;
    std::vector<MetricsRow> history_;
    ImageCache cache_;
};

}  // namespace aptx
