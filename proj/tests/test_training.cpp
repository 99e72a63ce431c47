#include <catch2/catch_amalgamated.hpp>

#include <fstream>

#include "aptx/train.hpp"
#include "helpers.hpp"

using namespace aptx;

namespace {

TrainConfig tiny_train_config() {
    TrainConfig cfg;
    cfg.model.style_dim = 16;
    cfg.model.base_width = 8;
    cfg.model.gen_blocks = 4;
    cfg.batch_size = 4;
    cfg.crop = 32;
    cfg.nce_samples = 16;
    cfg.max_iterations = 100;
    cfg.lr_constant_iters = 50;
    cfg.ckpt_every = 10;
    return cfg;
}

DatasetManifest tiny_dataset(const std::filesystem::path& dir, std::int64_t n, std::uint64_t seed,
                             double noise = 0.1, std::int64_t size = 32) {
    StyleGapConfig gap;
    gap.noise_sigma = noise;
    gap.tone_curve_gamma = noise > 0 ? 1.2 : 1.0;
    return make_dataset(n, seed, gap, GenerationConfig{}, size, dir);
}

template <class T>
std::vector<Tensor<T>> snapshot(const ParamSet<T>& ps) {
    std::vector<Tensor<T>> out;
    for (const auto& [name, var] : ps.items) out.push_back(var.value());
    return out;
}

template <class T>
bool bit_equal(const std::vector<Tensor<T>>& a, const ParamSet<T>& ps) {
    for (std::size_t i = 0; i < a.size(); ++i)
        if (max_abs_diff(a[i], ps.items[i].second.value()) != 0.0) return false;
    return true;
}

std::string file_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("lr_schedule endpoints and linearity") {
    TrainConfig paper;
    paper.max_iterations = 100000;
    paper.lr_constant_iters = 20000;
    paper.lr = 1e-4;

    CHECK(lr_schedule(0, paper) == Catch::Approx(1e-4));
    CHECK(lr_schedule(20000, paper) == Catch::Approx(1e-4));
    CHECK(lr_schedule(60000, paper) == Catch::Approx(5e-5));
    CHECK(lr_schedule(100000, paper) == Catch::Approx(0.0).margin(1e-18));

    SECTION("piecewise linearity at interior points") {
        for (int k = 1; k <= 10; ++k) {
            const std::int64_t iter = 20000 + k * 8000 / 2;
            const double expect =
                1e-4 * static_cast<double>(100000 - iter) / static_cast<double>(80000);
            CHECK(lr_schedule(iter, paper) == Catch::Approx(expect).epsilon(1e-12));
        }
        for (int k = 1; k <= 10; ++k) CHECK(lr_schedule(k * 1500, paper) == Catch::Approx(1e-4));
    }

    SECTION("out-of-range iteration is rejected") {
        CHECK_THROWS_AS(lr_schedule(-1, paper), ArgumentError);
        CHECK_THROWS_AS(lr_schedule(100001, paper), ArgumentError);
    }
}

TEST_CASE("ema_update arithmetic and contraction") {
    Tensor<double> shadow(Shape{3}, 0.0);
    Tensor<double> params(Shape{3}, 1.0);

    SECTION("decay 0 copies params") {
        ema_update(shadow, params, 0.0);
        CHECK(shadow[0] == 1.0);
    }
    SECTION("decay 0.5 halves the gap") {
        ema_update(shadow, params, 0.5);
        CHECK(shadow[1] == Catch::Approx(0.5));
    }
    SECTION("geometric contraction under constant params") {
        double prev_gap = 1.0;
        for (int k = 0; k < 100; ++k) {
            ema_update(shadow, params, 0.9);
            const double gap = std::abs(shadow[0] - params[0]);
            CHECK(gap <= prev_gap);
            prev_gap = gap;
        }
        CHECK(prev_gap <= std::pow(0.9, 100) * 1.0 + 1e-12);
    }
    SECTION("shape and decay validation") {
        Tensor<double> wrong(Shape{4});
        CHECK_THROWS_AS(ema_update(wrong, params, 0.5), ShapeError);
        CHECK_THROWS_AS(ema_update(shadow, params, 1.0), ConfigError);
    }
}

TEST_CASE("optimizer isolation between d_step and g_step") {
    testutil::TempDir tmp("isolation");
    const auto manifest = tiny_dataset(tmp.path() / "data", 8, 5);
    Trainer<float> tr(tiny_train_config(), manifest, tmp.path() / "run");
    const auto batch = tr.batch_for_iteration(0);

    const auto g0 = snapshot(tr.generator().params);
    const auto s0 = snapshot(tr.style_encoder().params);
    const auto w0 = snapshot(tr.style_classifier().params);
    const auto d0 = snapshot(tr.discriminator().params);

    tr.d_step(batch, 1e-4);
    CHECK(bit_equal(g0, tr.generator().params));
    CHECK(bit_equal(s0, tr.style_encoder().params));
    CHECK(bit_equal(w0, tr.style_classifier().params));
    CHECK_FALSE(bit_equal(d0, tr.discriminator().params));

    const auto d1 = snapshot(tr.discriminator().params);
    tr.g_step(batch, 1e-4, 0);
    CHECK(bit_equal(d1, tr.discriminator().params));
    CHECK_FALSE(bit_equal(g0, tr.generator().params));
    CHECK_FALSE(bit_equal(s0, tr.style_encoder().params));
    CHECK_FALSE(bit_equal(w0, tr.style_classifier().params));
}

TEST_CASE("d_step is deterministic and improves the discriminator") {
    testutil::TempDir tmp("dstep");
    const auto manifest = tiny_dataset(tmp.path() / "data", 16, 6);

    SECTION("two trainers from the same seed produce identical updates") {
        auto cfg = tiny_train_config();
        Trainer<float> a(cfg, manifest, "");
        Trainer<float> b(cfg, manifest, "");
        const auto batch = a.batch_for_iteration(3);
        a.d_step(batch, 1e-4);
        b.d_step(batch, 1e-4);
        CHECK(bit_equal(snapshot(a.discriminator().params), b.discriminator().params));
    }

    SECTION("repeated d_steps drive a smoothed d_loss down over 200 iterations") {
        Trainer<float> tr(tiny_train_config(), manifest, "");
        std::vector<double> losses;
        for (int i = 0; i < 200; ++i)
            losses.push_back(tr.d_step(tr.batch_for_iteration(i), 1e-4));
        auto mean_range = [&](int lo, int hi) {
            double s = 0;
            for (int i = lo; i < hi; ++i) s += losses[static_cast<std::size_t>(i)];
            return s / (hi - lo);
        };
        CHECK(mean_range(150, 200) < mean_range(0, 50));
    }
}

TEST_CASE("g_step: identity objective converges on a fixed batch") {
    testutil::TempDir tmp("idt");
    const auto manifest = tiny_dataset(tmp.path() / "data", 8, 7, 0.05);
    auto cfg = tiny_train_config();
    cfg.weights.cls = 0;
    cfg.weights.sty = 0;
    cfg.weights.nce = 0;
    cfg.weights.lum = 0;
    cfg.weights.idt = 2.0;
    cfg.bce_joint_weight = 0;
    cfg.lr = 1e-3;
    Trainer<float> tr(cfg, manifest, "");
    const auto batch = tr.batch_for_iteration(0);
    double idt = 1.0;
    for (int i = 0; i < 500; ++i) idt = tr.g_step(batch, cfg.lr, i).idt;
    CHECK(idt < 0.05);
}

TEST_CASE("g_step returned total is consistent with its components") {
    testutil::TempDir tmp("gstep");
    const auto manifest = tiny_dataset(tmp.path() / "data", 8, 8);
    auto cfg = tiny_train_config();
    Trainer<float> tr(cfg, manifest, "");
    const auto r = tr.g_step(tr.batch_for_iteration(1), 1e-4, 1);
    auto scalar = [](double v) { return Var<float>(Tensor<float>(Shape{1}, static_cast<float>(v))); };
    GLossComponents<float> c{scalar(r.gan), scalar(r.bce), scalar(r.sty),
                             scalar(r.nce), scalar(r.idt), scalar(r.lum)};
    LossWeights w = cfg.weights;
    w.cls = cfg.bce_joint_weight;
    CHECK(static_cast<double>(total_g_loss(c, w).value().scalar()) == r.total);
}

TEST_CASE("pretraining separates styles on a gapped dataset") {
    testutil::TempDir tmp("pretrain");
    const auto train_set = tiny_dataset(tmp.path() / "train", 512, 11, 0.15, 32);
    const auto heldout = tiny_dataset(tmp.path() / "held", 200, 999, 0.15, 32);
    auto cfg = tiny_train_config();
    Trainer<float> tr(cfg, train_set, "");
    tr.pretrain_style_classifier();
    CHECK(tr.classifier_accuracy(heldout) >= 0.9);
}

TEST_CASE("pretraining on a zero-gap dataset stays at chance") {
    testutil::TempDir tmp("pretrain0");
    const auto train_set = tiny_dataset(tmp.path() / "train", 128, 12, 0.0, 32);
    const auto heldout = tiny_dataset(tmp.path() / "held", 100, 998, 0.0, 32);
    Trainer<float> tr(tiny_train_config(), train_set, "");
    tr.pretrain_style_classifier();
    const double acc = tr.classifier_accuracy(heldout);
    CHECK(acc >= 0.4);
    CHECK(acc <= 0.6);
}

TEST_CASE("one pretrain epoch is ceil(N / batch) optimizer steps") {
    testutil::TempDir tmp("epoch");
    const auto manifest = tiny_dataset(tmp.path() / "data", 10, 13);
    auto cfg = tiny_train_config();
    cfg.batch_size = 4;
    Trainer<float> tr(cfg, manifest, "");
    tr.pretrain_style_classifier();
    // ceil(10/4) = 3 steps, mirrored by the classifier optimizer step count.
    // (probed via a second pretrain being another 3 steps)
    const auto w_after_one = snapshot(tr.style_classifier().params);
    CHECK(tr.pretrained());
    Trainer<float> tr2(cfg, manifest, "");
    tr2.pretrain_style_classifier();
    CHECK(bit_equal(w_after_one, tr2.style_classifier().params));
}

TEST_CASE("project_features is frozen and deterministic") {
    testutil::TempDir tmp("proj");
    const auto manifest = tiny_dataset(tmp.path() / "data", 8, 14);
    auto cfg = tiny_train_config();
    cfg.projected = true;
    Trainer<float> tr(cfg, manifest, "");
    REQUIRE(tr.projector() != nullptr);
    const auto frozen0 = snapshot(tr.projector()->params);

    Rng rng(3);
    Var<float> img(testutil::random_tensor_t<float>(Shape{1, 3, 32, 32}, rng));
    const auto f1 = project_features(img, *tr.projector());
    const auto f2 = project_features(img, *tr.projector());
    CHECK(max_abs_diff(f1.value(), f2.value()) == 0.0);
    CHECK(f1.shape()[1] == cfg.model.projected_channels);

    for (int i = 0; i < 3; ++i) {
        const auto batch = tr.batch_for_iteration(i);
        tr.d_step(batch, 1e-4);
        tr.g_step(batch, 1e-4, i);
    }
    CHECK(bit_equal(frozen0, tr.projector()->params));
}

TEST_CASE("checkpoints round-trip bit-exactly") {
    testutil::TempDir tmp("ckpt");
    const auto manifest = tiny_dataset(tmp.path() / "data", 8, 15);
    auto cfg = tiny_train_config();
    cfg.max_iterations = 4;
    cfg.lr_constant_iters = 2;
    cfg.ckpt_every = 2;
    Trainer<float> tr(cfg, manifest, tmp.path() / "run");
    tr.train();
    const auto path = tmp.path() / "run" / "checkpoint_latest.aptx";
    REQUIRE(std::filesystem::exists(path));
    const auto loaded = load_checkpoint(path);
    CHECK(loaded.header.at("iteration").get<std::int64_t>() == 4);
    const auto resaved = tmp.path() / "resaved.aptx";
    save_checkpoint(resaved, loaded);
    CHECK(file_bytes(path) == file_bytes(resaved));
    // EMA shadows exist and match parameter shapes.
    auto restored = Trainer<float>::restore(loaded, manifest, tmp.path() / "run2");
    CHECK(restored.ema_generator().initialized);
    for (std::size_t i = 0; i < restored.generator().params.items.size(); ++i)
        CHECK(restored.ema_generator().shadow[i].same_shape(
            restored.generator().params.items[i].second.value()));
}

TEST_CASE("training is deterministic and resumable") {
    testutil::TempDir tmp("resume");
    const auto manifest = tiny_dataset(tmp.path() / "data", 16, 16);
    auto cfg = tiny_train_config();
    cfg.max_iterations = 50;
    cfg.lr_constant_iters = 20;
    cfg.ckpt_every = 10;

    Trainer<float> a(cfg, manifest, tmp.path() / "a");
    a.train();
    Trainer<float> b(cfg, manifest, tmp.path() / "b");
    b.train();

    SECTION("equal seeds give byte-identical checkpoints and metrics") {
        CHECK(file_bytes(tmp.path() / "a" / "checkpoint_latest.aptx") ==
              file_bytes(tmp.path() / "b" / "checkpoint_latest.aptx"));
        CHECK(file_bytes(tmp.path() / "a" / "metrics.jsonl") ==
              file_bytes(tmp.path() / "b" / "metrics.jsonl"));
    }

    SECTION("resume from a mid-run snapshot matches the uninterrupted run") {
        auto resumed = Trainer<float>::restore(tmp.path() / "a" / "checkpoint_000030.aptx",
                                               manifest, tmp.path() / "c");
        CHECK(resumed.iteration() == 30);
        resumed.train();
        CHECK(file_bytes(tmp.path() / "c" / "checkpoint_latest.aptx") ==
              file_bytes(tmp.path() / "a" / "checkpoint_latest.aptx"));
        CHECK(file_bytes(tmp.path() / "c" / "metrics.jsonl") ==
              file_bytes(tmp.path() / "a" / "metrics.jsonl"));
    }

    SECTION("metrics log has one finite row per iteration with all components") {
        std::ifstream in(tmp.path() / "a" / "metrics.jsonl");
        std::string line;
        std::int64_t rows = 0;
        while (std::getline(in, line)) {
            const auto j = json::parse(line);
            ++rows;
            CHECK(j.at("iter").get<std::int64_t>() == rows);
            for (const char* key : {"lr", "d_loss", "gan", "bce", "sty", "nce", "idt", "lum",
                                    "total"})
                CHECK(std::isfinite(j.at(key).get<double>()));
        }
        CHECK(rows == 50);
    }
}

TEST_CASE("train propagates numeric errors with iteration context") {
    testutil::TempDir tmp("numerr");
    const auto manifest = tiny_dataset(tmp.path() / "data", 8, 17);
    auto cfg = tiny_train_config();
    cfg.max_iterations = 2;
    cfg.lr_constant_iters = 1;
    cfg.pretrain_epochs = 0;
    Trainer<float> tr(cfg, manifest, tmp.path() / "run");
    // Poison the head conv (feeds tanh directly, so the NaN reaches the
    // output instead of being squashed by an intermediate relu).
    auto* head_w = tr.generator().params.find("head.w");
    REQUIRE(head_w != nullptr);
    head_w->value()[0] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_WITH(tr.train(), Catch::Matchers::ContainsSubstring("iteration 1"));
}
