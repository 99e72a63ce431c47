#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <set>

#include "aptx/dataset.hpp"
#include "helpers.hpp"

using namespace aptx;

namespace {

bool same_scene(const SceneSpec& a, const SceneSpec& b) {
    if (a.seed != b.seed || a.lighting != b.lighting || a.background != b.background ||
        a.objects.size() != b.objects.size() || a.jitter != b.jitter)
        return false;
    for (std::size_t i = 0; i < a.objects.size(); ++i) {
        const auto& x = a.objects[i];
        const auto& y = b.objects[i];
        if (x.kind != y.kind || x.cx != y.cx || x.cy != y.cy || x.sx != y.sx || x.sy != y.sy ||
            x.color != y.color)
            return false;
    }
    return true;
}

double mean_abs_diff(const Image& a, const Image& b) {
    double s = 0;
    for (std::int64_t i = 0; i < a.numel(); ++i) s += std::abs(a[i] - b[i]);
    return s / static_cast<double>(a.numel());
}

std::string file_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("generate_scene is deterministic and seed-sensitive") {
    GenerationConfig cfg;
    const auto a = generate_scene(7, cfg);
    const auto b = generate_scene(7, cfg);
    CHECK(same_scene(a, b));
    const auto c = generate_scene(8, cfg);
    CHECK_FALSE(same_scene(a, c));
    CHECK(a.objects.size() >= 1);
    CHECK(a.lighting >= 0.5);
    CHECK(a.lighting <= 1.5);
}

TEST_CASE("generate_scene honors object count bounds") {
    GenerationConfig one{1, 1, 0.02};
    CHECK(generate_scene(7, one).objects.size() == 1);
    GenerationConfig bad{0, 0, 0.02};
    CHECK_THROWS_AS(generate_scene(7, bad), ConfigError);
}

TEST_CASE("render_sim: value range, determinism, hard edges") {
    const auto spec = generate_scene(21, GenerationConfig{});
    const Image img = render_sim(spec, 64, 64);
    CHECK(img.min_value() >= -1.0f);
    CHECK(img.max_value() <= 1.0f);
    CHECK(img.all_finite());
    const Image again = render_sim(spec, 64, 64);
    CHECK(max_abs_diff(img, again) == 0.0);

    SECTION("white object on black background has exactly two quantized modes") {
        SceneSpec two;
        two.seed = 1;
        two.background = {0, 0, 0};
        two.lighting = 1.0;
        SceneObject obj;
        obj.kind = ShapeKind::kBuilding;
        obj.cx = obj.cy = 0.5;
        obj.sx = obj.sy = 0.5;
        obj.color = {1, 1, 1};
        two.objects.push_back(obj);
        const Image r = render_sim(two, 64, 64);
        std::set<std::uint8_t> values;
        for (std::int64_t i = 0; i < r.numel(); ++i) values.insert(float_to_u8(r[i]));
        CHECK(values.size() == 2);
    }

    SECTION("size not divisible by downsample factor is rejected") {
        CHECK_THROWS_AS(render_sim(spec, 66, 64), ConfigError);
    }
}

TEST_CASE("render_real: zero gap reproduces render_sim bit-exactly") {
    GenerationConfig cfg;
    cfg.jitter_magnitude = 0.0;
    const auto spec = generate_scene(33, cfg);
    const Image sim = render_sim(spec, 64, 64);
    const Image real = render_real(spec, StyleGapConfig{}, 64, 64);
    CHECK(max_abs_diff(sim, real) == 0.0);
}

TEST_CASE("render_real: noise perturbs, and is seeded-deterministic") {
    const auto spec = generate_scene(34, GenerationConfig{});
    StyleGapConfig gap;
    gap.noise_sigma = 0.1;
    const Image sim = render_sim(spec, 64, 64);
    const Image real = render_real(spec, gap, 64, 64);
    CHECK(mean_abs_diff(sim, real) > 0.0);
    CHECK(max_abs_diff(real, render_real(spec, gap, 64, 64)) == 0.0);
    CHECK(real.min_value() >= -1.0f);
    CHECK(real.max_value() <= 1.0f);
}

TEST_CASE("monotone gap: noise sigma never decreases the sim/real difference") {
    GenerationConfig cfg;
    const double sigmas[] = {0.0, 0.05, 0.1, 0.2};
    double prev = -1.0;
    for (double sigma : sigmas) {
        StyleGapConfig gap;
        gap.noise_sigma = sigma;
        double total = 0;
        for (int s = 0; s < 32; ++s) {
            const auto spec = generate_scene(100 + static_cast<std::uint64_t>(s), cfg);
            total += mean_abs_diff(render_sim(spec, 64, 64), render_real(spec, gap, 64, 64));
        }
        const double mad = total / 32.0;
        CHECK(mad >= prev);
        prev = mad;
    }
}

TEST_CASE("make_dataset writes a coherent, reproducible dataset") {
    testutil::TempDir tmp("dataset");
    StyleGapConfig gap;
    gap.noise_sigma = 0.05;
    gap.tone_curve_gamma = 1.2;
    GenerationConfig gen;

    const auto m = make_dataset(4, 1, gap, gen, 64, tmp.path() / "a");
    REQUIRE(m.entries.size() == 4);
    for (std::int64_t i = 0; i < 4; ++i) CHECK(m.entries[static_cast<std::size_t>(i)].index == i);

    SECTION("re-running reproduces byte-identical artifacts") {
        make_dataset(4, 1, gap, gen, 64, tmp.path() / "b");
        CHECK(file_bytes(tmp.path() / "a/manifest.json") ==
              file_bytes(tmp.path() / "b/manifest.json"));
        CHECK(file_bytes(tmp.path() / "a/sim/000002.png") ==
              file_bytes(tmp.path() / "b/sim/000002.png"));
        CHECK(file_bytes(tmp.path() / "a/real/000003.png") ==
              file_bytes(tmp.path() / "b/real/000003.png"));
    }

    SECTION("all image files decode to the declared size") {
        const auto loaded = load_manifest(tmp.path() / "a/manifest.json");
        for (std::int64_t i = 0; i < loaded.size(); ++i) {
            const Image sim = decode_png(loaded.sim_file(i));
            const Image real = decode_png(loaded.real_file(i));
            CHECK(sim.dim(0) == loaded.height);
            CHECK(sim.dim(1) == loaded.width);
            CHECK(real.dim(0) == loaded.height);
            CHECK(real.dim(1) == loaded.width);
        }
    }

    SECTION("pairing integrity: stored pixels match regeneration from scene seed") {
        const auto loaded = load_manifest(tmp.path() / "a/manifest.json");
        for (std::int64_t i = 0; i < loaded.size(); ++i) {
            const auto& entry = loaded.entries[static_cast<std::size_t>(i)];
            CHECK(entry.scene_seed == scene_seed_for(loaded.generator_seed, i));
            const auto spec = generate_scene(entry.scene_seed, loaded.generation);
            const Image sim_disk = decode_png(loaded.sim_file(i));
            const Image sim_regen = render_sim(spec, loaded.height, loaded.width);
            const Image real_disk = decode_png(loaded.real_file(i));
            const Image real_regen = render_real(spec, loaded.gap, loaded.height, loaded.width);
            for (std::int64_t p = 0; p < sim_disk.numel(); ++p) {
                REQUIRE(float_to_u8(sim_disk[p]) == float_to_u8(sim_regen[p]));
                REQUIRE(float_to_u8(real_disk[p]) == float_to_u8(real_regen[p]));
            }
        }
    }

    SECTION("unwritable output propagates an IoError") {
        CHECK_THROWS_AS(make_dataset(1, 1, gap, gen, 64, "/proc/nonexistent/dataset"), IoError);
    }

    SECTION("n < 1 is a configuration error") {
        CHECK_THROWS_AS(make_dataset(0, 1, gap, gen, 64, tmp.path() / "c"), ConfigError);
    }
}

TEST_CASE("load_paired_batch contracts") {
    testutil::TempDir tmp("batch");
    StyleGapConfig gap;
    GenerationConfig gen;
    gen.jitter_magnitude = 0.0;
    const auto m = make_dataset(6, 3, gap, gen, 64, tmp.path() / "d");
    const std::vector<std::int64_t> idx{0, 2, 5};

    SECTION("full-size crop equals the full image") {
        const auto batch = load_paired_batch(m, idx, 64, 9);
        const Image full = decode_png(m.sim_file(2));
        for (std::int64_t y = 0; y < 64; ++y)
            for (std::int64_t x = 0; x < 64; ++x)
                for (std::int64_t c = 0; c < 3; ++c)
                    REQUIRE(batch.sim.at(1, y, x, c) == full.at(y, x, c));
    }

    SECTION("fixed seed reproduces the batch; values stay in range") {
        const auto a = load_paired_batch(m, idx, 32, 9);
        const auto b = load_paired_batch(m, idx, 32, 9);
        CHECK(max_abs_diff(a.sim, b.sim) == 0.0);
        CHECK(max_abs_diff(a.real, b.real) == 0.0);
        CHECK(a.sim.min_value() >= -1.0f);
        CHECK(a.sim.max_value() <= 1.0f);
        CHECK(a.sim.all_finite());
        CHECK(a.real.all_finite());
    }

    SECTION("crop offsets are aligned across the pair") {
        // Zero gap + zero jitter makes sim == real as images, so any offset
        // misalignment would surface as crop mismatch.
        const auto batch = load_paired_batch(m, idx, 32, 123);
        CHECK(max_abs_diff(batch.sim, batch.real) == 0.0);
    }

    SECTION("out-of-range index raises a lookup error") {
        const std::vector<std::int64_t> bad{0, 6};
        CHECK_THROWS_AS(load_paired_batch(m, bad, 32, 9), LookupError);
        const std::vector<std::int64_t> neg{-1};
        CHECK_THROWS_AS(load_paired_batch(m, neg, 32, 9), LookupError);
    }

    SECTION("crop larger than the image is rejected") {
        CHECK_THROWS_AS(load_paired_batch(m, idx, 65, 9), ConfigError);
    }
}

TEST_CASE("crop offsets cover the valid lattice at the uniform rate") {
    testutil::TempDir tmp("coverage");
    const auto m = make_dataset(2, 4, StyleGapConfig{}, GenerationConfig{}, 128, tmp.path() / "e");
    // 1000 draws of 64-crops on 128^2 images: the offset lattice is 65x65.
    // Compare the empirical distinct-offset count against the uniform
    // expectation L(1-(1-1/L)^k).
    const std::int64_t lattice = 65 * 65;
    const int draws = 1000;
    std::set<std::pair<float, float>> distinct;
    std::set<float> rows, cols;
    const Image sim0 = decode_png(m.sim_file(0));
    const std::vector<std::int64_t> one{0};
    for (int k = 0; k < draws; ++k) {
        const auto batch = load_paired_batch(m, one, 64, static_cast<std::uint64_t>(k));
        // Recover the offset by matching the crop's top-left pixel row/col.
        // Instead of searching, re-derive with the same stream.
        Rng rng(static_cast<std::uint64_t>(k));
        const auto top = static_cast<float>(rng.uniform_int(65));
        const auto left = static_cast<float>(rng.uniform_int(65));
        distinct.insert({top, left});
        rows.insert(top);
        cols.insert(left);
        // Spot-check the derived offset actually matches the crop content.
        if (k < 16)
            REQUIRE(batch.sim.at(0, 0, 0, 0) ==
                    sim0.at(static_cast<std::int64_t>(top), static_cast<std::int64_t>(left), 0));
    }
    const double expected =
        static_cast<double>(lattice) *
        (1.0 - std::pow(1.0 - 1.0 / static_cast<double>(lattice), draws));
    CHECK(static_cast<double>(distinct.size()) >= 0.9 * expected);
    // Per-axis marginals are essentially fully covered.
    CHECK(rows.size() >= 59);  // 0.9 * 65
    CHECK(cols.size() >= 59);
}
