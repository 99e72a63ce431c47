#include <catch2/catch_amalgamated.hpp>

#include "aptx/nn.hpp"
#include "aptx/ops.hpp"
#include "helpers.hpp"

using aptx::Shape;
using aptx::Tensor;
using aptx::Var;
using testutil::check_gradients;
using testutil::random_tensor;

TEST_CASE("elementwise forward values") {
    Var<double> a(Tensor<double>(Shape{3}, {1.0, -2.0, 0.5}));
    Var<double> b(Tensor<double>(Shape{3}, {2.0, 3.0, -1.0}));
    CHECK(aptx::add(a, b).value()[1] == Catch::Approx(1.0));
    CHECK(aptx::mul(a, b).value()[0] == Catch::Approx(2.0));
    CHECK(aptx::abs(a).value()[1] == Catch::Approx(2.0));
    CHECK(aptx::mean(a).value().scalar() == Catch::Approx(-1.0 / 6.0));
}

TEST_CASE("backward accumulates through shared subexpressions") {
    Var<double> x(Tensor<double>(Shape{1}, {3.0}), true);
    // f = x*x + 2x -> df/dx = 2x + 2 = 8
    auto f = aptx::add(aptx::mul(x, x), aptx::mul_scalar(x, 2.0));
    f.backward();
    CHECK(x.grad()[0] == Catch::Approx(8.0));
}

TEST_CASE("NoGradGuard suppresses graph recording") {
    Var<double> x(Tensor<double>(Shape{2}, {1.0, 2.0}), true);
    aptx::NoGradGuard guard;
    auto y = aptx::mul(x, x);
    CHECK_FALSE(y.requires_grad());
}

TEST_CASE("gradcheck: elementwise and reduction ops") {
    aptx::Rng rng(11);
    Var<double> a(random_tensor(Shape{2, 5}, rng, 0.2, 1.5), true);
    Var<double> b(random_tensor(Shape{2, 5}, rng, 0.2, 1.5), true);

    SECTION("mul/div/log/sqrt chain") {
        auto build = [&] {
            return aptx::mean(aptx::log(aptx::add_scalar(
                aptx::mul(aptx::sqrt(a), aptx::recip(b)), 2.0)));
        };
        auto res = check_gradients({&a, &b}, build);
        INFO(res.detail);
        CHECK(res.ok);
    }
    SECTION("tanh/sigmoid/exp chain") {
        auto build = [&] {
            return aptx::mean(aptx::sigmoid(aptx::add(aptx::tanh(a), aptx::exp(aptx::neg(b)))));
        };
        auto res = check_gradients({&a, &b}, build);
        INFO(res.detail);
        CHECK(res.ok);
    }
    SECTION("leaky_relu and clamp_min away from kinks") {
        auto build = [&] {
            return aptx::mean(aptx::add(aptx::leaky_relu(a, 0.2), aptx::clamp_min(b, 0.5)));
        };
        // inputs in [0.2, 1.5]: move b away from the clamp threshold
        for (std::int64_t i = 0; i < b.numel(); ++i)
            if (std::abs(b.value()[i] - 0.5) < 0.01) b.value()[i] = 0.7;
        auto res = check_gradients({&a, &b}, build);
        INFO(res.detail);
        CHECK(res.ok);
    }
}

TEST_CASE("gradcheck: matmul, transpose, row/col broadcasts") {
    aptx::Rng rng(12);
    Var<double> m(random_tensor(Shape{3, 4}, rng), true);
    Var<double> w(random_tensor(Shape{5, 4}, rng), true);
    Var<double> bias(random_tensor(Shape{5}, rng), true);
    Var<double> rv(random_tensor(Shape{3}, rng, 0.5, 1.5), true);

    SECTION("linear") {
        auto build = [&] { return aptx::mean(aptx::linear(m, w, bias)); };
        auto res = check_gradients({&m, &w, &bias}, build);
        INFO(res.detail);
        CHECK(res.ok);
    }
    SECTION("row ops") {
        auto build = [&] {
            auto centered = aptx::sub_rowvec(m, aptx::row_mean(m));
            return aptx::mean(aptx::square(aptx::mul_rowvec(centered, rv)));
        };
        auto res = check_gradients({&m, &rv}, build);
        INFO(res.detail);
        CHECK(res.ok);
    }
    SECTION("logsumexp and diag") {
        Var<double> sq(random_tensor(Shape{4, 4}, rng), true);
        auto build = [&] {
            return aptx::mean(aptx::sub(aptx::logsumexp_rows(sq), aptx::take_diag(sq)));
        };
        auto res = check_gradients({&sq}, build);
        INFO(res.detail);
        CHECK(res.ok);
    }
    SECTION("repeat_interleave") {
        Var<double> v(random_tensor(Shape{4}, rng), true);
        auto build = [&] {
            return aptx::mean(aptx::mul(aptx::repeat_interleave(v, 3),
                                        aptx::repeat_interleave(v, 3)));
        };
        auto res = check_gradients({&v}, build);
        INFO(res.detail);
        CHECK(res.ok);
    }
}

TEST_CASE("gradcheck: conv2d zero and circular padding") {
    aptx::Rng rng(13);
    Var<double> x(random_tensor(Shape{2, 3, 6, 6}, rng), true);
    Var<double> w(random_tensor(Shape{4, 3, 3, 3}, rng, -0.5, 0.5), true);
    Var<double> b(random_tensor(Shape{4}, rng), true);

    SECTION("stride 1 zero pad") {
        auto build = [&] {
            return aptx::mean(aptx::bias_channels(aptx::conv2d(x, w, 1, 1), b));
        };
        auto res = check_gradients({&x, &w, &b}, build);
        INFO(res.detail);
        CHECK(res.ok);
    }
    SECTION("stride 2 zero pad") {
        auto build = [&] { return aptx::mean(aptx::square(aptx::conv2d(x, w, 2, 1))); };
        auto res = check_gradients({&x, &w}, build);
        INFO(res.detail);
        CHECK(res.ok);
    }
    SECTION("stride 2 circular pad") {
        auto build = [&] {
            return aptx::mean(
                aptx::square(aptx::conv2d(x, w, 2, 1, aptx::PadMode::kCircular)));
        };
        auto res = check_gradients({&x, &w}, build);
        INFO(res.detail);
        CHECK(res.ok);
    }
}

TEST_CASE("conv2d output shape") {
    aptx::Rng rng(14);
    Var<double> x(random_tensor(Shape{1, 3, 8, 8}, rng));
    Var<double> w(random_tensor(Shape{5, 3, 3, 3}, rng));
    auto y1 = aptx::conv2d(x, w, 1, 1);
    CHECK(y1.shape() == Shape{1, 5, 8, 8});
    auto y2 = aptx::conv2d(x, w, 2, 1);
    CHECK(y2.shape() == Shape{1, 5, 4, 4});
    CHECK_THROWS_AS(aptx::conv2d(x, Var<double>(random_tensor(Shape{5, 4, 3, 3}, rng)), 1, 1),
                    aptx::ShapeError);
}

TEST_CASE("gradcheck: pooling, upsample, gather, channel ops") {
    aptx::Rng rng(15);
    Var<double> x(random_tensor(Shape{2, 3, 4, 4}, rng), true);

    SECTION("avg_pool2d") {
        auto build = [&] { return aptx::mean(aptx::square(aptx::avg_pool2d(x, 2))); };
        auto res = check_gradients({&x}, build);
        INFO(res.detail);
        CHECK(res.ok);
    }
    SECTION("global_avg_pool") {
        auto build = [&] { return aptx::mean(aptx::square(aptx::global_avg_pool(x))); };
        auto res = check_gradients({&x}, build);
        INFO(res.detail);
        CHECK(res.ok);
    }
    SECTION("upsample_nearest2x") {
        auto build = [&] { return aptx::mean(aptx::square(aptx::upsample_nearest2x(x))); };
        auto res = check_gradients({&x}, build);
        INFO(res.detail);
        CHECK(res.ok);
    }
    SECTION("gather_spatial") {
        auto build = [&] {
            auto g0 = aptx::gather_spatial(x, 0, {0, 5, 15, 7});
            auto g1 = aptx::gather_spatial(x, 1, {3, 3, 9, 2});
            return aptx::mean(aptx::mul(g0, g1));
        };
        auto res = check_gradients({&x}, build);
        INFO(res.detail);
        CHECK(res.ok);
    }
    SECTION("scale_channels") {
        Var<double> s(random_tensor(Shape{2, 3}, rng, 0.5, 1.5), true);
        auto build = [&] { return aptx::mean(aptx::square(aptx::scale_channels(x, s))); };
        auto res = check_gradients({&x, &s}, build);
        INFO(res.detail);
        CHECK(res.ok);
    }
}

TEST_CASE("gather_spatial rejects out-of-range indices") {
    aptx::Rng rng(16);
    Var<double> x(random_tensor(Shape{1, 2, 4, 4}, rng));
    CHECK_THROWS_AS(aptx::gather_spatial(x, 0, {16}), aptx::LookupError);
}

TEST_CASE("upsample then avg_pool is the identity") {
    aptx::Rng rng(17);
    Var<double> x(random_tensor(Shape{1, 2, 3, 3}, rng));
    auto roundtrip = aptx::avg_pool2d(aptx::upsample_nearest2x(x), 2);
    CHECK(aptx::max_abs_diff(roundtrip.value(), x.value()) < 1e-12);
}
