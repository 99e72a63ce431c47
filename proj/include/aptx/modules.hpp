// Learnable networks: style encoder S, generator G with style-difference
// weight modulation, multi-scale patch discriminator D, the linear style
// classifier, and fixed-seed frozen extractors.
#pragma once

#include <array>
#include <optional>
#include <string>

#include "aptx/nn.hpp"
#include "aptx/rng.hpp"

namespace aptx {

struct ModelConfig {
    int style_dim = 64;
    int base_width = 16;  // generator/discriminator widths are {w, 2w, 4w}
    int gen_blocks = 4;
    bool modulate_encoder_blocks = true;  // false: only decoder-side ResNet blocks are modulated
    int projected_channels = 32;          // width of the frozen projected-GAN extractor
    double demod_eps = 1e-8;
};

// Named parameter registry; ordering is the serialization order.
template <class T>
struct ParamSet {
    std::vector<std::pair<std::string, Var<T>>> items;

    Var<T> make(std::string name, Tensor<T> init, bool trainable = true) {
        Var<T> v(std::move(init), trainable);
        items.emplace_back(std::move(name), v);
        return v;
    }

    Var<T>* find(const std::string& name) {
        for (auto& [n, v] : items)
            if (n == name) return &v;
        return nullptr;
    }
};

namespace init {

template <class T>
Tensor<T> he_conv(std::int64_t out_ch, std::int64_t in_ch, std::int64_t k, Rng& rng,
                  double scale = 1.0) {
    const double std = scale * std::sqrt(2.0 / static_cast<double>(in_ch * k * k));
    Tensor<T> t(Shape{out_ch, in_ch, k, k});
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.normal(0.0, std));
    return t;
}

template <class T>
Tensor<T> normal(Shape shape, Rng& rng, double std) {
    Tensor<T> t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.normal(0.0, std));
    return t;
}

}  // namespace init

template <class T>
struct Conv2dLayer {
    Var<T> w, b;
    std::int64_t stride = 1, pad = 1;
    PadMode mode = PadMode::kZero;

    static Conv2dLayer create(ParamSet<T>& ps, const std::string& name, std::int64_t in_ch,
                              std::int64_t out_ch, std::int64_t k, std::int64_t stride, Rng& rng,
                              PadMode mode = PadMode::kZero, double scale = 1.0,
                              bool trainable = true) {
        Conv2dLayer l;
        l.w = ps.make(name + ".w", init::he_conv<T>(out_ch, in_ch, k, rng, scale), trainable);
        l.b = ps.make(name + ".b", Tensor<T>(Shape{out_ch}), trainable);
        l.stride = stride;
        l.pad = k / 2;
        l.mode = mode;
        return l;
    }

    Var<T> operator()(const Var<T>& x) const {
        return bias_channels(conv2d(x, w, stride, pad, mode), b);
    }
};

// Weight modulation/demodulation in weight space (StyleGAN2 form): scale the
// weights of input feature map i by mapped style s_i, then renormalize each
// output channel to unit weight norm.
template <class T>
Var<T> modulate_demodulate(const Var<T>& weights, const Var<T>& mapped_style, T eps) {
    const Tensor<T>& wv = weights.value();
    if (wv.ndim() != 4) throw ShapeError("modulate_demodulate: weights must be [O,C,kh,kw]");
    if (mapped_style.value().ndim() != 1 || mapped_style.value().dim(0) != wv.dim(1))
        throw ShapeError(cat("modulate_demodulate: style length ",
                             mapped_style.value().numel(), " does not match input channels ",
                             wv.dim(1)));
    const std::int64_t o = wv.dim(0), c = wv.dim(1), kk = wv.dim(2) * wv.dim(3);
    auto w2d = reshape(weights, Shape{o, c * kk});
    auto modulated = mul_colvec(w2d, repeat_interleave(mapped_style, kk));
    auto denom = sqrt(add_scalar(row_sum(square(modulated)), eps));
    auto demodulated = mul_rowvec(modulated, recip(denom));
    return reshape(demodulated, wv.shape());
}

// Modulated 3x3 convolution. Evaluation scales input channels by the mapped
// style and divides output channels by the demodulation norm, which is
// algebraically identical to convolving with modulate_demodulate-ed weights
// but keeps the conv weights shared across the batch.
template <class T>
struct ModulatedConv2d {
    Var<T> w, b;                  // [O,C,3,3], [O]
    Var<T> affine_w, affine_b;    // style mapping d -> C, bias-to-one init
    T eps = T(1e-8);

    static ModulatedConv2d create(ParamSet<T>& ps, const std::string& name, std::int64_t in_ch,
                                  std::int64_t out_ch, std::int64_t style_dim, Rng& rng,
                                  double eps) {
        ModulatedConv2d l;
        l.w = ps.make(name + ".w", init::he_conv<T>(out_ch, in_ch, 3, rng));
        l.b = ps.make(name + ".b", Tensor<T>(Shape{out_ch}));
        l.affine_w = ps.make(name + ".affine.w",
                             init::normal<T>(Shape{in_ch, style_dim}, rng, 0.01));
        l.affine_b = ps.make(name + ".affine.b", Tensor<T>(Shape{in_ch}, T(1)));
        l.eps = static_cast<T>(eps);
        return l;
    }

    // x: [B,C,H,W], delta_s: [B,d]
    Var<T> operator()(const Var<T>& x, const Var<T>& delta_s) const {
        const std::int64_t o = w.value().dim(0), c = w.value().dim(1);
        auto s = linear(delta_s, affine_w, affine_b);  // [B,C]
        auto y = conv2d(scale_channels(x, s), w, 1, 1);
        // sigma[b,o] = sqrt(sum_c s[b,c]^2 * sum_kk w[o,c,kk]^2 + eps)
        auto w_sumsq =
            transpose(reshape(row_sum(square(reshape(w, Shape{o * c, 9}))), Shape{o, c}));
        auto sigma = sqrt(add_scalar(matmul(square(s), w_sumsq), eps));
        return bias_channels(scale_channels(y, recip(sigma)), b);
    }
};

// Residual block; convs are modulated (demodulation stands in for the
// normalization layer) unless built in plain mode.
template <class T>
struct ResBlock {
    bool modulated = true;
    ModulatedConv2d<T> mc1, mc2;
    Conv2dLayer<T> pc1, pc2;

    static ResBlock create(ParamSet<T>& ps, const std::string& name, std::int64_t ch,
                           std::int64_t style_dim, Rng& rng, bool modulated, double eps) {
        ResBlock blk;
        blk.modulated = modulated;
        if (modulated) {
            blk.mc1 = ModulatedConv2d<T>::create(ps, name + ".c1", ch, ch, style_dim, rng, eps);
            blk.mc2 = ModulatedConv2d<T>::create(ps, name + ".c2", ch, ch, style_dim, rng, eps);
        } else {
            blk.pc1 = Conv2dLayer<T>::create(ps, name + ".c1", ch, ch, 3, 1, rng);
            blk.pc2 = Conv2dLayer<T>::create(ps, name + ".c2", ch, ch, 3, 1, rng);
        }
        return blk;
    }

    Var<T> operator()(const Var<T>& x, const Var<T>& delta_s) const {
        auto h = modulated ? mc1(x, delta_s) : pc1(x);
        h = relu(h);
        h = modulated ? mc2(h, delta_s) : pc2(h);
        return add(x, h);
    }
};

// Style encoder S: four stride-2 convs with circular padding, global average
// pool, affine head to the d-dimensional style code. Circular padding keeps
// the pooled code invariant to full-stride cyclic shifts of the input.
template <class T>
struct StyleEncoder {
    ParamSet<T> params;
    std::array<Conv2dLayer<T>, 4> convs;
    Var<T> head_w, head_b;
    int style_dim;

    StyleEncoder(const ModelConfig& cfg, std::uint64_t seed) : style_dim(cfg.style_dim) {
        Rng rng(derive(seed, "init-style-encoder"));
        const std::int64_t w1 = cfg.base_width, w2 = 2 * w1, w3 = 4 * w1;
        const std::int64_t widths[5] = {3, w1, w2, w3, w3};
        for (int i = 0; i < 4; ++i)
            convs[static_cast<std::size_t>(i)] =
                Conv2dLayer<T>::create(params, cat("conv", i), widths[i], widths[i + 1], 3, 2, rng,
                                       PadMode::kCircular);
        head_w = params.make("head.w", init::normal<T>(Shape{cfg.style_dim, w3}, rng,
                                                       1.0 / std::sqrt(static_cast<double>(w3))));
        head_b = params.make("head.b", Tensor<T>(Shape{cfg.style_dim}));
    }

    // [B,3,H,W] -> [B,d]
    Var<T> operator()(const Var<T>& img) const {
        const Tensor<T>& v = img.value();
        if (v.ndim() != 4 || v.dim(1) != 3)
            throw ShapeError(cat("style_encode: expects [B,3,H,W], got ", shape_str(v.shape())));
        if (v.dim(2) % kStyleEncoderStride != 0)
            throw ShapeError(cat("style_encode: height ", v.dim(2), " not divisible by encoder stride ",
                                 kStyleEncoderStride));
        if (v.dim(3) % kStyleEncoderStride != 0)
            throw ShapeError(cat("style_encode: width ", v.dim(3), " not divisible by encoder stride ",
                                 kStyleEncoderStride));
        Var<T> h = img;
        for (const auto& conv : convs) h = leaky_relu(conv(h), T(0.2));
        return linear(global_avg_pool(h), head_w, head_b);
    }
};

template <class T>
Var<T> style_difference(const Var<T>& s_target, const Var<T>& s_source) {
    if (!s_target.value().same_shape(s_source.value()))
        throw ShapeError(cat("style_difference: shape mismatch ", shape_str(s_target.shape()),
                             " vs ", shape_str(s_source.shape())));
    return sub(s_target, s_source);
}

// Generator G = G_dec . G_enc: stem, two stride-2 downsamples, ResNet blocks
// conditioned on the style difference, nearest-neighbour upsampling and a
// tanh head. Fully convolutional; output size equals input size.
template <class T>
struct Generator {
    ParamSet<T> params;
    Conv2dLayer<T> stem, down1, down2, up1, up2, head;
    std::vector<ResBlock<T>> blocks;
    int style_dim;
    int enc_blocks;  // blocks included in G_enc (NCE feature path)

    Generator(const ModelConfig& cfg, std::uint64_t seed) : style_dim(cfg.style_dim) {
        Rng rng(derive(seed, "init-generator"));
        const std::int64_t w1 = cfg.base_width, w2 = 2 * w1, w3 = 4 * w1;
        stem = Conv2dLayer<T>::create(params, "stem", 3, w1, 3, 1, rng);
        down1 = Conv2dLayer<T>::create(params, "down1", w1, w2, 3, 2, rng);
        down2 = Conv2dLayer<T>::create(params, "down2", w2, w3, 3, 2, rng);
        blocks.reserve(static_cast<std::size_t>(cfg.gen_blocks));
        enc_blocks = cfg.gen_blocks / 2;
        for (int i = 0; i < cfg.gen_blocks; ++i) {
            const bool modulated = cfg.modulate_encoder_blocks || i >= enc_blocks;
            blocks.push_back(ResBlock<T>::create(params, cat("block", i), w3, cfg.style_dim, rng,
                                                 modulated, cfg.demod_eps));
        }
        up1 = Conv2dLayer<T>::create(params, "up1", w3, w2, 3, 1, rng);
        up2 = Conv2dLayer<T>::create(params, "up2", w2, w1, 3, 1, rng);
        // Small head init keeps the initial output near mid-gray.
        head = Conv2dLayer<T>::create(params, "head", w1, 3, 3, 1, rng, PadMode::kZero, 0.1);
    }

    struct Forward {
        Var<T> output;
        std::vector<Var<T>> taps;  // NCE features: after down1 and after the encoder blocks
    };

    void validate(const Tensor<T>& v) const {
        if (v.ndim() != 4 || v.dim(1) != 3)
            throw ShapeError(cat("generate: expects [B,3,H,W], got ", shape_str(v.shape())));
        if (v.dim(2) % kGeneratorDownsample != 0)
            throw ShapeError(cat("generate: height ", v.dim(2), " not divisible by downsample factor ",
                                 kGeneratorDownsample));
        if (v.dim(3) % kGeneratorDownsample != 0)
            throw ShapeError(cat("generate: width ", v.dim(3), " not divisible by downsample factor ",
                                 kGeneratorDownsample));
    }

    Forward forward(const Var<T>& img, const Var<T>& delta_s, bool decode = true) const {
        validate(img.value());
        if (delta_s.value().ndim() != 2 || delta_s.value().dim(1) != style_dim ||
            delta_s.value().dim(0) != img.value().dim(0))
            throw ShapeError(cat("generate: style difference must be [B,", style_dim, "], got ",
                                 shape_str(delta_s.shape())));
        Forward fwd;
        Var<T> h = relu(stem(img));
        h = relu(down1(h));
        fwd.taps.push_back(h);
        h = relu(down2(h));
        for (int i = 0; i < enc_blocks; ++i)
            h = blocks[static_cast<std::size_t>(i)](h, delta_s);
        fwd.taps.push_back(h);
        if (!decode) return fwd;
        for (int i = enc_blocks; i < static_cast<int>(blocks.size()); ++i)
            h = blocks[static_cast<std::size_t>(i)](h, delta_s);
        h = relu(up1(upsample_nearest2x(h)));
        h = relu(up2(upsample_nearest2x(h)));
        fwd.output = tanh(head(h));
        return fwd;
    }

    Var<T> operator()(const Var<T>& img, const Var<T>& delta_s) const {
        return forward(img, delta_s).output;
    }

    // G_enc feature maps at the NCE tap layers.
    std::vector<Var<T>> encode(const Var<T>& img, const Var<T>& delta_s) const {
        return forward(img, delta_s, /*decode=*/false).taps;
    }
};

// Patch discriminator: one strided trunk with 1x1 logit heads tapping
// intermediate activations, giving patch-logit maps at input/4, /8 and /16.
template <class T>
struct Discriminator {
    ParamSet<T> params;
    std::vector<Conv2dLayer<T>> trunk;
    std::vector<Conv2dLayer<T>> heads;
    std::vector<int> tap_after;  // trunk indices whose activation feeds a head
    std::int64_t min_input = 16;
    std::int64_t in_channels = 3;

    // `projected_input` = the trunk consumes frozen extractor features that
    // are already at 1/4 resolution.
    Discriminator(const ModelConfig& cfg, std::uint64_t seed, bool projected_input = false) {
        Rng rng(derive(seed, "init-discriminator"));
        const std::int64_t w1 = cfg.base_width, w2 = 2 * w1, w3 = 4 * w1;
        if (!projected_input) {
            in_channels = 3;
            trunk.push_back(Conv2dLayer<T>::create(params, "c0", 3, w1, 3, 2, rng));
            trunk.push_back(Conv2dLayer<T>::create(params, "c1", w1, w2, 3, 2, rng));
            trunk.push_back(Conv2dLayer<T>::create(params, "c2", w2, w3, 3, 2, rng));
            trunk.push_back(Conv2dLayer<T>::create(params, "c3", w3, w3, 3, 2, rng));
            tap_after = {1, 2, 3};
            min_input = 16;
        } else {
            in_channels = cfg.projected_channels;
            trunk.push_back(
                Conv2dLayer<T>::create(params, "c0", cfg.projected_channels, w2, 3, 1, rng));
            trunk.push_back(Conv2dLayer<T>::create(params, "c1", w2, w3, 3, 2, rng));
            trunk.push_back(Conv2dLayer<T>::create(params, "c2", w3, w3, 3, 2, rng));
            tap_after = {0, 1, 2};
            min_input = 4;
        }
        for (std::size_t i = 0; i < tap_after.size(); ++i) {
            const std::int64_t ch = trunk[static_cast<std::size_t>(tap_after[i])].w.value().dim(0);
            heads.push_back(Conv2dLayer<T>::create(params, cat("head", i), ch, 1, 1, 1, rng));
        }
    }

    // Returns one patch-logit map per scale.
    std::vector<Var<T>> operator()(const Var<T>& img) const {
        const Tensor<T>& v = img.value();
        if (v.ndim() != 4 || v.dim(1) != in_channels)
            throw ShapeError(cat("discriminate: expects [B,", in_channels, ",H,W], got ",
                                 shape_str(v.shape())));
        if (v.dim(2) < min_input || v.dim(3) < min_input)
            throw ShapeError(cat("discriminate: input ", v.dim(2), "x", v.dim(3),
                                 " smaller than minimum ", min_input));
        std::vector<Var<T>> logits;
        Var<T> h = img;
        std::size_t head_idx = 0;
        for (std::size_t i = 0; i < trunk.size(); ++i) {
            h = leaky_relu(trunk[i](h), T(0.2));
            if (head_idx < tap_after.size() &&
                tap_after[head_idx] == static_cast<int>(i)) {
                logits.push_back(heads[head_idx](h));
                ++head_idx;
            }
        }
        return logits;
    }
};

// Linear probe on style codes; sigmoid(W_s . s), no bias term.
template <class T>
struct StyleClassifier {
    ParamSet<T> params;
    Var<T> w;  // [1,d]

    StyleClassifier(const ModelConfig& cfg, std::uint64_t /*seed*/) {
        w = params.make("w", Tensor<T>(Shape{1, cfg.style_dim}));
    }

    // [B,d] -> logits [B]
    Var<T> logits(const Var<T>& s) const {
        if (s.value().ndim() != 2 || s.value().dim(1) != w.value().dim(1))
            throw ShapeError(cat("classify_style: expects [B,", w.value().dim(1), "], got ",
                                 shape_str(s.shape())));
        return reshape(matmul(s, transpose(w)), Shape{s.value().dim(0)});
    }

    // [B,d] -> probabilities in (0,1)
    Var<T> operator()(const Var<T>& s) const { return sigmoid(logits(s)); }
};

// Fixed-seed frozen convolution stack. Used both as the projected-GAN
// feature extractor (no pooling) and as the FID backbone (with pooling).
template <class T>
struct FrozenConvStack {
    ParamSet<T> params;
    std::vector<Conv2dLayer<T>> convs;
    bool pooled = false;
    std::uint64_t seed = 0;

    FrozenConvStack(std::uint64_t seed_, std::vector<std::int64_t> widths,
                    std::vector<std::int64_t> strides, bool pooled_)
        : pooled(pooled_), seed(seed_) {
        Rng rng(derive(seed_, "init-frozen"));
        std::int64_t in_ch = 3;
        for (std::size_t i = 0; i < widths.size(); ++i) {
            convs.push_back(Conv2dLayer<T>::create(params, cat("conv", i), in_ch, widths[i], 3,
                                                   strides[i], rng, PadMode::kZero, 1.0,
                                                   /*trainable=*/false));
            in_ch = widths[i];
        }
    }

    static FrozenConvStack projected(const ModelConfig& cfg, std::uint64_t seed) {
        const std::int64_t c = cfg.projected_channels;
        return FrozenConvStack(seed, {c / 2, c, c}, {2, 2, 1}, false);
    }

    static FrozenConvStack fid_backbone(std::uint64_t seed, std::int64_t feature_dim) {
        return FrozenConvStack(seed, {32, 64, 128, feature_dim}, {2, 2, 2, 2}, true);
    }

    std::int64_t out_channels() const { return convs.back().w.value().dim(0); }

    // [B,3,H,W] -> feature map [B,C,H',W'] or pooled features [B,C].
    Var<T> operator()(const Var<T>& img) const {
        Var<T> h = img;
        for (const auto& conv : convs) h = leaky_relu(conv(h), T(0.2));
        return pooled ? global_avg_pool(h) : h;
    }
};

}  // namespace aptx
