// Training objectives: least-squares adversarial pair, style reconstruction,
// style BCE, PatchNCE, identity, and the normalized-luminance content loss.
// Every loss is a pure differentiable scalar built from tape ops.
#pragma once

#include "aptx/modules.hpp"

namespace aptx {

struct LossWeights {
    double cls = 1.0;
    double sty = 1.0;
    double nce = 0.5;
    double idt = 0.5;
    double lum = 0.1;

    void validate() const {
        if (cls < 0 || sty < 0 || nce < 0 || idt < 0 || lum < 0)
            throw ConfigError("loss weights must be >= 0");
    }
};

template <class T>
Var<T> clamp(const Var<T>& x, T lo, T hi) {
    return unary_op(x, [lo, hi](T v) { return v < lo ? lo : (v > hi ? hi : v); },
                    [lo, hi](T v, T) { return (v >= lo && v <= hi) ? T(1) : T(0); });
}

// Discriminator objective: mean over every scale and spatial position of
// (D(y) - (1-smooth))^2 + D(G(x))^2. One-sided label smoothing shifts only
// the real target.
template <class T>
Var<T> d_loss(const std::vector<Var<T>>& d_real, const std::vector<Var<T>>& d_fake, T smooth) {
    if (d_real.size() != d_fake.size() || d_real.empty())
        throw ShapeError("d_loss: real/fake logit lists must be non-empty and equal length");
    const T target = T(1) - smooth;
    Var<T> total;
    std::int64_t count = 0;
    for (std::size_t i = 0; i < d_real.size(); ++i) {
        if (!d_real[i].value().same_shape(d_fake[i].value()))
            throw ShapeError(cat("d_loss: scale ", i, " shape mismatch ",
                                 shape_str(d_real[i].shape()), " vs ",
                                 shape_str(d_fake[i].shape())));
        auto term = add(sum(square(add_scalar(d_real[i], -target))), sum(square(d_fake[i])));
        total = total.defined() ? add(total, term) : term;
        count += d_real[i].numel();
    }
    return mul_scalar(total, T(1) / static_cast<T>(count));
}

// Generator adversarial objective: mean of (D(G(x)) - 1)^2 over all scales
// and positions.
template <class T>
Var<T> g_adv_loss(const std::vector<Var<T>>& d_fake) {
    if (d_fake.empty()) throw ShapeError("g_adv_loss: empty logit list");
    Var<T> total;
    std::int64_t count = 0;
    for (const auto& map : d_fake) {
        auto term = sum(square(add_scalar(map, T(-1))));
        total = total.defined() ? add(total, term) : term;
        count += map.numel();
    }
    return mul_scalar(total, T(1) / static_cast<T>(count));
}

// Mean absolute difference between style codes, normalized by d.
template <class T>
Var<T> style_recon_loss(const Var<T>& s_target, const Var<T>& s_generated) {
    if (!s_target.value().same_shape(s_generated.value()))
        throw ShapeError(cat("style_recon_loss: shape mismatch ", shape_str(s_target.shape()),
                             " vs ", shape_str(s_generated.shape())));
    return mean(abs(sub(s_target, s_generated)));
}

// BCE separating real-style (target 1) from sim-style (target 0)
// probabilities; inputs clamped to (0,1) at 1e-7.
template <class T>
Var<T> bce_style_loss(const Var<T>& p_real, const Var<T>& p_sim) {
    if (!p_real.value().same_shape(p_sim.value()))
        throw ShapeError("bce_style_loss: probability vectors must share a shape");
    const T lo = T(1e-7), hi = T(1) - T(1e-7);
    auto pr = clamp(p_real, lo, hi);
    auto ps = clamp(p_sim, lo, hi);
    auto per_pair = sub(neg(log(pr)), log(add_scalar(neg(ps), T(1))));
    return mean(per_pair);
}

// InfoNCE over spatially corresponding features. For each tap, draws n
// distinct positions (one set shared across the batch, keeping the loss
// permutation-equivariant over the batch axis); the anchor comes from the
// generated-image features, the positive from the sim features at the same
// position, and the negatives from the sim features at the other sampled
// positions. Features are L2-normalized before the dot products.
template <class T>
Var<T> patch_nce_loss(const std::vector<Var<T>>& gen_feats, const std::vector<Var<T>>& sim_feats,
                      std::int64_t n, T tau, std::uint64_t rng_seed) {
    if (gen_feats.size() != sim_feats.size() || gen_feats.empty())
        throw ShapeError("patch_nce_loss: tap lists must be non-empty and equal length");
    if (tau <= T(0)) throw ConfigError("patch_nce_loss: temperature must be > 0");
    auto l2_rows = [](const Var<T>& f) {
        auto norms = sqrt(add_scalar(row_sum(square(f)), T(1e-12)));
        return mul_rowvec(f, recip(norms));
    };
    Var<T> total;
    std::int64_t terms = 0;
    for (std::size_t t = 0; t < gen_feats.size(); ++t) {
        const Tensor<T>& gv = gen_feats[t].value();
        if (!gv.same_shape(sim_feats[t].value()))
            throw ShapeError(cat("patch_nce_loss: tap ", t, " shape mismatch"));
        if (gv.ndim() != 4) throw ShapeError("patch_nce_loss: taps must be [B,C,H,W]");
        const std::int64_t batch = gv.dim(0);
        const std::int64_t positions = gv.dim(2) * gv.dim(3);
        if (n > positions)
            throw SamplingError(cat("patch_nce_loss: n=", n, " exceeds ", positions,
                                    " spatial positions at tap ", t));
        Rng rng(derive(rng_seed, "nce-index", t));
        const auto idx = rng.sample_distinct(positions, n);
        for (std::int64_t b = 0; b < batch; ++b) {
            auto anchors = l2_rows(gather_spatial(gen_feats[t], b, idx));
            auto keys = l2_rows(gather_spatial(sim_feats[t], b, idx));
            auto logits = mul_scalar(matmul(anchors, transpose(keys)), T(1) / tau);
            auto per_anchor = sub(logsumexp_rows(logits), take_diag(logits));
            auto term = mean(per_anchor);
            total = total.defined() ? add(total, term) : term;
            ++terms;
        }
    }
    return mul_scalar(total, T(1) / static_cast<T>(terms));
}

// L1 between G(x, 0) and x.
template <class T>
Var<T> identity_loss(const Var<T>& g_out_zero_style, const Var<T>& x) {
    if (!g_out_zero_style.value().same_shape(x.value()))
        throw ShapeError("identity_loss: shape mismatch");
    return mean(abs(sub(g_out_zero_style, x)));
}

// Per-pixel luminance L = 0.299 R + 0.587 G + 0.114 B as a [B,1,H,W] map.
template <class T>
Var<T> luminance(const Var<T>& img) {
    if (img.value().ndim() != 4 || img.value().dim(1) != 3)
        throw ShapeError(cat("luminance: expects [B,3,H,W], got ", shape_str(img.shape())));
    Tensor<T> w(Shape{1, 3, 1, 1});
    w[0] = T(0.299);
    w[1] = T(0.587);
    w[2] = T(0.114);
    return conv2d(img, Var<T>(std::move(w)), 1, 0);
}

namespace detail {
// Rows normalized to zero mean / unit std; std floored at 1e-6 via the
// variance clamp (sqrt(1e-12) = 1e-6) so constant rows stay finite.
template <class T>
Var<T> normalize_rows(const Var<T>& rows) {
    auto centered = sub_rowvec(rows, row_mean(rows));
    auto stddev = sqrt(clamp_min(row_mean(square(centered)), T(1e-12)));
    return mul_rowvec(centered, recip(stddev));
}
}  // namespace detail

// L1 between per-image mean/std-normalized block-averaged luminance maps.
// pool=0 selects the scale-matched default of H/16 (16 at 256^2, 4 at 64^2).
template <class T>
Var<T> luminance_loss(const Var<T>& x, const Var<T>& y_hat, std::int64_t pool = 0) {
    if (!x.value().same_shape(y_hat.value()))
        throw ShapeError("luminance_loss: shape mismatch");
    const std::int64_t h = x.value().dim(2), w = x.value().dim(3);
    if (pool == 0) {
        if (h % 16 != 0)
            throw ShapeError(cat("luminance_loss: height ", h,
                                 " not divisible by 16 for the default pool size"));
        pool = h / 16;
    }
    if (h % pool != 0 || w % pool != 0)
        throw ShapeError(cat("luminance_loss: dims ", h, "x", w, " not divisible by pool ", pool));
    auto pooled_rows = [&](const Var<T>& img) {
        auto pooled = avg_pool2d(luminance(img), pool);
        const std::int64_t b = pooled.value().dim(0);
        return reshape(pooled, Shape{b, pooled.numel() / b});
    };
    auto nx = detail::normalize_rows(pooled_rows(x));
    auto ny = detail::normalize_rows(pooled_rows(y_hat));
    return mean(abs(sub(nx, ny)));
}

template <class T>
struct GLossComponents {
    Var<T> gan, bce, sty, nce, idt, lum;
};

// L_GAN + w.cls*L_bce + w.sty*L_sty + w.nce*L_nce + w.idt*L_idt + w.lum*L_lum
template <class T>
Var<T> total_g_loss(const GLossComponents<T>& c, const LossWeights& w) {
    const std::pair<const char*, const Var<T>*> named[] = {
        {"gan", &c.gan}, {"bce", &c.bce}, {"sty", &c.sty},
        {"nce", &c.nce}, {"idt", &c.idt}, {"lum", &c.lum}};
    for (const auto& [name, var] : named) {
        if (!var->defined() || var->numel() != 1)
            throw ShapeError(cat("total_g_loss: component ", name, " must be a defined scalar"));
        if (!std::isfinite(static_cast<double>(var->value()[0])))
            throw NumericError(cat("total_g_loss: component ", name, " is not finite"));
    }
    auto total = c.gan;
    total = add(total, mul_scalar(c.bce, static_cast<T>(w.cls)));
    total = add(total, mul_scalar(c.sty, static_cast<T>(w.sty)));
    total = add(total, mul_scalar(c.nce, static_cast<T>(w.nce)));
    total = add(total, mul_scalar(c.idt, static_cast<T>(w.idt)));
    total = add(total, mul_scalar(c.lum, static_cast<T>(w.lum)));
    return total;
}

}  // namespace aptx
