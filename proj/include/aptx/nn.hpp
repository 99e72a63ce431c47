// Differentiable network building blocks over NCHW tensors: convolution via
// batched im2col + GEMM, pooling, nearest-neighbour upsampling, per-channel
// broadcasts, and spatial gathering for contrastive sampling.
#pragma once

#include <cstring>
#include <memory>

#include "aptx/ops.hpp"

namespace aptx {

enum class PadMode { kZero, kCircular };

namespace detail {

inline std::int64_t conv_out_dim(std::int64_t in, std::int64_t k, std::int64_t stride,
                                 std::int64_t pad) {
    return (in + 2 * pad - k) / stride + 1;
}

// In-bounds output range [lo, hi) for ix = ox*stride - pad + k over ix in [0, n).
inline std::pair<std::int64_t, std::int64_t> valid_span(std::int64_t n, std::int64_t stride,
                                                        std::int64_t pad, std::int64_t k,
                                                        std::int64_t out_dim) {
    const std::int64_t shift = pad - k;
    const std::int64_t lo = shift <= 0 ? 0 : (shift + stride - 1) / stride;
    const std::int64_t hi = std::min(out_dim, (n - 1 + shift) / stride + 1);
    return {lo, std::max(lo, hi)};
}

// col layout: [C*kh*kw, B*Ho*Wo]; column index = (b*Ho + oy)*Wo + ox.
template <class T>
void im2col(const T* x, std::int64_t batch, std::int64_t ch, std::int64_t h, std::int64_t w,
            std::int64_t kh, std::int64_t kw, std::int64_t stride, std::int64_t pad,
            PadMode mode, std::int64_t ho, std::int64_t wo, T* col) {
    const std::int64_t cols = batch * ho * wo;
    for (std::int64_t c = 0; c < ch; ++c) {
        for (std::int64_t ky = 0; ky < kh; ++ky) {
            for (std::int64_t kx = 0; kx < kw; ++kx) {
                T* row = col + ((c * kh + ky) * kw + kx) * cols;
                const auto [ox_lo, ox_hi] = valid_span(w, stride, pad, kx, wo);
                for (std::int64_t b = 0; b < batch; ++b) {
                    const T* img = x + (b * ch + c) * h * w;
                    for (std::int64_t oy = 0; oy < ho; ++oy) {
                        std::int64_t iy = oy * stride - pad + ky;
                        T* dst = row + (b * ho + oy) * wo;
                        if (mode == PadMode::kCircular) {
                            iy = ((iy % h) + h) % h;
                            const T* src = img + iy * w;
                            for (std::int64_t ox = 0; ox < wo; ++ox) {
                                const std::int64_t ix =
                                    (((ox * stride - pad + kx) % w) + w) % w;
                                dst[ox] = src[ix];
                            }
                            continue;
                        }
                        if (iy < 0 || iy >= h) {
                            std::memset(dst, 0, sizeof(T) * static_cast<std::size_t>(wo));
                            continue;
                        }
                        const T* src = img + iy * w;
                        if (ox_lo > 0)
                            std::memset(dst, 0, sizeof(T) * static_cast<std::size_t>(ox_lo));
                        if (ox_hi < wo)
                            std::memset(dst + ox_hi, 0,
                                        sizeof(T) * static_cast<std::size_t>(wo - ox_hi));
                        if (stride == 1) {
                            std::memcpy(dst + ox_lo, src + ox_lo - pad + kx,
                                        sizeof(T) * static_cast<std::size_t>(ox_hi - ox_lo));
                        } else {
                            const T* s = src + ox_lo * stride - pad + kx;
                            for (std::int64_t ox = ox_lo; ox < ox_hi; ++ox, s += stride)
                                dst[ox] = *s;
                        }
                    }
                }
            }
        }
    }
}

template <class T>
void col2im_add(const T* col, std::int64_t batch, std::int64_t ch, std::int64_t h, std::int64_t w,
                std::int64_t kh, std::int64_t kw, std::int64_t stride, std::int64_t pad,
                PadMode mode, std::int64_t ho, std::int64_t wo, T* x) {
    const std::int64_t cols = batch * ho * wo;
    for (std::int64_t c = 0; c < ch; ++c) {
        for (std::int64_t ky = 0; ky < kh; ++ky) {
            for (std::int64_t kx = 0; kx < kw; ++kx) {
                const T* row = col + ((c * kh + ky) * kw + kx) * cols;
                const auto [ox_lo, ox_hi] = valid_span(w, stride, pad, kx, wo);
                for (std::int64_t b = 0; b < batch; ++b) {
                    T* img = x + (b * ch + c) * h * w;
                    for (std::int64_t oy = 0; oy < ho; ++oy) {
                        std::int64_t iy = oy * stride - pad + ky;
                        const T* src = row + (b * ho + oy) * wo;
                        if (mode == PadMode::kCircular) {
                            iy = ((iy % h) + h) % h;
                            T* dst = img + iy * w;
                            for (std::int64_t ox = 0; ox < wo; ++ox)
                                dst[(((ox * stride - pad + kx) % w) + w) % w] += src[ox];
                            continue;
                        }
                        if (iy < 0 || iy >= h) continue;
                        T* dst = img + iy * w;
                        T* d = dst + ox_lo * stride - pad + kx;
                        for (std::int64_t ox = ox_lo; ox < ox_hi; ++ox, d += stride)
                            *d += src[ox];
                    }
                }
            }
        }
    }
}

// [O, B*Ho*Wo] -> [B, O, Ho, Wo]
template <class T>
void split_batch_major(const T* src, std::int64_t batch, std::int64_t out_ch, std::int64_t plane,
                       T* dst) {
    for (std::int64_t o = 0; o < out_ch; ++o)
        for (std::int64_t b = 0; b < batch; ++b)
            std::memcpy(dst + (b * out_ch + o) * plane, src + (o * batch + b) * plane,
                        sizeof(T) * static_cast<std::size_t>(plane));
}

// [B, O, Ho, Wo] -> [O, B*Ho*Wo]
template <class T>
void merge_batch_major(const T* src, std::int64_t batch, std::int64_t out_ch, std::int64_t plane,
                       T* dst) {
    for (std::int64_t b = 0; b < batch; ++b)
        for (std::int64_t o = 0; o < out_ch; ++o)
            std::memcpy(dst + (o * batch + b) * plane, src + (b * out_ch + o) * plane,
                        sizeof(T) * static_cast<std::size_t>(plane));
}

}  // namespace detail

// x: [B,C,H,W], w: [O,C,kh,kw] -> [B,O,Ho,Wo]. Bias is a separate op.
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, std::int64_t stride, std::int64_t pad,
              PadMode mode = PadMode::kZero) {
    const Tensor<T>& xv = x.value();
    const Tensor<T>& wv = w.value();
    if (xv.ndim() != 4 || wv.ndim() != 4)
        throw ShapeError("conv2d: expects 4-D input and weights");
    if (xv.dim(1) != wv.dim(1))
        throw ShapeError(cat("conv2d: input channels ", xv.dim(1), " do not match weight channels ",
                             wv.dim(1)));
    const std::int64_t batch = xv.dim(0), ch = xv.dim(1), h = xv.dim(2), wd = xv.dim(3);
    const std::int64_t out_ch = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
    const std::int64_t ho = detail::conv_out_dim(h, kh, stride, pad);
    const std::int64_t wo = detail::conv_out_dim(wd, kw, stride, pad);
    if (ho < 1 || wo < 1)
        throw ShapeError(cat("conv2d: input ", h, "x", wd, " too small for kernel ", kh, "x", kw));
    const std::int64_t ck = ch * kh * kw;
    const std::int64_t cols = batch * ho * wo;
    const std::int64_t plane = ho * wo;

    auto col = std::make_unique_for_overwrite<T[]>(static_cast<std::size_t>(ck * cols));
    detail::im2col(xv.data(), batch, ch, h, wd, kh, kw, stride, pad, mode, ho, wo, col.get());
    auto out2 = std::make_unique_for_overwrite<T[]>(static_cast<std::size_t>(out_ch * cols));
    gemm(false, false, out_ch, cols, ck, T(1), wv.data(), ck, col.get(), cols, T(0), out2.get(),
         cols);
    col.reset();
    Tensor<T> out = Tensor<T>::uninit(Shape{batch, out_ch, ho, wo});
    detail::split_batch_major(out2.get(), batch, out_ch, plane, out.data());

    return make_op<T>(std::move(out), {x, w},
                      [batch, ch, h, wd, out_ch, kh, kw, stride, pad, mode, ho, wo](Node<T>& n) {
        Node<T>& px = *n.parents[0];
        Node<T>& pw = *n.parents[1];
        const std::int64_t ck = ch * kh * kw;
        const std::int64_t cols = batch * ho * wo;
        const std::int64_t plane = ho * wo;
        auto dy2 = std::make_unique_for_overwrite<T[]>(static_cast<std::size_t>(out_ch * cols));
        detail::merge_batch_major(n.grad.data(), batch, out_ch, plane, dy2.get());
        if (pw.requires_grad) {
            auto col = std::make_unique_for_overwrite<T[]>(static_cast<std::size_t>(ck * cols));
            detail::im2col(px.value.data(), batch, ch, h, wd, kh, kw, stride, pad, mode, ho, wo,
                           col.get());
            Tensor<T>& g = detail::grad_of(pw);
            // dW += dY * col^T
            gemm(false, true, out_ch, ck, cols, T(1), dy2.get(), cols, col.get(), cols, T(1),
                 g.data(), ck);
        }
        if (px.requires_grad) {
            auto dcol = std::make_unique_for_overwrite<T[]>(static_cast<std::size_t>(ck * cols));
            // dcol = W^T * dY
            gemm(true, false, ck, cols, out_ch, T(1), pw.value.data(), ck, dy2.get(), cols, T(0),
                 dcol.get(), cols);
            dy2.reset();
            Tensor<T>& g = detail::grad_of(px);
            detail::col2im_add(dcol.get(), batch, ch, h, wd, kh, kw, stride, pad, mode, ho, wo,
                               g.data());
        }
    });
}

// x: [B,C,H,W] + b: [C]
template <class T>
Var<T> bias_channels(const Var<T>& x, const Var<T>& b) {
    const Tensor<T>& xv = x.value();
    if (xv.ndim() != 4 || b.value().ndim() != 1 || b.value().dim(0) != xv.dim(1))
        throw ShapeError("bias_channels: expects [B,C,H,W] and [C]");
    const std::int64_t batch = xv.dim(0), ch = xv.dim(1), plane = xv.dim(2) * xv.dim(3);
    Tensor<T> out = Tensor<T>::uninit(xv.shape());
    for (std::int64_t i = 0; i < batch; ++i)
        for (std::int64_t c = 0; c < ch; ++c) {
            const T bc = b.value()[c];
            const T* src = xv.data() + (i * ch + c) * plane;
            T* dst = out.data() + (i * ch + c) * plane;
            for (std::int64_t p = 0; p < plane; ++p) dst[p] = src[p] + bc;
        }
    return make_op<T>(std::move(out), {x, b}, [batch, ch, plane](Node<T>& n) {
        if (n.parents[0]->requires_grad) {
            Tensor<T>& g = detail::grad_of(*n.parents[0]);
            for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
        }
        if (n.parents[1]->requires_grad) {
            Tensor<T>& g = detail::grad_of(*n.parents[1]);
            for (std::int64_t i = 0; i < batch; ++i)
                for (std::int64_t c = 0; c < ch; ++c) {
                    const T* src = n.grad.data() + (i * ch + c) * plane;
                    T s = 0;
                    for (std::int64_t p = 0; p < plane; ++p) s += src[p];
                    g[c] += s;
                }
        }
    });
}

// x: [B,C,H,W] scaled per (sample, channel) by s: [B,C].
template <class T>
Var<T> scale_channels(const Var<T>& x, const Var<T>& s) {
    const Tensor<T>& xv = x.value();
    const Tensor<T>& sv = s.value();
    if (xv.ndim() != 4 || sv.ndim() != 2 || sv.dim(0) != xv.dim(0) || sv.dim(1) != xv.dim(1))
        throw ShapeError("scale_channels: expects [B,C,H,W] and [B,C]");
    const std::int64_t batch = xv.dim(0), ch = xv.dim(1), plane = xv.dim(2) * xv.dim(3);
    Tensor<T> out = Tensor<T>::uninit(xv.shape());
    for (std::int64_t i = 0; i < batch; ++i)
        for (std::int64_t c = 0; c < ch; ++c) {
            const T sc = sv.at(i, c);
            const T* src = xv.data() + (i * ch + c) * plane;
            T* dst = out.data() + (i * ch + c) * plane;
            for (std::int64_t p = 0; p < plane; ++p) dst[p] = src[p] * sc;
        }
    return make_op<T>(std::move(out), {x, s}, [batch, ch, plane](Node<T>& n) {
        Node<T>& px = *n.parents[0];
        Node<T>& ps = *n.parents[1];
        if (px.requires_grad) {
            Tensor<T>& g = detail::grad_of(px);
            for (std::int64_t i = 0; i < batch; ++i)
                for (std::int64_t c = 0; c < ch; ++c) {
                    const T sc = ps.value.at(i, c);
                    const T* gy = n.grad.data() + (i * ch + c) * plane;
                    T* dst = g.data() + (i * ch + c) * plane;
                    for (std::int64_t p = 0; p < plane; ++p) dst[p] += gy[p] * sc;
                }
        }
        if (ps.requires_grad) {
            Tensor<T>& g = detail::grad_of(ps);
            for (std::int64_t i = 0; i < batch; ++i)
                for (std::int64_t c = 0; c < ch; ++c) {
                    const T* gy = n.grad.data() + (i * ch + c) * plane;
                    const T* xvp = px.value.data() + (i * ch + c) * plane;
                    T sum = 0;
                    for (std::int64_t p = 0; p < plane; ++p) sum += gy[p] * xvp[p];
                    g.at(i, c) += sum;
                }
        }
    });
}

// Non-overlapping average pooling, kernel = stride = k.
template <class T>
Var<T> avg_pool2d(const Var<T>& x, std::int64_t k) {
    const Tensor<T>& xv = x.value();
    if (xv.ndim() != 4) throw ShapeError("avg_pool2d: expects [B,C,H,W]");
    const std::int64_t batch = xv.dim(0), ch = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
    if (h % k != 0 || w % k != 0)
        throw ShapeError(cat("avg_pool2d: spatial dims ", h, "x", w, " not divisible by pool ", k));
    const std::int64_t ho = h / k, wo = w / k;
    Tensor<T> out = Tensor<T>::uninit(Shape{batch, ch, ho, wo});
    const T inv = T(1) / static_cast<T>(k * k);
    for (std::int64_t bc = 0; bc < batch * ch; ++bc) {
        const T* src = xv.data() + bc * h * w;
        T* dst = out.data() + bc * ho * wo;
        for (std::int64_t oy = 0; oy < ho; ++oy)
            for (std::int64_t ox = 0; ox < wo; ++ox) {
                T s = 0;
                for (std::int64_t ky = 0; ky < k; ++ky)
                    for (std::int64_t kx = 0; kx < k; ++kx)
                        s += src[(oy * k + ky) * w + ox * k + kx];
                dst[oy * wo + ox] = s * inv;
            }
    }
    return make_op<T>(std::move(out), {x}, [batch, ch, h, w, k](Node<T>& n) {
        Node<T>& p = *n.parents[0];
        if (!p.requires_grad) return;
        const std::int64_t ho = h / k, wo = w / k;
        const T inv = T(1) / static_cast<T>(k * k);
        Tensor<T>& g = detail::grad_of(p);
        for (std::int64_t bc = 0; bc < batch * ch; ++bc) {
            const T* gy = n.grad.data() + bc * ho * wo;
            T* dst = g.data() + bc * h * w;
            for (std::int64_t oy = 0; oy < ho; ++oy)
                for (std::int64_t ox = 0; ox < wo; ++ox) {
                    const T v = gy[oy * wo + ox] * inv;
                    for (std::int64_t ky = 0; ky < k; ++ky)
                        for (std::int64_t kx = 0; kx < k; ++kx)
                            dst[(oy * k + ky) * w + ox * k + kx] += v;
                }
        }
    });
}

// [B,C,H,W] -> [B,C]
template <class T>
Var<T> global_avg_pool(const Var<T>& x) {
    const Tensor<T>& xv = x.value();
    if (xv.ndim() != 4) throw ShapeError("global_avg_pool: expects [B,C,H,W]");
    const std::int64_t batch = xv.dim(0), ch = xv.dim(1), plane = xv.dim(2) * xv.dim(3);
    Tensor<T> out = Tensor<T>::uninit(Shape{batch, ch});
    const T inv = T(1) / static_cast<T>(plane);
    for (std::int64_t bc = 0; bc < batch * ch; ++bc) {
        const T* src = xv.data() + bc * plane;
        T s = 0;
        for (std::int64_t p = 0; p < plane; ++p) s += src[p];
        out[bc] = s * inv;
    }
    return make_op<T>(std::move(out), {x}, [batch, ch, plane](Node<T>& n) {
        Node<T>& p = *n.parents[0];
        if (!p.requires_grad) return;
        const T inv = T(1) / static_cast<T>(plane);
        Tensor<T>& g = detail::grad_of(p);
        for (std::int64_t bc = 0; bc < batch * ch; ++bc) {
            const T v = n.grad[bc] * inv;
            T* dst = g.data() + bc * plane;
            for (std::int64_t q = 0; q < plane; ++q) dst[q] += v;
        }
    });
}

template <class T>
Var<T> upsample_nearest2x(const Var<T>& x) {
    const Tensor<T>& xv = x.value();
    if (xv.ndim() != 4) throw ShapeError("upsample_nearest2x: expects [B,C,H,W]");
    const std::int64_t bc = xv.dim(0) * xv.dim(1), h = xv.dim(2), w = xv.dim(3);
    Tensor<T> out = Tensor<T>::uninit(Shape{xv.dim(0), xv.dim(1), 2 * h, 2 * w});
    for (std::int64_t i = 0; i < bc; ++i) {
        const T* src = xv.data() + i * h * w;
        T* dst = out.data() + i * 4 * h * w;
        for (std::int64_t y = 0; y < h; ++y)
            for (std::int64_t x2 = 0; x2 < w; ++x2) {
                const T v = src[y * w + x2];
                dst[(2 * y) * 2 * w + 2 * x2] = v;
                dst[(2 * y) * 2 * w + 2 * x2 + 1] = v;
                dst[(2 * y + 1) * 2 * w + 2 * x2] = v;
                dst[(2 * y + 1) * 2 * w + 2 * x2 + 1] = v;
            }
    }
    return make_op<T>(std::move(out), {x}, [bc, h, w](Node<T>& n) {
        Node<T>& p = *n.parents[0];
        if (!p.requires_grad) return;
        Tensor<T>& g = detail::grad_of(p);
        for (std::int64_t i = 0; i < bc; ++i) {
            const T* gy = n.grad.data() + i * 4 * h * w;
            T* dst = g.data() + i * h * w;
            for (std::int64_t y = 0; y < h; ++y)
                for (std::int64_t x2 = 0; x2 < w; ++x2)
                    dst[y * w + x2] += gy[(2 * y) * 2 * w + 2 * x2] +
                                       gy[(2 * y) * 2 * w + 2 * x2 + 1] +
                                       gy[(2 * y + 1) * 2 * w + 2 * x2] +
                                       gy[(2 * y + 1) * 2 * w + 2 * x2 + 1];
        }
    });
}

// Feature vectors at flat spatial indices of image `b`: [B,C,H,W] -> [n,C].
template <class T>
Var<T> gather_spatial(const Var<T>& x, std::int64_t b, std::vector<std::int64_t> indices) {
    const Tensor<T>& xv = x.value();
    if (xv.ndim() != 4) throw ShapeError("gather_spatial: expects [B,C,H,W]");
    const std::int64_t ch = xv.dim(1), plane = xv.dim(2) * xv.dim(3);
    const std::int64_t n = static_cast<std::int64_t>(indices.size());
    for (auto idx : indices)
        if (idx < 0 || idx >= plane)
            throw LookupError(cat("gather_spatial: index ", idx, " out of range [0,", plane, ")"));
    Tensor<T> out = Tensor<T>::uninit(Shape{n, ch});
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t c = 0; c < ch; ++c)
            out.at(i, c) = xv.data()[(b * ch + c) * plane + indices[static_cast<std::size_t>(i)]];
    return make_op<T>(std::move(out), {x},
                      [b, ch, plane, n, indices = std::move(indices)](Node<T>& nd) {
        Node<T>& p = *nd.parents[0];
        if (!p.requires_grad) return;
        Tensor<T>& g = detail::grad_of(p);
        for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t c = 0; c < ch; ++c)
                g.data()[(b * ch + c) * plane + indices[static_cast<std::size_t>(i)]] +=
                    nd.grad.at(i, c);
    });
}

// x: [B,in] * w^T + b, w: [out,in], b: [out]
template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
    return add_colvec(matmul(x, transpose(w)), b);
}

}  // namespace aptx
