// Differentiable tensor operations: elementwise, reductions, matmul, and
// row/column broadcast forms used by the losses.
#pragma once

#include <cblas.h>

#include <cmath>

#include "aptx/autodiff.hpp"

namespace aptx {

inline void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k,
                 float alpha, const float* a, std::int64_t lda, const float* b, std::int64_t ldb,
                 float beta, float* c, std::int64_t ldc) {
    cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m), static_cast<int>(n),
                static_cast<int>(k), alpha, a, static_cast<int>(lda), b, static_cast<int>(ldb),
                beta, c, static_cast<int>(ldc));
}

inline void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k,
                 double alpha, const double* a, std::int64_t lda, const double* b, std::int64_t ldb,
                 double beta, double* c, std::int64_t ldc) {
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m), static_cast<int>(n),
                static_cast<int>(k), alpha, a, static_cast<int>(lda), b, static_cast<int>(ldb),
                beta, c, static_cast<int>(ldc));
}

namespace detail {

template <class T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
    if (!a.value().same_shape(b.value()))
        throw ShapeError(cat(op, ": shape mismatch ", shape_str(a.shape()), " vs ",
                             shape_str(b.shape())));
}

template <class T>
Tensor<T>& grad_of(Node<T>& parent) {
    if (parent.grad.empty()) parent.grad = Tensor<T>(parent.value.shape());
    return parent.grad;
}

}  // namespace detail

// f: value -> value; dfdx(x, y): local derivative given input and output.
template <class T, class F, class DF>
Var<T> unary_op(const Var<T>& x, F f, DF dfdx) {
    const Tensor<T>& xv = x.value();
    Tensor<T> out = Tensor<T>::uninit(xv.shape());
    for (std::int64_t i = 0; i < xv.numel(); ++i) out[i] = f(xv[i]);
    return make_op<T>(std::move(out), {x}, [dfdx](Node<T>& n) {
        Node<T>& p = *n.parents[0];
        if (!p.requires_grad) return;
        Tensor<T>& g = detail::grad_of(p);
        for (std::int64_t i = 0; i < g.numel(); ++i)
            g[i] += dfdx(p.value[i], n.value[i]) * n.grad[i];
    });
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    detail::require_same_shape(a, b, "add");
    Tensor<T> out = Tensor<T>::uninit(a.value().shape());
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] + b.value()[i];
    return make_op<T>(std::move(out), {a, b}, [](Node<T>& n) {
        for (int side = 0; side < 2; ++side) {
            Node<T>& p = *n.parents[side];
            if (!p.requires_grad) continue;
            Tensor<T>& g = detail::grad_of(p);
            for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
        }
    });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
    detail::require_same_shape(a, b, "sub");
    Tensor<T> out = Tensor<T>::uninit(a.value().shape());
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] - b.value()[i];
    return make_op<T>(std::move(out), {a, b}, [](Node<T>& n) {
        if (n.parents[0]->requires_grad) {
            Tensor<T>& g = detail::grad_of(*n.parents[0]);
            for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
        }
        if (n.parents[1]->requires_grad) {
            Tensor<T>& g = detail::grad_of(*n.parents[1]);
            for (std::int64_t i = 0; i < g.numel(); ++i) g[i] -= n.grad[i];
        }
    });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    detail::require_same_shape(a, b, "mul");
    Tensor<T> out = Tensor<T>::uninit(a.value().shape());
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * b.value()[i];
    return make_op<T>(std::move(out), {a, b}, [](Node<T>& n) {
        Node<T>& pa = *n.parents[0];
        Node<T>& pb = *n.parents[1];
        if (pa.requires_grad) {
            Tensor<T>& g = detail::grad_of(pa);
            for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += pb.value[i] * n.grad[i];
        }
        if (pb.requires_grad) {
            Tensor<T>& g = detail::grad_of(pb);
            for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += pa.value[i] * n.grad[i];
        }
    });
}

template <class T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
    detail::require_same_shape(a, b, "div");
    Tensor<T> out = Tensor<T>::uninit(a.value().shape());
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] / b.value()[i];
    return make_op<T>(std::move(out), {a, b}, [](Node<T>& n) {
        Node<T>& pa = *n.parents[0];
        Node<T>& pb = *n.parents[1];
        if (pa.requires_grad) {
            Tensor<T>& g = detail::grad_of(pa);
            for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i] / pb.value[i];
        }
        if (pb.requires_grad) {
            Tensor<T>& g = detail::grad_of(pb);
            for (std::int64_t i = 0; i < g.numel(); ++i)
                g[i] -= n.grad[i] * n.value[i] / pb.value[i];
        }
    });
}

template <class T>
Var<T> neg(const Var<T>& x) {
    return unary_op(x, [](T v) { return -v; }, [](T, T) { return T(-1); });
}

template <class T>
Var<T> add_scalar(const Var<T>& x, T c) {
    return unary_op(x, [c](T v) { return v + c; }, [](T, T) { return T(1); });
}

template <class T>
Var<T> mul_scalar(const Var<T>& x, T c) {
    return unary_op(x, [c](T v) { return v * c; }, [c](T, T) { return c; });
}

template <class T>
Var<T> abs(const Var<T>& x) {
    return unary_op(x, [](T v) { return std::abs(v); },
                    [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <class T>
Var<T> square(const Var<T>& x) {
    return unary_op(x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <class T>
Var<T> sqrt(const Var<T>& x) {
    return unary_op(x, [](T v) { return std::sqrt(v); },
                    [](T, T y) { return T(0.5) / y; });
}

template <class T>
Var<T> exp(const Var<T>& x) {
    return unary_op(x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <class T>
Var<T> log(const Var<T>& x) {
    return unary_op(x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <class T>
Var<T> tanh(const Var<T>& x) {
    return unary_op(x, [](T v) { return std::tanh(v); },
                    [](T, T y) { return T(1) - y * y; });
}

template <class T>
Var<T> sigmoid(const Var<T>& x) {
    return unary_op(x, [](T v) { return T(1) / (T(1) + std::exp(-v)); },
                    [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Var<T> relu(const Var<T>& x) {
    return unary_op(x, [](T v) { return v > T(0) ? v : T(0); },
                    [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <class T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
    return unary_op(x, [slope](T v) { return v > T(0) ? v : slope * v; },
                    [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

template <class T>
Var<T> clamp_min(const Var<T>& x, T lo) {
    return unary_op(x, [lo](T v) { return v < lo ? lo : v; },
                    [lo](T v, T) { return v >= lo ? T(1) : T(0); });
}

template <class T>
Var<T> recip(const Var<T>& x) {
    return unary_op(x, [](T v) { return T(1) / v; }, [](T, T y) { return -y * y; });
}

template <class T>
Var<T> reshape(const Var<T>& x, Shape shape) {
    Tensor<T> out = x.value().reshaped(shape);
    return make_op<T>(std::move(out), {x}, [](Node<T>& n) {
        Node<T>& p = *n.parents[0];
        if (!p.requires_grad) return;
        Tensor<T>& g = detail::grad_of(p);
        for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
    });
}

template <class T>
Var<T> sum(const Var<T>& x) {
    Tensor<T> out(Shape{1});
    T s = 0;
    for (std::int64_t i = 0; i < x.numel(); ++i) s += x.value()[i];
    out[0] = s;
    return make_op<T>(std::move(out), {x}, [](Node<T>& n) {
        Node<T>& p = *n.parents[0];
        if (!p.requires_grad) return;
        Tensor<T>& g = detail::grad_of(p);
        const T gy = n.grad[0];
        for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += gy;
    });
}

template <class T>
Var<T> mean(const Var<T>& x) {
    return mul_scalar(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
    const Tensor<T>& av = a.value();
    const Tensor<T>& bv = b.value();
    if (av.ndim() != 2 || bv.ndim() != 2 || av.dim(1) != bv.dim(0))
        throw ShapeError(cat("matmul: incompatible shapes ", shape_str(av.shape()), " x ",
                             shape_str(bv.shape())));
    const std::int64_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    Tensor<T> out = Tensor<T>::uninit(Shape{m, n});
    gemm(false, false, m, n, k, T(1), av.data(), k, bv.data(), n, T(0), out.data(), n);
    return make_op<T>(std::move(out), {a, b}, [m, n, k](Node<T>& nd) {
        Node<T>& pa = *nd.parents[0];
        Node<T>& pb = *nd.parents[1];
        if (pa.requires_grad) {
            Tensor<T>& g = detail::grad_of(pa);
            // dA += dC * B^T
            gemm(false, true, m, k, n, T(1), nd.grad.data(), n, pb.value.data(), n, T(1),
                 g.data(), k);
        }
        if (pb.requires_grad) {
            Tensor<T>& g = detail::grad_of(pb);
            // dB += A^T * dC
            gemm(true, false, k, n, m, T(1), pa.value.data(), k, nd.grad.data(), n, T(1),
                 g.data(), n);
        }
    });
}

template <class T>
Var<T> transpose(const Var<T>& x) {
    const Tensor<T>& xv = x.value();
    if (xv.ndim() != 2) throw ShapeError("transpose: expects a 2-D tensor");
    const std::int64_t r = xv.dim(0), c = xv.dim(1);
    Tensor<T> out = Tensor<T>::uninit(Shape{c, r});
    for (std::int64_t i = 0; i < r; ++i)
        for (std::int64_t j = 0; j < c; ++j) out.at(j, i) = xv.at(i, j);
    return make_op<T>(std::move(out), {x}, [r, c](Node<T>& n) {
        Node<T>& p = *n.parents[0];
        if (!p.requires_grad) return;
        Tensor<T>& g = detail::grad_of(p);
        for (std::int64_t i = 0; i < r; ++i)
            for (std::int64_t j = 0; j < c; ++j) g.at(i, j) += n.grad.at(j, i);
    });
}

namespace detail {
template <class T>
void require_2d_rowvec(const Var<T>& a, const Var<T>& v, const char* op) {
    if (a.value().ndim() != 2 || v.value().ndim() != 1 || v.value().dim(0) != a.value().dim(0))
        throw ShapeError(cat(op, ": expects [R,C] and [R], got ", shape_str(a.shape()), " and ",
                             shape_str(v.shape())));
}
template <class T>
void require_2d_colvec(const Var<T>& a, const Var<T>& v, const char* op) {
    if (a.value().ndim() != 2 || v.value().ndim() != 1 || v.value().dim(0) != a.value().dim(1))
        throw ShapeError(cat(op, ": expects [R,C] and [C], got ", shape_str(a.shape()), " and ",
                             shape_str(v.shape())));
}
}  // namespace detail

template <class T>
Var<T> row_sum(const Var<T>& x) {
    const Tensor<T>& xv = x.value();
    if (xv.ndim() != 2) throw ShapeError("row_sum: expects a 2-D tensor");
    const std::int64_t r = xv.dim(0), c = xv.dim(1);
    Tensor<T> out = Tensor<T>::uninit(Shape{r});
    for (std::int64_t i = 0; i < r; ++i) {
        T s = 0;
        for (std::int64_t j = 0; j < c; ++j) s += xv.at(i, j);
        out[i] = s;
    }
    return make_op<T>(std::move(out), {x}, [r, c](Node<T>& n) {
        Node<T>& p = *n.parents[0];
        if (!p.requires_grad) return;
        Tensor<T>& g = detail::grad_of(p);
        for (std::int64_t i = 0; i < r; ++i)
            for (std::int64_t j = 0; j < c; ++j) g.at(i, j) += n.grad[i];
    });
}

template <class T>
Var<T> row_mean(const Var<T>& x) {
    return mul_scalar(row_sum(x), T(1) / static_cast<T>(x.value().dim(1)));
}

template <class T>
Var<T> sub_rowvec(const Var<T>& a, const Var<T>& v) {
    detail::require_2d_rowvec(a, v, "sub_rowvec");
    const std::int64_t r = a.value().dim(0), c = a.value().dim(1);
    Tensor<T> out = Tensor<T>::uninit(Shape{r, c});
    for (std::int64_t i = 0; i < r; ++i)
        for (std::int64_t j = 0; j < c; ++j) out.at(i, j) = a.value().at(i, j) - v.value()[i];
    return make_op<T>(std::move(out), {a, v}, [r, c](Node<T>& n) {
        if (n.parents[0]->requires_grad) {
            Tensor<T>& g = detail::grad_of(*n.parents[0]);
            for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
        }
        if (n.parents[1]->requires_grad) {
            Tensor<T>& g = detail::grad_of(*n.parents[1]);
            for (std::int64_t i = 0; i < r; ++i)
                for (std::int64_t j = 0; j < c; ++j) g[i] -= n.grad.at(i, j);
        }
    });
}

template <class T>
Var<T> mul_rowvec(const Var<T>& a, const Var<T>& v) {
    detail::require_2d_rowvec(a, v, "mul_rowvec");
    const std::int64_t r = a.value().dim(0), c = a.value().dim(1);
    Tensor<T> out = Tensor<T>::uninit(Shape{r, c});
    for (std::int64_t i = 0; i < r; ++i)
        for (std::int64_t j = 0; j < c; ++j) out.at(i, j) = a.value().at(i, j) * v.value()[i];
    return make_op<T>(std::move(out), {a, v}, [r, c](Node<T>& n) {
        Node<T>& pa = *n.parents[0];
        Node<T>& pv = *n.parents[1];
        if (pa.requires_grad) {
            Tensor<T>& g = detail::grad_of(pa);
            for (std::int64_t i = 0; i < r; ++i)
                for (std::int64_t j = 0; j < c; ++j) g.at(i, j) += n.grad.at(i, j) * pv.value[i];
        }
        if (pv.requires_grad) {
            Tensor<T>& g = detail::grad_of(pv);
            for (std::int64_t i = 0; i < r; ++i)
                for (std::int64_t j = 0; j < c; ++j) g[i] += n.grad.at(i, j) * pa.value.at(i, j);
        }
    });
}

template <class T>
Var<T> add_colvec(const Var<T>& a, const Var<T>& v) {
    detail::require_2d_colvec(a, v, "add_colvec");
    const std::int64_t r = a.value().dim(0), c = a.value().dim(1);
    Tensor<T> out = Tensor<T>::uninit(Shape{r, c});
    for (std::int64_t i = 0; i < r; ++i)
        for (std::int64_t j = 0; j < c; ++j) out.at(i, j) = a.value().at(i, j) + v.value()[j];
    return make_op<T>(std::move(out), {a, v}, [r, c](Node<T>& n) {
        if (n.parents[0]->requires_grad) {
            Tensor<T>& g = detail::grad_of(*n.parents[0]);
            for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
        }
        if (n.parents[1]->requires_grad) {
            Tensor<T>& g = detail::grad_of(*n.parents[1]);
            for (std::int64_t i = 0; i < r; ++i)
                for (std::int64_t j = 0; j < c; ++j) g[j] += n.grad.at(i, j);
        }
    });
}

template <class T>
Var<T> mul_colvec(const Var<T>& a, const Var<T>& v) {
    detail::require_2d_colvec(a, v, "mul_colvec");
    const std::int64_t r = a.value().dim(0), c = a.value().dim(1);
    Tensor<T> out = Tensor<T>::uninit(Shape{r, c});
    for (std::int64_t i = 0; i < r; ++i)
        for (std::int64_t j = 0; j < c; ++j) out.at(i, j) = a.value().at(i, j) * v.value()[j];
    return make_op<T>(std::move(out), {a, v}, [r, c](Node<T>& n) {
        Node<T>& pa = *n.parents[0];
        Node<T>& pv = *n.parents[1];
        if (pa.requires_grad) {
            Tensor<T>& g = detail::grad_of(pa);
            for (std::int64_t i = 0; i < r; ++i)
                for (std::int64_t j = 0; j < c; ++j) g.at(i, j) += n.grad.at(i, j) * pv.value[j];
        }
        if (pv.requires_grad) {
            Tensor<T>& g = detail::grad_of(pv);
            for (std::int64_t i = 0; i < r; ++i)
                for (std::int64_t j = 0; j < c; ++j) g[j] += n.grad.at(i, j) * pa.value.at(i, j);
        }
    });
}

template <class T>
Var<T> repeat_interleave(const Var<T>& v, std::int64_t k) {
    if (v.value().ndim() != 1) throw ShapeError("repeat_interleave: expects a 1-D tensor");
    const std::int64_t n = v.value().dim(0);
    Tensor<T> out = Tensor<T>::uninit(Shape{n * k});
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < k; ++j) out[i * k + j] = v.value()[i];
    return make_op<T>(std::move(out), {v}, [n, k](Node<T>& nd) {
        Node<T>& p = *nd.parents[0];
        if (!p.requires_grad) return;
        Tensor<T>& g = detail::grad_of(p);
        for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t j = 0; j < k; ++j) g[i] += nd.grad[i * k + j];
    });
}

template <class T>
Var<T> logsumexp_rows(const Var<T>& x) {
    const Tensor<T>& xv = x.value();
    if (xv.ndim() != 2) throw ShapeError("logsumexp_rows: expects a 2-D tensor");
    const std::int64_t r = xv.dim(0), c = xv.dim(1);
    Tensor<T> out = Tensor<T>::uninit(Shape{r});
    for (std::int64_t i = 0; i < r; ++i) {
        T m = xv.at(i, 0);
        for (std::int64_t j = 1; j < c; ++j) m = std::max(m, xv.at(i, j));
        T s = 0;
        for (std::int64_t j = 0; j < c; ++j) s += std::exp(xv.at(i, j) - m);
        out[i] = m + std::log(s);
    }
    return make_op<T>(std::move(out), {x}, [r, c](Node<T>& n) {
        Node<T>& p = *n.parents[0];
        if (!p.requires_grad) return;
        Tensor<T>& g = detail::grad_of(p);
        for (std::int64_t i = 0; i < r; ++i)
            for (std::int64_t j = 0; j < c; ++j)
                g.at(i, j) += std::exp(p.value.at(i, j) - n.value[i]) * n.grad[i];
    });
}

template <class T>
Var<T> take_diag(const Var<T>& x) {
    const Tensor<T>& xv = x.value();
    if (xv.ndim() != 2 || xv.dim(0) != xv.dim(1))
        throw ShapeError(cat("take_diag: expects a square matrix, got ", shape_str(xv.shape())));
    const std::int64_t n = xv.dim(0);
    Tensor<T> out = Tensor<T>::uninit(Shape{n});
    for (std::int64_t i = 0; i < n; ++i) out[i] = xv.at(i, i);
    return make_op<T>(std::move(out), {x}, [n](Node<T>& nd) {
        Node<T>& p = *nd.parents[0];
        if (!p.requires_grad) return;
        Tensor<T>& g = detail::grad_of(p);
        for (std::int64_t i = 0; i < n; ++i) g.at(i, i) += nd.grad[i];
    });
}

}  // namespace aptx
