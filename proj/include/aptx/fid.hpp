// Frechet-distance evaluation over a pluggable frozen feature extractor.
#pragma once

#include <lapacke.h>

#include "aptx/image.hpp"
#include "aptx/modules.hpp"

namespace aptx {

struct FeatureStats {
    Tensor<double> mean;        // [m]
    Tensor<double> covariance;  // [m,m]
    std::int64_t count = 0;
};

// Two-pass mean/covariance; order-invariant at the statistics level.
inline FeatureStats compute_feature_stats(const Tensor<double>& features) {
    if (features.ndim() != 2)
        throw ShapeError(cat("compute_feature_stats: expects [n,m], got ",
                             shape_str(features.shape())));
    const std::int64_t n = features.dim(0), m = features.dim(1);
    if (n < 2) throw SamplingError(cat("feature statistics need >= 2 samples, got ", n));
    FeatureStats stats;
    stats.count = n;
    stats.mean = Tensor<double>(Shape{m});
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < m; ++j) stats.mean[j] += features.at(i, j);
    for (std::int64_t j = 0; j < m; ++j) stats.mean[j] /= static_cast<double>(n);
    stats.covariance = Tensor<double>(Shape{m, m});
    std::vector<double> centered(static_cast<std::size_t>(n * m));
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < m; ++j)
            centered[static_cast<std::size_t>(i * m + j)] = features.at(i, j) - stats.mean[j];
    // cov = centered^T * centered / (n - 1)
    gemm(true, false, m, m, n, 1.0 / static_cast<double>(n - 1), centered.data(), m,
         centered.data(), m, 0.0, stats.covariance.data(), m);
    // Force exact symmetry against accumulation-order noise.
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = i + 1; j < m; ++j) {
            const double v = 0.5 * (stats.covariance.at(i, j) + stats.covariance.at(j, i));
            stats.covariance.at(i, j) = v;
            stats.covariance.at(j, i) = v;
        }
    return stats;
}

namespace detail {

// Symmetric eigendecomposition; returns eigenvalues ascending, eigenvectors
// in the columns of `vectors`.
inline void symmetric_eig(const Tensor<double>& a, Tensor<double>& eigvals,
                          Tensor<double>& vectors) {
    const std::int64_t m = a.dim(0);
    vectors = a;
    eigvals = Tensor<double>(Shape{m});
    const int info = LAPACKE_dsyev(LAPACK_ROW_MAJOR, 'V', 'U', static_cast<int>(m),
                                   vectors.data(), static_cast<int>(m), eigvals.data());
    if (info != 0) throw NumericError(cat("dsyev failed with info=", info));
}

// PSD square root via eigendecomposition with negative eigenvalues clipped.
inline Tensor<double> psd_sqrt(const Tensor<double>& a) {
    const std::int64_t m = a.dim(0);
    Tensor<double> eigvals, q;
    symmetric_eig(a, eigvals, q);
    // tmp = Q * diag(sqrt(max(lambda,0)))
    Tensor<double> tmp(Shape{m, m});
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t k = 0; k < m; ++k)
            tmp.at(i, k) = q.at(i, k) * std::sqrt(std::max(eigvals[k], 0.0));
    Tensor<double> out(Shape{m, m});
    gemm(false, true, m, m, m, 1.0, tmp.data(), m, q.data(), m, 0.0, out.data(), m);
    return out;
}

}  // namespace detail

// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}), with the matrix
// square root taken through the symmetrized product sqrt(S_a) S_b sqrt(S_a)
// and eigenvalue clipping.
inline double frechet_distance(const FeatureStats& a, const FeatureStats& b) {
    if (!a.mean.same_shape(b.mean) || !a.covariance.same_shape(b.covariance))
        throw ShapeError(cat("frechet_distance: dimension mismatch ", shape_str(a.mean.shape()),
                             " vs ", shape_str(b.mean.shape())));
    const std::int64_t m = a.mean.dim(0);
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = i + 1; j < m; ++j) {
            if (std::abs(a.covariance.at(i, j) - a.covariance.at(j, i)) > 1e-8 ||
                std::abs(b.covariance.at(i, j) - b.covariance.at(j, i)) > 1e-8)
                throw NumericError("frechet_distance: covariance is not symmetric");
        }
    double mean_term = 0;
    for (std::int64_t i = 0; i < m; ++i) {
        const double d = a.mean[i] - b.mean[i];
        mean_term += d * d;
    }
    const Tensor<double> sqrt_a = detail::psd_sqrt(a.covariance);
    // M = sqrt(Sa) * Sb * sqrt(Sa)
    Tensor<double> tmp(Shape{m, m});
    gemm(false, false, m, m, m, 1.0, sqrt_a.data(), m, b.covariance.data(), m, 0.0, tmp.data(),
         m);
    Tensor<double> prod(Shape{m, m});
    gemm(false, false, m, m, m, 1.0, tmp.data(), m, sqrt_a.data(), m, 0.0, prod.data(), m);
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = i + 1; j < m; ++j) {
            const double v = 0.5 * (prod.at(i, j) + prod.at(j, i));
            prod.at(i, j) = v;
            prod.at(j, i) = v;
        }
    Tensor<double> eigvals, q;
    detail::symmetric_eig(prod, eigvals, q);
    double trace_sqrt = 0;
    for (std::int64_t i = 0; i < m; ++i) trace_sqrt += std::sqrt(std::max(eigvals[i], 0.0));
    double trace_a = 0, trace_b = 0;
    for (std::int64_t i = 0; i < m; ++i) {
        trace_a += a.covariance.at(i, i);
        trace_b += b.covariance.at(i, i);
    }
    return mean_term + trace_a + trace_b - 2.0 * trace_sqrt;
}

// Images -> [n,m] feature matrix through a frozen pooled extractor. All
// images in one call must share a size. Images are processed one at a time:
// a row then depends only on its own image, so permuting the input order
// permutes rows bit-exactly.
template <class T>
Tensor<double> extract_features(const std::vector<Image>& images,
                                const FrozenConvStack<T>& extractor,
                                std::int64_t batch_size = 1) {
    if (images.size() < 2)
        throw SamplingError(cat("extract_features: need >= 2 images, got ", images.size()));
    if (!extractor.pooled)
        throw ConfigError("extract_features: extractor must end in a global pool");
    const std::int64_t n = static_cast<std::int64_t>(images.size());
    const std::int64_t h = images[0].dim(0), w = images[0].dim(1);
    const std::int64_t m = extractor.out_channels();
    Tensor<double> out(Shape{n, m});
    NoGradGuard ng;
    for (std::int64_t lo = 0; lo < n; lo += batch_size) {
        const std::int64_t hi = std::min(n, lo + batch_size);
        Tensor<T> batch(Shape{hi - lo, 3, h, w});
        for (std::int64_t i = lo; i < hi; ++i) {
            const Image& img = images[static_cast<std::size_t>(i)];
            if (img.dim(0) != h || img.dim(1) != w)
                throw ShapeError("extract_features: images must share a size");
            for (std::int64_t y = 0; y < h; ++y)
                for (std::int64_t x = 0; x < w; ++x)
                    for (std::int64_t c = 0; c < 3; ++c)
                        batch.at(i - lo, c, y, x) = static_cast<T>(img.at(y, x, c));
        }
        const auto feats = extractor(Var<T>(std::move(batch)));
        for (std::int64_t i = lo; i < hi; ++i)
            for (std::int64_t j = 0; j < m; ++j)
                out.at(i, j) = static_cast<double>(feats.value().at(i - lo, j));
    }
    return out;
}

}  // namespace aptx
