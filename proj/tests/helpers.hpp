// Shared test utilities: finite-difference gradient checking, scratch
// directories, and small tensor builders.
#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "aptx/autodiff.hpp"
#include "aptx/rng.hpp"
#include "aptx/tensor.hpp"

namespace testutil {

inline aptx::Tensor<double> random_tensor(aptx::Shape shape, aptx::Rng& rng, double lo = -1.0,
                                          double hi = 1.0) {
    aptx::Tensor<double> t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

template <class T>
aptx::Tensor<T> random_tensor_t(aptx::Shape shape, aptx::Rng& rng, double lo = -1.0,
                                double hi = 1.0) {
    aptx::Tensor<T> t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

struct GradCheckResult {
    bool ok = true;
    double worst = 0.0;
    std::string detail;
};

// Central finite differences against the analytic gradient of a scalar loss.
// `build` must reconstruct the loss graph from the leaves' current values.
inline GradCheckResult check_gradients(std::vector<aptx::Var<double>*> leaves,
                                       const std::function<aptx::Var<double>()>& build,
                                       double step = 1e-4, double tol = 1e-4) {
    GradCheckResult res;
    for (auto* leaf : leaves) leaf->zero_grad();
    aptx::Var<double> loss = build();
    loss.backward();
    std::vector<aptx::Tensor<double>> analytic;
    analytic.reserve(leaves.size());
    for (auto* leaf : leaves)
        analytic.push_back(leaf->grad().empty() ? aptx::Tensor<double>(leaf->value().shape())
                                                : leaf->grad());

    for (std::size_t li = 0; li < leaves.size(); ++li) {
        aptx::Var<double>& leaf = *leaves[li];
        for (std::int64_t i = 0; i < leaf.numel(); ++i) {
            const double orig = leaf.value()[i];
            leaf.value()[i] = orig + step;
            const double fp = build().value().scalar();
            leaf.value()[i] = orig - step;
            const double fm = build().value().scalar();
            leaf.value()[i] = orig;
            const double fd = (fp - fm) / (2.0 * step);
            const double an = analytic[li][i];
            const double err = std::abs(fd - an);
            const double scale = std::max({1.0, std::abs(fd), std::abs(an)});
            const double rel = err / scale;
            res.worst = std::max(res.worst, rel);
            if (rel > tol) {
                res.ok = false;
                res.detail = aptx::cat("leaf ", li, " elem ", i, ": analytic=", an,
                                       " fd=", fd, " rel=", rel);
                return res;
            }
        }
    }
    return res;
}

class TempDir {
public:
    explicit TempDir(const std::string& name) {
        path_ = std::filesystem::temp_directory_path() /
                ("aptx_test_" + name + "_" + std::to_string(::getpid()));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace testutil
