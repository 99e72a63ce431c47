// Adam optimizer and exponential-moving-average parameter tracking.
#pragma once

#include "aptx/modules.hpp"

namespace aptx {

template <class T>
struct Adam {
    double beta1 = 0.5, beta2 = 0.99, eps = 1e-8;
    std::int64_t t = 0;
    std::vector<Tensor<T>> m, v;

    void init(const ParamSet<T>& params) {
        m.clear();
        v.clear();
        for (const auto& [name, var] : params.items) {
            m.emplace_back(var.value().shape());
            v.emplace_back(var.value().shape());
        }
    }

    void step(ParamSet<T>& params, double lr) {
        if (m.size() != params.items.size())
            throw ConfigError("Adam state does not match the parameter set");
        ++t;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (std::size_t pi = 0; pi < params.items.size(); ++pi) {
            Var<T>& p = params.items[pi].second;
            const Tensor<T>& g = p.grad();
            if (g.empty()) continue;
            Tensor<T>& mi = m[pi];
            Tensor<T>& vi = v[pi];
            T* pd = p.value().data();
            for (std::int64_t i = 0; i < p.numel(); ++i) {
                const double gi = static_cast<double>(g[i]);
                const double mn = beta1 * static_cast<double>(mi[i]) + (1.0 - beta1) * gi;
                const double vn = beta2 * static_cast<double>(vi[i]) + (1.0 - beta2) * gi * gi;
                mi[i] = static_cast<T>(mn);
                vi[i] = static_cast<T>(vn);
                pd[i] -= static_cast<T>(lr * (mn / bc1) / (std::sqrt(vn / bc2) + eps));
            }
        }
    }
};

// shadow <- decay*shadow + (1-decay)*params
template <class T>
void ema_update(Tensor<T>& shadow, const Tensor<T>& params, double decay) {
    if (!shadow.same_shape(params))
        throw ShapeError(cat("ema_update: shadow shape ", shape_str(shadow.shape()),
                             " does not match params ", shape_str(params.shape())));
    if (decay < 0.0 || decay >= 1.0)
        throw ConfigError(cat("ema_update: decay must be in [0,1), got ", decay));
    const T d = static_cast<T>(decay);
    const T od = static_cast<T>(1.0 - decay);
    T* s = shadow.data();
    const T* p = params.data();
    for (std::int64_t i = 0; i < shadow.numel(); ++i) s[i] = d * s[i] + od * p[i];
}

template <class T>
struct EmaState {
    bool initialized = false;
    std::vector<Tensor<T>> shadow;

    void reset_to(const ParamSet<T>& params) {
        shadow.clear();
        for (const auto& [name, var] : params.items) shadow.push_back(var.value());
        initialized = true;
    }

    void update(const ParamSet<T>& params, double decay) {
        if (!initialized) throw ConfigError("EMA state not initialized");
        for (std::size_t i = 0; i < shadow.size(); ++i)
            ema_update(shadow[i], params.items[i].second.value(), decay);
    }

    // Load shadows into a parameter set (evaluation-time weights).
    void apply_to(ParamSet<T>& params) const {
        for (std::size_t i = 0; i < shadow.size(); ++i)
            params.items[i].second.value() = shadow[i];
    }
};

}  // namespace aptx
