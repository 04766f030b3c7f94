#pragma once

#include <map>
#include <string>
#include <vector>

#include "hdn/core/rng.hpp"
#include "hdn/model/config.hpp"
#include "hdn/nn/graph.hpp"

namespace hdn {

// Named parameter registry for one model instance. Creation order is fixed by
// the architecture walk below, so checkpoints and optimizer state align by
// name and by index. `phi` lives under "bu.*", `theta` under "td.*"/"out.*".
template <typename T>
struct ModelParameters {
    HdnConfig config;
    std::vector<std::pair<std::string, nn::Var<T>>> params;
    std::vector<std::pair<std::string, Tensor<T>>> buffers; // batch-norm running stats
    // Input standardization learned from the training set; identity until set.
    double data_mean = 0.0;
    double data_std = 1.0;

    nn::Var<T>& at(const std::string& name) {
        for (auto& [k, v] : params)
            if (k == name) return v;
        throw ConfigError("no such parameter: " + name);
    }
    const nn::Var<T>& at(const std::string& name) const {
        for (auto& [k, v] : params)
            if (k == name) return const_cast<nn::Var<T>&>(v);
        throw ConfigError("no such parameter: " + name);
    }
    Tensor<T>& buffer(const std::string& name) {
        for (auto& [k, v] : buffers)
            if (k == name) return v;
        throw ConfigError("no such buffer: " + name);
    }

    std::vector<nn::Var<T>> trainable() const {
        std::vector<nn::Var<T>> out;
        out.reserve(params.size());
        for (auto& [k, v] : params) out.push_back(v);
        return out;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (auto& [k, v] : params) n += v.value().numel();
        return n;
    }
};

namespace detail {

template <typename T>
void add_conv(ModelParameters<T>& m, Rng& rng, const std::string& name, int cin, int cout, int k,
              double init_scale = 1.0) {
    Tensor<T> w({cout, cin, k, k});
    const double std = init_scale * std::sqrt(2.0 / (static_cast<double>(cin) * k * k));
    for (auto& x : w.v) x = static_cast<T>(rng.normal(0.0, std));
    m.params.emplace_back(name + ".w", nn::Var<T>::param(std::move(w)));
    m.params.emplace_back(name + ".b", nn::Var<T>::param(Tensor<T>({cout})));
}

template <typename T>
void add_bn(ModelParameters<T>& m, const std::string& name, int c) {
    m.params.emplace_back(name + ".g", nn::Var<T>::param(Tensor<T>({c}, T(1))));
    m.params.emplace_back(name + ".b", nn::Var<T>::param(Tensor<T>({c})));
    m.buffers.emplace_back(name + ".rm", Tensor<T>({c}));
    m.buffers.emplace_back(name + ".rv", Tensor<T>({c}, T(1)));
}

template <typename T>
void add_gated_block(ModelParameters<T>& m, Rng& rng, const std::string& prefix, int f,
                     bool batch_norm) {
    if (batch_norm) add_bn(m, prefix + ".bn1", f);
    add_conv(m, rng, prefix + ".conv1", f, f, 3);
    if (batch_norm) add_bn(m, prefix + ".bn2", f);
    add_conv(m, rng, prefix + ".conv2", f, 2 * f, 3);
}

} // namespace detail

// Deterministic given (config, seed): the architecture walk and the RNG draw
// order are both fixed.
template <typename T>
ModelParameters<T> build_model(const HdnConfig& config, std::uint64_t seed) {
    config.validate();
    ModelParameters<T> m;
    m.config = config;
    Rng rng(hash_str(seed, "model-init"));
    const int F = config.initial_filters;
    const int L = config.latent_channels;
    const int n = config.n_layers;

    // bottom-up path
    detail::add_conv(m, rng, "bu.stem", 1, F, 3);
    for (int i = 1; i <= n; ++i) {
        for (int j = 1; j <= config.blocks_per_layer; ++j)
            detail::add_gated_block(m, rng, "bu.L" + std::to_string(i) + ".block" + std::to_string(j),
                                    F, config.use_batch_norm);
        if (i < n) detail::add_conv(m, rng, "bu.L" + std::to_string(i) + ".down", F, F, 3);
    }

    // top-down path: learned constants at the top, then per-layer heads
    m.params.emplace_back("td.h_top", nn::Var<T>::param(Tensor<T>({F})));
    m.params.emplace_back("td.prior_top", nn::Var<T>::param(Tensor<T>({2 * L})));
    for (int i = n; i >= 1; --i) {
        const std::string lp = "td.L" + std::to_string(i);
        // Distribution heads start near (mu 0, log-sigma 0) so the first
        // steps see unit Gaussians instead of clamped extremes.
        if (i < n) detail::add_conv(m, rng, lp + ".prior", F, 2 * L, 3, 0.05);
        detail::add_conv(m, rng, lp + ".merge", 2 * F, 2 * L, 3, 0.05);
        detail::add_conv(m, rng, lp + ".fuse", config.use_topdown_skips ? F + L : L, F, 3);
        for (int j = 1; j <= config.blocks_per_layer; ++j)
            detail::add_gated_block(m, rng, lp + ".block" + std::to_string(j), F,
                                    config.use_batch_norm);
        if (i > 1) detail::add_conv(m, rng, lp + ".up", F, F, 3);
    }
    detail::add_conv(m, rng, "out", F, 1, 3);
    return m;
}

} // namespace hdn
