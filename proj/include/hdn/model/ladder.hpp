#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "hdn/model/parameters.hpp"
#include "hdn/nn/ops.hpp"

namespace hdn {

enum class LayerMode { Posterior, PriorSample, PriorMean };

// Per-layer behaviour of the generative pass. `salt` feeds the latent-noise
// stream so callers can share or refresh draws per layer independently of the
// base seed (layer-inspection needs one shared draw above the probed layer).
struct LayerPlanEntry {
    LayerMode mode = LayerMode::Posterior;
    std::uint64_t salt = 0;
};

inline std::vector<LayerPlanEntry> all_posterior(int n_layers) {
    return std::vector<LayerPlanEntry>(static_cast<std::size_t>(n_layers), LayerPlanEntry{});
}

inline std::vector<LayerPlanEntry> all_prior(int n_layers) {
    return std::vector<LayerPlanEntry>(static_cast<std::size_t>(n_layers),
                                       LayerPlanEntry{LayerMode::PriorSample, 0});
}

template <typename T>
struct LayerState {
    LayerMode mode = LayerMode::Posterior;
    nn::Var<T> prior_mu, prior_log_sigma;
    nn::Var<T> post_mu, post_log_sigma; // defined only in posterior mode
    nn::Var<T> sample;
    double kl_nats = 0.0; // summed over latent elements, 0 by convention off-posterior
};

template <typename T>
struct LatentStack {
    std::vector<LayerState<T>> layers; // index 0 = layer 1 (full resolution)
};

template <typename T>
struct DecoderOutput {
    nn::Var<T> signal; // standardized units, (N,1,H,W)
    LatentStack<T> latents;
};

namespace detail {

inline constexpr double kLogSigmaClamp = 7.0;

struct DropoutCtx {
    bool active = false;
    double p = 0.0;
    std::uint64_t seed = 0;
    std::uint64_t counter = 0;
};

template <typename T>
nn::Var<T> apply_dropout(const nn::Var<T>& x, DropoutCtx& ctx) {
    if (!ctx.active || ctx.p <= 0.0) return x;
    Tensor<T> mask = Tensor<T>::uninit(x.value().shape);
    Rng rng(hash_combine(ctx.seed, 0xD80Full, ctx.counter++));
    const T keep_scale = static_cast<T>(1.0 / (1.0 - ctx.p));
    for (auto& v : mask.v) v = rng.uniform01() > ctx.p ? keep_scale : T(0);
    return nn::mul(x, nn::Var<T>::constant(std::move(mask)));
}

template <typename T>
nn::Var<T> conv(ModelParameters<T>& m, const std::string& name, const nn::Var<T>& x, int stride = 1) {
    return nn::conv2d(x, m.at(name + ".w"), m.at(name + ".b"), stride, /*pad=*/1);
}

template <typename T>
nn::Var<T> maybe_bn(ModelParameters<T>& m, const std::string& name, const nn::Var<T>& x, bool train) {
    if (!m.config.use_batch_norm) return x;
    return nn::batchnorm2d(x, m.at(name + ".g"), m.at(name + ".b"), &m.buffer(name + ".rm"),
                           &m.buffer(name + ".rv"), train);
}

// Pre-activation gated residual block: norm-act-conv, norm-act-conv to 2F,
// multiplicative sigmoid gate on the second half, dropout, additive skip.
template <typename T>
nn::Var<T> gated_block(ModelParameters<T>& m, const std::string& prefix, const nn::Var<T>& x,
                       bool train, DropoutCtx& dropout) {
    const int f = m.config.initial_filters;
    auto a = maybe_bn(m, prefix + ".bn1", x, train);
    a = nn::elu(a);
    a = conv(m, prefix + ".conv1", a);
    a = maybe_bn(m, prefix + ".bn2", a, train);
    a = nn::elu(a);
    a = conv(m, prefix + ".conv2", a);
    auto body = nn::slice_channels(a, 0, f);
    auto gate = nn::slice_channels(a, f, 2 * f);
    auto h = nn::mul(body, nn::sigmoid(gate));
    h = apply_dropout(h, dropout);
    return nn::add(x, h);
}

// Latent noise anchored to absolute coordinates: the draw at a grid site
// depends only on (item seed, layer, salt, channel, absolute position).
template <typename T>
Tensor<T> latent_noise(const std::vector<std::uint64_t>& item_seeds, int layer, std::uint64_t salt,
                       int channels, int h, int w, int origin_y, int origin_x) {
    const int n = static_cast<int>(item_seeds.size());
    Tensor<T> eps = Tensor<T>::uninit({n, channels, h, w});
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    // Hash pass first, then one vectorized Box-Muller sweep per plane.
    Vec<T> u1(plane), u2(plane);
    for (int item = 0; item < n; ++item)
        for (int c = 0; c < channels; ++c) {
            const std::uint64_t stream =
                hash_combine(hash_str(item_seeds[static_cast<std::size_t>(item)], "latent-eps"),
                             static_cast<std::uint64_t>(layer), salt,
                             static_cast<std::uint64_t>(c));
            std::size_t i = 0;
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x, ++i) {
                    const std::uint64_t counter =
                        (static_cast<std::uint64_t>(static_cast<std::uint32_t>(origin_y + y)) << 32) |
                        static_cast<std::uint64_t>(static_cast<std::uint32_t>(origin_x + x));
                    const std::uint64_t h1 = splitmix64(stream ^ splitmix64(counter));
                    const std::uint64_t h2 = splitmix64(h1 ^ 0xD1B54A32D192ED03ULL);
                    u1[i] = static_cast<T>((static_cast<double>(h1 >> 11) + 1.0) * 0x1.0p-53);
                    u2[i] = static_cast<T>((static_cast<double>(h2 >> 11) + 1.0) * 0x1.0p-53);
                }
            using Arr = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>;
            using CArr = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>;
            Arr(eps.data() + (static_cast<std::size_t>(item) * channels + c) * plane,
                static_cast<Eigen::Index>(plane)) =
                (T(-2) * CArr(u1.data(), static_cast<Eigen::Index>(plane)).log()).sqrt() *
                (T(6.283185307179586) * CArr(u2.data(), static_cast<Eigen::Index>(plane))).cos();
        }
    return eps;
}

template <typename T>
double kl_value_sum(const Tensor<T>& mu_q, const Tensor<T>& ls_q, const Tensor<T>& mu_p,
                    const Tensor<T>& ls_p) {
    double s = 0;
    for (std::size_t i = 0; i < mu_q.v.size(); ++i) {
        const double d = static_cast<double>(mu_q.v[i]) - mu_p.v[i];
        const double vq = std::exp(2.0 * ls_q.v[i]);
        const double ivp = std::exp(-2.0 * ls_p.v[i]);
        s += ls_p.v[i] - ls_q.v[i] + 0.5 * (vq + d * d) * ivp - 0.5;
    }
    return s;
}

} // namespace detail

// Deterministic feature extraction at every scale; feature i (1-based) has the
// spatial dims of latent layer i.
template <typename T>
std::vector<nn::Var<T>> bottom_up(ModelParameters<T>& m, const nn::Var<T>& x, bool train = false,
                                  std::uint64_t dropout_seed = 0) {
    const auto& s = x.value().shape;
    if (s.size() != 4 || s[1] != 1) throw ShapeError("bottom_up: expected (N,1,H,W) input");
    m.config.validate_input_dims(s[2], s[3]);
    detail::DropoutCtx dropout{train && m.config.dropout_p > 0.0, m.config.dropout_p,
                               hash_str(dropout_seed, "bu-dropout"), 0};
    std::vector<nn::Var<T>> feats;
    feats.reserve(static_cast<std::size_t>(m.config.n_layers));
    auto h = detail::conv(m, "bu.stem", x);
    for (int i = 1; i <= m.config.n_layers; ++i) {
        for (int j = 1; j <= m.config.blocks_per_layer; ++j)
            h = detail::gated_block(m, "bu.L" + std::to_string(i) + ".block" + std::to_string(j), h,
                                    train, dropout);
        feats.push_back(h);
        if (i < m.config.n_layers)
            h = detail::conv(m, "bu.L" + std::to_string(i) + ".down", h, /*stride=*/2);
    }
    return feats;
}

// Generative pass, layers n down to 1. `features` must cover every layer in
// posterior mode and may be null for fully unconditional generation, in which
// case (out_h, out_w) fixes the output size. `origin` is the absolute
// position of the processed window inside a larger image (tiling support).
template <typename T>
DecoderOutput<T> top_down(ModelParameters<T>& m, const std::vector<nn::Var<T>>* features,
                          const std::vector<LayerPlanEntry>& plan,
                          const std::vector<std::uint64_t>& item_seeds, int out_h = 0, int out_w = 0,
                          bool train = false, std::uint64_t dropout_seed = 0,
                          std::pair<int, int> origin = {0, 0}) {
    const int n = m.config.n_layers;
    const int F = m.config.initial_filters;
    const int L = m.config.latent_channels;
    if (static_cast<int>(plan.size()) != n) throw ConfigError("top_down: plan size != n_layers");
    for (int i = 0; i < n; ++i)
        if (plan[static_cast<std::size_t>(i)].mode == LayerMode::Posterior &&
            (features == nullptr || static_cast<int>(features->size()) != n))
            throw ConfigError("top_down: posterior mode at layer " + std::to_string(i + 1) +
                              " requires bottom-up features for all layers");
    if (features != nullptr && !features->empty()) {
        out_h = (*features)[0].value().dim(2);
        out_w = (*features)[0].value().dim(3);
    }
    if (out_h <= 0 || out_w <= 0) throw ShapeError("top_down: output dims required");
    m.config.validate_input_dims(out_h, out_w);
    const int batch = features ? (*features)[0].value().dim(0) : static_cast<int>(item_seeds.size());
    if (static_cast<int>(item_seeds.size()) != batch)
        throw ConfigError("top_down: one item seed per batch item required");

    detail::DropoutCtx dropout{train && m.config.dropout_p > 0.0, m.config.dropout_p,
                               hash_str(dropout_seed, "td-dropout"), 0};
    const T cl = static_cast<T>(detail::kLogSigmaClamp);

    DecoderOutput<T> out;
    out.latents.layers.resize(static_cast<std::size_t>(n));

    const int div = m.config.scale_divisor();
    int hh = out_h / div, ww = out_w / div;
    auto h = nn::broadcast_chw(m.at("td.h_top"), batch, hh, ww);

    for (int i = n; i >= 1; --i) {
        const std::string lp = "td.L" + std::to_string(i);
        LayerState<T>& st = out.latents.layers[static_cast<std::size_t>(i - 1)];
        const LayerPlanEntry& entry = plan[static_cast<std::size_t>(i - 1)];
        st.mode = entry.mode;

        nn::Var<T> prior_raw;
        if (i == n) {
            prior_raw = nn::broadcast_chw(m.at("td.prior_top"), batch, hh, ww);
        } else {
            prior_raw = detail::conv(m, lp + ".prior", h);
        }
        st.prior_mu = nn::slice_channels(prior_raw, 0, L);
        st.prior_log_sigma = nn::clamp(nn::slice_channels(prior_raw, L, 2 * L), -cl, cl);

        const int oy = origin.first / (out_h / hh), ox = origin.second / (out_w / ww);
        if (entry.mode == LayerMode::Posterior) {
            auto merged = detail::conv(m, lp + ".merge",
                                       nn::concat_channels((*features)[static_cast<std::size_t>(i - 1)], h));
            st.post_mu = nn::slice_channels(merged, 0, L);
            st.post_log_sigma = nn::clamp(nn::slice_channels(merged, L, 2 * L), -cl, cl);
            auto eps = nn::Var<T>::constant(
                detail::latent_noise<T>(item_seeds, i, entry.salt, L, hh, ww, oy, ox));
            st.sample = nn::add(st.post_mu, nn::mul(nn::exp(st.post_log_sigma), eps));
            st.kl_nats = detail::kl_value_sum(st.post_mu.value(), st.post_log_sigma.value(),
                                              st.prior_mu.value(), st.prior_log_sigma.value());
        } else if (entry.mode == LayerMode::PriorSample) {
            auto eps = nn::Var<T>::constant(
                detail::latent_noise<T>(item_seeds, i, entry.salt, L, hh, ww, oy, ox));
            st.sample = nn::add(st.prior_mu, nn::mul(nn::exp(st.prior_log_sigma), eps));
        } else {
            st.sample = st.prior_mu;
        }

        auto fused = m.config.use_topdown_skips
                         ? detail::conv(m, lp + ".fuse", nn::concat_channels(h, st.sample))
                         : detail::conv(m, lp + ".fuse", st.sample);
        h = fused;
        for (int j = 1; j <= m.config.blocks_per_layer; ++j)
            h = detail::gated_block(m, lp + ".block" + std::to_string(j), h, train, dropout);
        if (i > 1) {
            h = nn::upsample_nearest2(h);
            h = detail::conv(m, lp + ".up", h);
            hh *= 2;
            ww *= 2;
        }
    }
    out.signal = detail::conv(m, "out", h);
    return out;
}

// Full denoising pass: bottom-up encoding merged into the generative pass.
template <typename T>
DecoderOutput<T> denoise_forward(ModelParameters<T>& m, const nn::Var<T>& x,
                                 const std::vector<LayerPlanEntry>& plan,
                                 const std::vector<std::uint64_t>& item_seeds, bool train = false,
                                 std::uint64_t dropout_seed = 0, std::pair<int, int> origin = {0, 0}) {
    bool needs_features = false;
    for (const auto& e : plan) needs_features = needs_features || e.mode == LayerMode::Posterior;
    if (!needs_features)
        return top_down(m, static_cast<const std::vector<nn::Var<T>>*>(nullptr), plan, item_seeds,
                        x.value().dim(2), x.value().dim(3), train, dropout_seed, origin);
    auto feats = bottom_up(m, x, train, dropout_seed);
    return top_down(m, &feats, plan, item_seeds, 0, 0, train, dropout_seed, origin);
}

} // namespace hdn
