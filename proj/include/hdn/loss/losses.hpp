#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "hdn/model/ladder.hpp"
#include "hdn/noise/noise_model.hpp"

namespace hdn {

// Closed-form KL between diagonal Gaussians given as (mean, sigma), summed
// over elements.
inline double kl_diag_gaussians(const std::vector<double>& q_mu, const std::vector<double>& q_sigma,
                                const std::vector<double>& p_mu,
                                const std::vector<double>& p_sigma) {
    if (q_mu.size() != q_sigma.size() || q_mu.size() != p_mu.size() || q_mu.size() != p_sigma.size())
        throw ShapeError("kl_diag_gaussians: size mismatch");
    double kl = 0;
    for (std::size_t i = 0; i < q_mu.size(); ++i) {
        if (!(q_sigma[i] > 0) || !(p_sigma[i] > 0))
            throw ConfigError("kl_diag_gaussians: sigmas must be strictly positive");
        const double d = q_mu[i] - p_mu[i];
        const double vq = q_sigma[i] * q_sigma[i];
        const double vp = p_sigma[i] * p_sigma[i];
        kl += std::log(p_sigma[i] / q_sigma[i]) + (vq + d * d) / (2.0 * vp) - 0.5;
    }
    return kl;
}

// Free-bits clamp on a per-layer KL value. The autodiff counterpart
// (nn::clamp_below) realizes the gradient contract: zero sensitivity below
// the threshold.
inline double free_bits_clamp(double kl_layer, double threshold) {
    if (threshold < 0) throw ConfigError("free_bits_clamp: threshold must be >= 0");
    return std::max(kl_layer, threshold);
}

template <typename T>
struct LossBreakdown {
    double reconstruction = 0.0;              // nats per pixel
    std::vector<double> kl_per_layer;         // nats per input pixel, layer 1..n
    std::vector<double> kl_clamped_per_layer; // after the free-bits clamp
    double total = 0.0;
    nn::Var<T> total_var; // differentiable total for the training step
};

namespace detail {

// Negative noise-model log-likelihood of raw observations given raw signal,
// as a tape op with analytic d(-logp)/ds.
template <typename T>
nn::Var<T> noise_nll_map(const nn::Var<T>& s_raw, const Tensor<T>& x_raw, const NoiseModel& nm) {
    if (s_raw.value().shape != x_raw.shape) throw ShapeError("noise_nll_map: shape mismatch");
    Tensor<T> value(x_raw.shape);
    Tensor<T> dvalue(x_raw.shape);
    for (std::size_t i = 0; i < x_raw.v.size(); ++i) {
        double lp, dlp;
        nm.eval(static_cast<double>(x_raw.v[i]), static_cast<double>(s_raw.value().v[i]), &lp, &dlp,
                nullptr);
        value.v[i] = static_cast<T>(-lp);
        dvalue.v[i] = static_cast<T>(-dlp);
    }
    return nn::map_with_grad(s_raw, std::move(value), std::move(dvalue));
}

} // namespace detail

// The hierarchical denoising objective: reconstruction = mean per-pixel
// negative noise-model log-likelihood; one KL term per latent layer between
// approximate posterior and conditional prior, averaged per input pixel and
// clamped from below by the free-bits threshold.
template <typename T>
LossBreakdown<T> hdn_loss(const Tensor<T>& x_raw, const DecoderOutput<T>& dec, const NoiseModel& nm,
                          double free_bits, double data_mean = 0.0, double data_std = 1.0) {
    for (const auto& layer : dec.latents.layers)
        if (layer.mode != LayerMode::Posterior)
            throw ConfigError("hdn_loss: decoder output must come from an all-posterior pass");
    const auto& s = dec.signal.value().shape;
    if (x_raw.shape != s) throw ShapeError("hdn_loss: input/signal shape mismatch");
    const T inv_pixels = T(1) / static_cast<T>(x_raw.numel());

    auto s_raw = nn::affine(dec.signal, static_cast<T>(data_std), static_cast<T>(data_mean));
    auto recon = nn::scale(nn::sum_all(detail::noise_nll_map(s_raw, x_raw, nm)), inv_pixels);

    LossBreakdown<T> out;
    out.reconstruction = static_cast<double>(recon.scalar());
    auto total = recon;
    for (const auto& layer : dec.latents.layers) {
        auto kl = nn::scale(nn::sum_all(nn::kl_map(layer.post_mu, layer.post_log_sigma,
                                                   layer.prior_mu, layer.prior_log_sigma)),
                            inv_pixels);
        auto clamped = nn::clamp_below(kl, static_cast<T>(free_bits));
        out.kl_per_layer.push_back(static_cast<double>(kl.scalar()));
        out.kl_clamped_per_layer.push_back(static_cast<double>(clamped.scalar()));
        total = nn::add(total, clamped);
    }
    out.total = static_cast<double>(total.scalar());
    out.total_var = total;

    if (!std::isfinite(out.total)) {
        std::string diag = "hdn_loss non-finite: reconstruction=" + std::to_string(out.reconstruction);
        for (std::size_t i = 0; i < out.kl_per_layer.size(); ++i)
            diag += ", kl[" + std::to_string(i + 1) + "]=" + std::to_string(out.kl_per_layer[i]);
        throw NumericsError(diag);
    }
    return out;
}

// Vanilla baseline: same ELBO with a Normal observation head of fixed sigma
// instead of a calibrated noise model.
template <typename T>
LossBreakdown<T> vae_loss(const Tensor<T>& x_raw, const DecoderOutput<T>& dec,
                          double predicted_obs_sigma, double free_bits = 0.0,
                          double data_mean = 0.0, double data_std = 1.0) {
    return hdn_loss(x_raw, dec, NoiseModel::gaussian(predicted_obs_sigma), free_bits, data_mean,
                    data_std);
}

} // namespace hdn
