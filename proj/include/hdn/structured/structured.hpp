#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "hdn/infer/inference.hpp"

namespace hdn {

// "k-n" shorthand: layers k..n keep their posterior, layers below k ignore the
// encoder and run from their conditional priors. "1-n" is the unmodified
// model.
struct LayerModeSpec {
    int first_active = 1; // k
    int n_layers = 1;     // n

    static LayerModeSpec parse(const std::string& text, int n_layers) {
        const auto dash = text.find('-');
        if (dash == std::string::npos)
            throw ConfigError("active-layers: expected 'k-n', got '" + text + "'");
        LayerModeSpec spec;
        try {
            spec.first_active = std::stoi(text.substr(0, dash));
            spec.n_layers = std::stoi(text.substr(dash + 1));
        } catch (const std::exception&) {
            throw ConfigError("active-layers: expected integers in 'k-n', got '" + text + "'");
        }
        if (spec.n_layers != n_layers)
            throw ConfigError("active-layers: top layer " + std::to_string(spec.n_layers) +
                              " does not match the model's " + std::to_string(n_layers) + " layers");
        if (spec.first_active < 1 || spec.first_active > n_layers)
            throw ConfigError("active-layers: k must be in [1, n]");
        return spec;
    }

    // prior_mean switches deactivated layers from prior sampling to the
    // conditional prior mean.
    std::vector<LayerPlanEntry> plan(bool prior_mean = false) const {
        std::vector<LayerPlanEntry> p(static_cast<std::size_t>(n_layers));
        for (int i = 1; i <= n_layers; ++i)
            p[static_cast<std::size_t>(i - 1)].mode =
                i >= first_active ? LayerMode::Posterior
                                  : (prior_mean ? LayerMode::PriorMean : LayerMode::PriorSample);
        return p;
    }
};

// Denoising with the bottom layers deactivated; reducers apply unchanged.
template <typename T>
SampleSet denoise_deactivated(ModelParameters<T>& m, const Image& x, const LayerModeSpec& spec,
                              int k, std::uint64_t seed, bool prior_mean = false) {
    if (spec.first_active > spec.n_layers || spec.first_active > m.config.n_layers)
        throw ConfigError("denoise_deactivated: no posterior layer left; use generate for "
                          "unconditional sampling");
    return sample_denoised(m, x, k, seed, spec.plan(prior_mean));
}

// Layer inspection: one shared prior draw for all layers above layer_i,
// n_variants fresh draws at layer_i, conditional prior means below. Returns
// the generated images (one per variant).
template <typename T>
std::vector<Image> visualize_layer(ModelParameters<T>& m, int layer_i, int n_variants,
                                   std::uint64_t seed, int out_h, int out_w) {
    const int n = m.config.n_layers;
    if (layer_i < 1 || layer_i > n) throw ConfigError("visualize_layer: layer out of range");
    if (n_variants < 1) throw ConfigError("visualize_layer: need at least one variant");
    std::vector<Image> variants(static_cast<std::size_t>(n_variants));
    parallel_for(0, n_variants, [&](int v) {
        nn::NoGradGuard ng;
        std::vector<LayerPlanEntry> plan(static_cast<std::size_t>(n));
        for (int i = 1; i <= n; ++i) {
            auto& e = plan[static_cast<std::size_t>(i - 1)];
            if (i > layer_i) {
                e.mode = LayerMode::PriorSample; // shared: salt independent of variant
                e.salt = 0;
            } else if (i == layer_i) {
                e.mode = LayerMode::PriorSample;
                e.salt = static_cast<std::uint64_t>(v) + 1;
            } else {
                e.mode = LayerMode::PriorMean;
            }
        }
        auto dec = top_down(m, static_cast<const std::vector<nn::Var<T>>*>(nullptr), plan,
                            {hash_str(seed, "inspect")}, out_h, out_w);
        Image img = detail::tensor_to_image(dec.signal.value());
        for (auto& px : img.px) px = static_cast<float>(px * m.data_std + m.data_mean);
        variants[static_cast<std::size_t>(v)] = std::move(img);
    });
    return variants;
}

inline Image assemble_grid(const std::vector<Image>& variants) {
    if (variants.empty()) throw ConfigError("assemble_grid: empty");
    const int h = variants[0].height, w = variants[0].width;
    Image grid(h, w * static_cast<int>(variants.size()));
    for (std::size_t v = 0; v < variants.size(); ++v) {
        require_same_dims(variants[0], variants[v], "assemble_grid");
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                grid.at(y, x + static_cast<int>(v) * w) = variants[v].at(y, x);
    }
    return grid;
}

// Normalized spatial autocorrelation of a residual over lags |dy|,|dx| <=
// max_lag. The residual is mean-subtracted internally; the map has value 1 at
// lag (0,0) and is exactly symmetric under lag negation. An optional mask
// (non-zero = use pixel) restricts the estimate to pairs inside the mask.
inline Image autocorrelation(const Image& residual, int max_lag,
                             const std::vector<std::uint8_t>* mask = nullptr) {
    if (max_lag < 0 || 2 * max_lag >= std::min(residual.height, residual.width))
        throw ConfigError("autocorrelation: need max_lag < dims/2");
    if (mask && mask->size() != residual.px.size())
        throw ShapeError("autocorrelation: mask size mismatch");

    double m = 0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < residual.px.size(); ++i) {
        if (mask && !(*mask)[i]) continue;
        m += residual.px[i];
        ++used;
    }
    if (used == 0) throw ConfigError("autocorrelation: empty mask");
    m /= static_cast<double>(used);
    double var = 0;
    for (std::size_t i = 0; i < residual.px.size(); ++i) {
        if (mask && !(*mask)[i]) continue;
        const double d = residual.px[i] - m;
        var += d * d;
    }
    var /= static_cast<double>(used);
    if (var == 0) throw NumericsError("autocorrelation: constant residual (zero variance)");

    const int side = 2 * max_lag + 1;
    Image corr(side, side);
    for (int dy = 0; dy <= max_lag; ++dy)
        for (int dx = -max_lag; dx <= max_lag; ++dx) {
            if (dy == 0 && dx < 0) continue; // filled by symmetry
            double acc = 0;
            std::size_t count = 0;
            const int y0 = std::max(0, -dy), y1 = residual.height - std::max(0, dy);
            const int x0 = std::max(0, -dx), x1 = residual.width - std::max(0, dx);
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x) {
                    const std::size_t ia = static_cast<std::size_t>(y) * residual.width + x;
                    const std::size_t ib = static_cast<std::size_t>(y + dy) * residual.width + (x + dx);
                    if (mask && (!(*mask)[ia] || !(*mask)[ib])) continue;
                    acc += (residual.px[ia] - m) * (residual.px[ib] - m);
                    ++count;
                }
            const float c = count ? static_cast<float>(acc / static_cast<double>(count) / var) : 0.0f;
            corr.at(max_lag + dy, max_lag + dx) = c;
            corr.at(max_lag - dy, max_lag - dx) = c; // C(d) = C(-d) exactly
        }
    return corr;
}

// Background selection for datasets without ground truth: pixels below the
// given intensity quantile are assumed to contain only noise.
inline std::vector<std::uint8_t> background_mask(const Image& raw, double quantile = 0.1) {
    if (quantile <= 0 || quantile >= 1) throw ConfigError("background_mask: quantile in (0,1)");
    std::vector<float> sorted(raw.px);
    std::sort(sorted.begin(), sorted.end());
    const float cutoff = sorted[static_cast<std::size_t>(quantile * (sorted.size() - 1))];
    std::vector<std::uint8_t> mask(raw.px.size());
    for (std::size_t i = 0; i < raw.px.size(); ++i) mask[i] = raw.px[i] <= cutoff ? 1 : 0;
    return mask;
}

// Residual image for autocorrelation diagnostics: raw - gt when ground truth
// exists, otherwise the caller should pass a background mask.
inline Image residual_from_gt(const Image& raw, const Image& gt) { return subtract(raw, gt); }

} // namespace hdn
