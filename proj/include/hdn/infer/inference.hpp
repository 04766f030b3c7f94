#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "hdn/core/parallel.hpp"
#include "hdn/model/ladder.hpp"

namespace hdn {

// k denoised draws for one input plus the layer plan that produced them.
struct SampleSet {
    Image input;
    std::vector<Image> samples;
    std::vector<std::uint64_t> seeds;
    std::vector<LayerPlanEntry> plan;
};

namespace detail {

inline constexpr int kTileSize = 128;
inline constexpr int kTileOverlap = 32;

template <typename T>
Tensor<T> image_to_tensor(const Image& img) {
    Tensor<T> t({1, 1, img.height, img.width});
    for (std::size_t i = 0; i < img.px.size(); ++i) t.v[i] = static_cast<T>(img.px[i]);
    return t;
}

template <typename T>
Image tensor_to_image(const Tensor<T>& t, int item = 0) {
    Image img(t.shape[2], t.shape[3]);
    const std::size_t plane = img.px.size();
    for (std::size_t i = 0; i < plane; ++i)
        img.px[i] = static_cast<float>(t.v[static_cast<std::size_t>(item) * plane + i]);
    return img;
}

// One full-window pass in raw units (standardize, forward, de-standardize).
template <typename T>
Image denoise_window(ModelParameters<T>& m, const Image& window,
                     const std::vector<LayerPlanEntry>& plan, std::uint64_t item_seed,
                     std::pair<int, int> origin) {
    nn::NoGradGuard ng;
    Tensor<T> x = image_to_tensor<T>(window);
    for (auto& v : x.v) v = static_cast<T>((v - m.data_mean) / m.data_std);
    auto out = denoise_forward(m, nn::Var<T>::constant(std::move(x)), plan, {item_seed},
                               /*train=*/false, /*dropout_seed=*/0, origin);
    Image s = tensor_to_image(out.signal.value());
    for (auto& v : s.px) v = static_cast<float>(v * m.data_std + m.data_mean);
    return s;
}

// Tiled inference with center-crop stitching; tile origins are aligned to the
// resolution ladder so coordinate-anchored latent noise matches the untiled
// pass in tile interiors.
template <typename T>
Image denoise_one(ModelParameters<T>& m, const Image& x, const std::vector<LayerPlanEntry>& plan,
                  std::uint64_t item_seed) {
    m.config.validate_input_dims(x.height, x.width);
    if (x.height <= kTileSize && x.width <= kTileSize)
        return denoise_window(m, x, plan, item_seed, {0, 0});

    const int div = m.config.scale_divisor();
    const int step = kTileSize - 2 * kTileOverlap;
    Image out(x.height, x.width);
    for (int ty = 0; ty < x.height; ty += step)
        for (int tx = 0; tx < x.width; tx += step) {
            int oy = std::max(0, std::min(ty - kTileOverlap, x.height - kTileSize));
            int ox = std::max(0, std::min(tx - kTileOverlap, x.width - kTileSize));
            oy = (oy / div) * div;
            ox = (ox / div) * div;
            const int th = std::min(kTileSize, x.height - oy);
            const int tw = std::min(kTileSize, x.width - ox);
            Image window(th, tw);
            for (int y = 0; y < th; ++y)
                for (int w = 0; w < tw; ++w) window.at(y, w) = x.at(oy + y, ox + w);
            Image restored = denoise_window(m, window, plan, item_seed, {oy, ox});
            const int y0 = ty, y1 = std::min(x.height, ty + step);
            const int x0 = tx, x1 = std::min(x.width, tx + step);
            for (int y = y0; y < y1; ++y)
                for (int w = x0; w < x1; ++w) out.at(y, w) = restored.at(y - oy, w - ox);
        }
    return out;
}

} // namespace detail

// k independent posterior draws; per-sample seeds are derived from the base
// seed, so permuting or parallelizing samples cannot change any of them.
template <typename T>
SampleSet sample_denoised(ModelParameters<T>& m, const Image& x, int k, std::uint64_t seed,
                          std::vector<LayerPlanEntry> plan = {}) {
    if (k < 1) throw ConfigError("sample_denoised: k must be >= 1");
    if (plan.empty()) plan = all_posterior(m.config.n_layers);
    SampleSet out;
    out.input = x;
    out.plan = plan;
    out.samples.resize(static_cast<std::size_t>(k));
    out.seeds.resize(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i)
        out.seeds[static_cast<std::size_t>(i)] = hash_combine(hash_str(seed, "sample"), static_cast<std::uint64_t>(i));
    parallel_for(0, k, [&](int i) {
        out.samples[static_cast<std::size_t>(i)] =
            detail::denoise_one(m, x, plan, out.seeds[static_cast<std::size_t>(i)]);
    });
    return out;
}

// Per-pixel arithmetic mean of the samples (the conditional-expectation
// point estimate).
inline Image mmse_estimate(const SampleSet& s) {
    if (s.samples.empty()) throw ConfigError("mmse_estimate: need k >= 1");
    Image out(s.samples[0].height, s.samples[0].width);
    // double accumulation keeps the result independent of sample order
    std::vector<double> acc(out.px.size(), 0.0);
    for (const Image& sample : s.samples)
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += sample.px[i];
    const double inv = 1.0 / static_cast<double>(s.samples.size());
    for (std::size_t i = 0; i < acc.size(); ++i) out.px[i] = static_cast<float>(acc[i] * inv);
    return out;
}

// Per-pixel median; midpoint convention for even k.
inline Image median_estimate(const SampleSet& s) {
    if (s.samples.empty()) throw ConfigError("median_estimate: need k >= 1");
    Image out(s.samples[0].height, s.samples[0].width);
    const std::size_t k = s.samples.size();
    std::vector<float> vals(k);
    for (std::size_t i = 0; i < out.px.size(); ++i) {
        for (std::size_t j = 0; j < k; ++j) vals[j] = s.samples[j].px[i];
        std::sort(vals.begin(), vals.end());
        out.px[i] = (k % 2 == 1) ? vals[k / 2] : 0.5f * (vals[k / 2 - 1] + vals[k / 2]);
    }
    return out;
}

// Per-pixel unbiased standard deviation across samples — the uncertainty map.
inline Image diversity_map(const SampleSet& s) {
    if (s.samples.size() < 2) throw ConfigError("diversity_map: need k >= 2");
    Image out(s.samples[0].height, s.samples[0].width);
    const double k = static_cast<double>(s.samples.size());
    for (std::size_t i = 0; i < out.px.size(); ++i) {
        double m = 0;
        for (const Image& sample : s.samples) m += sample.px[i];
        m /= k;
        double ss = 0;
        for (const Image& sample : s.samples) {
            const double d = sample.px[i] - m;
            ss += d * d;
        }
        out.px[i] = static_cast<float>(std::sqrt(ss / (k - 1.0)));
    }
    return out;
}

// Per-pixel mode via mean-shift over the k sample values: iterate the
// Gaussian-kernel weighted mean from every sample start, keep the densest
// converged mode. bandwidth <= 0 selects 1/10 of the per-pixel sample range.
inline Image map_estimate(const SampleSet& s, double bandwidth = 0.0,
                          std::size_t* unconverged_pixels = nullptr) {
    if (s.samples.size() < 2) throw ConfigError("map_estimate: need k >= 2");
    const std::size_t k = s.samples.size();
    Image out(s.samples[0].height, s.samples[0].width);
    std::size_t flagged = 0;
    std::vector<double> vals(k);
    for (std::size_t i = 0; i < out.px.size(); ++i) {
        for (std::size_t j = 0; j < k; ++j) vals[j] = s.samples[j].px[i];
        std::sort(vals.begin(), vals.end()); // canonical order: permutation-proof
        auto [lo, hi] = std::minmax_element(vals.begin(), vals.end());
        double bw = bandwidth > 0 ? bandwidth : (*hi - *lo) / 10.0;
        if (bw <= 0) { // all samples equal
            out.px[i] = static_cast<float>(vals[0]);
            continue;
        }
        auto density = [&](double p) {
            double d = 0;
            for (double v : vals) {
                const double u = (v - p) / bw;
                d += std::exp(-0.5 * u * u);
            }
            return d;
        };
        double best = vals[0], best_density = -1;
        bool any_unconverged = false;
        for (double start : vals) {
            double p = start;
            bool converged = false;
            for (int it = 0; it < 500; ++it) {
                double num = 0, den = 0;
                for (double v : vals) {
                    const double u = (v - p) / bw;
                    const double w = std::exp(-0.5 * u * u);
                    num += w * v;
                    den += w;
                }
                const double next = num / den;
                if (std::abs(next - p) < 1e-6) {
                    p = next;
                    converged = true;
                    break;
                }
                p = next;
            }
            if (!converged) any_unconverged = true;
            const double d = density(p);
            if (d > best_density) {
                best_density = d;
                best = p;
            }
        }
        if (any_unconverged) ++flagged;
        out.px[i] = static_cast<float>(best);
    }
    if (unconverged_pixels) *unconverged_pixels = flagged;
    return out;
}

// Free-running generation: every latent layer sampled from its conditional
// prior, no input conditioning. Fully convolutional, so any ladder-compatible
// size works.
template <typename T>
std::vector<Image> generate(ModelParameters<T>& m, int out_h, int out_w, int count,
                            std::uint64_t seed) {
    m.config.validate_input_dims(out_h, out_w);
    std::vector<Image> out(static_cast<std::size_t>(count));
    const auto plan = all_prior(m.config.n_layers);
    parallel_for(0, count, [&](int i) {
        nn::NoGradGuard ng;
        const std::uint64_t item_seed = hash_combine(hash_str(seed, "generate"), static_cast<std::uint64_t>(i));
        auto dec = top_down(m, static_cast<const std::vector<nn::Var<T>>*>(nullptr), plan,
                            {item_seed}, out_h, out_w);
        Image img = detail::tensor_to_image(dec.signal.value());
        for (auto& v : img.px) v = static_cast<float>(v * m.data_std + m.data_mean);
        out[static_cast<std::size_t>(i)] = std::move(img);
    });
    return out;
}

} // namespace hdn
