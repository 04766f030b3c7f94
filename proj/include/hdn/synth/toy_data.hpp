#pragma once

#include <cmath>
#include <json.hpp>
#include <string>
#include <vector>

#include "hdn/core/image.hpp"
#include "hdn/core/rng.hpp"
#include "hdn/synth/forward_model.hpp"

namespace hdn {

// Desk-scale stand-ins: soft blob fields, membrane-like cell-boundary webs,
// and a striped variant with row-correlated line artefacts on top of pixel
// noise. Clean intensities live in [0,1).
struct ToyOptions {
    double pixel_sigma = 0.1;      // iid noise under the stripes (striped_blobs only)
    double stripe_std = 0.19;      // amplitude std of an affected row
    double stripe_fraction = 0.2;  // density of stripe pairs over anchor rows
    double stripe_corr_len = 16.0; // Gaussian smoothing length along the row
    double blob_radius_lo = 2.0;   // soft-disk radius range for blob images
    double blob_radius_hi = 4.5;
};

struct ToyDataset {
    std::vector<Image> clean;
    std::vector<Image> corrupted; // only for striped_blobs
    nlohmann::json params;
};

namespace detail {

inline Image toy_blobs(int size, Rng& rng, const ToyOptions& opt) {
    Image img(size, size);
    const int nb = 12 + static_cast<int>(rng.below(13)); // 12..24 bumps per 64^2, scaled by area
    const int count = std::max(1, nb * size * size / (64 * 64));
    std::vector<double> acc(img.px.size(), 0.0);
    for (int b = 0; b < count; ++b) {
        const double cy = rng.uniform(0, size);
        const double cx = rng.uniform(0, size);
        const double r = rng.uniform(opt.blob_radius_lo, opt.blob_radius_hi);
        const double amp = rng.uniform(0.6, 1.6);
        const int reach = static_cast<int>(3 * r) + 1;
        for (int y = std::max(0, static_cast<int>(cy) - reach);
             y < std::min(size, static_cast<int>(cy) + reach); ++y)
            for (int x = std::max(0, static_cast<int>(cx) - reach);
                 x < std::min(size, static_cast<int>(cx) + reach); ++x) {
                const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
                acc[static_cast<std::size_t>(y) * size + x] += amp * std::exp(-d2 / (2 * r * r));
            }
    }
    for (std::size_t i = 0; i < acc.size(); ++i)
        img.px[i] = static_cast<float>(1.0 - std::exp(-acc[i]));
    return img;
}

inline Image toy_membranes(int size, Rng& rng) {
    const int sites = std::max(4, size * size / 144);
    std::vector<double> sy(static_cast<std::size_t>(sites)), sx(static_cast<std::size_t>(sites));
    for (int i = 0; i < sites; ++i) {
        sy[static_cast<std::size_t>(i)] = rng.uniform(0, size);
        sx[static_cast<std::size_t>(i)] = rng.uniform(0, size);
    }
    Image img(size, size);
    const double w = 1.6;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            double d1 = 1e18, d2 = 1e18;
            for (int i = 0; i < sites; ++i) {
                const double d = std::hypot(y - sy[static_cast<std::size_t>(i)],
                                            x - sx[static_cast<std::size_t>(i)]);
                if (d < d1) {
                    d2 = d1;
                    d1 = d;
                } else if (d < d2) {
                    d2 = d;
                }
            }
            const double edge = (d2 - d1) / w;
            img.at(y, x) = static_cast<float>(0.9 * std::exp(-edge * edge) + 0.05);
        }
    return img;
}

// Additive horizontal line artefacts: row pairs carrying a smooth 1-D offset
// (Gaussian-smoothed white noise, unit std, scaled) with opposite sign on the
// two rows — bright/dark banding that is long-range along the stripe axis yet
// vertically zero-mean, like detector line artefacts. Pairs anchor at rows
// 4m+1/4m+2, so they sit at the two finest scales of a factor-2 ladder.
inline void add_stripes(Image& img, const ToyOptions& opt, Rng& rng) {
    const int w = img.width;
    const int radius = static_cast<int>(3 * opt.stripe_corr_len);
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double ksum2 = 0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[static_cast<std::size_t>(i + radius)] =
            std::exp(-0.5 * i * i / (opt.stripe_corr_len * opt.stripe_corr_len));
        ksum2 += kernel[static_cast<std::size_t>(i + radius)] * kernel[static_cast<std::size_t>(i + radius)];
    }
    const double norm = 1.0 / std::sqrt(ksum2); // smoothed signal keeps unit variance
    for (int y = 1; y + 3 < img.height; y += 4) {
        if (rng.uniform01() > 2.0 * opt.stripe_fraction) continue;
        const bool thick = rng.uniform01() < 0.7; // 4-row ++-- band vs 2-row +- pair
        std::vector<double> white(static_cast<std::size_t>(w + 2 * radius));
        for (auto& v : white) v = rng.normal();
        for (int x = 0; x < w; ++x) {
            double acc = 0;
            for (int i = -radius; i <= radius; ++i)
                acc += kernel[static_cast<std::size_t>(i + radius)] *
                       white[static_cast<std::size_t>(x + i + radius)];
            const float offset = static_cast<float>(opt.stripe_std * norm * acc);
            if (thick) {
                img.at(y - 1, x) += offset;
                img.at(y, x) += offset;
                img.at(y + 1, x) -= offset;
                img.at(y + 2, x) -= offset;
            } else {
                img.at(y, x) += offset;
                img.at(y + 1, x) -= offset;
            }
        }
    }
}

} // namespace detail

inline ToyDataset make_toy_dataset(const std::string& kind, int count, int size, std::uint64_t seed,
                                   const ToyOptions& opt = {}) {
    if (count < 1 || size < 8) throw ConfigError("make_toy_dataset: count >= 1 and size >= 8");
    if (kind != "blobs" && kind != "membranes" && kind != "striped_blobs")
        throw ConfigError("make_toy_dataset: unknown kind '" + kind + "'");
    ToyDataset ds;
    ds.params = {{"kind", kind},      {"count", count},
                 {"size", size},      {"seed", seed},
                 {"pixel_sigma", opt.pixel_sigma}, {"stripe_std", opt.stripe_std},
                 {"stripe_fraction", opt.stripe_fraction}, {"stripe_corr_len", opt.stripe_corr_len},
                 {"blob_radius_lo", opt.blob_radius_lo}, {"blob_radius_hi", opt.blob_radius_hi}};
    for (int i = 0; i < count; ++i) {
        Rng rng(hash_combine(hash_str(seed, kind.c_str()), static_cast<std::uint64_t>(i)));
        Image clean = (kind == "membranes") ? detail::toy_membranes(size, rng)
                                            : detail::toy_blobs(size, rng, opt);
        if (kind == "striped_blobs") {
            Image bad = corrupt_gaussian(clean, opt.pixel_sigma,
                                         hash_combine(seed, 0x57A1u, static_cast<std::uint64_t>(i)));
            detail::add_stripes(bad, opt, rng);
            ds.corrupted.push_back(std::move(bad));
        }
        ds.clean.push_back(std::move(clean));
    }
    return ds;
}

} // namespace hdn
