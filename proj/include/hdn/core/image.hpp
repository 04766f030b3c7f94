#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "hdn/core/common.hpp"

namespace hdn {

// Single-channel 2-D image, float32 intensities in whatever raw units the
// data came in. Used for noisy inputs, clean signals, measurements and
// residuals alike.
struct Image {
    int height = 0;
    int width = 0;
    std::vector<float> px;

    Image() = default;
    Image(int h, int w) : height(h), width(w), px(static_cast<std::size_t>(h) * w, 0.0f) {}
    Image(int h, int w, float fill)
        : height(h), width(w), px(static_cast<std::size_t>(h) * w, fill) {}

    std::size_t size() const { return px.size(); }
    float& at(int y, int x) { return px[static_cast<std::size_t>(y) * width + x]; }
    float at(int y, int x) const { return px[static_cast<std::size_t>(y) * width + x]; }

    bool same_dims(const Image& o) const { return height == o.height && width == o.width; }
};

inline void require_same_dims(const Image& a, const Image& b, const char* what) {
    if (!a.same_dims(b))
        throw ShapeError(std::string(what) + ": dimension mismatch " + std::to_string(a.height) +
                         "x" + std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                         std::to_string(b.width));
}

inline std::pair<float, float> value_range(const Image& img) {
    float lo = std::numeric_limits<float>::max();
    float hi = std::numeric_limits<float>::lowest();
    for (float v : img.px) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    return {lo, hi};
}

inline std::pair<float, float> value_range(const std::vector<Image>& imgs) {
    float lo = std::numeric_limits<float>::max();
    float hi = std::numeric_limits<float>::lowest();
    for (const Image& img : imgs) {
        auto [l, h] = value_range(img);
        lo = std::min(lo, l);
        hi = std::max(hi, h);
    }
    return {lo, hi};
}

inline double mean(const Image& img) {
    double s = 0;
    for (float v : img.px) s += v;
    return img.px.empty() ? 0.0 : s / static_cast<double>(img.px.size());
}

inline Image subtract(const Image& a, const Image& b) {
    require_same_dims(a, b, "subtract");
    Image out(a.height, a.width);
    for (std::size_t i = 0; i < a.px.size(); ++i) out.px[i] = a.px[i] - b.px[i];
    return out;
}

} // namespace hdn
