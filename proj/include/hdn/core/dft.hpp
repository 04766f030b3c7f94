#pragma once

#include <complex>
#include <vector>

namespace hdn {

// Naive separable 2-D DFT. O(N^3) per axis — intended for the small images
// this toolkit works with, not a general FFT.
inline std::vector<std::complex<double>> dft2(const std::vector<double>& data, int h, int w,
                                              bool inverse = false) {
    const double sign = inverse ? 1.0 : -1.0;
    std::vector<std::complex<double>> tmp(static_cast<std::size_t>(h) * w);
    std::vector<std::complex<double>> out(static_cast<std::size_t>(h) * w);
    // rows
    std::vector<std::complex<double>> tw(static_cast<std::size_t>(w));
    for (int k = 0; k < w; ++k)
        tw[static_cast<std::size_t>(k)] = std::polar(1.0, sign * 2.0 * 3.141592653589793 * k / w);
    for (int y = 0; y < h; ++y)
        for (int k = 0; k < w; ++k) {
            std::complex<double> acc = 0;
            std::complex<double> root = 1;
            const std::complex<double> step = tw[static_cast<std::size_t>(k)];
            for (int x = 0; x < w; ++x) {
                acc += data[static_cast<std::size_t>(y) * w + x] * root;
                root *= step;
            }
            tmp[static_cast<std::size_t>(y) * w + k] = acc;
        }
    // columns
    std::vector<std::complex<double>> th(static_cast<std::size_t>(h));
    for (int k = 0; k < h; ++k)
        th[static_cast<std::size_t>(k)] = std::polar(1.0, sign * 2.0 * 3.141592653589793 * k / h);
    for (int x = 0; x < w; ++x)
        for (int k = 0; k < h; ++k) {
            std::complex<double> acc = 0;
            std::complex<double> root = 1;
            const std::complex<double> step = th[static_cast<std::size_t>(k)];
            for (int y = 0; y < h; ++y) {
                acc += tmp[static_cast<std::size_t>(y) * w + x] * root;
                root *= step;
            }
            out[static_cast<std::size_t>(k) * w + x] = acc;
        }
    if (inverse) {
        const double scale = 1.0 / (static_cast<double>(h) * w);
        for (auto& c : out) c *= scale;
    }
    return out;
}

inline std::vector<std::complex<double>> dft2(const std::vector<std::complex<double>>& data, int h,
                                              int w, bool inverse) {
    // complex input variant (for inverse transforms)
    const double sign = inverse ? 1.0 : -1.0;
    std::vector<std::complex<double>> tmp(static_cast<std::size_t>(h) * w);
    std::vector<std::complex<double>> out(static_cast<std::size_t>(h) * w);
    for (int y = 0; y < h; ++y)
        for (int k = 0; k < w; ++k) {
            std::complex<double> acc = 0;
            for (int x = 0; x < w; ++x)
                acc += data[static_cast<std::size_t>(y) * w + x] *
                       std::polar(1.0, sign * 2.0 * 3.141592653589793 * k * x / w);
            tmp[static_cast<std::size_t>(y) * w + k] = acc;
        }
    for (int x = 0; x < w; ++x)
        for (int k = 0; k < h; ++k) {
            std::complex<double> acc = 0;
            for (int y = 0; y < h; ++y)
                acc += tmp[static_cast<std::size_t>(y) * w + x] *
                       std::polar(1.0, sign * 2.0 * 3.141592653589793 * k * y / h);
            out[static_cast<std::size_t>(k) * w + x] = acc;
        }
    if (inverse) {
        const double scale = 1.0 / (static_cast<double>(h) * w);
        for (auto& c : out) c *= scale;
    }
    return out;
}

} // namespace hdn
