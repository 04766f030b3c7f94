#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "hdn/core/image.hpp"

namespace hdn {

// 10*log10(range^2 / MSE); identical images report the +infinity sentinel.
inline double psnr(const Image& gt, const Image& pred, double data_range) {
    require_same_dims(gt, pred, "psnr");
    if (!(data_range > 0)) throw ConfigError("psnr: data_range must be > 0");
    double mse = 0;
    for (std::size_t i = 0; i < gt.px.size(); ++i) {
        const double d = static_cast<double>(gt.px[i]) - pred.px[i];
        mse += d * d;
    }
    mse /= static_cast<double>(gt.px.size());
    if (mse == 0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(data_range * data_range / mse);
}

// Windowed SSIM, Gaussian window (sigma 1.5), evaluated on the valid region.
inline double ssim(const Image& gt, const Image& pred, double data_range, int window = 11,
                   double k1 = 0.01, double k2 = 0.03) {
    require_same_dims(gt, pred, "ssim");
    if (gt.height < window || gt.width < window)
        throw ShapeError("ssim: image smaller than window");
    if (!(data_range > 0)) throw ConfigError("ssim: data_range must be > 0");

    std::vector<double> win(static_cast<std::size_t>(window) * window);
    const double gsigma = 1.5;
    const int r = window / 2;
    double wsum = 0;
    for (int i = 0; i < window; ++i)
        for (int j = 0; j < window; ++j) {
            const double d2 = (i - r) * (i - r) + (j - r) * (j - r);
            win[static_cast<std::size_t>(i) * window + j] = std::exp(-d2 / (2 * gsigma * gsigma));
            wsum += win[static_cast<std::size_t>(i) * window + j];
        }
    for (auto& w : win) w /= wsum;

    const double c1 = (k1 * data_range) * (k1 * data_range);
    const double c2 = (k2 * data_range) * (k2 * data_range);
    double acc = 0;
    std::size_t count = 0;
    for (int y = 0; y + window <= gt.height; ++y)
        for (int x = 0; x + window <= gt.width; ++x) {
            double mu1 = 0, mu2 = 0, s11 = 0, s22 = 0, s12 = 0;
            for (int i = 0; i < window; ++i)
                for (int j = 0; j < window; ++j) {
                    const double w = win[static_cast<std::size_t>(i) * window + j];
                    const double a = gt.at(y + i, x + j);
                    const double b = pred.at(y + i, x + j);
                    mu1 += w * a;
                    mu2 += w * b;
                    s11 += w * a * a;
                    s22 += w * b * b;
                    s12 += w * a * b;
                }
            const double v1 = s11 - mu1 * mu1;
            const double v2 = s22 - mu2 * mu2;
            const double cov = s12 - mu1 * mu2;
            acc += ((2 * mu1 * mu2 + c1) * (2 * cov + c2)) /
                   ((mu1 * mu1 + mu2 * mu2 + c1) * (v1 + v2 + c2));
            ++count;
        }
    return acc / static_cast<double>(count);
}

struct MetricReport {
    std::vector<double> psnr_per_image;
    std::vector<double> ssim_per_image;
    double psnr_mean = 0, psnr_std = 0;
    double ssim_mean = 0, ssim_std = 0;
    double data_range = 0;
};

inline MetricReport evaluate_pairs(const std::vector<Image>& gt, const std::vector<Image>& pred,
                                   double data_range) {
    if (gt.size() != pred.size() || gt.empty())
        throw ShapeError("evaluate: need equal non-empty image lists");
    MetricReport rep;
    rep.data_range = data_range;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        rep.psnr_per_image.push_back(psnr(gt[i], pred[i], data_range));
        rep.ssim_per_image.push_back(ssim(gt[i], pred[i], data_range));
    }
    auto mean_std = [](const std::vector<double>& v, double& m, double& s) {
        m = 0;
        for (double x : v) m += x;
        m /= static_cast<double>(v.size());
        s = 0;
        if (v.size() > 1) {
            for (double x : v) s += (x - m) * (x - m);
            s = std::sqrt(s / static_cast<double>(v.size() - 1));
        }
    };
    mean_std(rep.psnr_per_image, rep.psnr_mean, rep.psnr_std);
    mean_std(rep.ssim_per_image, rep.ssim_mean, rep.ssim_std);
    return rep;
}

} // namespace hdn
