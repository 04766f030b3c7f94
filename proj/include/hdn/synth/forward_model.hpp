#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cmath>

#include "hdn/core/dft.hpp"
#include "hdn/core/image.hpp"
#include "hdn/core/rng.hpp"

namespace hdn {

// Linear measurement operator on vectorized images (row-major), either a
// dense square matrix (exact small-scale algebra) or a circular convolution
// kernel (larger images), plus the ridge weight used for reconstruction.
struct LinearForwardModel {
    enum class Kind { Dense, Kernel };
    Kind kind = Kind::Dense;
    Eigen::MatrixXd dense; // square, (H*W) x (H*W)
    std::vector<double> kernel;
    int kernel_h = 0, kernel_w = 0;
    double lambda = 0.0;

    static LinearForwardModel identity(int dim, double lambda) {
        LinearForwardModel fm;
        fm.dense = Eigen::MatrixXd::Identity(dim, dim);
        fm.lambda = lambda;
        return fm;
    }

    static LinearForwardModel from_dense(Eigen::MatrixXd a, double lambda) {
        if (a.rows() != a.cols()) throw ShapeError("forward model: dense operator must be square");
        LinearForwardModel fm;
        fm.dense = std::move(a);
        fm.lambda = lambda;
        return fm;
    }

    static LinearForwardModel from_kernel(std::vector<double> k, int kh, int kw, double lambda) {
        if (static_cast<int>(k.size()) != kh * kw) throw ShapeError("forward model: kernel size");
        LinearForwardModel fm;
        fm.kind = Kind::Kernel;
        fm.kernel = std::move(k);
        fm.kernel_h = kh;
        fm.kernel_w = kw;
        fm.lambda = lambda;
        return fm;
    }

    int dense_dim() const { return static_cast<int>(dense.rows()); }
};

namespace detail {

inline Eigen::VectorXd to_vec(const Image& img) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(img.px.size()));
    for (std::size_t i = 0; i < img.px.size(); ++i) v(static_cast<Eigen::Index>(i)) = img.px[i];
    return v;
}

inline Image to_image(const Eigen::VectorXd& v, int h, int w) {
    Image img(h, w);
    for (std::size_t i = 0; i < img.px.size(); ++i) img.px[i] = static_cast<float>(v(static_cast<Eigen::Index>(i)));
    return img;
}

// Circular convolution with the kernel centered at (kh/2, kw/2).
inline Image circular_convolve(const Image& s, const std::vector<double>& k, int kh, int kw) {
    Image out(s.height, s.width);
    const int cy = kh / 2, cx = kw / 2;
    for (int y = 0; y < s.height; ++y)
        for (int x = 0; x < s.width; ++x) {
            double acc = 0;
            for (int i = 0; i < kh; ++i)
                for (int j = 0; j < kw; ++j) {
                    int yy = (y + i - cy) % s.height;
                    int xx = (x + j - cx) % s.width;
                    if (yy < 0) yy += s.height;
                    if (xx < 0) xx += s.width;
                    acc += k[static_cast<std::size_t>(i) * kw + j] * s.at(yy, xx);
                }
            out.at(y, x) = static_cast<float>(acc);
        }
    return out;
}

// Kernel transfer function on an h-by-w grid (kernel taps at circular offsets
// around its center).
inline std::vector<std::complex<double>> kernel_transfer(const LinearForwardModel& fm, int h, int w) {
    std::vector<double> padded(static_cast<std::size_t>(h) * w, 0.0);
    const int cy = fm.kernel_h / 2, cx = fm.kernel_w / 2;
    for (int i = 0; i < fm.kernel_h; ++i)
        for (int j = 0; j < fm.kernel_w; ++j) {
            int y = (i - cy) % h;
            int x = (j - cx) % w;
            if (y < 0) y += h;
            if (x < 0) x += w;
            padded[static_cast<std::size_t>(y) * w + x] += fm.kernel[static_cast<std::size_t>(i) * fm.kernel_w + j];
        }
    return dft2(padded, h, w);
}

inline void check_dense_dims(const LinearForwardModel& fm, const Image& img, const char* what) {
    if (fm.dense_dim() != static_cast<int>(img.px.size()))
        throw ShapeError(std::string(what) + ": operator dim " + std::to_string(fm.dense_dim()) +
                         " vs image " + std::to_string(img.px.size()));
}

} // namespace detail

// x = s + iid zero-mean Gaussian noise of the given standard deviation.
inline Image corrupt_gaussian(const Image& s, double sigma, std::uint64_t seed) {
    if (sigma < 0) throw ConfigError("corrupt_gaussian: sigma must be >= 0");
    Image x = s;
    if (sigma == 0) return x;
    Rng rng(hash_str(seed, "corrupt-gaussian"));
    for (auto& v : x.px) v = static_cast<float>(v + rng.normal(0.0, sigma));
    return x;
}

// y = A s + e, with e iid Gaussian of std e_sigma.
inline Image measure(const LinearForwardModel& fm, const Image& s, double e_sigma,
                     std::uint64_t seed) {
    Image y;
    if (fm.kind == LinearForwardModel::Kind::Dense) {
        detail::check_dense_dims(fm, s, "measure");
        y = detail::to_image(fm.dense * detail::to_vec(s), s.height, s.width);
    } else {
        y = detail::circular_convolve(s, fm.kernel, fm.kernel_h, fm.kernel_w);
    }
    if (e_sigma > 0) {
        Rng rng(hash_str(seed, "measurement-noise"));
        for (auto& v : y.px) v = static_cast<float>(v + rng.normal(0.0, e_sigma));
    }
    return y;
}

namespace detail {

inline Eigen::VectorXd ridge_solve(const LinearForwardModel& fm, const Eigen::VectorXd& rhs) {
    // Solves (A^T A + lambda I) z = rhs with a relative-residual guard.
    const Eigen::MatrixXd m = fm.dense.transpose() * fm.dense +
                              fm.lambda * Eigen::MatrixXd::Identity(fm.dense_dim(), fm.dense_dim());
    Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
    const auto d = ldlt.vectorD();
    if (fm.lambda == 0.0 && d.array().abs().minCoeff() < 1e-12 * d.array().abs().maxCoeff())
        throw ConfigError(
            "tikhonov: normal equations singular at lambda=0 (rank-deficient operator); "
            "use lambda > 0");
    Eigen::VectorXd z = ldlt.solve(rhs);
    const double rhs_norm = rhs.norm();
    const double resid = (m * z - rhs).norm();
    if (!z.allFinite() || (rhs_norm > 0 && resid / rhs_norm > 1e-8))
        throw NumericsError("tikhonov: solver residual too large");
    return z;
}

} // namespace detail

// Ridge-regularized reconstruction x = (A^T A + lambda I)^-1 A^T y.
inline Image tikhonov_reconstruct(const LinearForwardModel& fm, const Image& y) {
    if (fm.kind == LinearForwardModel::Kind::Dense) {
        detail::check_dense_dims(fm, y, "tikhonov_reconstruct");
        return detail::to_image(detail::ridge_solve(fm, fm.dense.transpose() * detail::to_vec(y)),
                                y.height, y.width);
    }
    // Circular operators diagonalize in Fourier space: X = conj(K) Y / (|K|^2 + lambda).
    const auto kf = detail::kernel_transfer(fm, y.height, y.width);
    std::vector<double> yd(y.px.begin(), y.px.end());
    auto yf = dft2(yd, y.height, y.width);
    for (std::size_t i = 0; i < yf.size(); ++i) {
        const double denom = std::norm(kf[i]) + fm.lambda;
        if (denom < 1e-14)
            throw ConfigError("tikhonov: kernel has a zero frequency at lambda=0; use lambda > 0");
        yf[i] = std::conj(kf[i]) * yf[i] / denom;
    }
    auto xs = dft2(yf, y.height, y.width, /*inverse=*/true);
    Image x(y.height, y.width);
    for (std::size_t i = 0; i < x.px.size(); ++i) x.px[i] = static_cast<float>(xs[i].real());
    return x;
}

// The reconstruction residual n with x = s + n:
// n = ((A^T A + lambda I)^-1 A^T A - I) s + (A^T A + lambda I)^-1 A^T e.
inline Image structured_residual(const LinearForwardModel& fm, const Image& s, const Image& e) {
    require_same_dims(s, e, "structured_residual");
    if (fm.kind == LinearForwardModel::Kind::Dense) {
        detail::check_dense_dims(fm, s, "structured_residual");
        const Eigen::VectorXd sv = detail::to_vec(s);
        const Eigen::VectorXd ev = detail::to_vec(e);
        Eigen::VectorXd n = detail::ridge_solve(fm, fm.dense.transpose() * (fm.dense * sv)) - sv +
                            detail::ridge_solve(fm, fm.dense.transpose() * ev);
        return detail::to_image(n, s.height, s.width);
    }
    const auto kf = detail::kernel_transfer(fm, s.height, s.width);
    std::vector<double> sd(s.px.begin(), s.px.end());
    std::vector<double> ed(e.px.begin(), e.px.end());
    auto sf = dft2(sd, s.height, s.width);
    auto ef = dft2(ed, s.height, s.width);
    for (std::size_t i = 0; i < sf.size(); ++i) {
        const double k2 = std::norm(kf[i]);
        const double denom = k2 + fm.lambda;
        if (denom < 1e-14)
            throw ConfigError("tikhonov: kernel has a zero frequency at lambda=0; use lambda > 0");
        sf[i] = (k2 / denom - 1.0) * sf[i] + std::conj(kf[i]) * ef[i] / denom;
    }
    auto ns = dft2(sf, s.height, s.width, /*inverse=*/true);
    Image n(s.height, s.width);
    for (std::size_t i = 0; i < n.px.size(); ++i) n.px[i] = static_cast<float>(ns[i].real());
    return n;
}

} // namespace hdn
