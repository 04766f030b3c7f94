#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "hdn/noise/noise_model.hpp"

namespace hdn {

namespace detail {

inline void flatten_pairs(const std::vector<Image>& noisy, const std::vector<Image>& clean,
                          std::vector<double>& x, std::vector<double>& s) {
    if (noisy.size() != clean.size() || noisy.empty())
        throw ShapeError("calibration: need equal-length non-empty image lists");
    for (std::size_t i = 0; i < noisy.size(); ++i) {
        require_same_dims(noisy[i], clean[i], "calibration pair");
        for (std::size_t p = 0; p < noisy[i].px.size(); ++p) {
            x.push_back(noisy[i].px[p]);
            s.push_back(clean[i].px[p]);
        }
    }
}

inline std::pair<double, double> margin_range(const std::vector<double>& v, double margin) {
    double lo = v[0], hi = v[0];
    for (double e : v) {
        lo = std::min(lo, e);
        hi = std::max(hi, e);
    }
    double span = hi - lo;
    if (span <= 0) span = std::max(1.0, std::abs(lo)); // degenerate constant data
    return {lo - margin * span, hi + margin * span};
}

} // namespace detail

// Empirical conditional histogram p(x|s) with Laplace smoothing. Ranges cover
// the data plus a 5% margin; rows with no samples fall back to uniform.
inline NoiseModel fit_histogram(const std::vector<Image>& noisy, const std::vector<Image>& clean,
                                int n_signal_bins, int n_obs_bins,
                                const std::string& provenance = "paired") {
    if (n_signal_bins < 1 || n_obs_bins < 1) throw ConfigError("fit_histogram: bins must be >= 1");
    std::vector<double> x, s;
    detail::flatten_pairs(noisy, clean, x, s);

    auto [s_lo, s_hi] = detail::margin_range(s, 0.05);
    auto [o_lo, o_hi] = detail::margin_range(x, 0.05);
    std::vector<double> s_edges(static_cast<std::size_t>(n_signal_bins) + 1);
    std::vector<double> o_edges(static_cast<std::size_t>(n_obs_bins) + 1);
    for (int i = 0; i <= n_signal_bins; ++i)
        s_edges[static_cast<std::size_t>(i)] = s_lo + (s_hi - s_lo) * i / n_signal_bins;
    for (int i = 0; i <= n_obs_bins; ++i)
        o_edges[static_cast<std::size_t>(i)] = o_lo + (o_hi - o_lo) * i / n_obs_bins;

    // light Laplace smoothing: enough to make empty rows uniform without
    // biasing the conditional moments of populated rows
    const double alpha = 0.01;
    std::vector<std::vector<double>> counts(
        static_cast<std::size_t>(n_signal_bins),
        std::vector<double>(static_cast<std::size_t>(n_obs_bins), alpha));
    std::vector<double> row_counts(static_cast<std::size_t>(n_signal_bins), 0.0);
    auto bin_of = [](double v, const std::vector<double>& edges) {
        int b = static_cast<int>((v - edges.front()) / (edges.back() - edges.front()) *
                                 (static_cast<int>(edges.size()) - 1));
        return std::clamp(b, 0, static_cast<int>(edges.size()) - 2);
    };
    for (std::size_t i = 0; i < x.size(); ++i) {
        const auto row = static_cast<std::size_t>(bin_of(s[i], s_edges));
        counts[row][static_cast<std::size_t>(bin_of(x[i], o_edges))] += 1.0;
        row_counts[row] += 1.0;
    }

    for (auto& row : counts) {
        double total = 0;
        for (double c : row) total += c;
        for (double& c : row) c = std::max(c / total, kHistogramFloor);
        total = 0;
        for (double c : row) total += c;
        for (double& c : row) c /= total;
    }

    auto model = NoiseModel::histogram(std::move(s_edges), std::move(o_edges), std::move(counts),
                                       provenance, std::move(row_counts));
    if (x.size() < 10000)
        model.fit_warnings().push_back("fit_histogram: only " + std::to_string(x.size()) +
                                       " calibration pixels (< 10^4); bins may be undersampled");
    return model;
}

inline NoiseModel fit_histogram(const CalibrationSet& set, int n_signal_bins, int n_obs_bins) {
    return fit_histogram(set.noisy, set.clean, n_signal_bins, n_obs_bins, set.provenance);
}

struct GmmFitResult {
    NoiseModel model;
    std::vector<double> nll_trace; // nats/pixel on a fixed evaluation subset
};

// Maximum-likelihood fit of the signal-dependent GMM by Adam on minibatched
// negative log-likelihood with a linearly decayed step size.
inline GmmFitResult fit_gmm(const std::vector<Image>& noisy, const std::vector<Image>& clean, int k,
                            int degree, int iters, std::uint64_t seed,
                            const std::string& provenance = "paired") {
    if (k < 1 || degree < 0 || iters < 1) throw ConfigError("fit_gmm: bad k/degree/iters");
    std::vector<double> x, s;
    detail::flatten_pairs(noisy, clean, x, s);
    auto [lo, hi] = detail::margin_range(s, 0.05);
    const double sigma_min = 1e-3 * (hi - lo);

    // moment initialization from the pooled residual
    double rs = 0, rs2 = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = x[i] - s[i];
        rs += r;
        rs2 += r * r;
    }
    const double rmean = rs / static_cast<double>(x.size());
    const double rstd =
        std::sqrt(std::max(1e-12, rs2 / static_cast<double>(x.size()) - rmean * rmean));

    const int ncoef = 3 * k * (degree + 1);
    std::vector<double> coef(static_cast<std::size_t>(ncoef), 0.0);
    NoiseModel model = NoiseModel::gmm(k, degree, coef, lo, hi, sigma_min, provenance);
    for (int c = 0; c < k; ++c) {
        const double spread = (k > 1) ? 0.5 * rstd * (2.0 * c / (k - 1) - 1.0) : 0.0;
        model.gmm_coefficients()[model.coeff_index(c, 1, 0)] = rmean + spread;
        model.gmm_coefficients()[model.coeff_index(c, 2, 0)] =
            std::log(std::max(rstd * 0.8, sigma_min));
    }

    // Adam state plus a Polyak average of the coefficients; the average is
    // what gets evaluated and returned.
    std::vector<double> m(static_cast<std::size_t>(ncoef), 0.0),
        v(static_cast<std::size_t>(ncoef), 0.0), g(static_cast<std::size_t>(ncoef), 0.0);
    std::vector<double> polyak = model.gmm_coefficients();
    const double polyak_decay = 0.995;
    const double b1 = 0.9, b2 = 0.999, adam_eps = 1e-8, lr0 = 0.05;
    const int batch = 4096;
    Rng rng(hash_str(seed, "gmm-fit"));

    const std::size_t eval_count = std::min<std::size_t>(x.size(), 50000);
    std::vector<double> wbuf, meanbuf, sdbuf;

    auto eval_nll = [&](const NoiseModel& nm, std::size_t count) {
        double nll = 0;
        for (std::size_t i = 0; i < count; ++i) nll -= nm.log_density(x[i], s[i]);
        return nll / static_cast<double>(count);
    };

    GmmFitResult result{model, {}};
    const int record_every = std::max(1, iters / 50);
    std::vector<double> t(static_cast<std::size_t>(k)), w(static_cast<std::size_t>(k)),
        mean(static_cast<std::size_t>(k)), sd(static_cast<std::size_t>(k)),
        powers(static_cast<std::size_t>(degree) + 1);

    for (int it = 0; it < iters; ++it) {
        std::fill(g.begin(), g.end(), 0.0);
        double batch_nll = 0;
        for (int b = 0; b < batch; ++b) {
            const std::size_t idx = static_cast<std::size_t>(rng.below(x.size()));
            const double xs = x[idx], ss = s[idx];
            const double st = model.normalized_signal(ss);
            model.gmm_components(ss, w, mean, sd);
            double tmax = -1e300;
            for (int c = 0; c < k; ++c) {
                const double r = (xs - mean[static_cast<std::size_t>(c)]) / sd[static_cast<std::size_t>(c)];
                t[static_cast<std::size_t>(c)] = std::log(w[static_cast<std::size_t>(c)]) -
                                                 0.5 * r * r -
                                                 std::log(sd[static_cast<std::size_t>(c)]) -
                                                 0.5 * std::log(kTwoPi);
                tmax = std::max(tmax, t[static_cast<std::size_t>(c)]);
            }
            double lse = 0;
            for (int c = 0; c < k; ++c) lse += std::exp(t[static_cast<std::size_t>(c)] - tmax);
            const double logp = tmax + std::log(lse);
            batch_nll -= logp;
            powers[0] = 1.0;
            for (int p = 1; p <= degree; ++p) powers[static_cast<std::size_t>(p)] = powers[static_cast<std::size_t>(p - 1)] * st;
            for (int c = 0; c < k; ++c) {
                const double rk = std::exp(t[static_cast<std::size_t>(c)] - logp);
                const double d = xs - mean[static_cast<std::size_t>(c)];
                const double sk = sd[static_cast<std::size_t>(c)];
                const double expl = sk - model.sigma_min();
                const double gw = rk - w[static_cast<std::size_t>(c)];
                const double gm = rk * d / (sk * sk);
                const double gl = rk * (d * d / (sk * sk * sk) - 1.0 / sk) * expl;
                for (int p = 0; p <= degree; ++p) {
                    g[model.coeff_index(c, 0, p)] -= gw * powers[static_cast<std::size_t>(p)];
                    g[model.coeff_index(c, 1, p)] -= gm * powers[static_cast<std::size_t>(p)];
                    g[model.coeff_index(c, 2, p)] -= gl * powers[static_cast<std::size_t>(p)];
                }
            }
        }
        if (!std::isfinite(batch_nll))
            throw NumericsError("fit_gmm diverged at iteration " + std::to_string(it) +
                                ": batch NLL is not finite");
        const double inv_b = 1.0 / batch;
        // cosine decay to zero keeps the recorded NLL trace monotone once
        // the fit has settled
        const double lr = lr0 * 0.5 * (1.0 + std::cos(3.141592653589793 * it / std::max(1, iters - 1)));
        const double bc1 = 1.0 - std::pow(b1, it + 1), bc2 = 1.0 - std::pow(b2, it + 1);
        auto& coefs = model.gmm_coefficients();
        for (int i = 0; i < ncoef; ++i) {
            const double gi = g[static_cast<std::size_t>(i)] * inv_b;
            m[static_cast<std::size_t>(i)] = b1 * m[static_cast<std::size_t>(i)] + (1 - b1) * gi;
            v[static_cast<std::size_t>(i)] = b2 * v[static_cast<std::size_t>(i)] + (1 - b2) * gi * gi;
            coefs[static_cast<std::size_t>(i)] -= lr * (m[static_cast<std::size_t>(i)] / bc1) /
                                                  (std::sqrt(v[static_cast<std::size_t>(i)] / bc2) + adam_eps);
        }
        for (int i = 0; i < ncoef; ++i)
            polyak[static_cast<std::size_t>(i)] =
                polyak_decay * polyak[static_cast<std::size_t>(i)] +
                (1.0 - polyak_decay) * coefs[static_cast<std::size_t>(i)];
        if ((it + 1) % record_every == 0 || it + 1 == iters) {
            NoiseModel averaged = model;
            averaged.gmm_coefficients() = polyak;
            const double nll = eval_nll(averaged, eval_count);
            if (!std::isfinite(nll))
                throw NumericsError("fit_gmm diverged at iteration " + std::to_string(it) +
                                    ": eval NLL is not finite");
            result.nll_trace.push_back(nll);
        }
    }
    model.gmm_coefficients() = polyak;
    result.model = model;
    return result;
}

inline GmmFitResult fit_gmm(const CalibrationSet& set, int k, int degree, int iters,
                            std::uint64_t seed) {
    return fit_gmm(set.noisy, set.clean, k, degree, iters, seed, set.provenance);
}

} // namespace hdn
