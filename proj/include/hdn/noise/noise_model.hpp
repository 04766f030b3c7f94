#pragma once

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <string>
#include <vector>

#include "hdn/core/image.hpp"
#include "hdn/core/rng.hpp"

namespace hdn {

inline constexpr double kTwoPi = 6.283185307179586;
inline constexpr double kHistogramFloor = 1e-10;

struct LikelihoodResult {
    Image log_density;          // per-pixel log p(x_i | s_i), nats
    std::size_t clamped_pixels; // signals outside the calibrated range (clamped, flagged)
};

// Paired calibration data; provenance records whether the "clean" side is real
// ground truth or a bootstrapped pseudo-clean estimate.
struct CalibrationSet {
    std::vector<Image> noisy;
    std::vector<Image> clean;
    std::string provenance = "paired";
};

inline CalibrationSet bootstrap_pairs(const std::vector<Image>& noisy,
                                      const std::vector<Image>& pseudo_clean) {
    if (noisy.size() != pseudo_clean.size())
        throw ShapeError("bootstrap_pairs: list length mismatch");
    for (std::size_t i = 0; i < noisy.size(); ++i)
        require_same_dims(noisy[i], pseudo_clean[i], "bootstrap_pairs");
    return CalibrationSet{noisy, pseudo_clean, "bootstrap"};
}

// ---------------------------------------------------------------------------

class NoiseModel {
  public:
    enum class Kind { Gaussian, Histogram, Gmm };

    // --- constructors -------------------------------------------------------

    static NoiseModel gaussian(double sigma) {
        if (!(sigma > 0)) throw ConfigError("gaussian noise model: sigma must be > 0");
        NoiseModel m;
        m.kind_ = Kind::Gaussian;
        m.sigma_ = sigma;
        return m;
    }

    static NoiseModel histogram(std::vector<double> signal_edges, std::vector<double> obs_edges,
                                std::vector<std::vector<double>> probabilities,
                                std::string provenance = "paired",
                                std::vector<double> row_counts = {}) {
        NoiseModel m;
        m.kind_ = Kind::Histogram;
        m.signal_edges_ = std::move(signal_edges);
        m.obs_edges_ = std::move(obs_edges);
        m.probs_ = std::move(probabilities);
        m.provenance_ = std::move(provenance);
        m.row_counts_ = std::move(row_counts);
        if (m.row_counts_.empty()) m.row_counts_.assign(m.probs_.size(), 1.0);
        m.validate_histogram();
        return m;
    }

    static NoiseModel gmm(int k, int degree, std::vector<double> coefficients, double signal_lo,
                          double signal_hi, double sigma_min, std::string provenance = "paired") {
        NoiseModel m;
        m.kind_ = Kind::Gmm;
        m.k_ = k;
        m.degree_ = degree;
        m.coeff_ = std::move(coefficients);
        m.signal_lo_ = signal_lo;
        m.signal_hi_ = signal_hi;
        m.sigma_min_ = sigma_min;
        m.provenance_ = std::move(provenance);
        if (k < 1 || degree < 0) throw ConfigError("gmm noise model: k >= 1 and degree >= 0");
        if (m.coeff_.size() != static_cast<std::size_t>(3 * k * (degree + 1)))
            throw ConfigError("gmm noise model: coefficient count mismatch");
        if (!(signal_hi > signal_lo)) throw ConfigError("gmm noise model: empty signal range");
        return m;
    }

    Kind kind() const { return kind_; }
    double gaussian_sigma() const { return sigma_; }
    const std::string& provenance() const { return provenance_; }
    std::vector<std::string>& fit_warnings() { return fit_warnings_; }
    const std::vector<std::string>& fit_warnings() const { return fit_warnings_; }

    // --- evaluation ---------------------------------------------------------

    // log p(x|s) and d log p / d s at one pixel.
    void eval(double x, double s, double* logp, double* dlogp_ds, bool* clamped) const {
        switch (kind_) {
            case Kind::Gaussian: {
                const double r = (x - s) / sigma_;
                if (logp) *logp = -0.5 * r * r - std::log(sigma_) - 0.5 * std::log(kTwoPi);
                if (dlogp_ds) *dlogp_ds = (x - s) / (sigma_ * sigma_);
                if (clamped) *clamped = false;
                return;
            }
            case Kind::Histogram:
                eval_histogram(x, s, logp, dlogp_ds, clamped);
                return;
            case Kind::Gmm:
                eval_gmm(x, s, logp, dlogp_ds, clamped);
                return;
        }
    }

    double log_density(double x, double s) const {
        double lp;
        eval(x, s, &lp, nullptr, nullptr);
        return lp;
    }

    LikelihoodResult log_likelihood(const Image& x, const Image& s) const {
        require_same_dims(x, s, "log_likelihood");
        LikelihoodResult out{Image(x.height, x.width), 0};
        for (std::size_t i = 0; i < x.px.size(); ++i) {
            double lp;
            bool cl = false;
            eval(x.px[i], s.px[i], &lp, nullptr, &cl);
            out.log_density.px[i] = static_cast<float>(lp);
            out.clamped_pixels += cl ? 1u : 0u;
        }
        return out;
    }

    // GMM component parameters at a given signal level (weights, means, stds).
    void gmm_components(double s, std::vector<double>& w, std::vector<double>& mean,
                        std::vector<double>& sd) const {
        double st = normalized_signal(s);
        w.resize(static_cast<std::size_t>(k_));
        mean.resize(static_cast<std::size_t>(k_));
        sd.resize(static_cast<std::size_t>(k_));
        double amax = -1e300;
        std::vector<double> a(static_cast<std::size_t>(k_));
        for (int k = 0; k < k_; ++k) {
            a[static_cast<std::size_t>(k)] = poly(k, 0, st);
            mean[static_cast<std::size_t>(k)] = s + poly(k, 1, st);
            sd[static_cast<std::size_t>(k)] = sigma_min_ + std::exp(poly(k, 2, st));
            amax = std::max(amax, a[static_cast<std::size_t>(k)]);
        }
        double z = 0;
        for (int k = 0; k < k_; ++k) z += std::exp(a[static_cast<std::size_t>(k)] - amax);
        for (int k = 0; k < k_; ++k)
            w[static_cast<std::size_t>(k)] = std::exp(a[static_cast<std::size_t>(k)] - amax) / z;
    }

    // --- serialization ------------------------------------------------------

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["provenance"] = provenance_;
        switch (kind_) {
            case Kind::Gaussian:
                j["type"] = "gaussian";
                j["sigma"] = sigma_;
                break;
            case Kind::Histogram:
                j["type"] = "histogram";
                j["signal_bin_edges"] = signal_edges_;
                j["observation_bin_edges"] = obs_edges_;
                j["probabilities"] = probs_;
                j["row_counts"] = row_counts_;
                break;
            case Kind::Gmm:
                j["type"] = "gmm";
                j["k_components"] = k_;
                j["poly_degree"] = degree_;
                j["coefficients"] = coeff_;
                j["signal_lo"] = signal_lo_;
                j["signal_hi"] = signal_hi_;
                j["sigma_min"] = sigma_min_;
                break;
        }
        return j;
    }

    static NoiseModel from_json(const nlohmann::json& j) {
        const std::string type = j.at("type").get<std::string>();
        const std::string prov = j.value("provenance", "paired");
        if (type == "gaussian") {
            auto m = gaussian(j.at("sigma").get<double>());
            m.provenance_ = prov;
            return m;
        }
        if (type == "histogram")
            return histogram(j.at("signal_bin_edges").get<std::vector<double>>(),
                             j.at("observation_bin_edges").get<std::vector<double>>(),
                             j.at("probabilities").get<std::vector<std::vector<double>>>(), prov,
                             j.value("row_counts", std::vector<double>{}));
        if (type == "gmm")
            return gmm(j.at("k_components").get<int>(), j.at("poly_degree").get<int>(),
                       j.at("coefficients").get<std::vector<double>>(),
                       j.at("signal_lo").get<double>(), j.at("signal_hi").get<double>(),
                       j.at("sigma_min").get<double>(), prov);
        throw ConfigError("noise model: unknown type '" + type + "'");
    }

    // Internals used by the fitting routines.
    int gmm_k() const { return k_; }
    int gmm_degree() const { return degree_; }
    std::vector<double>& gmm_coefficients() { return coeff_; }
    const std::vector<double>& gmm_coefficients() const { return coeff_; }
    double signal_lo() const { return signal_lo_; }
    double signal_hi() const { return signal_hi_; }
    double sigma_min() const { return sigma_min_; }
    const std::vector<std::vector<double>>& histogram_probabilities() const { return probs_; }
    const std::vector<double>& histogram_signal_edges() const { return signal_edges_; }
    const std::vector<double>& histogram_obs_edges() const { return obs_edges_; }

    double normalized_signal(double s) const {
        const double t = (s - signal_lo_) / (signal_hi_ - signal_lo_);
        return std::clamp(t, 0.0, 1.0);
    }

    // d logp/ds index helpers for the GMM fit: coefficient layout is
    // [component][field][power], field 0 = weight logit, 1 = mean offset,
    // 2 = log std.
    std::size_t coeff_index(int k, int field, int power) const {
        return (static_cast<std::size_t>(k) * 3 + static_cast<std::size_t>(field)) *
                   (static_cast<std::size_t>(degree_) + 1) +
               static_cast<std::size_t>(power);
    }

  private:
    void validate_histogram() const {
        if (signal_edges_.size() < 2 || obs_edges_.size() < 2)
            throw ConfigError("histogram noise model: need at least one bin per axis");
        if (probs_.size() != signal_edges_.size() - 1)
            throw ConfigError("histogram noise model: row count mismatch");
        for (const auto& row : probs_) {
            if (row.size() != obs_edges_.size() - 1)
                throw ConfigError("histogram noise model: column count mismatch");
            double s = 0;
            for (double p : row) {
                if (p < kHistogramFloor * 0.999) throw ConfigError("histogram probability below floor");
                s += p;
            }
            if (std::abs(s - 1.0) > 1e-6)
                throw ConfigError("histogram noise model: row does not sum to 1");
        }
    }

    double poly(int k, int field, double t) const {
        double acc = 0;
        for (int p = degree_; p >= 0; --p) acc = acc * t + coeff_[coeff_index(k, field, p)];
        return acc;
    }

    double poly_deriv(int k, int field, double t) const {
        double acc = 0;
        for (int p = degree_; p >= 1; --p) acc = acc * t + p * coeff_[coeff_index(k, field, p)];
        return acc;
    }

    // Piecewise-linear interpolation of row log-densities along the signal
    // axis keeps d logp / ds well defined for gradient-based training.
    void eval_histogram(double x, double s, double* logp, double* dlogp_ds, bool* clamped) const {
        const double s_lo = signal_edges_.front(), s_hi = signal_edges_.back();
        bool cl = s < s_lo || s > s_hi;
        const double sc = std::clamp(s, s_lo, s_hi);
        const int rows = static_cast<int>(probs_.size());

        // observation bin (clamped into range)
        const double xc = std::clamp(x, obs_edges_.front(), obs_edges_.back());
        int ob = static_cast<int>(std::upper_bound(obs_edges_.begin(), obs_edges_.end(), xc) -
                                  obs_edges_.begin()) - 1;
        ob = std::clamp(ob, 0, static_cast<int>(obs_edges_.size()) - 2);
        const double width = obs_edges_[static_cast<std::size_t>(ob) + 1] - obs_edges_[static_cast<std::size_t>(ob)];

        auto row_p = [&](int r) {
            return probs_[static_cast<std::size_t>(r)][static_cast<std::size_t>(ob)] / width;
        };
        auto row_center = [&](int r) {
            return 0.5 * (signal_edges_[static_cast<std::size_t>(r)] + signal_edges_[static_cast<std::size_t>(r) + 1]);
        };

        // locate neighbouring row centers around sc
        int r1 = static_cast<int>(std::upper_bound(signal_edges_.begin(), signal_edges_.end(), sc) -
                                  signal_edges_.begin()) - 1;
        r1 = std::clamp(r1, 0, rows - 1);
        int lo = r1, hi = r1;
        if (sc < row_center(r1)) lo = std::max(0, r1 - 1);
        else hi = std::min(rows - 1, r1 + 1);
        // never interpolate across the calibrated support: an empty neighbour
        // row would drag the estimate toward its uniform fallback
        const bool lo_pop = row_counts_[static_cast<std::size_t>(lo)] > 0;
        const bool hi_pop = row_counts_[static_cast<std::size_t>(hi)] > 0;
        if (lo_pop != hi_pop) lo = hi = lo_pop ? lo : hi;

        // probability-space interpolation keeps every conditional normalized
        double lp, dlp;
        if (lo == hi) {
            lp = std::log(row_p(lo));
            dlp = 0.0;
        } else {
            const double c0 = row_center(lo), c1 = row_center(hi);
            const double t = (sc - c0) / (c1 - c0);
            const double p0 = row_p(lo), p1 = row_p(hi);
            const double mix = (1.0 - t) * p0 + t * p1;
            lp = std::log(mix);
            dlp = cl ? 0.0 : (p1 - p0) / mix / (c1 - c0);
        }
        if (logp) *logp = lp;
        if (dlogp_ds) *dlogp_ds = dlp;
        if (clamped) *clamped = cl;
    }

    void eval_gmm(double x, double s, double* logp, double* dlogp_ds, bool* clamped) const {
        const double st = normalized_signal(s);
        const bool cl = s < signal_lo_ || s > signal_hi_;
        const double inv_range = cl ? 0.0 : 1.0 / (signal_hi_ - signal_lo_);
        double tmax = -1e300;
        std::vector<double> t(static_cast<std::size_t>(k_)), a(static_cast<std::size_t>(k_)),
            mean(static_cast<std::size_t>(k_)), sd(static_cast<std::size_t>(k_)),
            w(static_cast<std::size_t>(k_));
        double amax = -1e300;
        for (int k = 0; k < k_; ++k) {
            a[static_cast<std::size_t>(k)] = poly(k, 0, st);
            amax = std::max(amax, a[static_cast<std::size_t>(k)]);
        }
        double z = 0;
        for (int k = 0; k < k_; ++k) z += std::exp(a[static_cast<std::size_t>(k)] - amax);
        for (int k = 0; k < k_; ++k) {
            w[static_cast<std::size_t>(k)] = std::exp(a[static_cast<std::size_t>(k)] - amax) / z;
            mean[static_cast<std::size_t>(k)] = s + poly(k, 1, st);
            sd[static_cast<std::size_t>(k)] = sigma_min_ + std::exp(poly(k, 2, st));
            const double r = (x - mean[static_cast<std::size_t>(k)]) / sd[static_cast<std::size_t>(k)];
            t[static_cast<std::size_t>(k)] = std::log(w[static_cast<std::size_t>(k)]) - 0.5 * r * r -
                                             std::log(sd[static_cast<std::size_t>(k)]) -
                                             0.5 * std::log(kTwoPi);
            tmax = std::max(tmax, t[static_cast<std::size_t>(k)]);
        }
        double lse = 0;
        for (int k = 0; k < k_; ++k) lse += std::exp(t[static_cast<std::size_t>(k)] - tmax);
        const double lp = tmax + std::log(lse);
        if (logp) *logp = lp;
        if (clamped) *clamped = cl;
        if (!dlogp_ds) return;

        // responsibilities and chain rule through (weights, means, stds)
        double wbar_da = 0;
        std::vector<double> da(static_cast<std::size_t>(k_));
        for (int k = 0; k < k_; ++k) {
            da[static_cast<std::size_t>(k)] = poly_deriv(k, 0, st) * inv_range;
            wbar_da += w[static_cast<std::size_t>(k)] * da[static_cast<std::size_t>(k)];
        }
        double g = 0;
        for (int k = 0; k < k_; ++k) {
            const double rk = std::exp(t[static_cast<std::size_t>(k)] - lp);
            const double dmean = 1.0 + poly_deriv(k, 1, st) * inv_range;
            const double dsd = std::exp(poly(k, 2, st)) * poly_deriv(k, 2, st) * inv_range;
            const double d = x - mean[static_cast<std::size_t>(k)];
            const double sk = sd[static_cast<std::size_t>(k)];
            const double dlogw = da[static_cast<std::size_t>(k)] - wbar_da;
            const double dlogn = d / (sk * sk) * dmean + (d * d / (sk * sk * sk) - 1.0 / sk) * dsd;
            g += rk * (dlogw + dlogn);
        }
        *dlogp_ds = g;
    }

    Kind kind_ = Kind::Gaussian;
    std::string provenance_ = "paired";
    std::vector<std::string> fit_warnings_; // not serialized

    // gaussian
    double sigma_ = 1.0;

    // histogram
    std::vector<double> signal_edges_;
    std::vector<double> obs_edges_;
    std::vector<std::vector<double>> probs_;
    std::vector<double> row_counts_;

    // gmm
    int k_ = 0;
    int degree_ = 0;
    std::vector<double> coeff_;
    double signal_lo_ = 0.0;
    double signal_hi_ = 1.0;
    double sigma_min_ = 1e-3;
};

} // namespace hdn
