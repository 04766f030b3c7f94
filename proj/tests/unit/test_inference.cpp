#include <algorithm>
#include <doctest.h>

#include "test_util.hpp"

using namespace hdn;

namespace {

ModelParameters<float> small_model(int n_layers = 3, int patch = 32) {
    HdnConfig cfg = testutil::tiny_config(n_layers, patch);
    cfg.latent_channels = 4;
    cfg.initial_filters = 8;
    return build_model<float>(cfg, 77);
}

SampleSet fixed_samples(const std::vector<std::vector<float>>& per_pixel_values) {
    // per_pixel_values[k] lists pixel values of sample k (1 x n image)
    SampleSet s;
    const int w = static_cast<int>(per_pixel_values[0].size());
    s.input = Image(1, w);
    for (const auto& vals : per_pixel_values) {
        Image img(1, w);
        for (int i = 0; i < w; ++i) img.px[static_cast<std::size_t>(i)] = vals[static_cast<std::size_t>(i)];
        s.samples.push_back(img);
    }
    return s;
}

// Brute-force kernel-density argmax over a fine value grid.
double kde_argmax(const std::vector<double>& vals, double bandwidth) {
    auto [lo, hi] = std::minmax_element(vals.begin(), vals.end());
    double best = *lo, best_d = -1;
    for (int i = 0; i <= 20000; ++i) {
        const double p = *lo + (*hi - *lo) * i / 20000.0;
        double d = 0;
        for (double v : vals) {
            const double u = (v - p) / bandwidth;
            d += std::exp(-0.5 * u * u);
        }
        if (d > best_d) {
            best_d = d;
            best = p;
        }
    }
    return best;
}

} // namespace

TEST_SUITE("inference") {

TEST_CASE("sampling is reproducible and order-independent") {
    auto m = small_model();
    Image x = testutil::random_image(32, 32, 5);
    auto a = sample_denoised(m, x, 1, 42);
    auto b = sample_denoised(m, x, 1, 42);
    CHECK(a.samples[0].px == b.samples[0].px);

    auto many = sample_denoised(m, x, 5, 42);
    CHECK(many.samples[0].px == a.samples[0].px); // per-sample seeds derive from (seed, index)

    // permuting samples never changes a reducer
    SampleSet shuffled = many;
    std::rotate(shuffled.samples.begin(), shuffled.samples.begin() + 2, shuffled.samples.end());
    CHECK(mmse_estimate(many).px == mmse_estimate(shuffled).px);
    CHECK(median_estimate(many).px == median_estimate(shuffled).px);
    CHECK(map_estimate(many, 0.05).px == map_estimate(shuffled, 0.05).px);
}

TEST_CASE("worker count does not change sampled values") {
    auto m = small_model();
    Image x = testutil::random_image(32, 32, 6);
    set_worker_count(2);
    auto two = sample_denoised(m, x, 4, 9);
    set_worker_count(1);
    auto one = sample_denoised(m, x, 4, 9);
    set_worker_count(2);
    for (int k = 0; k < 4; ++k)
        CHECK(one.samples[static_cast<std::size_t>(k)].px == two.samples[static_cast<std::size_t>(k)].px);
}

TEST_CASE("posterior samples vary pixel-wise") {
    auto m = small_model();
    Image x = testutil::random_image(32, 32, 7);
    auto set = sample_denoised(m, x, 12, 3);
    auto div = diversity_map(set);
    double positive = 0;
    for (float v : div.px) positive += v > 0 ? 1 : 0;
    CHECK(positive / static_cast<double>(div.px.size()) > 0.99);
}

TEST_CASE("mmse estimate is the per-pixel mean") {
    auto s = fixed_samples({{0.0f, 5.0f}, {2.0f, 5.0f}});
    auto est = mmse_estimate(s);
    CHECK(est.px[0] == doctest::Approx(1.0));
    CHECK(est.px[1] == doctest::Approx(5.0));
    auto identical = fixed_samples({{3.5f}, {3.5f}, {3.5f}});
    CHECK(mmse_estimate(identical).px[0] == 3.5f);
}

TEST_CASE("median estimate uses the midpoint convention") {
    CHECK(median_estimate(fixed_samples({{1}, {2}, {100}})).px[0] == 2.0f);
    CHECK(median_estimate(fixed_samples({{1}, {2}, {4}, {100}})).px[0] == 3.0f);
    // symmetric samples: median == mean
    auto s = fixed_samples({{-2}, {-1}, {1}, {2}});
    CHECK(median_estimate(s).px[0] == doctest::Approx(mmse_estimate(s).px[0]).epsilon(1e-6));
}

TEST_CASE("map estimate finds the densest mode") {
    auto s = fixed_samples({{0}, {0}, {0}, {1}});
    CHECK(map_estimate(s, 0.1).px[0] ==
          doctest::Approx(kde_argmax({0, 0, 0, 1}, 0.1)).epsilon(1e-3));
    CHECK(map_estimate(s, 0.1).px[0] == doctest::Approx(0.0).scale(1.0).epsilon(1e-4));

    std::vector<std::vector<float>> bimodal;
    for (int i = 0; i < 10; ++i) bimodal.push_back({0.0f});
    bimodal.push_back({1.0f});
    bimodal.push_back({1.0f});
    auto b = fixed_samples(bimodal);
    CHECK(map_estimate(b, 0.05).px[0] ==
          doctest::Approx(kde_argmax({0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 1}, 0.05)).epsilon(1e-3));
    CHECK(std::abs(map_estimate(b, 0.05).px[0]) < 1e-4); // majority mode, not the mean 1/6

    auto equal = fixed_samples({{2.5f}, {2.5f}, {2.5f}});
    CHECK(map_estimate(equal, 0.7).px[0] == 2.5f);
}

TEST_CASE("reducers agree exactly on identical samples") {
    Image base = testutil::random_image(8, 8, 9);
    SampleSet s;
    s.input = base;
    for (int k = 0; k < 5; ++k) s.samples.push_back(base);
    CHECK(mmse_estimate(s).px == base.px);
    CHECK(median_estimate(s).px == base.px);
    CHECK(map_estimate(s).px == base.px);
    for (float v : diversity_map(s).px) CHECK(v == 0.0f);
}

TEST_CASE("diversity map is the unbiased per-pixel std") {
    auto s = fixed_samples({{0.0f}, {2.0f}});
    CHECK(diversity_map(s).px[0] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-6));
    CHECK_THROWS_AS(diversity_map(fixed_samples({{1.0f}})), ConfigError);
}

TEST_CASE("mmse variance shrinks like 1/k") {
    auto m = small_model(2, 16);
    Image x = testutil::random_image(16, 16, 11);
    std::vector<int> ks{1, 2, 4, 8, 16, 32};
    std::vector<double> log_k, log_var;
    for (int k : ks) {
        // 10 independent MMSE(k) estimates
        std::vector<Image> estimates;
        for (int rep = 0; rep < 10; ++rep)
            estimates.push_back(mmse_estimate(
                sample_denoised(m, x, k, hash_combine(1234, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(rep)))));
        double var = 0;
        for (std::size_t p = 0; p < x.px.size(); ++p) {
            double mean = 0;
            for (const auto& e : estimates) mean += e.px[p];
            mean /= 10.0;
            double v = 0;
            for (const auto& e : estimates) v += (e.px[p] - mean) * (e.px[p] - mean);
            var += v / 9.0;
        }
        log_k.push_back(std::log(static_cast<double>(k)));
        log_var.push_back(std::log(var / static_cast<double>(x.px.size())));
    }
    // least-squares slope of log var against log k
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < log_k.size(); ++i) {
        mx += log_k[i];
        my += log_var[i];
    }
    mx /= static_cast<double>(log_k.size());
    my /= static_cast<double>(log_k.size());
    double num = 0, den = 0;
    for (std::size_t i = 0; i < log_k.size(); ++i) {
        num += (log_k[i] - mx) * (log_var[i] - my);
        den += (log_k[i] - mx) * (log_k[i] - mx);
    }
    const double slope = num / den;
    MESSAGE("mmse variance log-log slope: ", slope);
    CHECK(slope == doctest::Approx(-1.0).epsilon(0.3));
}

TEST_CASE("generation is reproducible and size-flexible") {
    auto m = small_model();
    auto a = generate(m, 32, 32, 2, 5);
    auto b = generate(m, 32, 32, 2, 5);
    CHECK(a[0].px == b[0].px);
    CHECK(a[0].px != a[1].px);
    auto big = generate(m, 64, 64, 1, 5); // double the training patch
    CHECK(big[0].height == 64);
    CHECK_THROWS_AS(generate(m, 33, 33, 1, 5), ShapeError);
}

TEST_CASE("tiled inference matches the whole-image pass away from tile edges") {
    auto m = small_model(3, 32);
    // contractive weights stand in for a trained model: random full-gain
    // initializations amplify boundary differences instead of decaying them
    for (auto& [name, var] : m.params)
        for (auto& v : var.value().v) v *= 0.6f;
    m.data_mean = 0.45;
    m.data_std = 0.2;
    Image x = testutil::random_image(192, 192, 13);
    auto plan = all_posterior(3);
    // tiled path (192 > 128 tile size) vs direct whole-window pass
    Image tiled = detail::denoise_one(m, x, plan, 99);
    Image direct = detail::denoise_window(m, x, plan, 99, {0, 0});
    // interiors: away from any stitch seam by half the overlap
    const int margin = 48;
    double max_diff = 0;
    for (int y = margin; y < 192 - margin; ++y)
        for (int w = margin; w < 192 - margin; ++w)
            max_diff = std::max(max_diff,
                                static_cast<double>(std::abs(tiled.at(y, w) - direct.at(y, w))));
    MESSAGE("tiled vs untiled interior max diff: ", max_diff);
    CHECK(max_diff < 1e-3);
}

TEST_CASE("sample count must be positive") {
    auto m = small_model();
    Image x = testutil::random_image(32, 32, 5);
    CHECK_THROWS_AS(sample_denoised(m, x, 0, 1), ConfigError);
}

} // TEST_SUITE
