#include <doctest.h>

#include "test_util.hpp"

using namespace hdn;

TEST_SUITE("metrics") {

TEST_CASE("psnr closed forms and sentinel") {
    Image a = testutil::random_image(16, 16, 1, 0, 255);
    for (auto& v : a.px) v = std::round(v); // keep the +10 offset exact in float
    CHECK(std::isinf(psnr(a, a, 255.0)));

    Image b = a;
    for (auto& v : b.px) v += 10.0f;
    CHECK(psnr(a, b, 255.0) == doctest::Approx(20.0 * std::log10(25.5)).epsilon(1e-9));

    Image c = testutil::random_image(16, 16, 2, 0, 255);
    double mse = 0;
    for (std::size_t i = 0; i < a.px.size(); ++i) {
        const double d = static_cast<double>(a.px[i]) - c.px[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.px.size());
    CHECK(psnr(a, c, 255.0) ==
          doctest::Approx(10.0 * std::log10(255.0 * 255.0 / mse)).epsilon(1e-9));

    CHECK_THROWS_AS(psnr(a, Image(8, 8), 255.0), ShapeError);
    CHECK_THROWS_AS(psnr(a, c, 0.0), ConfigError);
}

TEST_CASE("psnr symmetry and shift covariance") {
    Image a = testutil::random_image(12, 12, 3, 0, 100);
    Image b = testutil::random_image(12, 12, 4, 0, 100);
    CHECK(psnr(a, b, 100.0) == psnr(b, a, 100.0));
    Image a2 = a, b2 = b;
    for (auto& v : a2.px) v += 17.0f;
    for (auto& v : b2.px) v += 17.0f;
    CHECK(psnr(a2, b2, 100.0) == doctest::Approx(psnr(a, b, 100.0)).epsilon(1e-6));
}

TEST_CASE("ssim identities and discriminative behaviour") {
    // structured non-constant image
    Image a(32, 32);
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x)
            a.at(y, x) = static_cast<float>(128 + 100 * std::sin(0.4 * x) * std::cos(0.5 * y));
    CHECK(ssim(a, a, 255.0) == doctest::Approx(1.0).epsilon(1e-9));

    Image inverted(32, 32);
    for (std::size_t i = 0; i < a.px.size(); ++i) inverted.px[i] = 255.0f - a.px[i];
    CHECK(ssim(a, inverted, 255.0) < 0.5);

    Image tiny_noise = corrupt_gaussian(a, 255.0 / 1000.0, 5);
    CHECK(ssim(a, tiny_noise, 255.0) > 0.99);

    CHECK_THROWS_AS(ssim(Image(8, 8), Image(8, 8), 255.0), ShapeError); // below window
}

TEST_CASE("report means equal the arithmetic average of per-image values") {
    std::vector<Image> gt, pred;
    for (int i = 0; i < 4; ++i) {
        gt.push_back(testutil::random_image(16, 16, 10 + static_cast<std::uint64_t>(i), 0, 200));
        pred.push_back(corrupt_gaussian(gt.back(), 5.0, 20 + static_cast<std::uint64_t>(i)));
    }
    auto rep = evaluate_pairs(gt, pred, 200.0);
    double mean = 0;
    for (double v : rep.psnr_per_image) mean += v;
    CHECK(rep.psnr_mean == doctest::Approx(mean / 4.0).epsilon(1e-12));
    CHECK(rep.data_range == 200.0);
}

} // TEST_SUITE
