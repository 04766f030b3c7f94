#include <doctest.h>

#include "test_util.hpp"

using namespace hdn;
using nn::Var;
using testutil::max_grad_rel_error;
using testutil::random_tensor;

namespace {

// Direct (definition-level) convolution used as the value oracle for the
// GEMM-based implementation.
Tensor<double> conv_reference(const Tensor<double>& x, const Tensor<double>& w,
                              const Tensor<double>& b, int stride, int pad) {
    const int N = x.shape[0], Cin = x.shape[1], H = x.shape[2], W = x.shape[3];
    const int Cout = w.shape[0], kh = w.shape[2], kw = w.shape[3];
    const int OH = (H + 2 * pad - kh) / stride + 1;
    const int OW = (W + 2 * pad - kw) / stride + 1;
    Tensor<double> out({N, Cout, OH, OW});
    for (int n = 0; n < N; ++n)
        for (int co = 0; co < Cout; ++co)
            for (int oh = 0; oh < OH; ++oh)
                for (int ow = 0; ow < OW; ++ow) {
                    double acc = b.v[static_cast<std::size_t>(co)];
                    for (int ci = 0; ci < Cin; ++ci)
                        for (int i = 0; i < kh; ++i)
                            for (int j = 0; j < kw; ++j) {
                                const int y = oh * stride - pad + i;
                                const int xx = ow * stride - pad + j;
                                if (y < 0 || y >= H || xx < 0 || xx >= W) continue;
                                acc += x.at4(n, ci, y, xx) * w.at4(co, ci, i, j);
                            }
                    out.at4(n, co, oh, ow) = acc;
                }
    return out;
}

// Random-weighted sum turns any tensor op into a scalar for gradient checks.
Var<double> weighted_sum(const Var<double>& x, std::uint64_t seed) {
    auto w = Var<double>::constant(random_tensor<double>(x.value().shape, seed));
    return nn::sum_all(nn::mul(x, w));
}

} // namespace

TEST_SUITE("nn_ops") {

TEST_CASE("conv2d matches the direct-definition oracle") {
    for (int stride : {1, 2}) {
        auto x = random_tensor<double>({2, 3, 6, 5}, 11);
        auto w = random_tensor<double>({4, 3, 3, 3}, 12, 0.5);
        auto b = random_tensor<double>({4}, 13, 0.1);
        auto ref = conv_reference(x, w, b, stride, 1);
        auto out = nn::conv2d(Var<double>::constant(x), Var<double>::constant(w),
                              Var<double>::constant(b), stride, 1);
        REQUIRE(out.value().shape == ref.shape);
        for (std::size_t i = 0; i < ref.v.size(); ++i)
            CHECK(out.value().v[i] == doctest::Approx(ref.v[i]).epsilon(1e-12));
    }
}

TEST_CASE("conv2d gradients match finite differences") {
    for (int stride : {1, 2}) {
        auto x = Var<double>::param(random_tensor<double>({2, 2, 5, 4}, 21));
        auto w = Var<double>::param(random_tensor<double>({3, 2, 3, 3}, 22, 0.5));
        auto b = Var<double>::param(random_tensor<double>({3}, 23, 0.1));
        auto fn = [&]() { return weighted_sum(nn::conv2d(x, w, b, stride, 1), 99); };
        CHECK(max_grad_rel_error<double>({x, w, b}, fn, 1e-6, 1e-8) < 1e-6);
    }
}

TEST_CASE("batchnorm2d train-mode gradients match finite differences") {
    auto x = Var<double>::param(random_tensor<double>({3, 2, 4, 4}, 31));
    auto g = Var<double>::param(random_tensor<double>({2}, 32, 0.3));
    auto be = Var<double>::param(random_tensor<double>({2}, 33, 0.3));
    for (auto& v : g.value().v) v += 1.0;
    auto fn = [&]() {
        Tensor<double> rm({2}), rv({2}, 1.0); // fresh buffers: stats must not leak between evals
        return weighted_sum(nn::batchnorm2d(x, g, be, &rm, &rv, /*training=*/true), 98);
    };
    CHECK(max_grad_rel_error<double>({x, g, be}, fn, 1e-6, 1e-8) < 1e-5);
}

TEST_CASE("batchnorm2d eval mode uses running stats and matches finite differences") {
    auto x = Var<double>::param(random_tensor<double>({2, 2, 3, 3}, 41));
    auto g = Var<double>::param(Tensor<double>({2}, 1.3));
    auto be = Var<double>::param(Tensor<double>({2}, 0.2));
    Tensor<double> rm({2}, 0.4), rv({2}, 2.0);
    auto fn = [&]() { return weighted_sum(nn::batchnorm2d(x, g, be, &rm, &rv, false), 97); };
    CHECK(max_grad_rel_error<double>({x, g, be}, fn, 1e-6, 1e-8) < 1e-6);
    // eval mode must leave the buffers untouched
    CHECK(rm.v[0] == 0.4);
    CHECK(rv.v[1] == 2.0);
}

TEST_CASE("elementwise and shape ops match finite differences") {
    auto x = Var<double>::param(random_tensor<double>({2, 4, 3, 3}, 51));
    auto y = Var<double>::param(random_tensor<double>({2, 4, 3, 3}, 52));
    auto p = Var<double>::param(random_tensor<double>({4}, 53));

    auto check = [&](const std::function<Var<double>()>& fn, double tol = 1e-6) {
        CHECK(max_grad_rel_error<double>({x, y, p}, fn, 1e-6, 1e-8) < tol);
    };
    check([&] { return weighted_sum(nn::elu(x), 1); });
    check([&] { return weighted_sum(nn::sigmoid(x), 2); });
    check([&] { return weighted_sum(nn::exp(x), 3); });
    check([&] { return weighted_sum(nn::affine(x, 2.5, -0.5), 4); });
    check([&] { return weighted_sum(nn::add(x, y), 5); });
    check([&] { return weighted_sum(nn::sub(x, y), 6); });
    check([&] { return weighted_sum(nn::mul(x, y), 7); });
    check([&] { return weighted_sum(nn::concat_channels(x, y), 8); });
    check([&] { return weighted_sum(nn::slice_channels(x, 1, 3), 9); });
    check([&] { return weighted_sum(nn::upsample_nearest2(x), 10); });
    check([&] { return weighted_sum(nn::broadcast_chw(p, 2, 3, 3), 11); });
    check([&] { return nn::mean_all(nn::mul(x, y)); });
}

TEST_CASE("clamp blocks gradients outside the active range") {
    auto x = Var<double>::param(Tensor<double>({4}));
    x.value().v = {-2.0, -0.5, 0.5, 2.0};
    auto loss = nn::sum_all(nn::clamp(x, -1.0, 1.0));
    nn::backward(loss);
    CHECK(x.grad().v[0] == 0.0);
    CHECK(x.grad().v[1] == 1.0);
    CHECK(x.grad().v[2] == 1.0);
    CHECK(x.grad().v[3] == 0.0);
}

TEST_CASE("clamp_below passes value and gates gradient at the threshold") {
    auto below = Var<double>::param(Tensor<double>({1}, 0.3));
    auto clamped = nn::clamp_below(below, 1.0);
    CHECK(clamped.scalar() == 1.0);
    nn::backward(clamped);
    CHECK(below.grad().v[0] == 0.0);

    auto above = Var<double>::param(Tensor<double>({1}, 2.0));
    auto passed = nn::clamp_below(above, 1.0);
    CHECK(passed.scalar() == 2.0);
    nn::backward(passed);
    CHECK(above.grad().v[0] == 1.0);
}

TEST_CASE("kl_map agrees with the closed form and finite differences") {
    auto mu_q = Var<double>::param(random_tensor<double>({1, 2, 2, 2}, 61));
    auto ls_q = Var<double>::param(random_tensor<double>({1, 2, 2, 2}, 62, 0.4));
    auto mu_p = Var<double>::param(random_tensor<double>({1, 2, 2, 2}, 63));
    auto ls_p = Var<double>::param(random_tensor<double>({1, 2, 2, 2}, 64, 0.4));

    auto map = nn::kl_map(mu_q, ls_q, mu_p, ls_p);
    std::vector<double> qm(mu_q.value().v.begin(), mu_q.value().v.end());
    std::vector<double> pm(mu_p.value().v.begin(), mu_p.value().v.end());
    std::vector<double> qs, ps;
    for (double v : ls_q.value().v) qs.push_back(std::exp(v));
    for (double v : ls_p.value().v) ps.push_back(std::exp(v));
    double total = 0;
    for (double v : map.value().v) total += v;
    CHECK(total == doctest::Approx(kl_diag_gaussians(qm, qs, pm, ps)).epsilon(1e-10));

    auto fn = [&] { return weighted_sum(nn::kl_map(mu_q, ls_q, mu_p, ls_p), 96); };
    CHECK(max_grad_rel_error<double>({mu_q, ls_q, mu_p, ls_p}, fn, 1e-6, 1e-8) < 1e-6);
}

TEST_CASE("map_with_grad routes the provided derivative") {
    auto x = Var<double>::param(random_tensor<double>({2, 3}, 71));
    Tensor<double> val(x.value().shape), dval(x.value().shape);
    for (std::size_t i = 0; i < val.v.size(); ++i) {
        val.v[i] = std::cos(x.value().v[i]);
        dval.v[i] = -std::sin(x.value().v[i]);
    }
    auto fn = [&] {
        Tensor<double> v(x.value().shape), d(x.value().shape);
        for (std::size_t i = 0; i < v.v.size(); ++i) {
            v.v[i] = std::cos(x.value().v[i]);
            d.v[i] = -std::sin(x.value().v[i]);
        }
        return nn::sum_all(nn::map_with_grad(x, std::move(v), std::move(d)));
    };
    CHECK(max_grad_rel_error<double>({x}, fn, 1e-6, 1e-8) < 1e-8);
}

TEST_CASE("no-grad guard produces constant nodes") {
    auto x = Var<double>::param(random_tensor<double>({2, 2}, 81));
    nn::NoGradGuard ng;
    auto y = nn::elu(x);
    CHECK_FALSE(y.requires_grad());
}

TEST_CASE("parameters accumulate gradients from shared use") {
    auto x = Var<double>::param(Tensor<double>({2}, 3.0));
    auto loss = nn::sum_all(nn::mul(x, x)); // d/dx x^2 = 2x
    nn::backward(loss);
    CHECK(x.grad().v[0] == doctest::Approx(6.0));
    CHECK(x.grad().v[1] == doctest::Approx(6.0));
}

} // TEST_SUITE
