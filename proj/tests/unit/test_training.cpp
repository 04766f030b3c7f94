#include <doctest.h>

#include <filesystem>

#include "test_util.hpp"

using namespace hdn;

namespace {

std::string temp_dir(const std::string& tag) {
    auto p = std::filesystem::temp_directory_path() / ("hdn_test_" + tag);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p.string();
}

struct ToySetup {
    std::vector<Image> train, val;
    HdnConfig cfg;
    TrainConfig tc;
    NoiseModel nm = NoiseModel::gaussian(0.1);
};

ToySetup toy_setup(std::uint64_t seed, int steps) {
    ToySetup s;
    auto ds = make_toy_dataset("striped_blobs", 40, 32, 42);
    s.train.assign(ds.corrupted.begin(), ds.corrupted.begin() + 34);
    s.val.assign(ds.corrupted.begin() + 34, ds.corrupted.end());
    s.cfg = testutil::tiny_config(3, 16);
    s.cfg.latent_channels = 4;
    s.cfg.initial_filters = 8;
    s.cfg.dropout_p = 0.2;
    s.cfg.free_bits = 0.0;
    s.nm = NoiseModel::gaussian(ds.params["pixel_sigma"].get<double>());
    s.tc.learning_rate = 1e-3;
    s.tc.total_steps = steps;
    s.tc.batch_size = 4;
    s.tc.patch_size = 16;
    s.tc.optimizer = "adamax";
    s.tc.seed = seed;
    s.tc.checkpoint_every = std::max(1, steps / 4);
    return s;
}

} // namespace

TEST_SUITE("training") {

TEST_CASE("extract_patches stays in bounds and is seed-deterministic") {
    std::vector<Image> images{testutil::random_image(512, 512, 1)};
    auto batch = extract_patches(images, 64, 10, 3);
    REQUIRE(batch.patches.size() == 10);
    for (std::size_t i = 0; i < 10; ++i) {
        CHECK(batch.patches[i].height == 64);
        CHECK(batch.patches[i].width == 64);
        CHECK(batch.corners[i].first >= 0);
        CHECK(batch.corners[i].first <= 512 - 64);
        CHECK(batch.corners[i].second <= 512 - 64);
        // content matches the source at the recorded corner
        CHECK(batch.patches[i].at(5, 7) ==
              images[0].at(batch.corners[i].first + 5, batch.corners[i].second + 7));
    }
    auto again = extract_patches(images, 64, 10, 3);
    for (std::size_t i = 0; i < 10; ++i) CHECK(batch.corners[i] == again.corners[i]);
}

TEST_CASE("a patch the size of the image is the image") {
    std::vector<Image> images{testutil::random_image(48, 48, 2)};
    auto batch = extract_patches(images, 48, 3, 7);
    for (const auto& p : batch.patches) CHECK(p.px == images[0].px);
}

TEST_CASE("undersized images are skipped with a warning count, all skipped is an error") {
    std::vector<Image> images{Image(16, 16), testutil::random_image(64, 64, 3)};
    auto batch = extract_patches(images, 32, 20, 1);
    CHECK(batch.skipped_images == 1);
    for (int idx : batch.image_indices) CHECK(idx == 1);
    CHECK_THROWS_AS(extract_patches({Image(8, 8)}, 32, 1, 1), ConfigError);
}

TEST_CASE("patch corners are uniform under a chi-squared test") {
    std::vector<Image> images{testutil::random_image(40, 40, 4)};
    const int patch = 32; // corners in [0,8]x[0,8] = 81 cells
    const int draws = 100000;
    auto batch = extract_patches(images, patch, draws, 11);
    std::vector<int> counts(81, 0);
    for (const auto& [y, x] : batch.corners) ++counts[static_cast<std::size_t>(y * 9 + x)];
    const double expected = static_cast<double>(draws) / 81.0;
    double chi2 = 0;
    for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
    // dof = 80; Wilson-Hilferty critical value at p = 0.01
    const double dof = 80.0;
    const double z99 = 2.3263478740408408;
    const double crit = dof * std::pow(1.0 - 2.0 / (9.0 * dof) + z99 * std::sqrt(2.0 / (9.0 * dof)), 3.0);
    MESSAGE("chi2 = ", chi2, ", crit(p=0.01) = ", crit);
    CHECK(chi2 < crit);
}

TEST_CASE("zero learning rate leaves parameters bitwise unchanged") {
    auto s = toy_setup(5, 10);
    s.tc.learning_rate = 0.0;
    auto model = build_model<float>(s.cfg, 9);
    std::vector<Tensor<float>> before;
    for (auto& [n, v] : model.params) before.push_back(v.value());
    train(model, s.train, s.val, s.nm, s.tc, temp_dir("lr0"));
    for (std::size_t i = 0; i < model.params.size(); ++i)
        CHECK(model.params[i].second.value().v == before[i].v);
}

TEST_CASE("validation never mutates parameters or buffers") {
    auto s = toy_setup(6, 1);
    auto model = build_model<float>(s.cfg, 9);
    std::vector<Tensor<float>> params_before;
    for (auto& [n, v] : model.params) params_before.push_back(v.value());
    std::vector<Tensor<float>> buffers_before;
    for (auto& [n, b] : model.buffers) buffers_before.push_back(b);
    detail::validation_loss(model, s.val, s.nm, 1);
    for (std::size_t i = 0; i < model.params.size(); ++i)
        CHECK(model.params[i].second.value().v == params_before[i].v);
    for (std::size_t i = 0; i < model.buffers.size(); ++i)
        CHECK(model.buffers[i].second.v == buffers_before[i].v);
}

TEST_CASE("training resumed from a checkpoint replays the uninterrupted run") {
    auto s = toy_setup(7, 40);
    const std::string full_dir = temp_dir("full");
    const std::string half_dir = temp_dir("half");

    auto uninterrupted = build_model<float>(s.cfg, 9);
    auto full = train(uninterrupted, s.train, s.val, s.nm, s.tc, full_dir);

    auto first_half = toy_setup(7, 20);
    auto model_a = build_model<float>(first_half.cfg, 9);
    train(model_a, first_half.train, first_half.val, first_half.nm, first_half.tc, half_dir);

    auto ck = load_checkpoint(half_dir + "/last.ckpt");
    REQUIRE(ck.train_step == 20);
    REQUIRE(ck.optimizer.has_value());
    auto resumed = train(ck.model, s.train, s.val, s.nm, s.tc, temp_dir("resume"), ck.train_step,
                         &*ck.optimizer);

    // matching steps agree within the contract tolerance (bitwise, in fact)
    for (const auto& rec : resumed.history) {
        const auto& ref = full.history[static_cast<std::size_t>(rec.step - 1)];
        REQUIRE(ref.step == rec.step);
        CHECK(rec.total == doctest::Approx(ref.total).epsilon(1e-4));
    }
    // final parameters are bitwise identical
    for (std::size_t i = 0; i < ck.model.params.size(); ++i)
        CHECK(ck.model.params[i].second.value().v ==
              uninterrupted.params[i].second.value().v);
}

TEST_CASE("validation loss of a striped toy run drops by at least 10%" *
          doctest::description("run-to-run oracle across 3 seeds")) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        auto s = toy_setup(seed, 2000);
        auto model = build_model<float>(s.cfg, seed);
        auto result = train(model, s.train, s.val, s.nm, s.tc, temp_dir("drop" + std::to_string(seed)));
        double early = 0;
        for (int i = 0; i < 100; ++i) early += result.history[static_cast<std::size_t>(i)].total;
        early /= 100.0;
        const double final_val = result.val_history.back().second;
        MESSAGE("seed ", seed, ": step-100 mean ", early, " -> final val ", final_val);
        CHECK(final_val <= early - 0.1 * std::abs(early));
    }
}

TEST_CASE("ablation switches hit exactly their target") {
    auto cfg = testutil::tiny_config(3, 16);
    TrainConfig tc;
    tc.patch_size = 16;

    TrainConfig no_bn = tc;
    no_bn.disable_batch_norm = true;
    auto base = build_model<float>(cfg, 1);
    auto stripped = build_model<float>(no_bn.apply_ablations(cfg), 1);
    CHECK(stripped.parameter_count() < base.parameter_count());
    for (auto& [name, v] : stripped.params) CHECK(name.find(".bn") == std::string::npos);
    CHECK(stripped.buffers.empty());

    TrainConfig no_skips = tc;
    no_skips.disable_skips = true;
    auto unskipped = build_model<float>(no_skips.apply_ablations(cfg), 1);
    CHECK(unskipped.at("td.L2.merge.w").value().shape == base.at("td.L2.merge.w").value().shape);
    CHECK(unskipped.at("td.L2.prior.w").value().shape == base.at("td.L2.prior.w").value().shape);

    TrainConfig more_blocks = tc;
    more_blocks.blocks_per_layer_override = 2;
    CHECK(build_model<float>(more_blocks.apply_ablations(cfg), 1).parameter_count() >
          base.parameter_count());

    TrainConfig fewer_layers = tc;
    fewer_layers.n_layers_override = 2;
    CHECK(build_model<float>(fewer_layers.apply_ablations(cfg), 1).parameter_count() <
          base.parameter_count());
}

TEST_CASE("train config serializes through JSON") {
    TrainConfig tc;
    tc.learning_rate = 3e-4;
    tc.total_steps = 123;
    tc.disable_skips = true;
    nlohmann::json j = tc;
    TrainConfig back = j.get<TrainConfig>();
    CHECK(back.total_steps == 123);
    CHECK(back.disable_skips);
    CHECK(back.learning_rate == tc.learning_rate);
}

} // TEST_SUITE
