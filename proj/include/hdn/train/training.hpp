#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <string>
#include <vector>

#include "hdn/io/checkpoint.hpp"
#include "hdn/loss/losses.hpp"
#include "hdn/model/ladder.hpp"

namespace hdn {

struct TrainConfig {
    double learning_rate = 3e-4;
    int total_steps = 200000;
    int batch_size = 64;
    int patch_size = 64;
    std::string optimizer = "adamax";
    std::uint64_t seed = 0;
    int checkpoint_every = 1000;
    double grad_clip_norm = 100.0; // 0 disables clipping
    // ablation switches (applied to the architecture before building)
    bool disable_batch_norm = false;
    bool disable_skips = false;
    int blocks_per_layer_override = 0; // 0 keeps the architecture value
    int n_layers_override = 0;

    void validate() const {
        if (total_steps < 1) throw ConfigError("total_steps must be > 0");
        if (batch_size < 1) throw ConfigError("batch_size must be > 0");
        if (patch_size < 1) throw ConfigError("patch_size must be > 0");
        if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be > 0");
        if (learning_rate < 0) throw ConfigError("learning_rate must be >= 0");
    }

    HdnConfig apply_ablations(HdnConfig cfg) const {
        if (disable_batch_norm) cfg.use_batch_norm = false;
        if (disable_skips) cfg.use_topdown_skips = false;
        if (blocks_per_layer_override > 0) cfg.blocks_per_layer = blocks_per_layer_override;
        if (n_layers_override > 0) cfg.n_layers = n_layers_override;
        cfg.patch_height = patch_size;
        cfg.patch_width = patch_size;
        return cfg;
    }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"learning_rate", c.learning_rate},
                       {"total_steps", c.total_steps},
                       {"batch_size", c.batch_size},
                       {"patch_size", c.patch_size},
                       {"optimizer", c.optimizer},
                       {"seed", c.seed},
                       {"checkpoint_every", c.checkpoint_every},
                       {"grad_clip_norm", c.grad_clip_norm},
                       {"disable_batch_norm", c.disable_batch_norm},
                       {"disable_skips", c.disable_skips},
                       {"blocks_per_layer_override", c.blocks_per_layer_override},
                       {"n_layers_override", c.n_layers_override}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.total_steps = j.value("total_steps", c.total_steps);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.patch_size = j.value("patch_size", c.patch_size);
    c.optimizer = j.value("optimizer", c.optimizer);
    c.seed = j.value("seed", c.seed);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.grad_clip_norm = j.value("grad_clip_norm", c.grad_clip_norm);
    c.disable_batch_norm = j.value("disable_batch_norm", c.disable_batch_norm);
    c.disable_skips = j.value("disable_skips", c.disable_skips);
    c.blocks_per_layer_override = j.value("blocks_per_layer_override", c.blocks_per_layer_override);
    c.n_layers_override = j.value("n_layers_override", c.n_layers_override);
}

struct PatchBatch {
    std::vector<Image> patches;
    std::vector<int> image_indices;
    std::vector<std::pair<int, int>> corners; // top-left (y, x)
    std::size_t skipped_images = 0;
};

// Uniformly random eligible image, uniformly random top-left corner.
inline PatchBatch extract_patches(const std::vector<Image>& images, int patch_size, int count,
                                  std::uint64_t seed) {
    PatchBatch out;
    std::vector<int> eligible;
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (images[i].height >= patch_size && images[i].width >= patch_size)
            eligible.push_back(static_cast<int>(i));
        else
            ++out.skipped_images;
    }
    if (eligible.empty())
        throw ConfigError("extract_patches: every image is smaller than the patch size");
    Rng rng(hash_str(seed, "patches"));
    for (int c = 0; c < count; ++c) {
        const int idx = eligible[static_cast<std::size_t>(rng.below(eligible.size()))];
        const Image& img = images[static_cast<std::size_t>(idx)];
        const int y = static_cast<int>(rng.below(static_cast<std::uint64_t>(img.height - patch_size + 1)));
        const int x = static_cast<int>(rng.below(static_cast<std::uint64_t>(img.width - patch_size + 1)));
        Image patch(patch_size, patch_size);
        for (int py = 0; py < patch_size; ++py)
            for (int px = 0; px < patch_size; ++px) patch.at(py, px) = img.at(y + py, x + px);
        out.patches.push_back(std::move(patch));
        out.image_indices.push_back(idx);
        out.corners.emplace_back(y, x);
    }
    return out;
}

struct TrainStepRecord {
    int step = 0;
    double reconstruction = 0;
    std::vector<double> kl_per_layer;
    double total = 0;
};

struct TrainResult {
    std::vector<TrainStepRecord> history;
    std::vector<std::pair<int, double>> val_history; // (step, val total loss)
    std::string best_checkpoint;
    std::string last_checkpoint;
    double best_val_loss = std::numeric_limits<double>::infinity();
};

namespace detail {

inline Tensor<float> batch_to_tensor(const std::vector<Image>& patches) {
    const int n = static_cast<int>(patches.size());
    const int h = patches[0].height, w = patches[0].width;
    Tensor<float> t({n, 1, h, w});
    for (int i = 0; i < n; ++i)
        std::copy(patches[static_cast<std::size_t>(i)].px.begin(),
                  patches[static_cast<std::size_t>(i)].px.end(),
                  t.data() + static_cast<std::size_t>(i) * h * w);
    return t;
}

// Validation total loss in eval mode; never mutates parameters or buffers.
inline double validation_loss(ModelParameters<float>& model, const std::vector<Image>& val_images,
                              const NoiseModel& nm, std::uint64_t seed) {
    nn::NoGradGuard ng;
    double total = 0;
    for (std::size_t i = 0; i < val_images.size(); ++i) {
        Tensor<float> x = batch_to_tensor({val_images[i]});
        Tensor<float> x_std = x;
        for (auto& v : x_std.v) v = static_cast<float>((v - model.data_mean) / model.data_std);
        auto dec = denoise_forward(model, nn::Var<float>::constant(std::move(x_std)),
                                   all_posterior(model.config.n_layers),
                                   {hash_combine(hash_str(seed, "val"), static_cast<std::uint64_t>(i))});
        auto loss = hdn_loss(x, dec, nm, model.config.free_bits, model.data_mean, model.data_std);
        total += loss.total;
    }
    return total / static_cast<double>(val_images.size());
}

} // namespace detail

// Patch-based unsupervised training. Patch corners, latent noise and dropout
// are all derived from (seed, step), so resuming from a checkpoint replays
// the identical stream.
inline TrainResult train(ModelParameters<float>& model, const std::vector<Image>& train_images,
                         const std::vector<Image>& val_images, const NoiseModel& nm,
                         const TrainConfig& tc, const std::string& out_dir,
                         std::int64_t start_step = 0, const OptimizerState* resume_opt = nullptr) {
    tc.validate();
    if (train_images.empty() || val_images.empty())
        throw ConfigError("train: need non-empty train and validation sets");
    std::filesystem::create_directories(out_dir);

    if (start_step == 0) {
        double s = 0, s2 = 0;
        std::size_t n = 0;
        for (const auto& img : train_images) {
            for (float v : img.px) {
                s += v;
                s2 += static_cast<double>(v) * v;
            }
            n += img.px.size();
        }
        model.data_mean = s / static_cast<double>(n);
        model.data_std = std::sqrt(std::max(1e-12, s2 / static_cast<double>(n) - model.data_mean * model.data_mean));
    }

    nn::Optimizer<float> opt(tc.optimizer, model.trainable(), static_cast<float>(tc.learning_rate));
    if (resume_opt) restore_optimizer(opt, *resume_opt);

    std::ofstream log(out_dir + "/train_log.txt", start_step == 0 ? std::ios::trunc : std::ios::app);
    TrainResult result;
    result.last_checkpoint = out_dir + "/last.ckpt";
    result.best_checkpoint = out_dir + "/best.ckpt";

    for (int step = static_cast<int>(start_step) + 1; step <= tc.total_steps; ++step) {
        PatchBatch batch;
        batch.patches.reserve(static_cast<std::size_t>(tc.batch_size));
        auto drawn = extract_patches(train_images, tc.patch_size, tc.batch_size,
                                     hash_combine(tc.seed, 0x9A7Cu, static_cast<std::uint64_t>(step)));
        Tensor<float> x_raw = detail::batch_to_tensor(drawn.patches);
        Tensor<float> x_std = x_raw;
        for (auto& v : x_std.v) v = static_cast<float>((v - model.data_mean) / model.data_std);

        std::vector<std::uint64_t> item_seeds(static_cast<std::size_t>(tc.batch_size));
        for (int b = 0; b < tc.batch_size; ++b)
            item_seeds[static_cast<std::size_t>(b)] =
                hash_combine(tc.seed, 0xE9Bu, static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(b));

        auto dec = denoise_forward(model, nn::Var<float>::constant(std::move(x_std)),
                                   all_posterior(model.config.n_layers), item_seeds,
                                   /*train=*/true,
                                   hash_combine(tc.seed, 0xD0u, static_cast<std::uint64_t>(step)));
        LossBreakdown<float> loss;
        try {
            loss = hdn_loss(x_raw, dec, nm, model.config.free_bits, model.data_mean, model.data_std);
        } catch (const NumericsError& e) {
            std::string dump = std::string(e.what()) + "; step " + std::to_string(step) + "; batch images:";
            for (int idx : drawn.image_indices) dump += " " + std::to_string(idx);
            throw NumericsError(dump);
        }

        opt.zero_grad();
        nn::backward(loss.total_var);
        if (tc.grad_clip_norm > 0) opt.clip_global_norm(tc.grad_clip_norm);
        opt.step();

        TrainStepRecord rec{step, loss.reconstruction, loss.kl_per_layer, loss.total};
        result.history.push_back(rec);
        log << step << ' ' << loss.reconstruction;
        for (double kl : loss.kl_per_layer) log << ' ' << kl;
        log << ' ' << loss.total << '\n';

        if (step % tc.checkpoint_every == 0 || step == tc.total_steps) {
            const double val = detail::validation_loss(model, val_images, nm, tc.seed);
            result.val_history.emplace_back(step, val);
            save_checkpoint(result.last_checkpoint, model, &opt, &nm, step);
            if (val < result.best_val_loss) {
                result.best_val_loss = val;
                save_checkpoint(result.best_checkpoint, model, &opt, &nm, step);
            }
            log << "# val " << step << ' ' << val << '\n';
            log.flush();
        }
    }
    return result;
}

} // namespace hdn
