#pragma once

#include <json.hpp>
#include <string>
#include <utility>

#include "hdn/core/common.hpp"

namespace hdn {

// Full architectural hyperparameter record for the hierarchical model.
struct HdnConfig {
    int n_layers = 3;            // stochastic latent groups, 1 = full resolution
    int latent_channels = 32;    // channels per latent group
    int initial_filters = 64;    // deterministic feature width on both paths
    int blocks_per_layer = 5;    // gated residual blocks per path per layer
    double dropout_p = 0.2;
    int downsample_factor = 2;   // spatial reduction between consecutive layers
    bool use_batch_norm = true;
    bool use_topdown_skips = true;
    double free_bits = 1.0;      // nats per layer per input pixel
    int patch_height = 64;
    int patch_width = 64;

    int scale_divisor() const {
        int d = 1;
        for (int i = 1; i < n_layers; ++i) d *= downsample_factor;
        return d;
    }

    void validate() const {
        if (n_layers < 1) throw ConfigError("n_layers must be >= 1");
        if (latent_channels < 1) throw ConfigError("latent_channels must be >= 1");
        if (initial_filters < 1) throw ConfigError("initial_filters must be >= 1");
        if (blocks_per_layer < 1) throw ConfigError("blocks_per_layer must be >= 1");
        if (dropout_p < 0.0 || dropout_p > 1.0) throw ConfigError("dropout_p must be in [0,1]");
        if (downsample_factor != 2)
            throw ConfigError("downsample_factor: only 2 is supported");
        if (free_bits < 0.0) throw ConfigError("free_bits must be >= 0");
        if (patch_height < 1 || patch_width < 1)
            throw ConfigError("input_patch_size must be positive");
        const int d = scale_divisor();
        if (patch_height % d != 0 || patch_width % d != 0)
            throw ConfigError("input_patch_size: " + std::to_string(patch_height) + "x" +
                              std::to_string(patch_width) + " not divisible by " +
                              std::to_string(d) + " (downsample_factor^(n_layers-1))");
    }

    void validate_input_dims(int h, int w) const {
        const int d = scale_divisor();
        if (h % d != 0 || w % d != 0)
            throw ShapeError("input dims " + std::to_string(h) + "x" + std::to_string(w) +
                             " not divisible by " + std::to_string(d));
    }
};

inline void to_json(nlohmann::json& j, const HdnConfig& c) {
    j = nlohmann::json{{"n_layers", c.n_layers},
                       {"latent_channels", c.latent_channels},
                       {"initial_filters", c.initial_filters},
                       {"blocks_per_layer", c.blocks_per_layer},
                       {"dropout_p", c.dropout_p},
                       {"downsample_factor", c.downsample_factor},
                       {"use_batch_norm", c.use_batch_norm},
                       {"use_topdown_skips", c.use_topdown_skips},
                       {"free_bits", c.free_bits},
                       {"patch_height", c.patch_height},
                       {"patch_width", c.patch_width}};
}

inline void from_json(const nlohmann::json& j, HdnConfig& c) {
    c.n_layers = j.value("n_layers", c.n_layers);
    c.latent_channels = j.value("latent_channels", c.latent_channels);
    c.initial_filters = j.value("initial_filters", c.initial_filters);
    c.blocks_per_layer = j.value("blocks_per_layer", c.blocks_per_layer);
    c.dropout_p = j.value("dropout_p", c.dropout_p);
    c.downsample_factor = j.value("downsample_factor", c.downsample_factor);
    c.use_batch_norm = j.value("use_batch_norm", c.use_batch_norm);
    c.use_topdown_skips = j.value("use_topdown_skips", c.use_topdown_skips);
    c.free_bits = j.value("free_bits", c.free_bits);
    c.patch_height = j.value("patch_height", c.patch_height);
    c.patch_width = j.value("patch_width", c.patch_width);
}

} // namespace hdn
