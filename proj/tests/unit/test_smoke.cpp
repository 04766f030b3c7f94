#include <doctest.h>

#include "hdn/hdn.hpp"

TEST_SUITE("smoke") {

TEST_CASE("umbrella header compiles and a tiny model builds") {
    hdn::HdnConfig cfg;
    cfg.n_layers = 1;
    cfg.latent_channels = 2;
    cfg.initial_filters = 4;
    cfg.blocks_per_layer = 1;
    cfg.dropout_p = 0.0;
    cfg.patch_height = 8;
    cfg.patch_width = 8;
    auto m = hdn::build_model<float>(cfg, 1);
    CHECK(m.parameter_count() > 0);
}

} // TEST_SUITE
