#pragma once

// Umbrella header for the hierarchical diversity-denoising toolkit.

#include "hdn/core/alloc.hpp"
#include "hdn/core/common.hpp"
#include "hdn/core/image.hpp"
#include "hdn/core/parallel.hpp"
#include "hdn/core/rng.hpp"
#include "hdn/core/tensor.hpp"
#include "hdn/infer/inference.hpp"
#include "hdn/io/checkpoint.hpp"
#include "hdn/io/tiff_io.hpp"
#include "hdn/loss/losses.hpp"
#include "hdn/metrics/metrics.hpp"
#include "hdn/model/config.hpp"
#include "hdn/model/ladder.hpp"
#include "hdn/model/parameters.hpp"
#include "hdn/noise/fit.hpp"
#include "hdn/noise/noise_model.hpp"
#include "hdn/structured/structured.hpp"
#include "hdn/synth/forward_model.hpp"
#include "hdn/synth/toy_data.hpp"
#include "hdn/train/training.hpp"
