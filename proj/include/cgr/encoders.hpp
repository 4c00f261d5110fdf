#pragma once

#include <utility>

#include "cgr/rng.hpp"
#include "cgr/scene.hpp"
#include "cgr/tensor.hpp"

namespace cgr {

// Backbone stand-ins: scenes are rendered straight into feature space from
// learnable per-category signatures, and task text is a lookup into one
// embedding table shared by the affordance and context parts.

struct EncoderConfig {
  int grid_h = 16;
  int grid_w = 16;
  int dim = 32;        // divisible by 4
  double noise = 0.02; // seeded per-scene feature noise, in signature units
};

struct EncoderParams {
  Tensor category_signatures;  // [n_categories, d]
  Tensor token_embedding;      // [vocab, d]
};

EncoderParams init_encoder_params(Rng& rng, int n_categories, int vocab, int dim);

// Sinusoidal grid encoding, row half + column half, values in [-1, 1].
// Distinct cells always differ in some channel for desk-scale grids.
Tensor positional_encoding_2d(int grid_h, int grid_w, int dim);

// Cell feature = sum over objects of signature * Gaussian kernel of the
// distance from cell center to object center (bandwidth 0.5*max(w,h)),
// plus positional encoding, plus seeded noise. Gradients flow into the
// signatures through the kernel weights.
Tensor encode_scene(const SceneSample& scene, const EncoderParams& params,
                    const EncoderConfig& cfg);

// (F_a, F_c) embedding rows, one per token, from the shared table.
std::pair<Tensor, Tensor> encode_task(const TaskSpec& task, const EncoderParams& params);

}  // namespace cgr
