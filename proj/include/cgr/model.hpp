#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cgr/encoders.hpp"
#include "cgr/ggu.hpp"
#include "cgr/scene.hpp"
#include "cgr/trm.hpp"

namespace cgr {

struct ModelConfig {
  int dim = 32;
  int grid_h = 16;
  int grid_w = 16;
  int k_objects = 24;
  int k_groups = 8;
  int n_blocks = 2;
  int n_heads = 4;
  int ffn_hidden = 64;
  double noise = 0.02;
  int n_categories = 12;
  int vocab = 9;
  bool gumbel_shared_noise = false;
  bool straight_through = true;
};

struct Model {
  ModelConfig cfg;
  EncoderParams enc;
  TrmParams trm;
  GguParams ggu;
};

Model init_model(const ModelConfig& cfg, std::uint64_t seed);

// Stable name -> tensor handles over every learnable parameter; the order is
// the checkpoint and optimizer order.
std::vector<std::pair<std::string, Tensor>> named_params(const Model& m);

struct ForwardOutputs {
  QuerySet query_set;
  Tensor o_tilde, g_tilde;
  GroupAssignment assignment;
  GroupedFeatures grouped;
  Tensor theta_r;
  HeadOutputs head;
};

// One (scene, task) pass through encoders -> TRM -> GGU -> heads. Training
// mode draws Gumbel noise from `rng`; evaluation mode leaves it at zero.
ForwardOutputs model_forward(const Model& m, const SceneSample& scene,
                             const TaskSpec& task, bool train_mode, double tau,
                             Rng* rng);

Prediction infer(const Model& m, const SceneSample& scene, const TaskSpec& task,
                 double det_thresh, double theta_rel, double nms_iou = 0.7);

}  // namespace cgr
