#pragma once

#include <array>
#include <vector>

#include "cgr/rng.hpp"
#include "cgr/tensor.hpp"
#include "cgr/trm.hpp"

namespace cgr {

// Graph group update: Gumbel-Softmax grouping with straight-through hard
// assignment, group-mean aggregation, context-conditioned fully connected
// message passing, and the detection / ranking heads.

struct GguParams {
  Tensor w_obj, w_grp;              // grouping logit projections
  Tensor w5, w6, w7, w8, w9;        // graph update projections
  Tensor rel_w, rel_b;              // relevance logit head, d -> 1
  Tensor box_w1, box_b1, box_w2, box_b2, box_w3, box_b3;  // box head, d -> 4
  Tensor rank_w, rank_b;            // rank score head, d -> 1
};

GguParams init_ggu(Rng& rng, int dim);

struct GumbelConfig {
  double tau = 1.0;
  bool sample_noise = true;     // false in evaluation mode
  bool shared_noise = false;    // one draw per group, shared across objects
  bool straight_through = true; // soft gradients through the hard routing
};

struct GroupAssignment {
  Tensor soft;            // [K_o, K_g] probabilities
  std::vector<int> hard;  // argmax group per object
  Tensor routing;         // one-hot values; gradients follow soft when straight-through
  bool straight_through = true;
};

struct GroupedFeatures {
  Tensor theta;            // [K_o, d] object features + their group embedding
  Tensor phi;              // [K_g, d] group means, zero rows for empty groups
  std::vector<int> sizes;  // members per group
};

GroupAssignment gumbel_group(const Tensor& objs, const Tensor& group_tokens,
                             const GguParams& p, const GumbelConfig& cfg, Rng* rng);

GroupedFeatures aggregate(const Tensor& objs, const GroupAssignment& assignment);

// w_ji = softmax_j((theta_j W5 * mean(T_c) W6) . (theta_i W7)); messages
// theta_j W8 weighted by w, summed, projected by W9, added residually.
Tensor graph_update(const Tensor& theta, const Tensor& task_context, const GguParams& p);

struct HeadOutputs {
  Tensor boxes;        // [K_o, 4] in [0,1], cx/cy offset from the source cell center
  Tensor rel_logits;   // [K_o, 1]
  Tensor rank_scores;  // [K_o, 1], lower = higher priority
};

HeadOutputs heads(const Tensor& objs, const Tensor& theta_r, const GguParams& p,
                  const std::vector<int>& query_src, int grid_h, int grid_w);

struct PredictedObject {
  std::array<double, 4> bbox{};
  double relevance = 0.0;    // detection confidence
  double rank_score = 0.0;
  int group = 0;             // hard group id
  int group_rank = 0;        // consecutive from 1, ascending group-mean score
  bool predicted_relevant = false;
  int query_index = 0;
};

struct Prediction {
  std::vector<PredictedObject> objects;
};

// Threshold, suppress, rank: relevance >= det_thresh, greedy NMS at `nms_iou`,
// group ranks by ascending group-mean rank score, rank score > theta_rel
// flagged irrelevant. Empty result when nothing survives the threshold.
Prediction finalize_prediction(const HeadOutputs& h, const GroupAssignment& assignment,
                               double det_thresh, double theta_rel, double nms_iou = 0.7);

}  // namespace cgr
