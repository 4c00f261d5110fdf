#include "cgr/ggu.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "cgr/boxes.hpp"
#include "cgr/ops.hpp"

namespace cgr {

namespace {

Tensor gaussian(Rng& rng, int rows, int cols, double scale) {
  std::vector<double> v(static_cast<std::size_t>(rows) * cols);
  for (auto& x : v) x = scale * rng.normal();
  return Tensor::from({rows, cols}, std::move(v), true);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace

GguParams init_ggu(Rng& rng, int dim) {
  const double s = 1.0 / std::sqrt(static_cast<double>(dim));
  GguParams p;
  p.w_obj = gaussian(rng, dim, dim, s);
  p.w_grp = gaussian(rng, dim, dim, s);
  p.w5 = gaussian(rng, dim, dim, s);
  p.w6 = gaussian(rng, dim, dim, s);
  p.w7 = gaussian(rng, dim, dim, s);
  p.w8 = gaussian(rng, dim, dim, s);
  p.w9 = gaussian(rng, dim, dim, s);
  p.rel_w = gaussian(rng, dim, 1, s);
  p.rel_b = Tensor::zeros({1, 1}, true);
  p.box_w1 = gaussian(rng, dim, dim, s);
  p.box_b1 = Tensor::zeros({1, dim}, true);
  p.box_w2 = gaussian(rng, dim, dim, s);
  p.box_b2 = Tensor::zeros({1, dim}, true);
  p.box_w3 = gaussian(rng, dim, 4, s);
  p.box_b3 = Tensor::zeros({1, 4}, true);
  p.rank_w = gaussian(rng, dim, 1, s);
  p.rank_b = Tensor::zeros({1, 1}, true);
  return p;
}

GroupAssignment gumbel_group(const Tensor& objs, const Tensor& group_tokens,
                             const GguParams& p, const GumbelConfig& cfg, Rng* rng) {
  if (cfg.tau <= 0.0)
    throw std::invalid_argument("gumbel_group: temperature must be positive");
  if (cfg.sample_noise && rng == nullptr)
    throw std::invalid_argument("gumbel_group: sampling requested without an rng");
  const int k_o = objs.rows();
  const int k_g = group_tokens.rows();

  Tensor logits = matmul(matmul(objs, p.w_obj), transpose(matmul(group_tokens, p.w_grp)));

  Tensor noise = Tensor::zeros({k_o, k_g});
  if (cfg.sample_noise) {
    if (cfg.shared_noise) {
      std::vector<double> col(k_g);
      for (auto& v : col) v = rng->gumbel();
      for (int i = 0; i < k_o; ++i)
        std::copy(col.begin(), col.end(), noise.data() + static_cast<std::size_t>(i) * k_g);
    } else {
      for (std::size_t i = 0; i < noise.size(); ++i) noise.data()[i] = rng->gumbel();
    }
  }

  GroupAssignment out;
  out.straight_through = cfg.straight_through;
  out.soft = softmax(scale(add(logits, noise), 1.0 / cfg.tau), 1);

  out.hard.resize(k_o);
  std::vector<double> onehot(static_cast<std::size_t>(k_o) * k_g, 0.0);
  for (int i = 0; i < k_o; ++i) {
    const double* row = out.soft.data() + static_cast<std::size_t>(i) * k_g;
    int best = 0;
    for (int j = 1; j < k_g; ++j)
      if (row[j] > row[best]) best = j;
    out.hard[i] = best;
    onehot[static_cast<std::size_t>(i) * k_g + best] = 1.0;
  }
  Tensor hard_onehot = Tensor::from({k_o, k_g}, std::move(onehot));
  // forward value is exactly the one-hot (soft - soft == 0); the gradient of
  // the routing is the gradient of the soft probabilities
  out.routing = cfg.straight_through
                    ? add(hard_onehot, sub(out.soft, stop_grad(out.soft)))
                    : hard_onehot;
  return out;
}

GroupedFeatures aggregate(const Tensor& objs, const GroupAssignment& assignment) {
  const int k_o = objs.rows();
  const int k_g = assignment.routing.cols();
  if (static_cast<int>(assignment.hard.size()) != k_o)
    throw std::invalid_argument("aggregate: assignment does not cover every object");

  GroupedFeatures out;
  out.sizes.assign(k_g, 0);
  for (int g : assignment.hard) {
    if (g < 0 || g >= k_g) throw std::invalid_argument("aggregate: group index out of range");
    ++out.sizes[g];
  }
  std::vector<double> inv(k_g, 0.0);
  for (int j = 0; j < k_g; ++j)
    if (out.sizes[j] > 0) inv[j] = 1.0 / out.sizes[j];

  out.phi = scale_rows(matmul(transpose(assignment.routing), objs), inv);
  out.theta = add(objs, matmul(assignment.routing, out.phi));
  return out;
}

Tensor graph_update(const Tensor& theta, const Tensor& task_context, const GguParams& p) {
  if (task_context.rows() < 1)
    throw std::invalid_argument("graph_update: empty context features");
  Tensor ctx = matmul(mean_rows(task_context), p.w6);  // [1, d]
  Tensor senders = mul_rowvec(matmul(theta, p.w5), ctx);
  Tensor receivers = matmul(theta, p.w7);
  // scores[j][i]: sender j -> receiver i; weights normalized over senders
  Tensor scores = matmul(senders, transpose(receivers));
  Tensor weights = softmax(scores, 0);
  Tensor messages = matmul(theta, p.w8);
  Tensor summed = matmul(transpose(weights), messages);
  return add(theta, matmul(summed, p.w9));
}

HeadOutputs heads(const Tensor& objs, const Tensor& theta_r, const GguParams& p,
                  const std::vector<int>& query_src, int grid_h, int grid_w) {
  const int k_o = objs.rows();
  if (static_cast<int>(query_src.size()) != k_o)
    throw std::invalid_argument("heads: source indices do not match query count");

  HeadOutputs out;
  out.rel_logits = add_rowvec(matmul(objs, p.rel_w), p.rel_b);

  Tensor h1 = relu(add_rowvec(matmul(objs, p.box_w1), p.box_b1));
  Tensor h2 = relu(add_rowvec(matmul(h1, p.box_w2), p.box_b2));
  Tensor raw = add_rowvec(matmul(h2, p.box_w3), p.box_b3);

  // cx/cy decoded as offsets from the source grid cell center
  std::vector<double> offsets(static_cast<std::size_t>(k_o) * 4, 0.0);
  for (int i = 0; i < k_o; ++i) {
    const int row = query_src[i] / grid_w;
    const int col = query_src[i] % grid_w;
    offsets[static_cast<std::size_t>(i) * 4 + 0] = logit((col + 0.5) / grid_w);
    offsets[static_cast<std::size_t>(i) * 4 + 1] = logit((row + 0.5) / grid_h);
  }
  out.boxes = sigmoid(add(raw, Tensor::from({k_o, 4}, std::move(offsets))));
  out.rank_scores = add_rowvec(matmul(theta_r, p.rank_w), p.rank_b);
  return out;
}

Prediction finalize_prediction(const HeadOutputs& h, const GroupAssignment& assignment,
                               double det_thresh, double theta_rel, double nms_iou) {
  const int k_o = h.rel_logits.rows();
  std::vector<int> retained;
  std::vector<std::array<double, 4>> boxes;
  std::vector<double> probs;
  for (int i = 0; i < k_o; ++i) {
    const double z = h.rel_logits.at(i, 0);
    const double prob = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    if (prob < det_thresh) continue;
    retained.push_back(i);
    boxes.push_back({h.boxes.at(i, 0), h.boxes.at(i, 1), h.boxes.at(i, 2), h.boxes.at(i, 3)});
    probs.push_back(prob);
  }

  Prediction pred;
  if (retained.empty()) return pred;

  for (int k : nms_keep(boxes, probs, nms_iou)) {
    PredictedObject o;
    o.query_index = retained[k];
    o.bbox = boxes[k];
    o.relevance = probs[k];
    o.rank_score = h.rank_scores.at(retained[k], 0);
    o.group = assignment.hard[retained[k]];
    o.predicted_relevant = o.rank_score <= theta_rel;
    pred.objects.push_back(o);
  }

  // discrete ranks: groups ordered by ascending mean rank score
  std::map<int, std::pair<double, int>> group_stats;  // group -> (score sum, count)
  for (const auto& o : pred.objects) {
    auto& [sum, count] = group_stats[o.group];
    sum += o.rank_score;
    ++count;
  }
  std::vector<std::pair<double, int>> means;  // (mean, group)
  for (const auto& [g, sc] : group_stats)
    means.emplace_back(sc.first / sc.second, g);
  std::sort(means.begin(), means.end());
  std::map<int, int> group_rank;
  for (std::size_t r = 0; r < means.size(); ++r) group_rank[means[r].second] = static_cast<int>(r) + 1;
  for (auto& o : pred.objects) o.group_rank = group_rank[o.group];
  return pred;
}

}  // namespace cgr
