#include "cgr/trm.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "cgr/ops.hpp"

namespace cgr {

namespace {

Tensor gaussian(Rng& rng, int rows, int cols, double scale) {
  std::vector<double> v(static_cast<std::size_t>(rows) * cols);
  for (auto& x : v) x = scale * rng.normal();
  return Tensor::from({rows, cols}, std::move(v), true);
}

std::vector<int> iota_range(int first, int count) {
  std::vector<int> idx(count);
  std::iota(idx.begin(), idx.end(), first);
  return idx;
}

Tensor feed_forward(const Tensor& x, const FeedForwardParams& p) {
  Tensor h = relu(add_rowvec(matmul(x, p.w1), p.b1));
  return add_rowvec(matmul(h, p.w2), p.b2);
}

}  // namespace

AttentionParams init_attention(Rng& rng, int dim, int n_heads) {
  if (dim % n_heads != 0)
    throw std::invalid_argument("init_attention: dim must divide into heads");
  const double s = 1.0 / std::sqrt(static_cast<double>(dim));
  return {gaussian(rng, dim, dim, s), gaussian(rng, dim, dim, s),
          gaussian(rng, dim, dim, s), gaussian(rng, dim, dim, s), n_heads};
}

LayerNormParams init_layer_norm(int dim) {
  return {Tensor::full({1, dim}, 1.0, true), Tensor::zeros({1, dim}, true)};
}

FeedForwardParams init_feed_forward(Rng& rng, int dim, int hidden) {
  const double s1 = 1.0 / std::sqrt(static_cast<double>(dim));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  return {gaussian(rng, dim, hidden, s1), Tensor::zeros({1, hidden}, true),
          gaussian(rng, hidden, dim, s2), Tensor::zeros({1, dim}, true)};
}

TrmParams init_trm(Rng& rng, int dim, int n_heads, int n_blocks, int ffn_hidden) {
  TrmParams p;
  p.enhance_image = init_attention(rng, dim, n_heads);
  p.enhance_text = init_attention(rng, dim, n_heads);
  const double s = 1.0 / std::sqrt(static_cast<double>(dim));
  p.w1 = gaussian(rng, dim, dim, s);
  p.w2 = gaussian(rng, dim, dim, s);
  p.w3 = gaussian(rng, dim, dim, s);
  p.w4 = gaussian(rng, dim, dim, s);
  for (int b = 0; b < n_blocks; ++b) {
    DecoderBlockParams blk;
    blk.self_og = init_attention(rng, dim, n_heads);
    blk.ln_self = init_layer_norm(dim);
    blk.cross_affordance = init_attention(rng, dim, n_heads);
    blk.ln_affordance = init_layer_norm(dim);
    blk.cross_image = init_attention(rng, dim, n_heads);
    blk.ln_image = init_layer_norm(dim);
    blk.ffn = init_feed_forward(rng, dim, ffn_hidden);
    blk.ln_ffn = init_layer_norm(dim);
    p.blocks.push_back(std::move(blk));
  }
  return p;
}

Tensor multihead_attention(const Tensor& query_in, const Tensor& kv_in,
                           const AttentionParams& p) {
  const int d = p.wq.rows();
  if (query_in.cols() != d || kv_in.cols() != d)
    throw std::invalid_argument("multihead_attention: feature extent mismatch");
  if (d % p.n_heads != 0)
    throw std::invalid_argument("multihead_attention: dim must divide into heads");
  Tensor q = matmul(query_in, p.wq);
  Tensor k = matmul(kv_in, p.wk);
  Tensor v = matmul(kv_in, p.wv);
  const int dh = d / p.n_heads;
  Tensor heads;
  for (int h = 0; h < p.n_heads; ++h) {
    Tensor out_h = scaled_dot_attention(slice_cols(q, h * dh, dh),
                                        slice_cols(k, h * dh, dh),
                                        slice_cols(v, h * dh, dh));
    heads = h == 0 ? out_h : concat_cols(heads, out_h);
  }
  return matmul(heads, p.wo);
}

EnhancedFeatures enhance(const Tensor& image, const Tensor& affordance,
                         const Tensor& context, const TrmParams& p) {
  EnhancedFeatures out;
  out.image = add(image, multihead_attention(image, image, p.enhance_image));
  out.affordance = add(affordance, multihead_attention(affordance, affordance, p.enhance_text));
  out.context = add(context, multihead_attention(context, context, p.enhance_text));
  return out;
}

FusedFeatures bidirectional_fuse(const EnhancedFeatures& f, const TrmParams& p) {
  const int n_a = f.affordance.rows();
  const int n_c = f.context.rows();
  Tensor text = concat_rows(f.affordance, f.context);
  Tensor iq = matmul(f.image, p.w1);
  Tensor iv = matmul(f.image, p.w2);
  Tensor tq = matmul(text, p.w3);
  Tensor tv = matmul(text, p.w4);
  FusedFeatures out;
  out.image = add(scaled_dot_attention(iq, tq, tv), f.image);
  Tensor fused_text = add(scaled_dot_attention(tq, iq, iv), text);
  out.task_affordance = gather_rows(fused_text, iota_range(0, n_a));
  out.task_context = gather_rows(fused_text, iota_range(n_a, n_c));
  return out;
}

QuerySet select_queries_and_groups(const FusedFeatures& f, int k_objects, int k_groups) {
  const int n = f.image.rows();
  if (k_objects < 1 || k_objects > n || k_groups < 1 || k_groups > n)
    throw std::invalid_argument("select_queries_and_groups: K outside [1, " +
                                std::to_string(n) + "]");
  QuerySet qs;
  Tensor scores_a = rowmax(matmul(f.image, transpose(f.task_affordance)));
  Tensor scores_c = rowmax(matmul(f.image, transpose(f.task_context)));
  qs.query_src = topk_indices(scores_a, k_objects);
  qs.group_src = topk_indices(scores_c, k_groups);
  qs.queries = gather_rows(f.image, qs.query_src);
  qs.group_tokens = gather_rows(f.image, qs.group_src);
  return qs;
}

std::pair<Tensor, Tensor> group_decode(const QuerySet& qs, const Tensor& task_affordance,
                                       const Tensor& image, const TrmParams& p) {
  if (p.blocks.empty())
    throw std::invalid_argument("group_decode: need at least one decoder block");
  const int k_o = qs.queries.rows();
  const int k_g = qs.group_tokens.rows();
  Tensor objs = qs.queries;
  Tensor groups = qs.group_tokens;
  for (const auto& blk : p.blocks) {
    Tensor joint = concat_rows(objs, groups);
    joint = layer_norm_rows(add(joint, multihead_attention(joint, joint, blk.self_og)),
                            blk.ln_self.gamma, blk.ln_self.beta);
    Tensor obj_part = gather_rows(joint, iota_range(0, k_o));
    Tensor grp_part = gather_rows(joint, iota_range(k_o, k_g));
    // group tokens skip the affordance stage
    obj_part = layer_norm_rows(
        add(obj_part, multihead_attention(obj_part, task_affordance, blk.cross_affordance)),
        blk.ln_affordance.gamma, blk.ln_affordance.beta);
    Tensor merged = concat_rows(obj_part, grp_part);
    merged = layer_norm_rows(add(merged, multihead_attention(merged, image, blk.cross_image)),
                             blk.ln_image.gamma, blk.ln_image.beta);
    merged = layer_norm_rows(add(merged, feed_forward(merged, blk.ffn)),
                             blk.ln_ffn.gamma, blk.ln_ffn.beta);
    objs = gather_rows(merged, iota_range(0, k_o));
    groups = gather_rows(merged, iota_range(k_o, k_g));
  }
  return {objs, groups};
}

}  // namespace cgr
