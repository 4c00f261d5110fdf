#pragma once

#include <utility>
#include <vector>

#include "cgr/rng.hpp"
#include "cgr/tensor.hpp"

namespace cgr {

// Task relation mining: per-modality self-attention enhancement, the
// bidirectional image/text fusion, affordance- and context-guided selection
// of object queries and group tokens, and the multimodal group decoder.

struct AttentionParams {
  Tensor wq, wk, wv, wo;  // [d, d], no biases
  int n_heads = 1;
};

struct LayerNormParams {
  Tensor gamma, beta;  // [1, d]
};

struct FeedForwardParams {
  Tensor w1, b1, w2, b2;  // d -> hidden -> d
};

struct DecoderBlockParams {
  AttentionParams self_og;
  LayerNormParams ln_self;
  AttentionParams cross_affordance;
  LayerNormParams ln_affordance;
  AttentionParams cross_image;
  LayerNormParams ln_image;
  FeedForwardParams ffn;
  LayerNormParams ln_ffn;
};

struct TrmParams {
  AttentionParams enhance_image;
  AttentionParams enhance_text;     // shared by the affordance and context branches
  Tensor w1, w2, w3, w4;            // fusion projections
  std::vector<DecoderBlockParams> blocks;
};

struct EnhancedFeatures {
  Tensor image, affordance, context;
};

struct FusedFeatures {
  Tensor image;            // I
  Tensor task_affordance;  // T_a
  Tensor task_context;     // T_c
};

struct QuerySet {
  Tensor queries;       // O, [K_o, d]
  Tensor group_tokens;  // G, [K_g, d]
  std::vector<int> query_src;  // source grid rows, exactly the topK output
  std::vector<int> group_src;
};

AttentionParams init_attention(Rng& rng, int dim, int n_heads);
LayerNormParams init_layer_norm(int dim);
FeedForwardParams init_feed_forward(Rng& rng, int dim, int hidden);
TrmParams init_trm(Rng& rng, int dim, int n_heads, int n_blocks, int ffn_hidden);

Tensor multihead_attention(const Tensor& query_in, const Tensor& kv_in,
                           const AttentionParams& p);

// x + self-attention(x) per modality, no normalization
EnhancedFeatures enhance(const Tensor& image, const Tensor& affordance,
                         const Tensor& context, const TrmParams& p);

// I = softmax(F_iq F_tq^T / sqrt(d)) F_tv + image residual, and the text
// counterpart split back into its affordance/context parts. The query
// projections double as keys on both sides, exactly as written.
FusedFeatures bidirectional_fuse(const EnhancedFeatures& f, const TrmParams& p);

// O = I[topK(max_t I T_a^T)], G likewise with T_c
QuerySet select_queries_and_groups(const FusedFeatures& f, int k_objects, int k_groups);

// Decoder blocks: joint self-attention over [O, G]; affordance cross-attention
// for the object rows only; image cross-attention and feed-forward for the
// joint stream. Residual + layer norm wrap every stage.
std::pair<Tensor, Tensor> group_decode(const QuerySet& qs, const Tensor& task_affordance,
                                       const Tensor& image, const TrmParams& p);

}  // namespace cgr
