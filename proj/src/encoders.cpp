#include "cgr/encoders.hpp"

#include <cmath>
#include <stdexcept>

#include "cgr/ops.hpp"

namespace cgr {

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

EncoderParams init_encoder_params(Rng& rng, int n_categories, int vocab, int dim) {
  EncoderParams p;
  std::vector<double> sig(static_cast<std::size_t>(n_categories) * dim);
  for (auto& v : sig) v = rng.normal();
  p.category_signatures = Tensor::from({n_categories, dim}, std::move(sig), true);
  std::vector<double> emb(static_cast<std::size_t>(vocab) * dim);
  for (auto& v : emb) v = rng.normal();
  p.token_embedding = Tensor::from({vocab, dim}, std::move(emb), true);
  return p;
}

Tensor positional_encoding_2d(int grid_h, int grid_w, int dim) {
  if (dim % 4 != 0)
    throw std::invalid_argument("positional_encoding_2d: dim " + std::to_string(dim) +
                                " not divisible by 4");
  if (grid_h < 1 || grid_w < 1)
    throw std::invalid_argument("positional_encoding_2d: empty grid");
  const int half = dim / 2;
  const int pairs = dim / 4;
  std::vector<double> pe(static_cast<std::size_t>(grid_h) * grid_w * dim);
  for (int r = 0; r < grid_h; ++r) {
    const double pr = grid_h > 1 ? static_cast<double>(r) / (grid_h - 1) : 0.0;
    for (int c = 0; c < grid_w; ++c) {
      const double pc = grid_w > 1 ? static_cast<double>(c) / (grid_w - 1) : 0.0;
      double* cell = pe.data() + (static_cast<std::size_t>(r) * grid_w + c) * dim;
      for (int k = 0; k < pairs; ++k) {
        // base frequency 1 keeps sin strictly monotone over [0,1]
        const double omega = std::pow(100.0, static_cast<double>(k) / pairs);
        cell[2 * k] = std::sin(pr * omega);
        cell[2 * k + 1] = std::cos(pr * omega);
        cell[half + 2 * k] = std::sin(pc * omega);
        cell[half + 2 * k + 1] = std::cos(pc * omega);
      }
    }
  }
  return Tensor::from({grid_h * grid_w, dim}, std::move(pe));
}

Tensor encode_scene(const SceneSample& scene, const EncoderParams& params,
                    const EncoderConfig& cfg) {
  const int cells = cfg.grid_h * cfg.grid_w;
  const int n_cat = params.category_signatures.rows();
  if (params.category_signatures.cols() != cfg.dim)
    throw std::invalid_argument("encode_scene: signature dim mismatch");

  // kernel weights per (cell, category); constant w.r.t. the parameters
  std::vector<double> weights(static_cast<std::size_t>(cells) * n_cat, 0.0);
  for (const auto& obj : scene.objects) {
    const double sigma = 0.5 * std::max(obj.bbox[2], obj.bbox[3]);
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    for (int r = 0; r < cfg.grid_h; ++r) {
      const double cy = (r + 0.5) / cfg.grid_h;
      for (int c = 0; c < cfg.grid_w; ++c) {
        const double cx = (c + 0.5) / cfg.grid_w;
        const double dx = cx - obj.bbox[0];
        const double dy = cy - obj.bbox[1];
        weights[(static_cast<std::size_t>(r) * cfg.grid_w + c) * n_cat + obj.category_id] +=
            std::exp(-(dx * dx + dy * dy) * inv2s2);
      }
    }
  }
  Tensor kernel = Tensor::from({cells, n_cat}, std::move(weights));
  Tensor grid = matmul(kernel, params.category_signatures);

  Tensor extra = positional_encoding_2d(cfg.grid_h, cfg.grid_w, cfg.dim);
  if (cfg.noise > 0.0) {
    Rng noise_rng(mix(scene.seed ^ 0xFEEDull));
    for (std::size_t i = 0; i < extra.size(); ++i)
      extra.data()[i] += cfg.noise * noise_rng.normal();
  }
  return add(grid, extra);
}

std::pair<Tensor, Tensor> encode_task(const TaskSpec& task, const EncoderParams& params) {
  if (task.affordance_tokens.empty() || task.context_tokens.empty())
    throw std::invalid_argument("encode_task: empty token sequence");
  const int vocab = params.token_embedding.rows();
  for (int t : task.affordance_tokens)
    if (t < 0 || t >= vocab)
      throw std::invalid_argument("encode_task: affordance token " + std::to_string(t) +
                                  " outside vocabulary of " + std::to_string(vocab));
  for (int t : task.context_tokens)
    if (t < 0 || t >= vocab)
      throw std::invalid_argument("encode_task: context token " + std::to_string(t) +
                                  " outside vocabulary of " + std::to_string(vocab));
  return {gather_rows(params.token_embedding, task.affordance_tokens),
          gather_rows(params.token_embedding, task.context_tokens)};
}

}  // namespace cgr
