#include "textfuse/transformer.hpp"

#include <cmath>
#include <numeric>

#include "textfuse/errors.hpp"
#include "textfuse/op_counter.hpp"
#include "textfuse/ops.hpp"

namespace textfuse {

MaskMatrix bidirectional_mask(const Mask& valid) {
  const std::size_t n = valid.size();
  MaskMatrix allowed(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!valid[i]) {
      allowed.set(i, i, true);
      continue;
    }
    for (std::size_t j = 0; j < n; ++j) allowed.set(i, j, valid[j]);
  }
  return allowed;
}

TransformerLayer::TransformerLayer(ParameterStore& store, const std::string& name, std::size_t d_model,
                                   std::size_t heads, std::size_t d_ff, Rng& rng)
    : query(store, name + ".query", d_model, d_model, rng),
      key(store, name + ".key", d_model, d_model, rng),
      value(store, name + ".value", d_model, d_model, rng),
      output(store, name + ".output", d_model, d_model, rng),
      attention_norm(store, name + ".attention_norm", d_model),
      ff_in(store, name + ".ff_in", d_model, d_ff, rng),
      ff_out(store, name + ".ff_out", d_ff, d_model, rng),
      ff_norm(store, name + ".ff_norm", d_model),
      heads_(heads) {
  if (heads == 0 || d_model % heads != 0) {
    throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by " + std::to_string(heads) +
                      " heads");
  }
}

Tensor TransformerLayer::operator()(const Tensor& seq, const MaskMatrix& allowed) const {
  const std::size_t d = seq.cols();
  const std::size_t head_dim = d / heads_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  const Tensor q = query(seq);
  const Tensor k = key(seq);
  const Tensor v = value(seq);
  std::vector<Tensor> heads;
  heads.reserve(heads_);
  for (std::size_t h = 0; h < heads_; ++h) {
    const std::size_t lo = h * head_dim, hi = lo + head_dim;
    const Tensor qh = heads_ == 1 ? q : slice_cols(q, lo, hi);
    const Tensor kh = heads_ == 1 ? k : slice_cols(k, lo, hi);
    const Tensor vh = heads_ == 1 ? v : slice_cols(v, lo, hi);
    Tensor scores;
    {
      profile::ScopedLabel label(profile::kPairLabel);
      scores = matmul_nt(qh, kh);
    }
    const Tensor weights = softmax_masked(affine(scores, scale), allowed);
    heads.push_back(matmul(weights, vh));
  }
  const Tensor attended = heads_ == 1 ? heads.front() : concat(heads, 1);
  const Tensor x1 = attention_norm(add(seq, output(attended)));
  const Tensor ff = ff_out(relu(ff_in(x1)));
  return ff_norm(add(x1, ff));
}

QuestionEncoder::QuestionEncoder(ParameterStore& store, const std::string& name, std::size_t vocab_size,
                                 std::size_t max_len, std::size_t d_model, std::size_t heads, std::size_t d_ff,
                                 std::size_t layer_count, Rng& rng)
    : tokens(store, name + ".tokens", vocab_size, d_model, rng),
      positions(store, name + ".positions", max_len, d_model, rng),
      max_len_(max_len) {
  layers.reserve(layer_count);
  for (std::size_t i = 0; i < layer_count; ++i) {
    layers.emplace_back(store, name + ".layer" + std::to_string(i), d_model, heads, d_ff, rng);
  }
}

Tensor QuestionEncoder::operator()(std::span<const std::size_t> token_ids, const Mask& valid) const {
  const std::size_t n = token_ids.size();
  if (n == 0 || n > max_len_) {
    throw ContractError("question length " + std::to_string(n) + " outside [1, " + std::to_string(max_len_) + "]");
  }
  Mask mask = valid.empty() ? Mask(n, true) : valid;
  if (mask.size() != n) throw DimensionError("question mask length does not match token count");
  std::vector<std::size_t> pos(n);
  std::iota(pos.begin(), pos.end(), std::size_t{0});
  Tensor x = add(tokens(token_ids), positions(pos));
  const MaskMatrix allowed = bidirectional_mask(mask);
  for (const TransformerLayer& layer : layers) x = layer(x, allowed);
  return x;
}

}  // namespace textfuse
