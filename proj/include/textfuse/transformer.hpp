#pragma once

#include <span>
#include <string>
#include <vector>

#include "textfuse/parameters.hpp"

namespace textfuse {

// Valid slots attend to every valid slot. An invalid slot attends only to
// itself, which keeps its softmax row well-defined while no valid slot ever
// reads from it.
MaskMatrix bidirectional_mask(const Mask& valid);

// Post-norm encoder layer: multi-head self-attention and a ReLU feed-forward
// block, each wrapped in a residual connection followed by layer norm.
class TransformerLayer {
 public:
  TransformerLayer() = default;
  TransformerLayer(ParameterStore& store, const std::string& name, std::size_t d_model, std::size_t heads,
                   std::size_t d_ff, Rng& rng);

  Tensor operator()(const Tensor& seq, const MaskMatrix& allowed) const;

  std::size_t heads() const { return heads_; }

  Linear query, key, value, output;
  LayerNorm attention_norm;
  Linear ff_in, ff_out;
  LayerNorm ff_norm;

 private:
  std::size_t heads_ = 1;
};

// Token and position embeddings followed by a stack of transformer layers.
class QuestionEncoder {
 public:
  QuestionEncoder() = default;
  QuestionEncoder(ParameterStore& store, const std::string& name, std::size_t vocab_size, std::size_t max_len,
                  std::size_t d_model, std::size_t heads, std::size_t d_ff, std::size_t layers, Rng& rng);

  // Returns [L x d_model]. valid marks non-padding positions; empty means all valid.
  Tensor operator()(std::span<const std::size_t> token_ids, const Mask& valid = {}) const;

  std::size_t max_len() const { return max_len_; }
  std::size_t layer_count() const { return layers.size(); }

  Embedding tokens;
  Embedding positions;
  std::vector<TransformerLayer> layers;

 private:
  std::size_t max_len_ = 0;
};

}  // namespace textfuse
