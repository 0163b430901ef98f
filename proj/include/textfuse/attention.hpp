#pragma once

// Query-guided summarization.
//
// SelfAttentionHead pools a sequence with content-only weights:
//   a = softmax(conv2(relu(conv1(q_i)))),  Q^s = sum_i a_i q_i
// where conv1/conv2 are 1x1 convolutions, i.e. per-row linear maps.
//
// AttentionBlock selects from a feature sequence under a guidance vector:
//   p_i = W[relu(W_s Q^s) o relu(W_x x_i)],  s = softmax(p),  g = sum_i s_i x_i
//
// Both outputs are convex combinations of the unmasked input rows.

#include <string>

#include "textfuse/parameters.hpp"

namespace textfuse {

class SelfAttentionHead {
 public:
  SelfAttentionHead() = default;
  SelfAttentionHead(ParameterStore& store, const std::string& name, std::size_t d_model, std::size_t d_hidden,
                    Rng& rng);

  // [1 x n] pooling weights over seq rows.
  Tensor weights(const Tensor& seq, const Mask& valid) const;
  // [1 x d_model]
  Tensor operator()(const Tensor& seq, const Mask& valid) const;

  Linear conv1, conv2;
};

class AttentionBlock {
 public:
  AttentionBlock() = default;
  AttentionBlock(ParameterStore& store, const std::string& name, std::size_t d_model, std::size_t d_att,
                 Rng& rng);

  // [1 x n] selection weights s.
  Tensor weights(const Tensor& query, const Tensor& feats, const Mask& valid) const;
  // [1 x d_model] summary g.
  Tensor operator()(const Tensor& query, const Tensor& feats, const Mask& valid) const;

  Linear query_proj;    // W_s
  Linear feature_proj;  // W_x
  Linear score;         // W
};

// Single-layer LSTM run left to right from zero state; returns the hidden
// state at every position ([n x d_model]).
class RecurrentEncoder {
 public:
  RecurrentEncoder() = default;
  RecurrentEncoder(ParameterStore& store, const std::string& name, std::size_t d_model, Rng& rng);

  Tensor operator()(const Tensor& seq) const;

  // Gate order in the 4*d columns: input, forget, cell candidate, output.
  Linear input;     // [d x 4d] with bias
  Tensor recurrent; // [d x 4d]
};

}  // namespace textfuse
