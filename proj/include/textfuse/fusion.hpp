#pragma once

// Fusion encoder.
//
// One transformer stack holds three kinds of slots, in this order:
//
//   [ summaries (2B) | OCR tokens (N) | decoder inputs (T) ]
//
// The summary slots are the B guidance vectors followed by the B attention
// block outputs. For the full model B = 3 and the order is
//   Q_v, Q_l, Q_o, g_v, g_l, g_o.
// Every slot receives a learned role embedding before the first layer.
// Encoder slots attend to the valid encoder slots; decoder slot t attends to
// all valid encoder slots and to decoder slots 0..t.

#include <cstddef>
#include <string>
#include <vector>

#include "textfuse/transformer.hpp"

namespace textfuse {

inline constexpr std::size_t kRoleCount = 9;
inline constexpr std::size_t kOcrRole = 6;
inline constexpr std::size_t kPadRole = 7;
inline constexpr std::size_t kDecoderRole = 8;

// Role of summary slot i when the model has `blocks` blocks.
std::size_t summary_role(std::size_t slot, std::size_t blocks);

MaskMatrix mixed_mask(const Mask& encoder_valid, std::size_t decoder_steps);

struct FusionOutput {
  Tensor summaries;  // [2B x d]
  Tensor ocr;        // [N x d], undefined when N = 0
  Tensor decoder;    // [T x d], undefined when T = 0
};

class FusionEncoder {
 public:
  FusionEncoder() = default;
  FusionEncoder(ParameterStore& store, const std::string& name, std::size_t d_model, std::size_t heads,
                std::size_t d_ff, std::size_t layers, Rng& rng);

  // summaries: [2B x d]. ocr: [N x d] or undefined. decoder_inputs: [T x d]
  // or undefined; role embeddings for decoder slots are added by the caller.
  FusionOutput operator()(const Tensor& summaries, const Tensor& ocr, const Mask& ocr_mask,
                          const Tensor& decoder_inputs = {}) const;

  Embedding roles;
  std::vector<TransformerLayer> layers;
};

// Pairwise products of guidance and summary slots, concatenated and mapped
// back to d_model: Linear([Q_1 o g_1 ; ... ; Q_B o g_B]).
class ContextHead {
 public:
  ContextHead() = default;
  ContextHead(ParameterStore& store, const std::string& name, std::size_t d_model, std::size_t blocks, Rng& rng);

  Tensor operator()(const Tensor& fused_summaries) const;

  Linear project;

 private:
  std::size_t blocks_ = 3;
};

}  // namespace textfuse
