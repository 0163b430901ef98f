#pragma once

// The full answer generator: feature projection, guidance, attention blocks,
// fusion encoder, context head and the dual-source decoder.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "textfuse/attention.hpp"
#include "textfuse/complexity.hpp"
#include "textfuse/config.hpp"
#include "textfuse/decoder.hpp"
#include "textfuse/features.hpp"
#include "textfuse/fusion.hpp"
#include "textfuse/objectives.hpp"
#include "textfuse/transformer.hpp"

namespace textfuse {

struct Guidance {
  std::vector<Tensor> vectors;  // B rows of [1 x d]
};

// Everything the fusion encoder needs for one instance.
struct Encoded {
  PreparedFeatures features;
  Tensor third_branch;  // objects or global grid rows
  Mask third_mask;
  Tensor ocr_embeddings;  // x^v + x^l, [N x d] or undefined
  Guidance guidance;
  Tensor summaries;  // [2B x d]
  std::vector<std::string> ocr_strings;
};

struct EncoderCount {
  std::uint64_t attention_block = 0;   // labeled block multiplications
  std::uint64_t transformer_pairs = 0;  // labeled query-key products
  std::uint64_t all_madds = 0;          // every multiply-add in the region
  std::uint64_t labeled_total() const { return attention_block + transformer_pairs; }
};

struct Forward {
  FusionOutput fused;
  Tensor context;
  ScoreVector scores;
};

class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return cfg_; }
  ParameterStore& parameters() { return store_; }
  const ParameterStore& parameters() const { return store_; }
  std::size_t block_count() const { return blocks.size(); }
  std::size_t max_decode_steps() const { return cfg_.encoder.max_decode_steps; }

  void validate_instance(const Instance& inst) const;

  Encoded encode(const Instance& inst) const;
  // Question-side (or caption-mode sequence-side) guidance vectors.
  Guidance guide(const Instance& inst, const Encoded& partial) const;
  // Attention-block outputs g_b, one [1 x d] per block.
  std::vector<Tensor> attend(const Encoded& partial, const Guidance& guidance) const;

  Tensor decoder_input(const DecodingStep& prev, const Encoded& enc, std::size_t position) const;

  // Teacher-forced scores for every target step in one pass.
  Forward teacher_forced(const Encoded& enc, const StepTargets& targets) const;

  StepTargets targets_for(const Encoded& enc, const std::string& answer, const Vocabulary& vocab) const;
  LossTerms loss(const Instance& inst, const Vocabulary& vocab, const LossConfig& cfg) const;

  DecodeTrace decode(const Encoded& enc, std::size_t max_steps = 0) const;
  DecodeTrace decode(const Instance& inst, std::size_t max_steps = 0) const { return decode(encode(inst), max_steps); }

  // Multiply-adds of the encoder region (attention blocks and fusion layers)
  // for this instance, run as either this model's encoder or an M4C-style
  // encoder over the concatenated question, OCR and object sequences using
  // the same fusion layers.
  EncoderCount empirical_count(const Instance& inst, EncoderModel as) const;

  FeatureProjector features;
  QuestionEncoder question;
  std::vector<RecurrentEncoder> sequence_encoders;  // caption mode: [objects, ocr]
  std::vector<SelfAttentionHead> guidance_heads;
  std::vector<AttentionBlock> blocks;
  FusionEncoder fusion;
  ContextHead context_head;
  VocabHead head;
  Embedding decoder_positions;

 private:
  Encoded prepare(const Instance& inst) const;

  ModelConfig cfg_;
  ParameterStore store_;
};

}  // namespace textfuse
