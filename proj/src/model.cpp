#include "textfuse/model.hpp"

#include <algorithm>

#include "textfuse/errors.hpp"
#include "textfuse/op_counter.hpp"
#include "textfuse/ops.hpp"

namespace textfuse {
namespace {

std::size_t count_valid(const Mask& m) { return static_cast<std::size_t>(std::count(m.begin(), m.end(), true)); }

// The populated rows form a prefix of every padded sequence.
Tensor populated_prefix(const Tensor& x, const Mask& mask) {
  const std::size_t n = count_valid(mask);
  if (n == 0) return Tensor{};
  return n == x.rows() ? x : slice_rows(x, 0, n);
}

Tensor pooled_or_zero(const SelfAttentionHead& head, const Tensor& seq, std::size_t d) {
  if (!seq.defined()) return Tensor::zeros({1, d});
  return head(seq, Mask(seq.rows(), true));
}

Tensor attended_or_zero(const AttentionBlock& block, const Tensor& query, const Tensor& feats, const Mask& mask,
                        std::size_t d) {
  if (!feats.defined() || count_valid(mask) == 0) return Tensor::zeros({1, d});
  return block(query, feats, mask);
}

}  // namespace

Model::Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const std::size_t d = cfg_.encoder.d_model;
  const std::size_t b = textfuse::block_count(cfg_.blocks);
  const FeatureDims dims{cfg_.d_frcn, cfg_.d_recog, cfg_.d_glob, d};
  features = FeatureProjector(store_, "features", dims, rng, cfg_.visual == VisualBranch::global_grid);
  if (cfg_.encoder.textcaps_mode) {
    sequence_encoders.emplace_back(store_, "guidance.object_rnn", d, rng);
    sequence_encoders.emplace_back(store_, "guidance.ocr_rnn", d, rng);
  } else {
    question = QuestionEncoder(store_, "question", cfg_.vocab_size, cfg_.max_question_len, d, cfg_.encoder.num_heads,
                               cfg_.encoder.d_ff, cfg_.question_layers, rng);
  }
  static const char* kBranch[] = {"v", "l", "o"};
  for (std::size_t i = 0; i < b; ++i) {
    guidance_heads.emplace_back(store_, std::string("guidance.self_attention_") + kBranch[i], d,
                                cfg_.hidden_width(), rng);
  }
  for (std::size_t i = 0; i < b; ++i) {
    blocks.emplace_back(store_, std::string("block_") + kBranch[i], d, cfg_.attention_width(), rng);
  }
  fusion = FusionEncoder(store_, "fusion", d, cfg_.encoder.num_heads, cfg_.encoder.d_ff, cfg_.encoder.num_layers,
                         rng);
  context_head = ContextHead(store_, "context", d, b, rng);
  head = VocabHead(store_, "vocab_head", cfg_.vocab_size, d, rng);
  decoder_positions = Embedding(store_, "decoder_positions", cfg_.encoder.max_decode_steps, d, rng);
}

void Model::validate_instance(const Instance& inst) const {
  if (inst.ocr.size() > cfg_.max_ocr) {
    throw ContractError("instance '" + inst.id + "' has " + std::to_string(inst.ocr.size()) + " OCR tokens (max " +
                        std::to_string(cfg_.max_ocr) + ")");
  }
  if (inst.objects.size() > cfg_.max_obj) {
    throw ContractError("instance '" + inst.id + "' has " + std::to_string(inst.objects.size()) +
                        " objects (max " + std::to_string(cfg_.max_obj) + ")");
  }
  if (!cfg_.encoder.textcaps_mode) {
    if (inst.question_tokens.empty()) throw ContractError("instance '" + inst.id + "' has an empty question");
    for (std::size_t id : inst.question_tokens) {
      if (id >= cfg_.vocab_size) throw IndexError("question token id " + std::to_string(id) + " out of vocabulary");
    }
  }
  if (cfg_.visual == VisualBranch::global_grid && inst.global_grid.empty()) {
    throw ContractError("instance '" + inst.id + "' has no global grid features");
  }
}

Encoded Model::prepare(const Instance& inst) const {
  validate_instance(inst);
  Encoded enc;
  enc.features = features.prepare(inst.ocr, inst.objects, cfg_.pad_ocr, cfg_.pad_obj);
  if (enc.features.ocr_visual.defined()) {
    enc.ocr_embeddings = add(enc.features.ocr_visual, enc.features.ocr_linguistic);
  }
  if (cfg_.visual == VisualBranch::global_grid) {
    std::vector<double> rows;
    for (const auto& r : inst.global_grid) {
      if (r.size() != cfg_.d_glob) throw DimensionError("global grid row width mismatch");
      rows.insert(rows.end(), r.begin(), r.end());
    }
    enc.third_branch = features.global_grid(Tensor::from({inst.global_grid.size(), cfg_.d_glob}, std::move(rows)));
    enc.third_mask.assign(inst.global_grid.size(), true);
  } else {
    enc.third_branch = enc.features.objects;
    enc.third_mask = enc.features.obj_mask;
  }
  enc.ocr_strings.reserve(inst.ocr.size());
  for (const auto& t : inst.ocr) enc.ocr_strings.push_back(normalize_answer(t.text));
  return enc;
}

Guidance Model::guide(const Instance& inst, const Encoded& partial) const {
  const std::size_t d = cfg_.encoder.d_model;
  const std::size_t b = blocks.size();
  Guidance g;
  if (cfg_.encoder.textcaps_mode) {
    // Object-side sequence guides the OCR blocks, OCR-side sequence guides the object block.
    const Tensor objs = populated_prefix(partial.third_branch, partial.third_mask);
    const Tensor ocr = partial.ocr_embeddings.defined()
                           ? populated_prefix(partial.ocr_embeddings, partial.features.ocr_mask)
                           : Tensor{};
    const Tensor obj_states = objs.defined() ? sequence_encoders[0](objs) : Tensor{};
    const Tensor ocr_states = ocr.defined() ? sequence_encoders[1](ocr) : Tensor{};
    for (std::size_t i = 0; i < b; ++i) {
      g.vectors.push_back(pooled_or_zero(guidance_heads[i], i == 2 ? ocr_states : obj_states, d));
    }
  } else {
    const Tensor q = question(inst.question_tokens);
    for (std::size_t i = 0; i < b; ++i) g.vectors.push_back(pooled_or_zero(guidance_heads[i], q, d));
  }
  return g;
}

std::vector<Tensor> Model::attend(const Encoded& partial, const Guidance& guidance) const {
  const std::size_t d = cfg_.encoder.d_model;
  const Mask& ocr_mask = partial.features.ocr_mask;
  std::vector<Tensor> out;
  switch (cfg_.blocks) {
    case BlockConfig::one_block:
      out.push_back(attended_or_zero(blocks[0], guidance.vectors[0], partial.ocr_embeddings, ocr_mask, d));
      break;
    case BlockConfig::two_block:
    case BlockConfig::three_block:
      out.push_back(attended_or_zero(blocks[0], guidance.vectors[0], partial.features.ocr_visual, ocr_mask, d));
      out.push_back(
          attended_or_zero(blocks[1], guidance.vectors[1], partial.features.ocr_linguistic, ocr_mask, d));
      if (cfg_.blocks == BlockConfig::three_block) {
        out.push_back(attended_or_zero(blocks[2], guidance.vectors[2], partial.third_branch, partial.third_mask, d));
      }
      break;
  }
  return out;
}

Encoded Model::encode(const Instance& inst) const {
  Encoded enc = prepare(inst);
  enc.guidance = guide(inst, enc);
  std::vector<Tensor> slots = enc.guidance.vectors;
  for (Tensor& g : attend(enc, enc.guidance)) slots.push_back(std::move(g));
  enc.summaries = concat(slots, 0);
  return enc;
}

Tensor Model::decoder_input(const DecodingStep& prev, const Encoded& enc, std::size_t position) const {
  return step_input_embedding(prev, head, enc.ocr_embeddings, fusion.roles.row(kDecoderRole),
                              decoder_positions.row(position));
}

StepTargets Model::targets_for(const Encoded& enc, const std::string& answer, const Vocabulary& vocab) const {
  const std::size_t slots = enc.ocr_embeddings.defined() ? enc.ocr_embeddings.rows() : 0;
  return build_targets(answer, vocab, enc.ocr_strings, slots, max_decode_steps());
}

Forward Model::teacher_forced(const Encoded& enc, const StepTargets& targets) const {
  const std::size_t steps = targets.steps();
  Tensor decoder_inputs;
  if (steps > 1) {
    std::vector<Tensor> rows;
    rows.reserve(steps - 1);
    for (std::size_t k = 0; k + 1 < steps; ++k) rows.push_back(decoder_input(targets.inputs[k], enc, k));
    decoder_inputs = rows.size() == 1 ? rows.front() : concat(rows, 0);
  }
  Forward f;
  f.fused = fusion(enc.summaries, enc.ocr_embeddings, enc.features.ocr_mask, decoder_inputs);
  f.context = context_head(f.fused.summaries);
  const Tensor states = steps > 1 ? concat({f.context, f.fused.decoder}, 0) : f.context;
  f.scores = score_step(states, f.fused.ocr, enc.features.ocr_mask, head);
  return f;
}

LossTerms Model::loss(const Instance& inst, const Vocabulary& vocab, const LossConfig& cfg) const {
  if (inst.answers.empty()) throw ContractError("instance '" + inst.id + "' has no answer");
  if (vocab.size() != cfg_.vocab_size) throw ConfigError("vocabulary size does not match the model");
  const Encoded enc = encode(inst);
  const StepTargets targets = targets_for(enc, inst.answers.front(), vocab);
  const Forward f = teacher_forced(enc, targets);
  return combined_loss(f.scores, targets, cfg, inst.answers.front(), vocab, enc.ocr_strings);
}

DecodeTrace Model::decode(const Encoded& enc, std::size_t max_steps) const {
  const std::size_t limit = max_steps == 0 ? max_decode_steps() : max_steps;
  if (limit > max_decode_steps()) throw ContractError("decode steps exceed the configured maximum");
  const FusionOutput fused = fusion(enc.summaries, enc.ocr_embeddings, enc.features.ocr_mask);
  const Tensor context = context_head(fused.summaries);
  DecoderRunner run = [&](const Tensor& inputs) {
    return fusion(enc.summaries, enc.ocr_embeddings, enc.features.ocr_mask, inputs).decoder;
  };
  return textfuse::decode(context, fused.ocr, enc.features.ocr_mask, enc.ocr_embeddings, head,
                          fusion.roles.row(kDecoderRole), decoder_positions, limit, run);
}

EncoderCount Model::empirical_count(const Instance& inst, EncoderModel as) const {
  Encoded enc = prepare(inst);
  EncoderCount out;
  if (as == EncoderModel::six_vector) {
    enc.guidance = guide(inst, enc);
    profile::OpCounter counter;
    std::vector<Tensor> slots = enc.guidance.vectors;
    for (Tensor& g : attend(enc, enc.guidance)) slots.push_back(std::move(g));
    fusion(concat(slots, 0), enc.ocr_embeddings, enc.features.ocr_mask);
    out.attention_block = counter.labeled(profile::kBlockLabel);
    out.transformer_pairs = counter.labeled(profile::kPairLabel);
    out.all_madds = counter.total();
    return out;
  }
  std::vector<Tensor> parts;
  Mask valid;
  if (!cfg_.encoder.textcaps_mode) {
    parts.push_back(question(inst.question_tokens));
    valid.insert(valid.end(), inst.question_tokens.size(), true);
  }
  if (enc.ocr_embeddings.defined()) {
    parts.push_back(enc.ocr_embeddings);
    valid.insert(valid.end(), enc.features.ocr_mask.begin(), enc.features.ocr_mask.end());
  }
  if (enc.third_branch.defined()) {
    parts.push_back(enc.third_branch);
    valid.insert(valid.end(), enc.third_mask.begin(), enc.third_mask.end());
  }
  if (parts.empty()) return out;
  Tensor x = parts.size() == 1 ? parts.front() : concat(parts, 0);
  const MaskMatrix allowed = bidirectional_mask(valid);
  profile::OpCounter counter;
  for (const TransformerLayer& layer : fusion.layers) x = layer(x, allowed);
  out.transformer_pairs = counter.labeled(profile::kPairLabel);
  out.all_madds = counter.total();
  return out;
}

}  // namespace textfuse
