#include "textfuse/decoder.hpp"

#include <limits>

#include "textfuse/errors.hpp"
#include "textfuse/ops.hpp"

namespace textfuse {

VocabHead::VocabHead(ParameterStore& store, const std::string& name, std::size_t vocab_size, std::size_t d_model,
                     Rng& rng)
    : weight(store.xavier(name + ".weight", vocab_size, d_model, rng)),
      bias(store.zeros(name + ".bias", {vocab_size})) {}

double ScoreVector::value(std::size_t step, std::size_t slot) const {
  if (step >= steps() || slot >= width()) throw IndexError("score index out of range");
  if (!valid[slot]) return -std::numeric_limits<double>::infinity();
  return logits.at(step, slot);
}

DecodingStep ScoreVector::argmax(std::size_t step) const {
  std::size_t best = 0;
  double best_value = -std::numeric_limits<double>::infinity();
  bool found = false;
  for (std::size_t j = 0; j < width(); ++j) {
    if (!valid[j]) continue;
    const double v = logits.at(step, j);
    if (!found || v > best_value) {
      best = j;
      best_value = v;
      found = true;
    }
  }
  if (!found) throw DegenerateMaskError("no valid score slot");
  return best < vocab_size ? DecodingStep::vocab(best) : DecodingStep::ocr(best - vocab_size);
}

ScoreVector score_step(const Tensor& h, const Tensor& ocr_outputs, const Mask& ocr_mask, const VocabHead& head) {
  const std::size_t n = ocr_outputs.defined() ? ocr_outputs.rows() : 0;
  if (ocr_mask.size() != n) throw DimensionError("score_step: OCR mask length does not match OCR rows");
  if (h.cols() != head.weight.cols()) {
    throw DimensionError("score_step: state width " + std::to_string(h.cols()) + " vs head width " +
                         std::to_string(head.weight.cols()));
  }
  ScoreVector out;
  out.vocab_size = head.vocab_size();
  const Tensor vocab_scores = add(matmul_nt(h, head.weight), head.bias);
  out.logits = n == 0 ? vocab_scores : concat({vocab_scores, matmul_nt(h, ocr_outputs)}, 1);
  if (out.logits.rank() == 1) out.logits = reshape(out.logits, {1, out.logits.size()});
  out.valid.assign(out.vocab_size, true);
  out.valid.insert(out.valid.end(), ocr_mask.begin(), ocr_mask.end());
  return out;
}

DecodingStep first_word(const Tensor& context, const Tensor& ocr_outputs, const Mask& ocr_mask,
                        const VocabHead& head) {
  return score_step(context, ocr_outputs, ocr_mask, head).argmax(0);
}

Tensor step_input_embedding(const DecodingStep& prev, const VocabHead& head, const Tensor& ocr_embeddings,
                            const Tensor& decoder_role, const Tensor& position) {
  Tensor base;
  if (prev.is_ocr()) {
    if (!ocr_embeddings.defined() || prev.index >= ocr_embeddings.rows()) {
      throw IndexError("OCR step " + std::to_string(prev.index) + " has no embedding");
    }
    base = slice_rows(ocr_embeddings, prev.index, prev.index + 1);
  } else {
    if (prev.index >= head.vocab_size()) throw IndexError("vocabulary step " + std::to_string(prev.index));
    base = slice_rows(head.weight, prev.index, prev.index + 1);
  }
  return add(add(base, decoder_role), position);
}

DecodeTrace decode(const Tensor& context, const Tensor& ocr_outputs, const Mask& ocr_mask,
                   const Tensor& ocr_embeddings, const VocabHead& head, const Tensor& decoder_role,
                   const Embedding& positions, std::size_t max_steps, const DecoderRunner& run) {
  if (max_steps == 0) throw ContractError("decode needs at least one step");
  DecodeTrace trace;
  std::vector<Tensor> inputs;
  Tensor state = context;
  for (std::size_t t = 0; t < max_steps; ++t) {
    const ScoreVector scores = score_step(state, ocr_outputs, ocr_mask, head);
    const DecodingStep step = scores.argmax(0);
    if (!step.is_ocr() && step.index == Vocabulary::kEnd) {
      trace.ended = true;
      break;
    }
    trace.steps.push_back(step);
    trace.scores.push_back(scores.value(0, step.is_ocr() ? scores.vocab_size + step.index : step.index));
    if (t + 1 == max_steps) break;
    inputs.push_back(
        step_input_embedding(step, head, ocr_embeddings, decoder_role, positions.row(inputs.size())));
    const Tensor outputs = run(inputs.size() == 1 ? inputs.front() : concat(inputs, 0));
    state = slice_rows(outputs, outputs.rows() - 1, outputs.rows());
  }
  return trace;
}

std::string render_step(const DecodingStep& step, const Vocabulary& vocab, const std::vector<std::string>& ocr) {
  if (step.is_ocr()) {
    if (step.index >= ocr.size()) throw IndexError("OCR step " + std::to_string(step.index) + " out of range");
    return ocr[step.index];
  }
  return vocab.word(step.index);
}

std::string render(const std::vector<DecodingStep>& steps, const Vocabulary& vocab,
                   const std::vector<std::string>& ocr) {
  std::string out;
  for (const DecodingStep& s : steps) {
    if (!s.is_ocr() && s.index == Vocabulary::kEnd) break;
    if (!out.empty()) out += ' ';
    out += render_step(s, vocab, ocr);
  }
  return out;
}

}  // namespace textfuse
