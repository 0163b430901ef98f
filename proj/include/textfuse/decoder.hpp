#pragma once

// Dual-source scoring and greedy decoding.
//
// A decoder state h scores every vocabulary word through the vocabulary head
// (W h + b) and every OCR slot through the dot product with that slot's
// encoder output. The head weight doubles as the input embedding of emitted
// vocabulary words.

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "textfuse/parameters.hpp"
#include "textfuse/vocab.hpp"

namespace textfuse {

struct DecodingStep {
  enum class Source { vocab, ocr };
  Source source = Source::vocab;
  std::size_t index = 0;

  static DecodingStep vocab(std::size_t i) { return {Source::vocab, i}; }
  static DecodingStep ocr(std::size_t j) { return {Source::ocr, j}; }
  bool is_ocr() const { return source == Source::ocr; }
  friend bool operator==(const DecodingStep&, const DecodingStep&) = default;
};

class VocabHead {
 public:
  VocabHead() = default;
  VocabHead(ParameterStore& store, const std::string& name, std::size_t vocab_size, std::size_t d_model, Rng& rng);

  std::size_t vocab_size() const { return weight.rows(); }

  Tensor weight;  // [vocab_size x d_model]
  Tensor bias;    // [vocab_size]
};

// Scores for one or more decoder states, one row per state: vocabulary scores
// followed by OCR pointer scores.
struct ScoreVector {
  Tensor logits;  // [T x (V + N)], finite everywhere
  Mask valid;     // V + N; false for unpopulated OCR slots
  std::size_t vocab_size = 0;

  std::size_t steps() const { return logits.rows(); }
  std::size_t width() const { return valid.size(); }
  // Score with invalid slots reported as -infinity.
  double value(std::size_t step, std::size_t slot) const;
  DecodingStep argmax(std::size_t step) const;
};

// h: [T x d] (or [d]); ocr_outputs: [N x d] or undefined.
ScoreVector score_step(const Tensor& h, const Tensor& ocr_outputs, const Mask& ocr_mask, const VocabHead& head);

// Highest score, ties toward the lower index (vocabulary before OCR).
DecodingStep first_word(const Tensor& context, const Tensor& ocr_outputs, const Mask& ocr_mask,
                        const VocabHead& head);

// Embedding fed to the decoder slot that follows `prev`, at decoder position
// `position`: head row or OCR embedding, plus role and position embeddings.
Tensor step_input_embedding(const DecodingStep& prev, const VocabHead& head, const Tensor& ocr_embeddings,
                            const Tensor& decoder_role, const Tensor& position);

// Runs the shared transformer with the given decoder inputs ([t x d]) and
// returns the decoder outputs ([t x d]).
using DecoderRunner = std::function<Tensor(const Tensor& decoder_inputs)>;

struct DecodeTrace {
  std::vector<DecodingStep> steps;  // excludes <end>
  std::vector<double> scores;       // winning score per emitted step
  bool ended = false;               // stopped on <end> rather than the step limit
};

// Greedy loop: step 0 from the context, step t from the decoder output of the
// slot fed with step t-1. At most max_steps predictions, <end> included.
DecodeTrace decode(const Tensor& context, const Tensor& ocr_outputs, const Mask& ocr_mask,
                   const Tensor& ocr_embeddings, const VocabHead& head, const Tensor& decoder_role,
                   const Embedding& positions, std::size_t max_steps, const DecoderRunner& run);

std::string render_step(const DecodingStep& step, const Vocabulary& vocab, const std::vector<std::string>& ocr);
// Joins steps with single spaces, stopping before <end>.
std::string render(const std::vector<DecodingStep>& steps, const Vocabulary& vocab,
                   const std::vector<std::string>& ocr);

}  // namespace textfuse
