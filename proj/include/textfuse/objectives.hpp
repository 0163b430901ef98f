#pragma once

// Training losses and evaluation metrics.
//
//   bce   mean over valid entries of -y log sigmoid(z) - (1 - y) log(1 - sigmoid(z))
//   pg    (0.5 - r) * mean over valid entries of y log p + (1 - y) log(1 - p)
//         with p the clamped softmax over each step's valid slots and
//         r = anls(ground truth, rendered argmax prediction)
//   total bce + alpha * pg   (pg term only when enabled)

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "textfuse/decoder.hpp"
#include "textfuse/vocab.hpp"

namespace textfuse {

struct LossConfig {
  double alpha = 1.0;
  bool pg_enabled = false;
  void validate() const;
};

// Multi-hot targets over vocab_size + ocr_slots per decoding step.
struct StepTargets {
  std::size_t vocab_size = 0;
  std::size_t ocr_slots = 0;
  std::vector<std::vector<std::size_t>> positives;  // sorted slot indices per step
  // Input fed to the decoder after each step under teacher forcing.
  std::vector<DecodingStep> inputs;

  std::size_t steps() const { return positives.size(); }
  std::size_t width() const { return vocab_size + ocr_slots; }
  Tensor dense() const;  // [steps x width]
};

// answer is split on whitespace; at most max_steps - 1 words are kept so the
// final <end> step always fits. ocr holds the populated OCR strings; ocr_slots
// may exceed ocr.size() when the sequence is padded.
StepTargets build_targets(std::string_view answer, const Vocabulary& vocab, const std::vector<std::string>& ocr,
                          std::size_t ocr_slots, std::size_t max_steps);

Tensor bce_loss(const ScoreVector& scores, const StepTargets& targets);

std::size_t edit_distance(std::string_view a, std::string_view b);
// 1 - d / max(len); both empty gives 1. Inputs are trimmed and lowercased.
double anls(std::string_view a, std::string_view b);
// Best ANLS against any reference.
double anls_max(std::string_view prediction, std::span<const std::string> references);

// Greedy per-step argmax of the teacher-forced scores, cut at the first <end>.
std::vector<DecodingStep> argmax_steps(const ScoreVector& scores);

Tensor pg_loss(const ScoreVector& scores, const StepTargets& targets, double reward);

struct LossTerms {
  Tensor total;
  double bce = 0.0;
  double pg = 0.0;  // weighted contribution alpha * pg, 0 when disabled
  double reward = 0.0;
};

LossTerms combined_loss(const ScoreVector& scores, const StepTargets& targets, const LossConfig& cfg,
                        std::string_view answer, const Vocabulary& vocab, const std::vector<std::string>& ocr);

bool answer_matches(std::string_view prediction, std::span<const std::string> references);
double exact_match_accuracy(std::span<const std::string> predictions,
                            std::span<const std::vector<std::string>> references);

}  // namespace textfuse
