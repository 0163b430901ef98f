#include "textfuse/objectives.hpp"

#include <algorithm>

#include "textfuse/errors.hpp"
#include "textfuse/ops.hpp"

namespace textfuse {

void LossConfig::validate() const {
  if (!(alpha >= 0.0)) throw ConfigError("alpha must be nonnegative");
}

Tensor StepTargets::dense() const {
  std::vector<double> values(steps() * width(), 0.0);
  for (std::size_t t = 0; t < steps(); ++t) {
    for (std::size_t slot : positives[t]) values[t * width() + slot] = 1.0;
  }
  return Tensor::from({steps(), width()}, std::move(values));
}

StepTargets build_targets(std::string_view answer, const Vocabulary& vocab, const std::vector<std::string>& ocr,
                          std::size_t ocr_slots, std::size_t max_steps) {
  if (max_steps == 0) throw ContractError("targets need at least one step");
  if (ocr.size() > ocr_slots) throw ContractError("more OCR strings than OCR slots");
  StepTargets out;
  out.vocab_size = vocab.size();
  out.ocr_slots = ocr_slots;
  std::vector<std::string> words = split_words(normalize_answer(answer));
  if (words.size() > max_steps - 1) words.resize(max_steps - 1);
  for (const std::string& w : words) {
    std::vector<std::size_t> pos;
    const auto vocab_id = vocab.find(w);
    if (vocab_id) pos.push_back(*vocab_id);
    std::optional<std::size_t> first_ocr;
    for (std::size_t j = 0; j < ocr.size(); ++j) {
      if (normalize_answer(ocr[j]) == w) {
        pos.push_back(out.vocab_size + j);
        if (!first_ocr) first_ocr = j;
      }
    }
    if (pos.empty()) pos.push_back(Vocabulary::kUnk);
    out.positives.push_back(std::move(pos));
    if (vocab_id) {
      out.inputs.push_back(DecodingStep::vocab(*vocab_id));
    } else if (first_ocr) {
      out.inputs.push_back(DecodingStep::ocr(*first_ocr));
    } else {
      out.inputs.push_back(DecodingStep::vocab(Vocabulary::kUnk));
    }
  }
  out.positives.push_back({Vocabulary::kEnd});
  return out;
}

namespace {

void check_scores(const ScoreVector& scores, const StepTargets& targets) {
  if (scores.steps() != targets.steps() || scores.width() != targets.width()) {
    throw DimensionError("scores [" + std::to_string(scores.steps()) + " x " + std::to_string(scores.width()) +
                         "] vs targets [" + std::to_string(targets.steps()) + " x " +
                         std::to_string(targets.width()) + "]");
  }
  for (std::size_t t = 0; t < targets.steps(); ++t) {
    for (std::size_t slot : targets.positives[t]) {
      if (!scores.valid[slot]) throw ContractError("target marks an unpopulated OCR slot");
    }
  }
}

}  // namespace

Tensor bce_loss(const ScoreVector& scores, const StepTargets& targets) {
  check_scores(scores, targets);
  return bce_with_logits(scores.logits, targets.dense(), scores.valid);
}

std::size_t edit_distance(std::string_view a, std::string_view b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<std::size_t> table((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return table[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = at(i - 1, j - 1) + (a[i - 1] == b[j - 1] ? 0 : 1);
      at(i, j) = std::min({at(i - 1, j) + 1, at(i, j - 1) + 1, sub});
    }
  }
  return at(n, m);
}

double anls(std::string_view a, std::string_view b) {
  const std::string x = normalize_answer(a);
  const std::string y = normalize_answer(b);
  const std::size_t longest = std::max(x.size(), y.size());
  if (longest == 0) return 1.0;
  return 1.0 - static_cast<double>(edit_distance(x, y)) / static_cast<double>(longest);
}

double anls_max(std::string_view prediction, std::span<const std::string> references) {
  double best = 0.0;
  for (const std::string& r : references) best = std::max(best, anls(prediction, r));
  return best;
}

std::vector<DecodingStep> argmax_steps(const ScoreVector& scores) {
  std::vector<DecodingStep> out;
  for (std::size_t t = 0; t < scores.steps(); ++t) {
    const DecodingStep s = scores.argmax(t);
    if (!s.is_ocr() && s.index == Vocabulary::kEnd) break;
    out.push_back(s);
  }
  return out;
}

Tensor pg_loss(const ScoreVector& scores, const StepTargets& targets, double reward) {
  check_scores(scores, targets);
  const std::size_t steps = targets.steps(), width = targets.width();
  const Tensor y = targets.dense();
  std::vector<double> pos_w(steps * width, 0.0), neg_w(steps * width, 0.0);
  std::size_t count = 0;
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t j = 0; j < width; ++j) {
      if (!scores.valid[j]) continue;
      ++count;
      const double yv = y.at(t, j);
      pos_w[t * width + j] = yv;
      neg_w[t * width + j] = 1.0 - yv;
    }
  }
  const Tensor p = clamp(softmax_masked(scores.logits, scores.valid), kLogClamp, 1.0 - kLogClamp);
  const Tensor log_p = log(p);
  const Tensor log_not_p = log(affine(p, -1.0, 1.0));
  const Tensor terms = add(mul(log_p, Tensor::from({steps, width}, std::move(pos_w))),
                           mul(log_not_p, Tensor::from({steps, width}, std::move(neg_w))));
  return affine(sum(terms), (0.5 - reward) / static_cast<double>(count));
}

LossTerms combined_loss(const ScoreVector& scores, const StepTargets& targets, const LossConfig& cfg,
                        std::string_view answer, const Vocabulary& vocab, const std::vector<std::string>& ocr) {
  LossTerms out;
  const Tensor bce = bce_loss(scores, targets);
  out.bce = bce.item();
  out.total = bce;
  if (cfg.pg_enabled) {
    out.reward = anls(answer, render(argmax_steps(scores), vocab, ocr));
    const Tensor weighted = affine(pg_loss(scores, targets, out.reward), cfg.alpha);
    out.pg = weighted.item();
    out.total = add(bce, weighted);
  }
  return out;
}

bool answer_matches(std::string_view prediction, std::span<const std::string> references) {
  const std::string p = normalize_answer(prediction);
  return std::any_of(references.begin(), references.end(),
                     [&](const std::string& r) { return normalize_answer(r) == p; });
}

double exact_match_accuracy(std::span<const std::string> predictions,
                            std::span<const std::vector<std::string>> references) {
  if (predictions.size() != references.size()) throw DimensionError("prediction/reference count mismatch");
  if (predictions.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (answer_matches(predictions[i], references[i])) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

}  // namespace textfuse
