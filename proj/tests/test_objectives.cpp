#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"
#include "textfuse/errors.hpp"
#include "textfuse/objectives.hpp"
#include "textfuse/ops.hpp"
#include "textfuse/parameters.hpp"

using namespace textfuse;

namespace {

// Memoized recursion over suffixes, independent of the library's table.
std::size_t distance_oracle(const std::string& a, const std::string& b) {
  std::vector<std::vector<long>> memo(a.size() + 1, std::vector<long>(b.size() + 1, -1));
  std::function<std::size_t(std::size_t, std::size_t)> go = [&](std::size_t i, std::size_t j) -> std::size_t {
    if (i == a.size()) return b.size() - j;
    if (j == b.size()) return a.size() - i;
    long& m = memo[i][j];
    if (m >= 0) return static_cast<std::size_t>(m);
    std::size_t best = go(i + 1, j + 1) + (a[i] == b[j] ? 0 : 1);
    best = std::min(best, go(i + 1, j) + 1);
    best = std::min(best, go(i, j + 1) + 1);
    m = static_cast<long>(best);
    return best;
  };
  return go(0, 0);
}

std::string random_string(Rng& rng, std::size_t max_len) {
  std::string s;
  const std::size_t len = rng.index(max_len + 1);
  for (std::size_t i = 0; i < len; ++i) s.push_back(static_cast<char>('a' + rng.index(4)));
  return s;
}

ScoreVector make_scores(std::vector<double> logits, std::size_t steps, Mask valid, std::size_t vocab_size) {
  ScoreVector s;
  s.logits = Tensor::from({steps, valid.size()}, std::move(logits), true);
  s.valid = std::move(valid);
  s.vocab_size = vocab_size;
  return s;
}

StepTargets make_targets(std::size_t vocab_size, std::size_t ocr_slots, std::vector<std::vector<std::size_t>> pos) {
  StepTargets t;
  t.vocab_size = vocab_size;
  t.ocr_slots = ocr_slots;
  t.positives = std::move(pos);
  return t;
}

}  // namespace

TEST_CASE("build_targets: single source, multi-hot OCR, unknown words") {
  std::vector<std::string> words;
  for (int i = 4; i < 17; ++i) words.push_back("w" + std::to_string(i));
  words.push_back("yes");
  const Vocabulary vocab(words);
  REQUIRE(*vocab.find("yes") == 17);

  const StepTargets yes = build_targets("yes", vocab, {"stop", "go"}, 2, 12);
  REQUIRE(yes.steps() == 2);
  CHECK(yes.positives[0] == std::vector<std::size_t>{17});
  CHECK(yes.positives[1] == std::vector<std::size_t>{Vocabulary::kEnd});
  CHECK(yes.inputs[0] == DecodingStep::vocab(17));

  const std::vector<std::string> ocr{"a", "b", "pizza", "c", "d", "e", "f", "pizza"};
  const StepTargets multi = build_targets("pizza", vocab, ocr, 8, 12);
  CHECK(multi.positives[0] == std::vector<std::size_t>{vocab.size() + 2, vocab.size() + 7});
  CHECK(multi.inputs[0] == DecodingStep::ocr(2));

  const StepTargets unk = build_targets("zebra", vocab, ocr, 8, 12);
  CHECK(unk.positives[0] == std::vector<std::size_t>{Vocabulary::kUnk});

  const StepTargets both = build_targets("yes", vocab, {"YES"}, 1, 12);
  CHECK(both.positives[0] == std::vector<std::size_t>{17, vocab.size()});
}

TEST_CASE("build_targets: pointer-only answer from three OCR tokens") {
  const Vocabulary vocab(std::vector<std::string>{"the", "a"});
  const std::vector<std::string> ocr{"tellus", "mater", "inc.", "rome"};
  const StepTargets t = build_targets("tellus mater inc.", vocab, ocr, 4, 12);
  REQUIRE(t.steps() == 4);
  CHECK(t.positives[0] == std::vector<std::size_t>{vocab.size() + 0});
  CHECK(t.positives[1] == std::vector<std::size_t>{vocab.size() + 1});
  CHECK(t.positives[2] == std::vector<std::size_t>{vocab.size() + 2});
  CHECK(t.positives[3] == std::vector<std::size_t>{Vocabulary::kEnd});
}

TEST_CASE("build_targets: empty answer and truncation") {
  const Vocabulary vocab(std::vector<std::string>{"x"});
  const StepTargets empty = build_targets("", vocab, {}, 0, 12);
  CHECK(empty.steps() == 1);
  CHECK(empty.positives[0] == std::vector<std::size_t>{Vocabulary::kEnd});
  const StepTargets cut = build_targets("x x x x x", vocab, {}, 0, 3);
  CHECK(cut.steps() == 3);
  CHECK(cut.positives[2] == std::vector<std::size_t>{Vocabulary::kEnd});
}

TEST_CASE("bce_loss examples") {
  {
    const ScoreVector s = make_scores({0.0}, 1, Mask{true}, 1);
    const StepTargets t = make_targets(1, 0, {{0}});
    CHECK(std::abs(bce_loss(s, t).item() - std::log(2.0)) <= 1e-12);
  }
  {
    const ScoreVector s = make_scores({40, -40, -40, 40, -40, -40}, 2, Mask{true, true, true}, 3);
    const StepTargets t = make_targets(3, 0, {{0}, {0}});
    CHECK(bce_loss(s, t).item() <= 1e-12);
    CHECK(bce_loss(s, t).item() >= 0.0);
  }
}

TEST_CASE("bce_loss equals a per-entry oracle on a random 3-step case") {
  Rng rng(1);
  std::vector<double> z(3 * 7);
  for (double& v : z) v = rng.normal(0, 2);
  const Mask valid{true, true, true, true, true, false, true};
  const ScoreVector s = make_scores(z, 3, valid, 4);
  const StepTargets t = make_targets(4, 3, {{1, 6}, {4}, {2}});
  const Tensor y = t.dense();
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 7; ++c) {
      if (!valid[c]) continue;
      const double p = 1.0 / (1.0 + std::exp(-z[r * 7 + c]));
      total += -y.at(r, c) * std::log(p) - (1.0 - y.at(r, c)) * std::log(1.0 - p);
      ++count;
    }
  }
  CHECK(std::abs(bce_loss(s, t).item() - total / static_cast<double>(count)) <= 1e-12);
  CHECK_THROWS_AS(bce_loss(s, make_targets(4, 3, {{5}, {4}, {2}})), ContractError);
}

TEST_CASE("edit distance") {
  CHECK(edit_distance("", "abc") == 3);
  CHECK(edit_distance("kitten", "sitting") == 3);
  CHECK(edit_distance("same", "same") == 0);
  Rng rng(2);
  for (int i = 0; i < 300; ++i) {
    const std::string a = random_string(rng, 12), b = random_string(rng, 12);
    CHECK(edit_distance(a, b) == distance_oracle(a, b));
  }
}

TEST_CASE("anls examples") {
  CHECK(anls("hello", "hello") == 1.0);
  CHECK(anls("12", "120") == 1.0 - 1.0 / 3.0);
  CHECK(anls("a", "b") == 0.0);
  CHECK(anls("", "") == 1.0);
  CHECK(anls("  Hello ", "hello") == 1.0);
}

TEST_CASE("property: anls matches the DP oracle, is symmetric and bounded") {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const std::string a = random_string(rng, 20), b = random_string(rng, 20);
    const std::size_t longest = std::max(a.size(), b.size());
    const double expected =
        longest == 0 ? 1.0 : 1.0 - static_cast<double>(distance_oracle(a, b)) / static_cast<double>(longest);
    CHECK(anls(a, b) == expected);
    CHECK(anls(a, b) == anls(b, a));
    CHECK(anls(a, a) == 1.0);
    CHECK(anls(a, b) >= 0.0);
    CHECK(anls(a, b) <= 1.0);
  }
}

TEST_CASE("anls_max takes the best reference") {
  const std::vector<std::string> refs{"coca cola", "coke"};
  CHECK(anls_max("coke", refs) == 1.0);
  CHECK(anls_max("", std::vector<std::string>{}) == 0.0);
}

TEST_CASE("pg_loss: zero at r = 0.5, sign flips between r = 0 and r = 1") {
  Rng rng(4);
  std::vector<double> z(2 * 5);
  for (double& v : z) v = rng.normal(0, 1);
  const ScoreVector s = make_scores(z, 2, Mask{true, true, true, true, false}, 3);
  const StepTargets t = make_targets(3, 2, {{3}, {Vocabulary::kEnd}});
  CHECK(pg_loss(s, t, 0.5).item() == 0.0);
  const double at0 = pg_loss(s, t, 0.0).item();
  const double at1 = pg_loss(s, t, 1.0).item();
  CHECK(at0 < 0.0);
  CHECK(at1 > 0.0);
  CHECK(at1 == -at0);
}

TEST_CASE("pg_loss equals the direct formula") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> z(3 * 6);
    for (double& v : z) v = rng.normal(0, 3);
    const Mask valid{true, true, true, true, rng.index(2) == 0, true};
    const ScoreVector s = make_scores(z, 3, valid, 4);
    const StepTargets t = make_targets(4, 2, {{5}, {1}, {2}});
    const double r = rng.uniform(0, 1);
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t row = 0; row < 3; ++row) {
      double top = -INFINITY;
      for (std::size_t c = 0; c < 6; ++c) {
        if (valid[c]) top = std::max(top, z[row * 6 + c]);
      }
      double norm = 0.0;
      for (std::size_t c = 0; c < 6; ++c) norm += valid[c] ? std::exp(z[row * 6 + c] - top) : 0.0;
      for (std::size_t c = 0; c < 6; ++c) {
        if (!valid[c]) continue;
        double p = std::exp(z[row * 6 + c] - top) / norm;
        p = std::min(std::max(p, 1e-12), 1.0 - 1e-12);
        const bool pos = std::find(t.positives[row].begin(), t.positives[row].end(), c) != t.positives[row].end();
        total += pos ? std::log(p) : std::log(1.0 - p);
        ++count;
      }
    }
    const double expected = (0.5 - r) * total / static_cast<double>(count);
    CHECK(std::abs(pg_loss(s, t, r).item() - expected) <= 1e-10);
  }
}

TEST_CASE("combined loss: alpha = 0 matches pg disabled bit for bit") {
  const Vocabulary vocab(std::vector<std::string>{"yes", "no"});
  const std::vector<std::string> ocr{"stop"};
  Rng rng(6);
  std::vector<double> z(2 * 7);
  for (double& v : z) v = rng.normal(0, 1);
  const StepTargets t = build_targets("stop", vocab, ocr, 1, 12);

  auto run = [&](const LossConfig& cfg, std::vector<double>& grad) {
    ScoreVector s = make_scores(z, 2, Mask(7, true), 6);
    Tape tape;
    TapeScope scope(tape);
    const LossTerms terms = combined_loss(s, t, cfg, "stop", vocab, ocr);
    tape.backward(terms.total);
    grad.assign(s.logits.grad().begin(), s.logits.grad().end());
    return terms;
  };
  std::vector<double> g_off, g_zero;
  const LossTerms off = run(LossConfig{1.0, false}, g_off);
  const LossTerms zero = run(LossConfig{0.0, true}, g_zero);
  CHECK(off.total.item() == zero.total.item());
  CHECK(zero.pg == 0.0);
  CHECK(g_off == g_zero);

  std::vector<double> g_on;
  const LossTerms on = run(LossConfig{1.0, true}, g_on);
  CHECK(on.total.item() == doctest::Approx(on.bce + on.pg).epsilon(1e-14));
  CHECK(on.reward >= 0.0);
  CHECK_THROWS_AS(LossConfig({-1.0, true}).validate(), ConfigError);
}

TEST_CASE("argmax_steps stops at the first end") {
  // Step 0 picks OCR slot 0, step 1 picks <end>, step 2 would pick <unk>.
  const ScoreVector t = make_scores({0, 0, 0, 0, 1, 0, 0, 5, 0, 0, 0, 0, 0, 9, 0}, 3, Mask{true, true, true, true, true}, 4);
  const auto steps = argmax_steps(t);
  REQUIRE(steps.size() == 1);
  CHECK(steps[0] == DecodingStep::ocr(0));
}

TEST_CASE("exact-match accuracy") {
  const std::vector<std::vector<std::string>> refs{{"a"}, {"b", "bee"}, {"c"}, {"d"}};
  CHECK(exact_match_accuracy(std::vector<std::string>{"a", "bee", "c", "d"}, refs) == 1.0);
  CHECK(exact_match_accuracy(std::vector<std::string>{"x", "x", "x", "x"}, refs) == 0.0);
  CHECK(exact_match_accuracy(std::vector<std::string>{" A", "b", "c", "x"}, refs) == 0.75);
}
