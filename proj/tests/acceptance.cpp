// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
//
//   textfuse_acceptance            all criteria
//   textfuse_acceptance 1 2 7      selected criteria

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "textfuse/complexity.hpp"
#include "textfuse/dataset.hpp"
#include "textfuse/gradcheck.hpp"
#include "textfuse/model.hpp"
#include "textfuse/ops.hpp"
#include "textfuse/train.hpp"

using namespace textfuse;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

std::string fmt(double v, const char* spec = "%.4g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

Tensor random_tensor(Rng& rng, Shape shape, double scale = 1.0) {
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = rng.normal(0.0, scale);
  return Tensor::from(std::move(shape), std::move(v));
}

Mask random_mask(Rng& rng, std::size_t n) {
  Mask m(n);
  for (std::size_t i = 0; i < n; ++i) m[i] = rng.index(3) != 0;
  m[rng.index(n)] = true;
  return m;
}

Vocabulary toy_vocab(std::size_t size) {
  std::vector<std::string> words;
  for (std::size_t i = Vocabulary::kSpecialCount; i < size; ++i) words.push_back("v" + std::to_string(i));
  return Vocabulary(words);
}

// Memoized recursion over suffixes.
std::size_t distance_oracle(const std::string& a, const std::string& b) {
  std::vector<std::vector<long>> memo(a.size() + 1, std::vector<long>(b.size() + 1, -1));
  std::function<std::size_t(std::size_t, std::size_t)> go = [&](std::size_t i, std::size_t j) -> std::size_t {
    if (i == a.size()) return b.size() - j;
    if (j == b.size()) return a.size() - i;
    long& m = memo[i][j];
    if (m >= 0) return static_cast<std::size_t>(m);
    std::size_t best = go(i + 1, j + 1) + (a[i] == b[j] ? 0 : 1);
    best = std::min({best, go(i + 1, j) + 1, go(i, j + 1) + 1});
    m = static_cast<long>(best);
    return best;
  };
  return go(0, 0);
}

Outcome complexity_fidelity() {
  Outcome o;
  const auto t0 = Clock::now();
  ComplexityQuery m4c;
  m4c.model = EncoderModel::m4c_style;
  m4c.layers = 4;
  ComplexityQuery ours;
  ours.model = EncoderModel::six_vector;
  ours.layers = 8;
  const ComplexityReport a = symbolic_count(m4c);
  const ComplexityReport b = symbolic_count(ours);
  const double elapsed = seconds_since(t0);
  o.require(a.transformer_per_layer_ops == 28900, "m4c per-layer 28,900");
  o.require(a.total_ops == 115600, "m4c 4-layer 115,600");
  o.require(b.attention_block_ops == 400, "block 400");
  o.require(b.transformer_per_layer_ops == 3136, "per-layer 3,136");
  o.require(b.transformer_total_ops == 25088, "8-layer 25,088");
  o.require(b.total_ops == 25488, "total 25,488");
  o.require(elapsed < 1.0, "runtime < 1 s");
  o.detail << "28900/115600 vs 400/3136/25088/25488 in " << fmt(elapsed * 1e3, "%.3f") << " ms";
  return o;
}

Outcome anls_oracle() {
  Outcome o;
  const auto t0 = Clock::now();
  Rng rng(20);
  std::size_t mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    std::string a, b;
    for (std::size_t k = 0, n = rng.index(21); k < n; ++k) a.push_back(static_cast<char>('a' + rng.index(5)));
    for (std::size_t k = 0, n = rng.index(21); k < n; ++k) b.push_back(static_cast<char>('a' + rng.index(5)));
    const std::size_t longest = std::max(a.size(), b.size());
    const double expected =
        longest == 0 ? 1.0 : 1.0 - static_cast<double>(distance_oracle(a, b)) / static_cast<double>(longest);
    if (anls(a, b) != expected) ++mismatches;
  }
  const std::size_t kitten = edit_distance("kitten", "sitting");
  const double elapsed = seconds_since(t0);
  o.require(mismatches == 0, "bit-exact agreement");
  o.require(kitten == 3, "kitten/sitting = 3");
  o.require(elapsed < 1.0, "runtime < 1 s");
  o.detail << "1000 pairs, " << mismatches << " mismatches, kitten/sitting " << kitten << ", "
           << fmt(elapsed, "%.3f") << " s";
  return o;
}

// Sampled entries per parameter tensor in the full-model check.
constexpr std::size_t kModelEntries = 24;
constexpr int kGradSeeds = 20;

Outcome gradient_checks(bool textcaps, bool with_primitives) {
  Outcome o;
  const auto t0 = Clock::now();
  std::size_t checked = 0, failed = 0, kinks = 0;
  double worst = 0.0;
  std::string worst_entry;
  auto absorb = [&](const GradCheckResult& r) {
    checked += r.checked;
    failed += r.failed;
    kinks += r.kinks;
    if (r.max_rel_error > worst) {
      worst = r.max_rel_error;
      worst_entry = r.name + " " + r.worst;
    }
    if (!r.passed()) o.require(false, r.name + " " + r.worst);
  };
  for (int seed = 0; seed < kGradSeeds; ++seed) {
    if (with_primitives) {
      for (const GradCheckResult& r : primitive_grad_checks(static_cast<std::uint64_t>(seed))) absorb(r);
    }
    GradCheckOptions opts;
    opts.entries_per_tensor = kModelEntries;
    opts.seed = static_cast<std::uint64_t>(seed);
    absorb(model_grad_check(static_cast<std::uint64_t>(seed), textcaps, opts));
  }
  const double elapsed = seconds_since(t0);
  o.require(elapsed < 120.0, "runtime < 2 min");
  o.detail << kGradSeeds << " seeds, " << checked << " entries, " << failed << " failed, " << kinks
           << " straddling a ReLU kink at eps 1e-5 (re-checked at 1e-6 / 1e-7), max rel err " << fmt(worst, "%.3g")
           << ", " << fmt(elapsed, "%.1f") << " s";
  return o;
}

Outcome attention_invariants() {
  Outcome o;
  constexpr std::size_t d = 6;
  constexpr int cases = 120;
  ParameterStore store;
  Rng rng(40);
  AttentionBlock block(store, "block", d, 4, rng);
  SelfAttentionHead head(store, "head", d, 5, rng);
  for (const Parameter& p : store.all()) {
    for (double& v : p.value.node().data) v = rng.normal(0.0, 0.7);
  }
  std::size_t perm_fail = 0, single_fail = 0, convex_fail = 0, pad_fail = 0;
  double worst_convex = 0.0;

  for (int trial = 0; trial < cases; ++trial) {
    const std::size_t n = 1 + rng.index(12);
    const Tensor q = random_tensor(rng, {1, d});
    const Tensor x = random_tensor(rng, {n, d});
    const Mask valid = random_mask(rng, n);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng.engine());
    Mask permuted(n);
    for (std::size_t r = 0; r < n; ++r) permuted[r] = valid[perm[r]];
    const Tensor g = block(q, x, valid);
    const Tensor gp = block(q, embedding_lookup(x, perm), permuted);
    for (std::size_t i = 0; i < d; ++i) {
      if (std::abs(g.at(i) - gp.at(i)) > 1e-12 * (1.0 + std::abs(g.at(i)))) ++perm_fail;
    }
  }
  for (int trial = 0; trial < cases; ++trial) {
    const std::size_t n = 1 + rng.index(10);
    const Tensor q = random_tensor(rng, {1, d});
    const Tensor x = random_tensor(rng, {n, d});
    Mask valid(n, false);
    const std::size_t keep = rng.index(n);
    valid[keep] = true;
    const Tensor g = block(q, x, valid);
    const Tensor s = head(x, valid);
    for (std::size_t i = 0; i < d; ++i) {
      if (g.at(i) != x.at(keep, i) || s.at(i) != x.at(keep, i)) ++single_fail;
    }
  }
  for (int trial = 0; trial < cases; ++trial) {
    const std::size_t n = 1 + rng.index(12);
    const Tensor q = random_tensor(rng, {1, d}, 1.0 + 4.0 * rng.uniform(0, 1));
    const Tensor x = random_tensor(rng, {n, d});
    const Mask valid = random_mask(rng, n);
    for (const Tensor& w : {block.weights(q, x, valid), head.weights(x, valid)}) {
      double total = 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        if (valid[r] ? w.at(r) < 0.0 : w.at(r) != 0.0) ++convex_fail;
        total += valid[r] ? w.at(r) : 0.0;
      }
      worst_convex = std::max(worst_convex, std::abs(total - 1.0));
      if (std::abs(total - 1.0) > 1e-12) ++convex_fail;
    }
  }
  for (int trial = 0; trial < cases; ++trial) {
    const std::size_t n = 2 + rng.index(10);
    const Tensor q = random_tensor(rng, {1, d});
    const Tensor x = random_tensor(rng, {n, d});
    const Mask valid = random_mask(rng, n);
    Tensor mutated = x.detach();
    auto data = mutated.mutable_data();
    for (std::size_t r = 0; r < n; ++r) {
      if (valid[r]) continue;
      for (std::size_t i = 0; i < d; ++i) data[r * d + i] = rng.normal(0.0, 100.0);
    }
    const Tensor g = block(q, x, valid), g2 = block(q, mutated, valid);
    const Tensor s = head(x, valid), s2 = head(mutated, valid);
    for (std::size_t i = 0; i < d; ++i) {
      if (g.at(i) != g2.at(i) || s.at(i) != s2.at(i)) ++pad_fail;
    }
  }

  // End to end: padded OCR / object slots never move the valid scores.
  std::size_t model_pad_fail = 0;
  ModelConfig cfg = toy_model_config(false);
  cfg.max_ocr = cfg.max_obj = 6;
  cfg.pad_ocr = cfg.pad_obj = 6;
  const Model model(cfg, 41);
  const Vocabulary vocab = toy_vocab(cfg.vocab_size);
  auto scramble = [&](const Tensor& t, const Mask& mask) {
    if (!t.defined()) return t;
    Tensor y = t.detach();
    auto v = y.mutable_data();
    for (std::size_t r = 0; r < mask.size(); ++r) {
      if (mask[r]) continue;
      for (std::size_t c = 0; c < y.cols(); ++c) v[r * y.cols() + c] = rng.normal(0.0, 30.0);
    }
    return y;
  };
  for (int trial = 0; trial < cases; ++trial) {
    const Instance inst = random_instance(rng, cfg, vocab, 1 + rng.index(5), 1 + rng.index(5), 1 + rng.index(3));
    const Encoded enc = model.encode(inst);
    const StepTargets targets = model.targets_for(enc, inst.answers.front(), vocab);
    const Forward f = model.teacher_forced(enc, targets);
    Encoded m = enc;
    m.features.ocr_visual = scramble(enc.features.ocr_visual, enc.features.ocr_mask);
    m.features.ocr_linguistic = scramble(enc.features.ocr_linguistic, enc.features.ocr_mask);
    m.ocr_embeddings = scramble(enc.ocr_embeddings, enc.features.ocr_mask);
    m.features.objects = scramble(enc.features.objects, enc.features.obj_mask);
    m.third_branch = m.features.objects;
    m.guidance = model.guide(inst, m);
    std::vector<Tensor> slots = m.guidance.vectors;
    for (Tensor& g : model.attend(m, m.guidance)) slots.push_back(g);
    m.summaries = concat(slots, 0);
    const Forward h = model.teacher_forced(m, targets);
    bool same = true;
    for (std::size_t t = 0; t < f.scores.steps(); ++t) {
      for (std::size_t j = 0; j < f.scores.width(); ++j) {
        if (f.scores.valid[j] && f.scores.logits.at(t, j) != h.scores.logits.at(t, j)) same = false;
      }
    }
    if (!same || model.decode(m).steps != model.decode(enc).steps) ++model_pad_fail;
  }

  o.require(perm_fail == 0, "permutation invariance");
  o.require(single_fail == 0, "single-element identity");
  o.require(convex_fail == 0, "convex weights");
  o.require(pad_fail == 0 && model_pad_fail == 0, "pad-slot immunity");
  o.detail << cases << " cases each; permutation " << perm_fail << ", single " << single_fail << ", convex "
           << convex_fail << " (max |sum-1| " << fmt(worst_convex, "%.2g") << "), pad " << pad_fail << ", model pad "
           << model_pad_fail << " failures";
  return o;
}

Outcome overfit() {
  Outcome o;
  SyntheticSpec spec;
  spec.task = SyntheticTask::mixed_compose;
  spec.n_instances = 64;
  spec.seed = 7;
  const Dataset data = generate_synthetic(spec);
  TrainConfig tc;
  tc.model.vocab_size = data.vocab.size();
  tc.seed = 1;
  Trainer trainer(tc, data.vocab);
  const auto t0 = Clock::now();
  double accuracy = 0.0;
  std::size_t reached_at = 0;
  EvalReport report;
  while (trainer.iteration() < tc.total_iterations) {
    trainer.step(data.instances);
    if (trainer.iteration() % 100 != 0) continue;
    report = evaluate(trainer.model(), data.vocab, data.instances);
    accuracy = report.accuracy;
    std::cerr << "  overfit: iteration " << trainer.iteration() << " accuracy " << accuracy << " ("
              << fmt(seconds_since(t0), "%.0f") << " s)\n";
    if (accuracy >= 0.95) {
      reached_at = trainer.iteration();
      break;
    }
  }
  const double elapsed = seconds_since(t0);
  std::string oov_example;
  for (std::size_t i = 0; i < report.rows.size() && oov_example.empty(); ++i) {
    if (!report.rows[i].correct) continue;
    const Instance& inst = data.instances[i];
    std::vector<std::string> ocr;
    for (const auto& t : inst.ocr) ocr.push_back(t.text);
    for (const DecodingStep& s : report.rows[i].trace) {
      const std::string word = render_step(s, data.vocab, ocr);
      if (s.is_ocr() && !data.vocab.find(word)) oov_example = report.rows[i].prediction;
    }
  }
  o.require(accuracy >= 0.95, "accuracy >= 95%");
  o.require(elapsed < 600.0, "runtime < 10 min");
  o.require(!oov_example.empty(), "an OOV OCR-pointed token in a learned answer");
  o.detail << "accuracy " << fmt(accuracy * 100, "%.1f") << "% at iteration " << reached_at << ", "
           << fmt(elapsed, "%.0f") << " s, OOV answer '" << oov_example << "'";
  return o;
}

AblationConfig ablation_config() {
  AblationConfig cfg;
  SyntheticSpec train;
  train.task = SyntheticTask::split_cue;
  train.n_instances = 16384;
  train.seed = 1;
  SyntheticSpec eval = train;
  eval.n_instances = 512;
  eval.seed = 2;
  cfg.run.synthetic = train;
  cfg.run.eval_synthetic = eval;
  cfg.run.train.model.vocab_size = synthetic_vocabulary(train.vocab_words).size();
  cfg.run.train.model.encoder.d_model = 48;
  cfg.run.train.model.encoder.num_layers = 2;
  cfg.run.train.model.encoder.num_heads = 4;
  cfg.run.train.model.encoder.d_ff = 192;
  cfg.run.train.learning_rate = 3e-4;
  cfg.run.train.total_iterations = 5000;
  cfg.run.train.decay_points = {3500, 3750};
  cfg.run.train.batch_size = 16;
  cfg.seeds = {1, 2, 3};
  return cfg;
}

Outcome ablation_direction() {
  Outcome o;
  const auto t0 = Clock::now();
  const auto rows = run_ablation(ablation_config(), [](const std::string& line) { std::cerr << "  ablation: " << line << "\n"; });
  double one = 0, two = 0, three = 0;
  for (const AblationRow& r : rows) {
    if (r.blocks == BlockConfig::one_block) one = r.mean_accuracy;
    if (r.blocks == BlockConfig::two_block) two = r.mean_accuracy;
    if (r.blocks == BlockConfig::three_block) three = r.mean_accuracy;
  }
  o.require(three >= two && two >= one, "three >= two >= one");
  o.require(three - one >= 0.02, "three - one >= 2 points");
  o.detail << "mean accuracy one " << fmt(one * 100, "%.2f") << "%, two " << fmt(two * 100, "%.2f") << "%, three "
           << fmt(three * 100, "%.2f") << "% over 3 seeds, " << fmt(seconds_since(t0), "%.0f") << " s";
  return o;
}

TrainConfig small_config(const Vocabulary& vocab) {
  TrainConfig c;
  c.model = toy_model_config(false);
  c.model.d_recog = 32;
  c.model.max_question_len = 20;
  c.model.max_ocr = 50;
  c.model.max_obj = 100;
  c.model.vocab_size = vocab.size();
  c.learning_rate = 1e-3;
  c.total_iterations = 8;
  c.decay_points = {4, 6};
  c.batch_size = 4;
  c.seed = 5;
  c.eval_every = 4;
  return c;
}

std::string csv_of(const TrainConfig& cfg, const Dataset& data) {
  Trainer trainer(cfg, data.vocab);
  std::ostringstream os;
  trainer.run(data.instances, data.instances, &os);
  return os.str();
}

Outcome loss_contracts() {
  Outcome o;
  ScoreVector s;
  s.logits = Tensor::from({1, 1}, {0.0});
  s.valid = Mask{true};
  s.vocab_size = 1;
  StepTargets t;
  t.vocab_size = 1;
  t.positives = {{0}};
  const double bce = bce_loss(s, t).item();
  o.require(std::abs(bce - std::log(2.0)) <= 1e-12, "bce ln 2");

  Rng rng(70);
  ScoreVector r;
  r.logits = random_tensor(rng, {3, 6});
  r.valid = Mask{true, true, true, true, false, true};
  r.vocab_size = 4;
  StepTargets rt;
  rt.vocab_size = 4;
  rt.ocr_slots = 2;
  rt.positives = {{5}, {1}, {2}};
  const double pg = pg_loss(r, rt, 0.5).item();
  o.require(pg == 0.0, "pg zero at r = 0.5");

  SyntheticSpec spec;
  spec.task = SyntheticTask::mixed_compose;
  spec.n_instances = 16;
  spec.seed = 3;
  const Dataset data = generate_synthetic(spec);
  TrainConfig off = small_config(data.vocab);
  off.loss.pg_enabled = false;
  TrainConfig zero = off;
  zero.loss.pg_enabled = true;
  zero.loss.alpha = 0.0;
  const bool identical = csv_of(off, data) == csv_of(zero, data);
  o.require(identical, "alpha = 0 run identical to pg-disabled run");
  o.detail << "bce(0, 1) - ln 2 = " << fmt(bce - std::log(2.0), "%.3g") << ", pg(r = 0.5) = " << pg
           << ", alpha-0 CSV " << (identical ? "identical" : "differs");
  return o;
}

Outcome determinism() {
  Outcome o;
  SyntheticSpec spec;
  spec.task = SyntheticTask::mixed_compose;
  spec.n_instances = 16;
  spec.seed = 4;
  const Dataset data = generate_synthetic(spec);
  TrainConfig cfg = small_config(data.vocab);
  cfg.loss.pg_enabled = true;
  const bool same_csv = csv_of(cfg, data) == csv_of(cfg, data);

  Trainer trainer(cfg, data.vocab);
  for (int i = 0; i < 3; ++i) trainer.step(data.instances);
  const std::string first = trainer.checkpoint_bytes();
  const auto loaded = Trainer::from_checkpoint_bytes(first);
  const std::string second = loaded->checkpoint_bytes();
  const EvalReport a = evaluate(trainer.model(), data.vocab, data.instances);
  const EvalReport b = evaluate(loaded->model(), data.vocab, data.instances);
  bool same_eval = a.accuracy == b.accuracy && a.mean_anls == b.mean_anls && a.rows.size() == b.rows.size();
  for (std::size_t i = 0; same_eval && i < a.rows.size(); ++i) {
    same_eval = a.rows[i].trace == b.rows[i].trace && a.rows[i].prediction == b.rows[i].prediction;
  }
  // Scores after reload, bit for bit.
  for (std::size_t i = 0; same_eval && i < data.instances.size(); ++i) {
    const DecodeTrace ta = trainer.model().decode(data.instances[i]);
    const DecodeTrace tb = loaded->model().decode(data.instances[i]);
    same_eval = ta.scores == tb.scores;
  }
  o.require(same_csv, "identical metrics CSV");
  o.require(first == second, "checkpoint byte-identical");
  o.require(same_eval, "evaluation after reload identical");
  o.detail << "CSV " << (same_csv ? "identical" : "differs") << ", checkpoint " << first.size() << " bytes "
           << (first == second ? "identical" : "differs") << ", reload eval " << (same_eval ? "identical" : "differs");
  return o;
}

Outcome textcaps_mode() {
  Outcome o;
  SyntheticSpec spec;
  spec.task = SyntheticTask::caption_compose;
  spec.n_instances = 16;
  spec.seed = 9;
  const Dataset data = generate_synthetic(spec);
  bool empty_questions = true;
  for (const Instance& inst : data.instances) empty_questions = empty_questions && inst.question_tokens.empty();
  TrainConfig cfg = small_config(data.vocab);
  cfg.mode = TaskMode::textcaps;
  cfg.loss.pg_enabled = true;
  Trainer trainer(cfg, data.vocab);
  const auto rows = trainer.run(data.instances, data.instances);
  bool finite = true;
  for (const MetricsRow& r : rows) finite = finite && std::isfinite(r.loss);
  const std::size_t T = trainer.model().max_decode_steps();
  bool bounded = true;
  for (const Instance& inst : data.instances) bounded = bounded && trainer.model().decode(inst).steps.size() <= T;
  const Outcome grads = gradient_checks(true, false);

  o.require(empty_questions, "empty questions");
  o.require(T == 30, "T = 30");
  o.require(finite && rows.size() == cfg.total_iterations, "training runs");
  o.require(bounded, "decoding bounded by T");
  o.require(grads.pass, "gradient check in caption mode");
  o.detail << rows.size() << " iterations, final loss " << fmt(rows.back().loss) << ", T " << T
           << ", eval ANLS " << fmt(rows.back().eval_anls.value_or(0.0)) << "; gradient check: " << grads.detail.str();
  return o;
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "complexity fidelity", complexity_fidelity},
      {2, "ANLS oracle equivalence", anls_oracle},
      {3, "gradient integrity", [] { return gradient_checks(false, true); }},
      {4, "attention invariants", attention_invariants},
      {5, "overfit check", overfit},
      {6, "ablation direction", ablation_direction},
      {7, "loss contracts", loss_contracts},
      {8, "determinism and persistence", determinism},
      {9, "TextCaps mode", textcaps_mode},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
  int failures = 0;
  for (const Criterion& c : all) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end()) continue;
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail << "exception: " << e.what();
    }
    std::cout << (out.pass ? "PASS" : "FAIL") << " " << c.id << " " << c.name << ": " << out.detail.str()
              << std::endl;
    if (!out.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
