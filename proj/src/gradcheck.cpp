#include "textfuse/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "textfuse/dataset.hpp"
#include "textfuse/errors.hpp"
#include "textfuse/model.hpp"
#include "textfuse/ops.hpp"
#include "textfuse/parameters.hpp"

namespace textfuse {

double gradient_rel_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

GradCheckResult grad_check(const std::string& name, const std::function<Tensor()>& loss,
                           const std::vector<Tensor>& inputs, const std::vector<std::string>& input_names,
                           const GradCheckOptions& opts) {
  if (inputs.size() != input_names.size()) throw DimensionError("grad_check: one name per input");
  GradCheckResult result;
  result.name = name;

  std::vector<Tensor> probes = inputs;
  for (Tensor& t : probes) t.zero_grad();
  {
    Tape tape;
    TapeScope scope(tape);
    const Tensor l = loss();
    tape.backward(l);
  }
  Rng rng(opts.seed);
  for (std::size_t p = 0; p < probes.size(); ++p) {
    Tensor& t = probes[p];
    std::vector<double> analytic(t.size(), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
    std::vector<std::size_t> entries(t.size());
    for (std::size_t i = 0; i < entries.size(); ++i) entries[i] = i;
    if (opts.entries_per_tensor != 0 && entries.size() > opts.entries_per_tensor) {
      for (std::size_t i = 0; i < opts.entries_per_tensor; ++i) {
        std::swap(entries[i], entries[i + rng.index(entries.size() - i)]);
      }
      entries.resize(opts.entries_per_tensor);
      std::sort(entries.begin(), entries.end());
    }
    auto data = t.mutable_data();
    auto central = [&](std::size_t i, double eps, double* up_out, double* down_out) {
      const double saved = data[i];
      data[i] = saved + eps;
      const double up = loss().item();
      data[i] = saved - eps;
      const double down = loss().item();
      data[i] = saved;
      if (up_out) *up_out = up;
      if (down_out) *down_out = down;
      return (up - down) / (2.0 * eps);
    };
    for (std::size_t i : entries) {
      double up = 0.0, down = 0.0;
      const double numeric = central(i, opts.eps, &up, &down);
      const double err = gradient_rel_error(analytic[i], numeric, opts.floor);
      ++result.checked;
      if (!(err <= opts.rel_tol)) {
        bool kink = false;
        if (opts.kink_eps > 0.0) {
          const double base = loss().item();
          const double forward = (up - base) / opts.eps, backward = (base - down) / opts.eps;
          const bool one_sided_disagree = gradient_rel_error(forward, backward, opts.floor) > opts.rel_tol;
          for (double e = opts.kink_eps; one_sided_disagree && !kink && e > opts.kink_eps / 20.0; e /= 10.0) {
            kink = gradient_rel_error(analytic[i], central(i, e, nullptr, nullptr), opts.floor) <= opts.rel_tol;
          }
        }
        if (kink) {
          ++result.kinks;
          continue;
        }
        ++result.failed;
      }
      if (err > result.max_rel_error || std::isnan(err)) {
        result.max_rel_error = err;
        std::ostringstream os;
        os << input_names[p] << "[" << i << "]: " << analytic[i] << " vs " << numeric;
        result.worst = os.str();
      }
    }
  }
  for (Tensor& t : probes) t.zero_grad();
  return result;
}

namespace {

Tensor random_tensor(Rng& rng, Shape shape, bool requires_grad = true) {
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = rng.normal(0.0, 1.0);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

Tensor positive_tensor(Rng& rng, Shape shape) {
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = rng.uniform(0.2, 2.0);
  return Tensor::from(std::move(shape), std::move(v), true);
}

// Values kept away from 0 so relu-style kinks sit far outside the probe step.
Tensor off_kink_tensor(Rng& rng, Shape shape) {
  std::vector<double> v(shape_size(shape));
  for (double& x : v) {
    x = rng.uniform(0.1, 1.5);
    if (rng.index(2) == 0) x = -x;
  }
  return Tensor::from(std::move(shape), std::move(v), true);
}

// Weighted sum with fixed random weights, so every output entry carries a
// distinct upstream gradient.
Tensor project(const Tensor& y, const Tensor& weights) { return sum(mul(y, weights)); }

}  // namespace

std::vector<GradCheckResult> primitive_grad_checks(std::uint64_t seed, const GradCheckOptions& opts) {
  Rng rng(seed);
  std::vector<GradCheckResult> out;
  auto run = [&](const std::string& name, const std::vector<Tensor>& inputs, const std::function<Tensor()>& f) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < inputs.size(); ++i) names.push_back("x" + std::to_string(i));
    out.push_back(grad_check(name, f, inputs, names, opts));
  };

  {
    const Tensor a = random_tensor(rng, {5, 7}), b = random_tensor(rng, {7, 3});
    const Tensor w = random_tensor(rng, {5, 3}, false);
    run("matmul", {a, b}, [=] { return project(matmul(a, b), w); });
  }
  {
    const Tensor a = random_tensor(rng, {4, 6}), b = random_tensor(rng, {5, 6});
    const Tensor w = random_tensor(rng, {4, 5}, false);
    run("matmul_nt", {a, b}, [=] { return project(matmul_nt(a, b), w); });
  }
  {
    const Tensor a = random_tensor(rng, {3, 4}), b = random_tensor(rng, {4});
    const Tensor w = random_tensor(rng, {3, 4}, false);
    run("add_broadcast", {a, b}, [=] { return project(add(a, b), w); });
    const Tensor c = random_tensor(rng, {3, 4});
    run("sub", {a, c}, [=] { return project(sub(a, c), w); });
  }
  {
    const Tensor a = random_tensor(rng, {3, 3}), b = random_tensor(rng, {3, 3}), r = random_tensor(rng, {3});
    const Tensor w = random_tensor(rng, {3, 3}, false);
    run("elementwise_product", {a, b}, [=] { return project(mul(a, b), w); });
    run("elementwise_product_broadcast", {a, r}, [=] { return project(mul(a, r), w); });
    run("affine", {a}, [=] { return project(affine(a, -1.7, 0.3), w); });
  }
  {
    const Tensor x = off_kink_tensor(rng, {4, 5});
    const Tensor w = random_tensor(rng, {4, 5}, false);
    run("relu", {x}, [=] { return project(relu(x), w); });
    run("sigmoid", {x}, [=] { return project(sigmoid(x), w); });
    run("tanh", {x}, [=] { return project(tanh(x), w); });
  }
  {
    const Tensor x = positive_tensor(rng, {3, 4});
    const Tensor w = random_tensor(rng, {3, 4}, false);
    run("log", {x}, [=] { return project(log(x), w); });
    run("clamp", {x}, [=] { return project(clamp(x, 0.1, 2.5), w); });
  }
  {
    const Tensor x = random_tensor(rng, {3, 6});
    const Tensor w = random_tensor(rng, {3, 6}, false);
    const Mask mask{true, false, true, true, false, true};
    run("softmax_masked", {x}, [=] { return project(softmax_masked(x, mask), w); });
    MaskMatrix causal(3, 6);
    for (std::size_t r = 0; r < 3; ++r) {
      for (std::size_t c = 0; c <= r + 2; ++c) causal.set(r, c, true);
    }
    run("softmax_masked_matrix", {x}, [=] { return project(softmax_masked(x, causal), w); });
  }
  {
    const Tensor x = random_tensor(rng, {4, 8}), g = random_tensor(rng, {8}), b = random_tensor(rng, {8});
    const Tensor w = random_tensor(rng, {4, 8}, false);
    run("layer_norm", {x, g, b}, [=] { return project(layer_norm(x, g, b), w); });
  }
  {
    const Tensor a = random_tensor(rng, {2, 3}), b = random_tensor(rng, {3}), c = random_tensor(rng, {2, 2});
    const Tensor w0 = random_tensor(rng, {3, 3}, false), w1 = random_tensor(rng, {2, 5}, false);
    run("concat_rows", {a, b}, [=] { return project(concat({a, b}, 0), w0); });
    run("concat_cols", {a, c}, [=] { return project(concat({a, c}, 1), w1); });
  }
  {
    const Tensor x = random_tensor(rng, {4, 6});
    const Tensor wr = random_tensor(rng, {2, 6}, false), wc = random_tensor(rng, {4, 3}, false);
    const Tensor wf = random_tensor(rng, {3, 8}, false);
    run("slice_rows", {x}, [=] { return project(slice_rows(x, 1, 3), wr); });
    run("slice_cols", {x}, [=] { return project(slice_cols(x, 2, 5), wc); });
    run("reshape", {x}, [=] { return project(reshape(x, {3, 8}), wf); });
    run("sum_reduce", {x}, [=] { return sum(mul(x, x)); });
    run("mean", {x}, [=] { return mean(mul(x, x)); });
  }
  {
    const Tensor table = random_tensor(rng, {6, 4});
    const std::vector<std::size_t> ids{4, 1, 4};
    const Tensor w = random_tensor(rng, {3, 4}, false);
    run("embedding_lookup", {table}, [=] { return project(embedding_lookup(table, ids), w); });
  }
  {
    const Tensor z = random_tensor(rng, {3, 5});
    std::vector<double> y(15);
    for (double& v : y) v = rng.index(2) == 0 ? 0.0 : 1.0;
    const Tensor targets = Tensor::from({3, 5}, std::move(y));
    const Mask valid{true, true, false, true, true};
    run("bce_with_logits", {z}, [=] { return bce_with_logits(z, targets, valid); });
  }
  {
    const Tensor a = random_tensor(rng, {3, 4}), b = random_tensor(rng, {4, 5});
    const Mask mask{true, true, false, true, true};
    const Tensor w = random_tensor(rng, {3, 5}, false);
    run("composite", {a, b}, [=] { return project(softmax_masked(relu(matmul(a, b)), mask), w); });
  }
  return out;
}

ModelConfig toy_model_config(bool textcaps_mode) {
  ModelConfig cfg;
  cfg.encoder.num_layers = 1;
  cfg.encoder.num_heads = 2;
  cfg.encoder.d_model = 16;
  cfg.encoder.d_ff = 32;
  cfg.encoder.textcaps_mode = textcaps_mode;
  cfg.encoder.max_decode_steps = textcaps_mode ? 30 : 4;
  cfg.vocab_size = 12;
  cfg.d_frcn = 64;
  cfg.d_recog = 8;
  cfg.question_layers = 1;
  cfg.max_question_len = 4;
  cfg.max_ocr = 4;
  cfg.max_obj = 4;
  return cfg;
}

GradCheckResult model_grad_check(std::uint64_t seed, bool textcaps_mode, const GradCheckOptions& opts) {
  const ModelConfig cfg = toy_model_config(textcaps_mode);
  Model model(cfg, seed);
  std::vector<std::string> words;
  for (std::size_t i = Vocabulary::kSpecialCount; i < cfg.vocab_size; ++i) words.push_back("v" + std::to_string(i));
  const Vocabulary vocab(words);
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  const Instance inst = random_instance(rng, cfg, vocab, 4, 4, 3);
  LossConfig loss_cfg;
  loss_cfg.pg_enabled = true;
  loss_cfg.alpha = 1.0;

  std::vector<Tensor> params;
  std::vector<std::string> names;
  for (const Parameter& p : model.parameters().all()) {
    params.push_back(p.value);
    names.push_back(p.name);
  }
  return grad_check(textcaps_mode ? "model_textcaps" : "model_textvqa",
                    [&] { return model.loss(inst, vocab, loss_cfg).total; }, params, names, opts);
}

}  // namespace textfuse
