#pragma once

// Central finite-difference verification of tape gradients.
//
// An entry passes when |analytic - numeric| <= rel_tol * max(|analytic|,
// |numeric|, floor). The floor keeps near-zero gradients from being judged on
// rounding noise: loss evaluations of the full model carry about 1e-13 of
// noise, i.e. about 3e-8 in a central difference at eps 1e-5.
//
// A failing entry whose one-sided differences disagree sits within eps of a
// ReLU kink. It is re-checked with kink_eps and kink_eps / 10 under the same
// tolerance and counted in `kinks` when either passes, in `failed` otherwise.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "textfuse/config.hpp"
#include "textfuse/tensor.hpp"

namespace textfuse {

struct GradCheckOptions {
  double eps = 1e-5;
  double rel_tol = 1e-4;
  double floor = 1e-3;
  // Entries sampled per tensor; 0 checks every entry.
  std::size_t entries_per_tensor = 0;
  std::uint64_t seed = 0;
  // 0 disables the kink re-check.
  double kink_eps = 1e-6;
};

struct GradCheckResult {
  std::string name;
  std::size_t checked = 0;
  std::size_t failed = 0;
  std::size_t kinks = 0;
  double max_rel_error = 0.0;
  std::string worst;  // "tensor[index]: analytic vs numeric"
  bool passed() const { return failed == 0 && checked > 0; }
};

double gradient_rel_error(double analytic, double numeric, double floor);

// loss builds a scalar from the current values of `inputs`; it is run on a
// fresh tape for the analytic pass and without a tape for the numeric pass.
GradCheckResult grad_check(const std::string& name, const std::function<Tensor()>& loss,
                           const std::vector<Tensor>& inputs, const std::vector<std::string>& input_names,
                           const GradCheckOptions& opts);

// Every differentiable primitive on random inputs drawn from `seed`.
std::vector<GradCheckResult> primitive_grad_checks(std::uint64_t seed, const GradCheckOptions& opts = {});

// Toy configuration: d_model 16, one layer, two heads, N = M = 4, L = 3.
ModelConfig toy_model_config(bool textcaps_mode);

// Full model loss (bce + pg) on a random instance for the toy configuration.
GradCheckResult model_grad_check(std::uint64_t seed, bool textcaps_mode, const GradCheckOptions& opts);

}  // namespace textfuse
