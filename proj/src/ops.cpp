#include "textfuse/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "textfuse/errors.hpp"
#include "textfuse/kernels.hpp"
#include "textfuse/op_counter.hpp"

namespace textfuse {
namespace {

using detail::grad_buffer;
using detail::mark_output;
using detail::recording_tape;

Tensor make_output(std::size_t rows, std::size_t cols, bool as_row_vector) {
  return as_row_vector ? Tensor::zeros({cols}) : Tensor::zeros({rows, cols});
}

bool is_row_broadcast(const Tensor& a, const Tensor& b) {
  return b.rows() == 1 && b.cols() == a.cols() && a.rows() > 1;
}

void check_same_or_row(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return;
  if (a.size() == b.size() && a.rows() == b.rows()) return;  // [n] vs [1 x n]
  if (is_row_broadcast(a, b)) return;
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) + " and " +
                       shape_string(b.shape()));
}

// Sums the rows of g into a buffer of length cols (for broadcast backward).
void accumulate_rows(std::span<const double> g, std::size_t rows, std::size_t cols,
                     std::vector<double>& out) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[c] += g[r * cols + c];
  }
}

template <typename Forward, typename Derivative>
Tensor unary(const Tensor& x, Forward forward, Derivative derivative) {
  Tensor out = Tensor::zeros(x.shape());
  auto xs = x.data();
  auto ys = out.mutable_data();
  for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = forward(xs[i]);
  if (Tape* tape = recording_tape({&x})) {
    mark_output(out);
    tape->record({x}, out, [x, out, derivative]() {
      auto& gx = grad_buffer(x);
      auto gy = out.grad();
      auto xv = x.data();
      auto yv = out.data();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * derivative(xv[i], yv[i]);
    });
  }
  return out;
}

void check_mask_row(const Mask& mask, std::size_t cols) {
  if (mask.size() != cols) {
    throw DimensionError("softmax_masked: mask length " + std::to_string(mask.size()) +
                         " does not match row length " + std::to_string(cols));
  }
}

template <typename Allowed>
Tensor softmax_impl(const Tensor& x, Allowed allowed) {
  const std::size_t rows = x.rows();
  const std::size_t cols = x.cols();
  Tensor out = Tensor::zeros(x.shape());
  auto xs = x.data();
  auto ys = out.mutable_data();
  for (std::size_t r = 0; r < rows; ++r) {
    double peak = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t c = 0; c < cols; ++c) {
      if (allowed(r, c)) {
        peak = std::max(peak, xs[r * cols + c]);
        any = true;
      }
    }
    if (!any) throw DegenerateMaskError("softmax_masked: row " + std::to_string(r) + " has no unmasked entry");
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      if (allowed(r, c)) {
        const double e = std::exp(xs[r * cols + c] - peak);
        ys[r * cols + c] = e;
        total += e;
      }
    }
    for (std::size_t c = 0; c < cols; ++c) ys[r * cols + c] /= total;
  }
  if (Tape* tape = recording_tape({&x})) {
    mark_output(out);
    tape->record({x}, out, [x, out, rows, cols]() {
      auto& gx = grad_buffer(x);
      auto gy = out.grad();
      auto y = out.data();
      for (std::size_t r = 0; r < rows; ++r) {
        double inner = 0.0;
        for (std::size_t c = 0; c < cols; ++c) inner += y[r * cols + c] * gy[r * cols + c];
        // Masked entries have y == 0, so they receive no gradient.
        for (std::size_t c = 0; c < cols; ++c) {
          gx[r * cols + c] += y[r * cols + c] * (gy[r * cols + c] - inner);
        }
      }
    });
  }
  return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions differ for " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  Tensor out = Tensor::zeros({m, n});
  kernels::active().gemm_nn(m, k, n, a.data().data(), b.data().data(), out.mutable_data().data());
  profile::tally(static_cast<std::uint64_t>(m) * k * n);
  if (Tape* tape = recording_tape({&a, &b})) {
    mark_output(out);
    tape->record({a, b}, out, [a, b, out, m, k, n]() {
      const auto& kt = kernels::active();
      if (a.requires_grad()) {
        // dA += dC * B^T
        kt.gemm_nt(m, n, k, out.grad().data(), b.data().data(), grad_buffer(a).data());
      }
      if (b.requires_grad()) {
        // dB += A^T * dC
        kt.gemm_tn(m, k, n, a.data().data(), out.grad().data(), grad_buffer(b).data());
      }
    });
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) {
    throw DimensionError("matmul_nt: inner dimensions differ for " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + "^T");
  }
  Tensor out = Tensor::zeros({m, n});
  kernels::active().gemm_nt(m, k, n, a.data().data(), b.data().data(), out.mutable_data().data());
  profile::tally(static_cast<std::uint64_t>(m) * k * n);
  if (Tape* tape = recording_tape({&a, &b})) {
    mark_output(out);
    tape->record({a, b}, out, [a, b, out, m, k, n]() {
      const auto& kt = kernels::active();
      if (a.requires_grad()) {
        // dA += dC * B
        kt.gemm_nn(m, n, k, out.grad().data(), b.data().data(), grad_buffer(a).data());
      }
      if (b.requires_grad()) {
        // dB += dC^T * A
        kt.gemm_tn(m, n, k, out.grad().data(), a.data().data(), grad_buffer(b).data());
      }
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_or_row(a, b, "add");
  const bool broadcast = is_row_broadcast(a, b);
  Tensor out = Tensor::from(a.shape(), std::vector<double>(a.data().begin(), a.data().end()));
  auto ys = out.mutable_data();
  auto bs = b.data();
  const std::size_t cols = a.cols();
  for (std::size_t i = 0; i < ys.size(); ++i) ys[i] += broadcast ? bs[i % cols] : bs[i];
  if (Tape* tape = recording_tape({&a, &b})) {
    mark_output(out);
    tape->record({a, b}, out, [a, b, out, broadcast]() {
      auto gy = out.grad();
      if (a.requires_grad()) {
        kernels::active().axpy(1.0, gy.data(), grad_buffer(a).data(), gy.size());
      }
      if (b.requires_grad()) {
        auto& gb = grad_buffer(b);
        if (broadcast) {
          accumulate_rows(gy, a.rows(), a.cols(), gb);
        } else {
          kernels::active().axpy(1.0, gy.data(), gb.data(), gy.size());
        }
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size() || a.rows() != b.rows()) {
    throw DimensionError("sub: incompatible shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  return add(a, affine(b, -1.0));
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_or_row(a, b, "mul");
  const bool broadcast = is_row_broadcast(a, b);
  const std::size_t rows = a.rows(), cols = a.cols();
  Tensor out = Tensor::zeros(a.shape());
  const auto& kt = kernels::active();
  for (std::size_t r = 0; r < rows; ++r) {
    kt.hadamard(a.data().data() + r * cols, b.data().data() + (broadcast ? 0 : r * cols),
                out.mutable_data().data() + r * cols, cols);
  }
  profile::tally(static_cast<std::uint64_t>(rows) * cols);
  if (Tape* tape = recording_tape({&a, &b})) {
    mark_output(out);
    tape->record({a, b}, out, [a, b, out, broadcast, rows, cols]() {
      const auto& kt = kernels::active();
      auto gy = out.grad();
      if (a.requires_grad()) {
        auto& ga = grad_buffer(a);
        for (std::size_t r = 0; r < rows; ++r) {
          kt.hadamard(gy.data() + r * cols, b.data().data() + (broadcast ? 0 : r * cols),
                      ga.data() + r * cols, cols);
        }
      }
      if (b.requires_grad()) {
        auto& gb = grad_buffer(b);
        for (std::size_t r = 0; r < rows; ++r) {
          kt.hadamard(gy.data() + r * cols, a.data().data() + r * cols,
                      gb.data() + (broadcast ? 0 : r * cols), cols);
        }
      }
    });
  }
  return out;
}

Tensor affine(const Tensor& x, double scale, double shift) {
  return unary(
      x, [scale, shift](double v) { return scale * v + shift; },
      [scale](double, double) { return scale; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor log(const Tensor& x) {
  return unary(
      x, [](double v) { return std::log(std::max(v, kLogClamp)); },
      [](double v, double) { return v > kLogClamp ? 1.0 / v : 0.0; });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  return unary(
      x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Tensor softmax_masked(const Tensor& x, const Mask& mask) {
  check_mask_row(mask, x.cols());
  return softmax_impl(x, [&mask](std::size_t, std::size_t c) { return static_cast<bool>(mask[c]); });
}

Tensor softmax_masked(const Tensor& x, const MaskMatrix& mask) {
  if (mask.rows() != x.rows() || mask.cols() != x.cols()) {
    throw DimensionError("softmax_masked: mask " + std::to_string(mask.rows()) + "x" +
                         std::to_string(mask.cols()) + " does not match " + shape_string(x.shape()));
  }
  return softmax_impl(x, [&mask](std::size_t r, std::size_t c) { return mask(r, c); });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t rows = x.rows(), d = x.cols();
  if (gain.size() != d || bias.size() != d) {
    throw DimensionError("layer_norm: gain/bias " + shape_string(gain.shape()) + "/" +
                         shape_string(bias.shape()) + " do not match width " + std::to_string(d));
  }
  Tensor out = Tensor::zeros(x.shape());
  std::vector<double> normalized(x.size());
  std::vector<double> inv_std(rows);
  auto xs = x.data();
  auto ys = out.mutable_data();
  auto gs = gain.data();
  auto bs = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xs.data() + r * d;
    double mu = 0.0;
    for (std::size_t c = 0; c < d; ++c) mu += row[c];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) {
      const double xhat = (row[c] - mu) * inv_std[r];
      normalized[r * d + c] = xhat;
      ys[r * d + c] = gs[c] * xhat + bs[c];
    }
  }
  if (Tape* tape = recording_tape({&x, &gain, &bias})) {
    mark_output(out);
    tape->record({x, gain, bias}, out,
                 [x, gain, bias, out, rows, d, normalized = std::move(normalized),
                  inv_std = std::move(inv_std)]() {
                   auto gy = out.grad();
                   auto gs = gain.data();
                   if (gain.requires_grad()) {
                     auto& gg = grad_buffer(gain);
                     for (std::size_t i = 0; i < gy.size(); ++i) gg[i % d] += gy[i] * normalized[i];
                   }
                   if (bias.requires_grad()) accumulate_rows(gy, rows, d, grad_buffer(bias));
                   if (x.requires_grad()) {
                     auto& gx = grad_buffer(x);
                     const double inv_d = 1.0 / static_cast<double>(d);
                     for (std::size_t r = 0; r < rows; ++r) {
                       double mean_g = 0.0, mean_gx = 0.0;
                       for (std::size_t c = 0; c < d; ++c) {
                         const double g = gy[r * d + c] * gs[c];
                         mean_g += g;
                         mean_gx += g * normalized[r * d + c];
                       }
                       mean_g *= inv_d;
                       mean_gx *= inv_d;
                       for (std::size_t c = 0; c < d; ++c) {
                         const double g = gy[r * d + c] * gs[c];
                         gx[r * d + c] += inv_std[r] * (g - mean_g - normalized[r * d + c] * mean_gx);
                       }
                     }
                   }
                 });
  }
  return out;
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  if (axis != 0 && axis != 1) throw DimensionError("concat: axis must be 0 or 1");
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  Tensor out;
  if (axis == 0) {
    const std::size_t cols = parts.front().cols();
    std::size_t rows = 0;
    for (const Tensor& p : parts) {
      if (p.cols() != cols) {
        throw DimensionError("concat: axis mismatch, row width " + std::to_string(p.cols()) + " vs " +
                             std::to_string(cols));
      }
      rows += p.rows();
    }
    std::vector<double> values;
    values.reserve(rows * cols);
    for (const Tensor& p : parts) values.insert(values.end(), p.data().begin(), p.data().end());
    out = Tensor::from({rows, cols}, std::move(values));
  } else {
    const std::size_t rows = parts.front().rows();
    std::size_t cols = 0;
    bool all_rank1 = true;
    for (const Tensor& p : parts) {
      if (p.rows() != rows) {
        throw DimensionError("concat: axis mismatch, row count " + std::to_string(p.rows()) + " vs " +
                             std::to_string(rows));
      }
      cols += p.cols();
      all_rank1 = all_rank1 && p.rank() == 1;
    }
    out = make_output(rows, cols, all_rank1);
    auto ys = out.mutable_data();
    std::size_t offset = 0;
    for (const Tensor& p : parts) {
      const std::size_t pc = p.cols();
      for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(p.data().data() + r * pc, pc, ys.data() + r * cols + offset);
      }
      offset += pc;
    }
  }
  if (Tape* tape = recording_tape(std::span<const Tensor>(inputs))) {
    mark_output(out);
    tape->record(inputs, out, [inputs, out, axis]() {
      auto gy = out.grad();
      const std::size_t cols = out.cols();
      std::size_t offset = 0;
      for (const Tensor& p : inputs) {
        const std::size_t span = axis == 0 ? p.size() : p.cols();
        if (p.requires_grad()) {
          auto& gp = grad_buffer(p);
          if (axis == 0) {
            for (std::size_t i = 0; i < span; ++i) gp[i] += gy[offset + i];
          } else {
            for (std::size_t r = 0; r < p.rows(); ++r) {
              for (std::size_t c = 0; c < span; ++c) gp[r * span + c] += gy[r * cols + offset + c];
            }
          }
        }
        offset += span;
      }
    });
  }
  return out;
}

Tensor concat(std::initializer_list<Tensor> parts, int axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  if (begin >= end || end > x.rows()) {
    throw IndexError("slice_rows: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") invalid for " + shape_string(x.shape()));
  }
  const std::size_t cols = x.cols();
  auto src = x.data();
  Tensor out = Tensor::from({end - begin, cols},
                            std::vector<double>(src.begin() + begin * cols, src.begin() + end * cols));
  if (Tape* tape = recording_tape({&x})) {
    mark_output(out);
    tape->record({x}, out, [x, out, begin, cols]() {
      kernels::active().axpy(1.0, out.grad().data(), grad_buffer(x).data() + begin * cols, out.size());
    });
  }
  return out;
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  if (begin >= end || end > x.cols()) {
    throw IndexError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") invalid for " + shape_string(x.shape()));
  }
  const std::size_t rows = x.rows(), cols = x.cols(), width = end - begin;
  Tensor out = make_output(rows, width, x.rank() == 1);
  auto ys = out.mutable_data();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(x.data().data() + r * cols + begin, width, ys.data() + r * width);
  }
  if (Tape* tape = recording_tape({&x})) {
    mark_output(out);
    tape->record({x}, out, [x, out, begin, rows, cols, width]() {
      auto& gx = grad_buffer(x);
      auto gy = out.grad();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < width; ++c) gx[r * cols + begin + c] += gy[r * width + c];
      }
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
  }
  Tensor out = Tensor::from(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
  if (Tape* tape = recording_tape({&x})) {
    mark_output(out);
    tape->record({x}, out, [x, out]() {
      kernels::active().axpy(1.0, out.grad().data(), grad_buffer(x).data(), out.size());
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  Tensor out = Tensor::scalar(total);
  if (Tape* tape = recording_tape({&x})) {
    mark_output(out);
    tape->record({x}, out, [x, out]() {
      const double g = out.grad()[0];
      for (double& v : grad_buffer(x)) v += g;
    });
  }
  return out;
}

Tensor mean(const Tensor& x) { return affine(sum(x), 1.0 / static_cast<double>(x.size())); }

Tensor embedding_lookup(const Tensor& table, std::span<const std::size_t> ids) {
  if (ids.empty()) throw IndexError("embedding_lookup: empty id list");
  const std::size_t rows = table.rows(), d = table.cols();
  std::vector<double> values;
  values.reserve(ids.size() * d);
  for (std::size_t id : ids) {
    if (id >= rows) {
      throw IndexError("embedding_lookup: index " + std::to_string(id) + " out of range for table with " +
                       std::to_string(rows) + " rows");
    }
    values.insert(values.end(), table.data().begin() + id * d, table.data().begin() + (id + 1) * d);
  }
  Tensor out = Tensor::from({ids.size(), d}, std::move(values));
  if (Tape* tape = recording_tape({&table})) {
    mark_output(out);
    std::vector<std::size_t> index(ids.begin(), ids.end());
    tape->record({table}, out, [table, out, index = std::move(index), d]() {
      auto& gt = grad_buffer(table);
      auto gy = out.grad();
      for (std::size_t i = 0; i < index.size(); ++i) {
        kernels::active().axpy(1.0, gy.data() + i * d, gt.data() + index[i] * d, d);
      }
    });
  }
  return out;
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& targets, const Mask& valid_cols) {
  if (logits.size() != targets.size() || logits.rows() != targets.rows()) {
    throw DimensionError("bce_with_logits: logits " + shape_string(logits.shape()) + " vs targets " +
                         shape_string(targets.shape()));
  }
  const std::size_t rows = logits.rows(), cols = logits.cols();
  if (valid_cols.size() != cols) throw DimensionError("bce_with_logits: mask length does not match width");
  const auto valid_count = static_cast<std::size_t>(std::count(valid_cols.begin(), valid_cols.end(), true));
  if (valid_count == 0) throw DegenerateMaskError("bce_with_logits: no valid columns");
  const double norm = 1.0 / static_cast<double>(rows * valid_count);
  auto z = logits.data();
  auto y = targets.data();
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (!valid_cols[c]) continue;
      const double v = z[r * cols + c];
      total += std::max(v, 0.0) - v * y[r * cols + c] + std::log1p(std::exp(-std::abs(v)));
    }
  }
  Tensor out = Tensor::scalar(total * norm);
  if (Tape* tape = recording_tape({&logits})) {
    mark_output(out);
    tape->record({logits}, out, [logits, targets, valid_cols, out, rows, cols, norm]() {
      auto& g = grad_buffer(logits);
      const double gy = out.grad()[0] * norm;
      auto z = logits.data();
      auto y = targets.data();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
          if (!valid_cols[c]) continue;
          const double v = z[r * cols + c];
          const double p = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
          g[r * cols + c] += gy * (p - y[r * cols + c]);
        }
      }
    });
  }
  return out;
}

}  // namespace textfuse
