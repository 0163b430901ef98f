#include "textfuse/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "textfuse/errors.hpp"

namespace textfuse {

namespace {
thread_local Tape* t_active_tape = nullptr;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != 0) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_size(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape.empty() || shape.size() > 2) {
    throw DimensionError("tensor rank must be 1 or 2, got shape " + shape_string(shape));
  }
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape));
  }
  if (values.size() != shape_size(shape)) {
    throw DimensionError("data length " + std::to_string(values.size()) + " does not match shape " +
                         shape_string(shape));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  if (requires_grad) node->grad.assign(node->data.size(), 0.0);
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

Tensor Tensor::row(std::vector<double> values, bool requires_grad) {
  const std::size_t n = values.size();
  return from({1, n}, std::move(values), requires_grad);
}

std::span<double> Tensor::mutable_grad() { return detail::grad_buffer(*this); }

void Tensor::zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on non-scalar tensor of shape " + shape_string(shape()));
  return node_->data[0];
}

Tensor Tensor::detach() const { return from(shape(), node_->data, false); }

void Tape::record(std::vector<Tensor> inputs, const Tensor& output, BackwardFn fn) {
  records_.push_back(Record{std::move(inputs), output, std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        (loss.defined() ? shape_string(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) return;
  // Intermediate gradients are recomputed from scratch; leaf gradients accumulate.
  for (Record& r : records_) r.output.zero_grad();
  detail::grad_buffer(loss)[0] += 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    if (it->output.has_grad()) it->fn();
  }
}

TapeScope::TapeScope(Tape& tape) : previous_(t_active_tape) { t_active_tape = &tape; }

TapeScope::~TapeScope() { t_active_tape = previous_; }

Tape* active_tape() { return t_active_tape; }

namespace detail {

std::vector<double>& grad_buffer(const Tensor& t) {
  Node& node = t.node();
  if (node.grad.size() != node.data.size()) node.grad.assign(node.data.size(), 0.0);
  return node.grad;
}

Tape* recording_tape(std::initializer_list<const Tensor*> inputs) {
  if (t_active_tape == nullptr) return nullptr;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return t_active_tape;
  }
  return nullptr;
}

Tape* recording_tape(std::span<const Tensor> inputs) {
  if (t_active_tape == nullptr) return nullptr;
  for (const Tensor& t : inputs) {
    if (t.requires_grad()) return t_active_tape;
  }
  return nullptr;
}

void mark_output(Tensor& out) {
  out.node().requires_grad = true;
  out.node().leaf = false;
}

}  // namespace detail

}  // namespace textfuse
