#pragma once

// Shape-carrying 64-bit tensors and the reverse-mode tape.
//
// Tensors are rank 1 ([n]) or rank 2 ([rows x cols]), stored row-major. A rank-1
// tensor behaves as a single row wherever an op needs rows. Handles are cheap
// to copy and share the underlying storage.
//
// Ops record themselves on the thread's active Tape (see TapeScope) whenever
// at least one input requires a gradient. Tape::backward walks the records in
// reverse creation order, which is a valid reverse topological order.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace textfuse {

using Shape = std::vector<std::size_t>;
using Mask = std::vector<bool>;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

// Row-by-column boolean matrix; allowed(i, j) means row i may use column j.
class MaskMatrix {
 public:
  MaskMatrix() = default;
  MaskMatrix(std::size_t rows, std::size_t cols, bool value = false)
      : rows_(rows), cols_(cols), cells_(rows * cols, value) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool operator()(std::size_t r, std::size_t c) const { return cells_[r * cols_ + c]; }
  void set(std::size_t r, std::size_t c, bool v) { cells_[r * cols_ + c] = v; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<bool> cells_;
};

namespace detail {
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first needed
  bool requires_grad = false;
  bool leaf = true;
};
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor row(std::vector<double> values, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->data.size(); }
  std::size_t rows() const { return rank() == 2 ? node_->shape[0] : 1; }
  std::size_t cols() const { return node_->shape.back(); }
  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->leaf; }

  std::span<const double> data() const { return node_->data; }
  // Direct write access, for parameter updates and test setup only. Writing
  // to a tensor that is already on a tape invalidates that tape.
  std::span<double> mutable_data() { return node_->data; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad();
  void zero_grad();

  double item() const;
  double at(std::size_t i) const { return node_->data[i]; }
  double at(std::size_t r, std::size_t c) const { return node_->data[r * cols() + c]; }

  // Copy of the values with no gradient tracking.
  Tensor detach() const;

  const void* identity() const { return node_.get(); }
  detail::Node& node() const { return *node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

class Tape {
 public:
  using BackwardFn = std::function<void()>;

  void record(std::vector<Tensor> inputs, const Tensor& output, BackwardFn fn);
  void backward(const Tensor& loss);
  std::size_t size() const { return records_.size(); }
  void clear() { records_.clear(); }

 private:
  struct Record {
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn fn;
  };
  std::vector<Record> records_;
};

// Installs a tape as the thread's active tape for the lifetime of the scope.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

namespace detail {
// Grad buffer of t, allocated (zero-filled) on first use.
std::vector<double>& grad_buffer(const Tensor& t);
// Active tape if any of the inputs requires a gradient, else null.
Tape* recording_tape(std::initializer_list<const Tensor*> inputs);
Tape* recording_tape(std::span<const Tensor> inputs);
void mark_output(Tensor& out);
}  // namespace detail

}  // namespace textfuse
