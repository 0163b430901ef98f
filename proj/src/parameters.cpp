#include "textfuse/parameters.hpp"

#include <cmath>
#include <sstream>

#include "textfuse/errors.hpp"
#include "textfuse/ops.hpp"

namespace textfuse {

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::set_state(const std::string& text) {
  std::istringstream is(text);
  is >> engine_;
  if (!is) throw FormatError("malformed RNG state");
}

Tensor ParameterStore::add(std::string name, Tensor value) {
  if (index_.contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  if (!value.requires_grad()) value = Tensor::from(value.shape(), {value.data().begin(), value.data().end()}, true);
  index_.emplace(name, params_.size());
  params_.push_back(Parameter{std::move(name), value});
  return value;
}

Tensor ParameterStore::xavier(std::string name, std::size_t in, std::size_t out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  std::vector<double> values(in * out);
  for (double& v : values) v = rng.uniform(-bound, bound);
  return add(std::move(name), Tensor::from({in, out}, std::move(values), true));
}

Tensor ParameterStore::zeros(std::string name, Shape shape) {
  return add(std::move(name), Tensor::zeros(std::move(shape), true));
}

Tensor ParameterStore::ones(std::string name, Shape shape) {
  return add(std::move(name), Tensor::full(std::move(shape), 1.0, true));
}

Tensor ParameterStore::normal(std::string name, Shape shape, double stddev, Rng& rng) {
  std::vector<double> values(shape_size(shape));
  for (double& v : values) v = rng.normal(0.0, stddev);
  return add(std::move(name), Tensor::from(std::move(shape), std::move(values), true));
}

const Tensor& ParameterStore::get(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw IndexError("no parameter named '" + std::string(name) + "'");
  return params_[it->second].value;
}

bool ParameterStore::contains(std::string_view name) const { return index_.contains(std::string(name)); }

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const Parameter& p : params_) n += p.value.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (Parameter& p : params_) p.value.zero_grad();
}

Linear::Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng)
    : weight(store.xavier(name + ".weight", in, out, rng)), bias(store.zeros(name + ".bias", {out})) {}

Tensor Linear::operator()(const Tensor& x) const { return add(matmul(x, weight), bias); }

LayerNorm::LayerNorm(ParameterStore& store, const std::string& name, std::size_t width)
    : gain(store.ones(name + ".gain", {width})), bias(store.zeros(name + ".bias", {width})) {}

Tensor LayerNorm::operator()(const Tensor& x) const { return layer_norm(x, gain, bias); }

Embedding::Embedding(ParameterStore& store, const std::string& name, std::size_t rows, std::size_t width,
                     Rng& rng)
    : table(store.normal(name + ".table", {rows, width}, 0.02, rng)) {}

Tensor Embedding::operator()(std::span<const std::size_t> ids) const { return embedding_lookup(table, ids); }

Tensor Embedding::row(std::size_t id) const { return embedding_lookup(table, std::span<const std::size_t>(&id, 1)); }

}  // namespace textfuse
