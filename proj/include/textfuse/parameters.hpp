#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "textfuse/tensor.hpp"

namespace textfuse {

// Seeded generator shared by initialization, data generation and shuffling.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double normal(double mean, double stddev) { return std::normal_distribution<double>(mean, stddev)(engine_); }
  // Uniform integer in [0, n).
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }
  std::mt19937_64& engine() { return engine_; }

  std::string state() const;
  void set_state(const std::string& text);

 private:
  std::mt19937_64 engine_;
};

struct Parameter {
  std::string name;
  Tensor value;
};

// Owns every learned tensor of a model under unique dot-separated names, in
// registration order.
class ParameterStore {
 public:
  Tensor add(std::string name, Tensor value);

  // Linear weight [in x out], uniform in +-sqrt(6 / (in + out)).
  Tensor xavier(std::string name, std::size_t in, std::size_t out, Rng& rng);
  Tensor zeros(std::string name, Shape shape);
  Tensor ones(std::string name, Shape shape);
  Tensor normal(std::string name, Shape shape, double stddev, Rng& rng);

  const std::vector<Parameter>& all() const { return params_; }
  const Tensor& get(std::string_view name) const;
  bool contains(std::string_view name) const;
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct Linear {
  Tensor weight;  // [in x out]
  Tensor bias;    // [out]

  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng);
  Tensor operator()(const Tensor& x) const;
  std::size_t in_features() const { return weight.rows(); }
  std::size_t out_features() const { return weight.cols(); }
};

struct LayerNorm {
  Tensor gain;
  Tensor bias;

  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& name, std::size_t width);
  Tensor operator()(const Tensor& x) const;
};

struct Embedding {
  Tensor table;  // [rows x width]

  Embedding() = default;
  Embedding(ParameterStore& store, const std::string& name, std::size_t rows, std::size_t width, Rng& rng);
  Tensor operator()(std::span<const std::size_t> ids) const;
  Tensor row(std::size_t id) const;
};

}  // namespace textfuse
