#include "textfuse/attention.hpp"

#include "textfuse/errors.hpp"
#include "textfuse/op_counter.hpp"
#include "textfuse/ops.hpp"

namespace textfuse {
namespace {

void check_valid(const Tensor& seq, const Mask& valid, const char* who) {
  if (valid.size() != seq.rows()) {
    throw DimensionError(std::string(who) + ": mask length " + std::to_string(valid.size()) + " vs " +
                         std::to_string(seq.rows()) + " rows");
  }
}

}  // namespace

SelfAttentionHead::SelfAttentionHead(ParameterStore& store, const std::string& name, std::size_t d_model,
                                     std::size_t d_hidden, Rng& rng)
    : conv1(store, name + ".conv1", d_model, d_hidden, rng), conv2(store, name + ".conv2", d_hidden, 1, rng) {}

Tensor SelfAttentionHead::weights(const Tensor& seq, const Mask& valid) const {
  check_valid(seq, valid, "self-attention");
  const Tensor logits = conv2(relu(conv1(seq)));  // [n x 1]
  return softmax_masked(reshape(logits, {1, seq.rows()}), valid);
}

Tensor SelfAttentionHead::operator()(const Tensor& seq, const Mask& valid) const {
  return matmul(weights(seq, valid), seq);
}

AttentionBlock::AttentionBlock(ParameterStore& store, const std::string& name, std::size_t d_model,
                               std::size_t d_att, Rng& rng)
    : query_proj(store, name + ".query_proj", d_model, d_att, rng),
      feature_proj(store, name + ".feature_proj", d_model, d_att, rng),
      score(store, name + ".score", d_att, 1, rng) {}

Tensor AttentionBlock::weights(const Tensor& query, const Tensor& feats, const Mask& valid) const {
  check_valid(feats, valid, "attention block");
  if (query.size() != feats.cols()) {
    throw DimensionError("attention block: query width " + std::to_string(query.size()) + " vs feature width " +
                         std::to_string(feats.cols()));
  }
  const Tensor guide = relu(query_proj(query));       // [1 x d_att]
  const Tensor projected = relu(feature_proj(feats));  // [n x d_att]
  Tensor joint;
  {
    profile::ScopedLabel label(profile::kBlockLabel);
    joint = mul(projected, guide);
  }
  const Tensor logits = score(joint);  // [n x 1]
  return softmax_masked(reshape(logits, {1, feats.rows()}), valid);
}

Tensor AttentionBlock::operator()(const Tensor& query, const Tensor& feats, const Mask& valid) const {
  const Tensor s = weights(query, feats, valid);
  profile::ScopedLabel label(profile::kBlockLabel);
  return matmul(s, feats);
}

RecurrentEncoder::RecurrentEncoder(ParameterStore& store, const std::string& name, std::size_t d_model, Rng& rng)
    : input(store, name + ".input", d_model, 4 * d_model, rng),
      recurrent(store.xavier(name + ".recurrent", d_model, 4 * d_model, rng)) {}

Tensor RecurrentEncoder::operator()(const Tensor& seq) const {
  const std::size_t n = seq.rows();
  const std::size_t d = recurrent.rows();
  if (seq.cols() != d) {
    throw DimensionError("recurrent encoder: input width " + std::to_string(seq.cols()) + ", expected " +
                         std::to_string(d));
  }
  const Tensor projected = input(seq);  // [n x 4d]
  Tensor h = Tensor::zeros({1, d});
  Tensor c = Tensor::zeros({1, d});
  std::vector<Tensor> states;
  states.reserve(n);
  for (std::size_t t = 0; t < n; ++t) {
    const Tensor z = add(slice_rows(projected, t, t + 1), matmul(h, recurrent));
    const Tensor i = sigmoid(slice_cols(z, 0, d));
    const Tensor f = sigmoid(slice_cols(z, d, 2 * d));
    const Tensor g = tanh(slice_cols(z, 2 * d, 3 * d));
    const Tensor o = sigmoid(slice_cols(z, 3 * d, 4 * d));
    c = add(mul(f, c), mul(i, g));
    h = mul(o, tanh(c));
    states.push_back(h);
  }
  return n == 1 ? states.front() : concat(states, 0);
}

}  // namespace textfuse
