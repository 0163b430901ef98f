#include "textfuse/fusion.hpp"

#include "textfuse/errors.hpp"
#include "textfuse/ops.hpp"

namespace textfuse {

std::size_t summary_role(std::size_t slot, std::size_t blocks) {
  if (blocks == 0 || blocks > 3 || slot >= 2 * blocks) {
    throw IndexError("summary slot " + std::to_string(slot) + " invalid for " + std::to_string(blocks) + " blocks");
  }
  return slot < blocks ? slot : 3 + (slot - blocks);
}

MaskMatrix mixed_mask(const Mask& encoder_valid, std::size_t decoder_steps) {
  const std::size_t e = encoder_valid.size();
  const std::size_t n = e + decoder_steps;
  MaskMatrix allowed(n, n);
  for (std::size_t i = 0; i < e; ++i) {
    if (!encoder_valid[i]) {
      allowed.set(i, i, true);
      continue;
    }
    for (std::size_t j = 0; j < e; ++j) allowed.set(i, j, encoder_valid[j]);
  }
  for (std::size_t t = 0; t < decoder_steps; ++t) {
    const std::size_t i = e + t;
    for (std::size_t j = 0; j < e; ++j) allowed.set(i, j, encoder_valid[j]);
    for (std::size_t j = e; j <= i; ++j) allowed.set(i, j, true);
  }
  return allowed;
}

FusionEncoder::FusionEncoder(ParameterStore& store, const std::string& name, std::size_t d_model,
                             std::size_t heads, std::size_t d_ff, std::size_t layer_count, Rng& rng)
    : roles(store, name + ".roles", kRoleCount, d_model, rng) {
  layers.reserve(layer_count);
  for (std::size_t i = 0; i < layer_count; ++i) {
    layers.emplace_back(store, name + ".layer" + std::to_string(i), d_model, heads, d_ff, rng);
  }
}

FusionOutput FusionEncoder::operator()(const Tensor& summaries, const Tensor& ocr, const Mask& ocr_mask,
                                       const Tensor& decoder_inputs) const {
  const std::size_t s = summaries.rows();
  if (s % 2 != 0 || s == 0 || s > 6) throw DimensionError("fusion expects 2, 4 or 6 summary slots");
  const std::size_t blocks = s / 2;
  const std::size_t n = ocr.defined() ? ocr.rows() : 0;
  const std::size_t t = decoder_inputs.defined() ? decoder_inputs.rows() : 0;
  if (ocr_mask.size() != n) throw DimensionError("OCR mask length does not match OCR rows");

  std::vector<std::size_t> role_ids;
  role_ids.reserve(s + n);
  for (std::size_t i = 0; i < s; ++i) role_ids.push_back(summary_role(i, blocks));
  for (std::size_t j = 0; j < n; ++j) role_ids.push_back(ocr_mask[j] ? kOcrRole : kPadRole);

  std::vector<Tensor> parts{summaries};
  if (n > 0) parts.push_back(ocr);
  Tensor x = parts.size() == 1 ? summaries : concat(parts, 0);
  x = add(x, roles(role_ids));
  if (t > 0) x = concat({x, decoder_inputs}, 0);

  Mask encoder_valid(s, true);
  encoder_valid.insert(encoder_valid.end(), ocr_mask.begin(), ocr_mask.end());
  const MaskMatrix allowed = mixed_mask(encoder_valid, t);
  for (const TransformerLayer& layer : layers) x = layer(x, allowed);

  FusionOutput out;
  out.summaries = slice_rows(x, 0, s);
  if (n > 0) out.ocr = slice_rows(x, s, s + n);
  if (t > 0) out.decoder = slice_rows(x, s + n, s + n + t);
  return out;
}

ContextHead::ContextHead(ParameterStore& store, const std::string& name, std::size_t d_model, std::size_t blocks,
                         Rng& rng)
    : project(store, name + ".project", blocks * d_model, d_model, rng), blocks_(blocks) {}

Tensor ContextHead::operator()(const Tensor& fused) const {
  if (fused.rows() != 2 * blocks_) {
    throw DimensionError("context head expects " + std::to_string(2 * blocks_) + " fused vectors, got " +
                         std::to_string(fused.rows()));
  }
  std::vector<Tensor> products;
  products.reserve(blocks_);
  for (std::size_t b = 0; b < blocks_; ++b) {
    products.push_back(mul(slice_rows(fused, b, b + 1), slice_rows(fused, blocks_ + b, blocks_ + b + 1)));
  }
  const Tensor joined = blocks_ == 1 ? products.front() : concat(products, 1);
  return project(joined);
}

}  // namespace textfuse
