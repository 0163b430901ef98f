#include "textfuse/features.hpp"

#include <cmath>

#include "textfuse/errors.hpp"
#include "textfuse/ops.hpp"
#include "textfuse/phoc.hpp"
#include "textfuse/word_embedding.hpp"

namespace textfuse {
namespace {

void check_length(const std::vector<double>& v, std::size_t expected, const char* what) {
  if (v.size() != expected) {
    throw DimensionError(std::string(what) + " has length " + std::to_string(v.size()) + ", expected " +
                         std::to_string(expected));
  }
  for (double x : v) {
    if (!std::isfinite(x)) throw ContractError(std::string(what) + " contains a non-finite value");
  }
}

void check_box(const std::vector<double>& box) {
  check_length(box, kBoxDim, "bbox");
  if (box[0] > box[2] || box[1] > box[3]) throw ContractError("bbox corners are not top-left/bottom-right");
}

template <typename T, typename Field>
Tensor stack(std::span<const T> items, std::size_t width, Field field) {
  std::vector<double> values;
  values.reserve(items.size() * width);
  for (const T& item : items) {
    const std::vector<double>& v = field(item);
    values.insert(values.end(), v.begin(), v.end());
  }
  return Tensor::from({items.size(), width}, std::move(values));
}

}  // namespace

void validate_ocr_token(const OcrTokenRaw& token, const FeatureDims& dims) {
  check_length(token.frcn, dims.d_frcn, "ocr frcn");
  check_box(token.bbox);
  check_length(token.fasttext, kWordEmbeddingDim, "ocr fasttext");
  check_length(token.phoc, kPhocDim, "ocr phoc");
  for (double v : token.phoc) {
    if (v != 0.0 && v != 1.0) throw ContractError("ocr phoc entries must be 0 or 1");
  }
  check_length(token.recog, dims.d_recog, "ocr recog");
}

void validate_object(const ObjectRaw& object, const FeatureDims& dims) {
  check_length(object.frcn, dims.d_frcn, "object frcn");
  check_box(object.bbox);
}

FeatureProjector::FeatureProjector(ParameterStore& store, const std::string& name, const FeatureDims& dims,
                                   Rng& rng, bool with_global_grid)
    : ocr_frcn(store, name + ".ocr_frcn", dims.d_frcn, dims.d_model, rng),
      recog(store, name + ".recog", dims.d_recog, dims.d_model, rng),
      ocr_bbox(store, name + ".ocr_bbox", kBoxDim, dims.d_model, rng),
      fasttext(store, name + ".fasttext", kWordEmbeddingDim, dims.d_model, rng),
      phoc(store, name + ".phoc", kPhocDim, dims.d_model, rng),
      ocr_appearance_norm(store, name + ".ocr_appearance_norm", dims.d_model),
      ocr_bbox_norm(store, name + ".ocr_bbox_norm", dims.d_model),
      ocr_linguistic_norm(store, name + ".ocr_linguistic_norm", dims.d_model),
      obj_frcn(store, name + ".obj_frcn", dims.d_frcn, dims.d_model, rng),
      obj_bbox(store, name + ".obj_bbox", kBoxDim, dims.d_model, rng),
      obj_appearance_norm(store, name + ".obj_appearance_norm", dims.d_model),
      obj_bbox_norm(store, name + ".obj_bbox_norm", dims.d_model),
      dims_(dims) {
  if (with_global_grid) {
    grid = Linear(store, name + ".grid", dims.d_glob, dims.d_model, rng);
    grid_norm = LayerNorm(store, name + ".grid_norm", dims.d_model);
  }
}

Tensor FeatureProjector::ocr_visual(std::span<const OcrTokenRaw> tokens) const {
  for (const auto& t : tokens) validate_ocr_token(t, dims_);
  const Tensor frcn = stack(tokens, dims_.d_frcn, [](const OcrTokenRaw& t) -> const auto& { return t.frcn; });
  const Tensor rg = stack(tokens, dims_.d_recog, [](const OcrTokenRaw& t) -> const auto& { return t.recog; });
  const Tensor box = stack(tokens, kBoxDim, [](const OcrTokenRaw& t) -> const auto& { return t.bbox; });
  return add(ocr_appearance_norm(add(ocr_frcn(frcn), recog(rg))), ocr_bbox_norm(ocr_bbox(box)));
}

Tensor FeatureProjector::ocr_linguistic(std::span<const OcrTokenRaw> tokens) const {
  for (const auto& t : tokens) validate_ocr_token(t, dims_);
  const Tensor ft =
      stack(tokens, kWordEmbeddingDim, [](const OcrTokenRaw& t) -> const auto& { return t.fasttext; });
  const Tensor ph = stack(tokens, kPhocDim, [](const OcrTokenRaw& t) -> const auto& { return t.phoc; });
  const Tensor rg = stack(tokens, dims_.d_recog, [](const OcrTokenRaw& t) -> const auto& { return t.recog; });
  return ocr_linguistic_norm(add(add(fasttext(ft), phoc(ph)), recog(rg)));
}

Tensor FeatureProjector::objects(std::span<const ObjectRaw> objects) const {
  for (const auto& o : objects) validate_object(o, dims_);
  const Tensor frcn = stack(objects, dims_.d_frcn, [](const ObjectRaw& o) -> const auto& { return o.frcn; });
  const Tensor box = stack(objects, kBoxDim, [](const ObjectRaw& o) -> const auto& { return o.bbox; });
  return add(obj_appearance_norm(obj_frcn(frcn)), obj_bbox_norm(obj_bbox(box)));
}

Tensor FeatureProjector::global_grid(const Tensor& grid_rows) const {
  if (!grid.weight.defined()) throw ConfigError("global grid branch was not enabled for this projector");
  if (grid_rows.cols() != dims_.d_glob) {
    throw DimensionError("global grid rows have width " + std::to_string(grid_rows.cols()) + ", expected " +
                         std::to_string(dims_.d_glob));
  }
  return grid_norm(grid(grid_rows));
}

Tensor pad_rows(const Tensor& x, std::size_t rows, std::size_t width, Mask& mask) {
  const std::size_t populated = x.defined() ? x.rows() : 0;
  const std::size_t total = std::max(rows, populated);
  mask.assign(total, false);
  std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(populated), true);
  if (total == 0) return Tensor{};
  if (populated == total) return x;
  const Tensor zeros = Tensor::zeros({total - populated, width});
  if (populated == 0) return zeros;
  return concat({x, zeros}, 0);
}

PreparedFeatures FeatureProjector::prepare(std::span<const OcrTokenRaw> tokens,
                                           std::span<const ObjectRaw> object_list, std::size_t pad_ocr,
                                           std::size_t pad_obj) const {
  if (pad_ocr != 0 && tokens.size() > pad_ocr) {
    throw ContractError("instance has " + std::to_string(tokens.size()) + " OCR tokens, more than the " +
                        std::to_string(pad_ocr) + " slots");
  }
  if (pad_obj != 0 && object_list.size() > pad_obj) {
    throw ContractError("instance has " + std::to_string(object_list.size()) + " objects, more than the " +
                        std::to_string(pad_obj) + " slots");
  }
  PreparedFeatures out;
  Tensor visual, linguistic, objs;
  if (!tokens.empty()) {
    visual = ocr_visual(tokens);
    linguistic = ocr_linguistic(tokens);
  }
  if (!object_list.empty()) objs = objects(object_list);
  Mask unused;
  out.ocr_visual = pad_rows(visual, pad_ocr, dims_.d_model, out.ocr_mask);
  out.ocr_linguistic = pad_rows(linguistic, pad_ocr, dims_.d_model, unused);
  out.objects = pad_rows(objs, pad_obj, dims_.d_model, out.obj_mask);
  return out;
}

}  // namespace textfuse
