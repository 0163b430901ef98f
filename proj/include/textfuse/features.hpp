#pragma once

// Projection of raw per-instance records into d_model feature sequences:
//
//   ocr visual      LN(W_fr frcn + W_rg recog) + LN(W_bx bbox)
//   ocr linguistic  LN(W_ft fasttext + W_ph phoc + W_rg recog)
//   object          LN(W'_fr frcn) + LN(W'_bx bbox)
//   global grid     LN(W_g grid_row)
//
// W_rg is shared by the two OCR parts. All rows of one kind are projected in a
// single matmul.

#include <span>
#include <string>

#include "textfuse/instance.hpp"
#include "textfuse/parameters.hpp"

namespace textfuse {

inline constexpr std::size_t kGlobalGridRows = 196;

struct FeatureDims {
  std::size_t d_frcn = 64;
  std::size_t d_recog = 32;
  std::size_t d_glob = 64;
  std::size_t d_model = 96;
};

void validate_ocr_token(const OcrTokenRaw& token, const FeatureDims& dims);
void validate_object(const ObjectRaw& object, const FeatureDims& dims);

// Rows past the populated count are all-zero padding; the masks mark which
// rows are populated. A sequence with neither rows nor padding is left
// undefined (Tensor::defined() == false).
struct PreparedFeatures {
  Tensor ocr_visual;
  Tensor ocr_linguistic;
  Tensor objects;
  Mask ocr_mask;
  Mask obj_mask;
};

class FeatureProjector {
 public:
  FeatureProjector() = default;
  FeatureProjector(ParameterStore& store, const std::string& name, const FeatureDims& dims, Rng& rng,
                   bool with_global_grid = false);

  Tensor ocr_visual(std::span<const OcrTokenRaw> tokens) const;
  Tensor ocr_linguistic(std::span<const OcrTokenRaw> tokens) const;
  Tensor objects(std::span<const ObjectRaw> objects) const;
  Tensor global_grid(const Tensor& grid) const;

  // pad_ocr / pad_obj of 0 keep the populated length.
  PreparedFeatures prepare(std::span<const OcrTokenRaw> tokens, std::span<const ObjectRaw> objects,
                           std::size_t pad_ocr = 0, std::size_t pad_obj = 0) const;

  const FeatureDims& dims() const { return dims_; }

  Linear ocr_frcn, recog, ocr_bbox, fasttext, phoc;
  LayerNorm ocr_appearance_norm, ocr_bbox_norm, ocr_linguistic_norm;
  Linear obj_frcn, obj_bbox;
  LayerNorm obj_appearance_norm, obj_bbox_norm;
  Linear grid;
  LayerNorm grid_norm;

 private:
  FeatureDims dims_;
};

// Appends zero rows up to `rows` and returns the validity mask. An undefined
// input counts as zero rows.
Tensor pad_rows(const Tensor& x, std::size_t rows, std::size_t width, Mask& mask);

}  // namespace textfuse
