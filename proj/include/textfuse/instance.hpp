#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace textfuse {

inline constexpr std::size_t kBoxDim = 4;

// One OCR token. bbox is [x_tl, y_tl, x_br, y_br] normalized to [0, 1].
struct OcrTokenRaw {
  std::string text;
  std::vector<double> frcn;      // appearance feature
  std::vector<double> bbox;      // kBoxDim
  std::vector<double> fasttext;  // kWordEmbeddingDim
  std::vector<double> phoc;      // kPhocDim, entries in {0, 1}
  std::vector<double> recog;     // recognizer feature
};

struct ObjectRaw {
  std::vector<double> frcn;
  std::vector<double> bbox;
};

struct Instance {
  std::string id;
  std::vector<std::size_t> question_tokens;  // empty in caption mode
  std::vector<OcrTokenRaw> ocr;
  std::vector<ObjectRaw> objects;
  std::vector<std::string> answers;  // captions in caption mode
  // Optional 196 grid rows of global image features.
  std::vector<std::vector<double>> global_grid;
};

}  // namespace textfuse
