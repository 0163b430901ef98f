#pragma once

// Instance I/O (one JSON object per line) and synthetic task generation.
//
// Synthetic OCR tokens carry their attributes in the raw features so every
// task is learnable: a color code in the appearance vector, the box in bbox,
// and the string itself through the word embedding and PHOC. Objects carry a
// color code and a kind code in their appearance vector.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "textfuse/config.hpp"
#include "textfuse/instance.hpp"
#include "textfuse/parameters.hpp"
#include "textfuse/vocab.hpp"

namespace textfuse {

enum class SyntheticTask { copy_pointer, vocab_classify, mixed_compose, split_cue, caption_compose };

std::string_view to_string(SyntheticTask task);
SyntheticTask synthetic_task_from_string(std::string_view text);

struct SyntheticSpec {
  SyntheticTask task = SyntheticTask::mixed_compose;
  std::size_t n_instances = 64;
  std::size_t ocr_min = 3;
  std::size_t ocr_max = 6;
  std::size_t obj_min = 2;
  std::size_t obj_max = 5;
  std::size_t vocab_words = 200;  // excluding the 4 special tokens
  std::uint64_t seed = 0;
  std::size_t d_frcn = 64;
  std::size_t d_recog = 32;

  void validate() const;
};

void to_json(nlohmann::json& j, const SyntheticSpec& s);
void from_json(const nlohmann::json& j, SyntheticSpec& s);

struct Dataset {
  Vocabulary vocab;
  std::vector<Instance> instances;
  const Instance& find(std::string_view id) const;
};

// The shared vocabulary of the synthetic tasks, vocab_words entries after the specials.
Vocabulary synthetic_vocabulary(std::size_t vocab_words);
Dataset generate_synthetic(const SyntheticSpec& spec);

// Raw features of a synthetic OCR token / object.
OcrTokenRaw make_ocr_token(const std::string& text, std::size_t color, const std::vector<double>& bbox,
                           std::size_t d_frcn, std::size_t d_recog);
ObjectRaw make_object(std::size_t kind, std::size_t color, const std::vector<double>& bbox, std::size_t d_frcn,
                      std::uint64_t noise_key);

// Random valid instance for the given model configuration (gradient checks,
// property tests). Answers mix one vocabulary word and one OCR string.
Instance random_instance(Rng& rng, const ModelConfig& cfg, const Vocabulary& vocab, std::size_t n_ocr,
                         std::size_t n_obj, std::size_t question_len);

nlohmann::json instance_to_json(const Instance& inst);
Instance instance_from_json(const nlohmann::json& j);

std::string to_jsonl(const std::vector<Instance>& instances);
std::vector<Instance> parse_jsonl(std::string_view text);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view bytes);

void save_dataset(const Dataset& data, const std::string& jsonl_path);  // also writes <path>.vocab
Dataset load_dataset(const std::string& jsonl_path, const std::string& vocab_path = "");

}  // namespace textfuse
