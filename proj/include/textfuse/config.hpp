#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "json.hpp"

namespace textfuse {

enum class BlockConfig { one_block, two_block, three_block };
enum class VisualBranch { objects, global_grid };

std::string_view to_string(BlockConfig blocks);
BlockConfig block_config_from_string(std::string_view text);
std::size_t block_count(BlockConfig blocks);

struct EncoderConfig {
  std::size_t num_layers = 4;
  std::size_t num_heads = 4;
  std::size_t d_model = 96;
  std::size_t d_ff = 384;
  bool textcaps_mode = false;
  std::size_t max_decode_steps = 12;

  // Desk-scale defaults.
  static EncoderConfig desk() { return {}; }
  // Full-width preset: 8 layers, 12 heads, 768 wide, 3072 feed-forward.
  static EncoderConfig full_scale();

  void validate() const;
};

struct ModelConfig {
  EncoderConfig encoder;
  std::size_t vocab_size = 204;
  std::size_t d_frcn = 64;
  std::size_t d_recog = 32;
  std::size_t d_glob = 64;
  std::size_t d_hidden = 0;  // self-attention bottleneck; 0 means d_model
  std::size_t d_att = 0;     // attention-block width; 0 means d_model
  std::size_t question_layers = 3;
  std::size_t max_question_len = 20;
  std::size_t max_ocr = 50;
  std::size_t max_obj = 100;
  // Fixed slot counts for OCR/object sequences; 0 uses each instance's own length.
  std::size_t pad_ocr = 0;
  std::size_t pad_obj = 0;
  BlockConfig blocks = BlockConfig::three_block;
  VisualBranch visual = VisualBranch::objects;

  std::size_t hidden_width() const { return d_hidden == 0 ? encoder.d_model : d_hidden; }
  std::size_t attention_width() const { return d_att == 0 ? encoder.d_model : d_att; }
  void validate() const;
};

void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace textfuse
