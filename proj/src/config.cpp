#include "textfuse/config.hpp"

#include "textfuse/errors.hpp"

namespace textfuse {

using nlohmann::json;

std::string_view to_string(BlockConfig blocks) {
  switch (blocks) {
    case BlockConfig::one_block: return "one_block";
    case BlockConfig::two_block: return "two_block";
    case BlockConfig::three_block: return "three_block";
  }
  return "three_block";
}

BlockConfig block_config_from_string(std::string_view text) {
  if (text == "one_block") return BlockConfig::one_block;
  if (text == "two_block") return BlockConfig::two_block;
  if (text == "three_block") return BlockConfig::three_block;
  throw ConfigError("unknown block configuration '" + std::string(text) + "'");
}

std::size_t block_count(BlockConfig blocks) {
  switch (blocks) {
    case BlockConfig::one_block: return 1;
    case BlockConfig::two_block: return 2;
    case BlockConfig::three_block: return 3;
  }
  return 3;
}

EncoderConfig EncoderConfig::full_scale() {
  EncoderConfig c;
  c.num_layers = 8;
  c.num_heads = 12;
  c.d_model = 768;
  c.d_ff = 3072;
  return c;
}

void EncoderConfig::validate() const {
  if (num_heads == 0 || d_model == 0 || d_model % num_heads != 0) {
    throw ConfigError("d_model (" + std::to_string(d_model) + ") must be divisible by num_heads (" +
                      std::to_string(num_heads) + ")");
  }
  if (d_ff == 0) throw ConfigError("d_ff must be positive");
  if (max_decode_steps == 0) throw ConfigError("max_decode_steps must be at least 1");
}

void ModelConfig::validate() const {
  encoder.validate();
  if (vocab_size < 5) throw ConfigError("vocab_size must leave room for the 4 special tokens");
  if (d_frcn == 0 || d_recog == 0 || d_glob == 0) throw ConfigError("feature widths must be positive");
  if (max_question_len == 0) throw ConfigError("max_question_len must be positive");
  if (pad_ocr > max_ocr) throw ConfigError("pad_ocr exceeds max_ocr");
  if (pad_obj > max_obj) throw ConfigError("pad_obj exceeds max_obj");
}

void to_json(json& j, const EncoderConfig& c) {
  j = json{{"num_layers", c.num_layers},       {"num_heads", c.num_heads},
           {"d_model", c.d_model},             {"d_ff", c.d_ff},
           {"textcaps_mode", c.textcaps_mode}, {"max_decode_steps", c.max_decode_steps}};
}

void from_json(const json& j, EncoderConfig& c) {
  EncoderConfig d;
  c.num_layers = j.value("num_layers", d.num_layers);
  c.num_heads = j.value("num_heads", d.num_heads);
  c.d_model = j.value("d_model", d.d_model);
  c.d_ff = j.value("d_ff", d.d_ff);
  c.textcaps_mode = j.value("textcaps_mode", d.textcaps_mode);
  c.max_decode_steps = j.value("max_decode_steps", c.textcaps_mode ? std::size_t{30} : d.max_decode_steps);
}

void to_json(json& j, const ModelConfig& c) {
  j = json{{"encoder", c.encoder},
           {"vocab_size", c.vocab_size},
           {"d_frcn", c.d_frcn},
           {"d_recog", c.d_recog},
           {"d_glob", c.d_glob},
           {"d_hidden", c.d_hidden},
           {"d_att", c.d_att},
           {"question_layers", c.question_layers},
           {"max_question_len", c.max_question_len},
           {"max_ocr", c.max_ocr},
           {"max_obj", c.max_obj},
           {"pad_ocr", c.pad_ocr},
           {"pad_obj", c.pad_obj},
           {"blocks", std::string(to_string(c.blocks))},
           {"visual", c.visual == VisualBranch::objects ? "objects" : "global_grid"}};
}

void from_json(const json& j, ModelConfig& c) {
  ModelConfig d;
  c.encoder = j.contains("encoder") ? j.at("encoder").get<EncoderConfig>() : d.encoder;
  c.vocab_size = j.value("vocab_size", d.vocab_size);
  c.d_frcn = j.value("d_frcn", d.d_frcn);
  c.d_recog = j.value("d_recog", d.d_recog);
  c.d_glob = j.value("d_glob", d.d_glob);
  c.d_hidden = j.value("d_hidden", d.d_hidden);
  c.d_att = j.value("d_att", d.d_att);
  c.question_layers = j.value("question_layers", d.question_layers);
  c.max_question_len = j.value("max_question_len", d.max_question_len);
  c.max_ocr = j.value("max_ocr", d.max_ocr);
  c.max_obj = j.value("max_obj", d.max_obj);
  c.pad_ocr = j.value("pad_ocr", d.pad_ocr);
  c.pad_obj = j.value("pad_obj", d.pad_obj);
  c.blocks = block_config_from_string(j.value("blocks", std::string(to_string(d.blocks))));
  const std::string visual = j.value("visual", std::string("objects"));
  if (visual == "objects") {
    c.visual = VisualBranch::objects;
  } else if (visual == "global_grid") {
    c.visual = VisualBranch::global_grid;
  } else {
    throw ConfigError("unknown visual branch '" + visual + "'");
  }
}

}  // namespace textfuse
