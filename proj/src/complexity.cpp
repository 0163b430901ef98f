#include "textfuse/complexity.hpp"

#include <iomanip>
#include <sstream>

#include "textfuse/errors.hpp"

namespace textfuse {

std::string_view to_string(EncoderModel model) {
  return model == EncoderModel::m4c_style ? "m4c_style" : "six_vector";
}

EncoderModel encoder_model_from_string(std::string_view text) {
  if (text == "m4c" || text == "m4c_style") return EncoderModel::m4c_style;
  if (text == "ours" || text == "six_vector") return EncoderModel::six_vector;
  throw ConfigError("unknown encoder model '" + std::string(text) + "' (expected m4c or ours)");
}

void ComplexityQuery::validate() const {
  if (layers == 0) throw ConfigError("layers must be positive");
  if (include_d && d == 0) throw ConfigError("d must be positive");
}

ComplexityReport symbolic_count(const ComplexityQuery& q) {
  q.validate();
  const std::uint64_t scale = q.include_d ? q.d : 1;
  ComplexityReport r;
  if (q.model == EncoderModel::m4c_style) {
    const std::uint64_t n = q.L + q.N + q.M;
    r.transformer_per_layer_ops = n * n * scale;
  } else {
    const std::uint64_t n = 6 + q.N;
    r.attention_block_ops = (2 * q.N + 2 * q.N + 2 * q.M) * scale;
    r.transformer_per_layer_ops = n * n * scale;
  }
  r.transformer_total_ops = r.transformer_per_layer_ops * q.layers;
  r.total_ops = r.attention_block_ops + r.transformer_total_ops;
  return r;
}

std::string format_report(const ComplexityQuery& q, const ComplexityReport& r) {
  std::ostringstream os;
  os << "model " << to_string(q.model) << "  L=" << q.L << " N=" << q.N << " M=" << q.M << " layers=" << q.layers;
  if (q.include_d) os << " d=" << q.d;
  os << '\n';
  auto row = [&](const char* label, std::uint64_t v) { os << std::left << std::setw(26) << label << v << '\n'; };
  row("attention_block_ops", r.attention_block_ops);
  row("transformer_per_layer_ops", r.transformer_per_layer_ops);
  row("transformer_total_ops", r.transformer_total_ops);
  row("total_ops", r.total_ops);
  return os.str();
}

nlohmann::json report_json(const ComplexityQuery& q, const ComplexityReport& r) {
  return {{"model", std::string(to_string(q.model))},
          {"L", q.L},
          {"N", q.N},
          {"M", q.M},
          {"layers", q.layers},
          {"include_d", q.include_d},
          {"d", q.d},
          {"attention_block_ops", r.attention_block_ops},
          {"transformer_per_layer_ops", r.transformer_per_layer_ops},
          {"transformer_total_ops", r.transformer_total_ops},
          {"total_ops", r.total_ops}};
}

}  // namespace textfuse
