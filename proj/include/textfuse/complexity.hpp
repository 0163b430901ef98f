#pragma once

// Encoder cost model. Counts are elementwise multiplications with the vector
// width omitted unless include_d is set.
//
//   m4c_style   per layer (L + N + M)^2, no attention blocks
//   six_vector  blocks 2N + 2N + 2M, per layer (6 + N)^2

#include <cstdint>
#include <string>
#include <string_view>

#include "json.hpp"

namespace textfuse {

enum class EncoderModel { m4c_style, six_vector };

std::string_view to_string(EncoderModel model);
// Accepts "m4c", "m4c_style", "ours", "six_vector".
EncoderModel encoder_model_from_string(std::string_view text);

struct ComplexityQuery {
  EncoderModel model = EncoderModel::six_vector;
  std::uint64_t L = 20;
  std::uint64_t N = 50;
  std::uint64_t M = 100;
  std::uint64_t layers = 4;
  bool include_d = false;
  std::uint64_t d = 1;

  void validate() const;
};

struct ComplexityReport {
  std::uint64_t attention_block_ops = 0;
  std::uint64_t transformer_per_layer_ops = 0;
  std::uint64_t transformer_total_ops = 0;
  std::uint64_t total_ops = 0;
};

ComplexityReport symbolic_count(const ComplexityQuery& q);

std::string format_report(const ComplexityQuery& q, const ComplexityReport& r);
nlohmann::json report_json(const ComplexityQuery& q, const ComplexityReport& r);

}  // namespace textfuse
