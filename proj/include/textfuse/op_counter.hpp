#pragma once

// Multiply-add tally for the tensor engine.
//
// While an OpCounter is alive on a thread, every matmul-family op and every
// elementwise product executed on that thread adds its scalar multiply-add
// count to the counter, attributed to the innermost ScopedLabel (or to the
// empty label). Counting is off when no counter is installed.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

namespace textfuse::profile {

class OpCounter {
 public:
  OpCounter();
  ~OpCounter();
  OpCounter(const OpCounter&) = delete;
  OpCounter& operator=(const OpCounter&) = delete;

  void add(std::uint64_t madds);
  std::uint64_t total() const { return total_; }
  std::uint64_t labeled(std::string_view label) const;
  const std::map<std::string, std::uint64_t, std::less<>>& by_label() const { return by_label_; }

 private:
  OpCounter* previous_;
  std::uint64_t total_ = 0;
  std::map<std::string, std::uint64_t, std::less<>> by_label_;
};

class ScopedLabel {
 public:
  explicit ScopedLabel(std::string_view label);
  ~ScopedLabel();
  ScopedLabel(const ScopedLabel&) = delete;
  ScopedLabel& operator=(const ScopedLabel&) = delete;

 private:
  std::string_view previous_;
};

// Labels attached by the model to the operations that the encoder cost model
// counts: the attention-block elementwise product and final weighted sum, and
// the query-key products inside transformer self-attention.
inline constexpr std::string_view kBlockLabel = "attention_block";
inline constexpr std::string_view kPairLabel = "transformer_pairs";

// Engine hook; no-op when no counter is installed.
void tally(std::uint64_t madds);

}  // namespace textfuse::profile
