#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace textfuse {

// Answer/question vocabulary. Indices 0-3 are the special tokens.
class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kBegin = 1;
  static constexpr std::size_t kEnd = 2;
  static constexpr std::size_t kUnk = 3;
  static constexpr std::size_t kSpecialCount = 4;

  Vocabulary();
  // words must not repeat or contain specials; they are appended after the specials.
  explicit Vocabulary(const std::vector<std::string>& words);

  // Full list including specials, in index order.
  static Vocabulary from_full_list(const std::vector<std::string>& all_words);

  std::size_t size() const { return words_.size(); }
  const std::string& word(std::size_t id) const;
  std::optional<std::size_t> find(std::string_view word) const;
  std::size_t id_or_unk(std::string_view word) const;
  const std::vector<std::string>& words() const { return words_; }

  std::string save_text() const;
  static Vocabulary load_text(std::string_view text);

 private:
  void append(const std::string& word);
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Lowercase, strip surrounding whitespace.
std::string normalize_answer(std::string_view text);
std::vector<std::string> split_words(std::string_view text);

}  // namespace textfuse
