#include "textfuse/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "textfuse/errors.hpp"

namespace textfuse {
namespace {
const std::vector<std::string> kSpecials{"<pad>", "<begin>", "<end>", "<unk>"};
}

Vocabulary::Vocabulary() {
  for (const auto& s : kSpecials) append(s);
}

Vocabulary::Vocabulary(const std::vector<std::string>& words) : Vocabulary() {
  for (const auto& w : words) append(w);
}

Vocabulary Vocabulary::from_full_list(const std::vector<std::string>& all_words) {
  if (all_words.size() < kSpecialCount ||
      !std::equal(kSpecials.begin(), kSpecials.end(), all_words.begin())) {
    throw FormatError("vocabulary must start with <pad> <begin> <end> <unk>");
  }
  return Vocabulary(std::vector<std::string>(all_words.begin() + kSpecialCount, all_words.end()));
}

void Vocabulary::append(const std::string& word) {
  if (word.empty()) throw ConfigError("empty vocabulary word");
  if (!index_.emplace(word, words_.size()).second) throw ConfigError("duplicate vocabulary word '" + word + "'");
  words_.push_back(word);
}

const std::string& Vocabulary::word(std::size_t id) const {
  if (id >= words_.size()) throw IndexError("vocabulary index " + std::to_string(id) + " out of range");
  return words_[id];
}

std::optional<std::size_t> Vocabulary::find(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end() || it->second < kSpecialCount) return std::nullopt;
  return it->second;
}

std::size_t Vocabulary::id_or_unk(std::string_view word) const { return find(word).value_or(kUnk); }

std::string Vocabulary::save_text() const {
  std::string out;
  for (const auto& w : words_) {
    out += w;
    out += '\n';
  }
  return out;
}

Vocabulary Vocabulary::load_text(std::string_view text) {
  std::vector<std::string> words;
  std::istringstream is{std::string(text)};
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) words.push_back(line);
  }
  return from_full_list(words);
}

std::string normalize_answer(std::string_view text) {
  std::size_t b = 0, e = text.size();
  while (b < e && std::isspace(static_cast<unsigned char>(text[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(text[e - 1]))) --e;
  std::string out(text.substr(b, e - b));
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream is{std::string(text)};
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

}  // namespace textfuse
