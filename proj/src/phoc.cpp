#include "textfuse/phoc.hpp"

#include <algorithm>
#include <cctype>

namespace textfuse {
namespace {

constexpr std::size_t kMinLevel = 2;
constexpr std::size_t kMaxLevel = 5;

// Segment [begin/n, end/n] against region [r/L, (r+1)/L]. Both scaled by n*L
// so the test "overlap >= half the segment span" stays in integers.
bool occupies(std::size_t begin, std::size_t end, std::size_t n, std::size_t region, std::size_t level) {
  const std::size_t seg_lo = begin * level;
  const std::size_t seg_hi = end * level;
  const std::size_t reg_lo = region * n;
  const std::size_t reg_hi = (region + 1) * n;
  const std::size_t lo = std::max(seg_lo, reg_lo);
  const std::size_t hi = std::min(seg_hi, reg_hi);
  if (hi <= lo) return false;
  return 2 * (hi - lo) >= seg_hi - seg_lo;
}

}  // namespace

const std::array<std::string_view, kPhocBigramCount>& phoc_bigrams() {
  // Most frequent English bigrams, most frequent first.
  static constexpr std::array<std::string_view, kPhocBigramCount> kBigrams{
      "th", "he", "in", "er", "an", "re", "on", "at", "en", "nd", "ti", "es", "or",
      "te", "of", "ed", "is", "it", "al", "ar", "st", "to", "nt", "ng", "se", "ha",
      "as", "ou", "io", "le", "ve", "co", "me", "de", "hi", "ri", "ro", "ic", "ne",
      "ea", "ra", "ce", "li", "ch", "ll", "be", "ma", "si", "om", "ur"};
  return kBigrams;
}

std::string phoc_normalize(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char raw : text) {
    const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(raw)));
    if (phoc_symbol(c) >= 0) out.push_back(c);
  }
  return out;
}

int phoc_symbol(char c) {
  if (c >= 'a' && c <= 'z') return c - 'a';
  if (c >= '0' && c <= '9') return 26 + (c - '0');
  return -1;
}

std::size_t phoc_unigram_offset(std::size_t level, std::size_t region) {
  std::size_t offset = 0;
  for (std::size_t l = kMinLevel; l < level; ++l) offset += l * kPhocAlphabet;
  return offset + region * kPhocAlphabet;
}

std::vector<double> phoc_encode(std::string_view text) {
  std::vector<double> out(kPhocDim, 0.0);
  const std::string word = phoc_normalize(text);
  const std::size_t n = word.size();
  if (n == 0) return out;

  for (std::size_t k = 0; k < n; ++k) {
    const auto symbol = static_cast<std::size_t>(phoc_symbol(word[k]));
    for (std::size_t level = kMinLevel; level <= kMaxLevel; ++level) {
      for (std::size_t region = 0; region < level; ++region) {
        if (occupies(k, k + 1, n, region, level)) out[phoc_unigram_offset(level, region) + symbol] = 1.0;
      }
    }
  }

  const auto& bigrams = phoc_bigrams();
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const std::string_view pair(word.data() + k, 2);
    auto it = std::find(bigrams.begin(), bigrams.end(), pair);
    if (it == bigrams.end()) continue;
    const auto index = static_cast<std::size_t>(it - bigrams.begin());
    for (std::size_t region = 0; region < kPhocBigramLevel; ++region) {
      if (occupies(k, k + 2, n, region, kPhocBigramLevel)) {
        out[kPhocUnigramDim + region * kPhocBigramCount + index] = 1.0;
      }
    }
  }
  return out;
}

}  // namespace textfuse
