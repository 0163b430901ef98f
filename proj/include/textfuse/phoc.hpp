#pragma once

// Pyramidal histogram of characters.
//
// Layout (604 binary entries): for each level L in 2..5, for each region r in
// [0, L), one slot per alphabet symbol (a-z then 0-9); then the 50 bigrams of
// phoc_bigrams() for each of the two level-2 regions.
//
// Character k of an n-character word occupies [k/n, (k+1)/n]. It is assigned
// to a region when the overlap covers at least half of its own span. Bigrams
// use the span of both characters. Input is lowercased and anything outside
// [a-z0-9] is dropped first.

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace textfuse {

inline constexpr std::size_t kPhocAlphabet = 36;
inline constexpr std::size_t kPhocUnigramDim = (2 + 3 + 4 + 5) * kPhocAlphabet;  // 504
inline constexpr std::size_t kPhocBigramCount = 50;
inline constexpr std::size_t kPhocBigramLevel = 2;
inline constexpr std::size_t kPhocDim = kPhocUnigramDim + kPhocBigramLevel * kPhocBigramCount;  // 604

const std::array<std::string_view, kPhocBigramCount>& phoc_bigrams();

// Lowercased [a-z0-9] characters of text.
std::string phoc_normalize(std::string_view text);

// Index of symbol c in the alphabet, or -1.
int phoc_symbol(char c);

// Offset of the first slot of (level, region) in the unigram block.
std::size_t phoc_unigram_offset(std::size_t level, std::size_t region);

std::vector<double> phoc_encode(std::string_view text);

}  // namespace textfuse
