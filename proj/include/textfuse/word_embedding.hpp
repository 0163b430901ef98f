#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace textfuse {

inline constexpr std::size_t kWordEmbeddingDim = 300;
inline constexpr std::uint64_t kWordEmbeddingSeed = 0x5eed'f00d'cafe'0001ULL;

// Deterministic sub-word hashing embedding used in place of pretrained word
// vectors: every character 3- to 5-gram of "<text>" plus the whole bracketed
// token is hashed into a pseudo-random direction; the directions are summed
// and the result is scaled to unit L2 norm.
std::vector<double> stand_in_word_embedding(std::string_view text, std::uint64_t seed = kWordEmbeddingSeed);

// 64-bit FNV-1a over bytes, mixed with seed.
std::uint64_t hash_bytes(std::string_view bytes, std::uint64_t seed);

// Fills out with values in [-1, 1) drawn from a splitmix64 stream seeded by key.
void hashed_direction(std::uint64_t key, std::span<double> out);

}  // namespace textfuse
