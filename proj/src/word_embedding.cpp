#include "textfuse/word_embedding.hpp"

#include <cmath>
#include <string>

namespace textfuse {
namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t hash_bytes(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void hashed_direction(std::uint64_t key, std::span<double> out) {
  std::uint64_t state = key;
  for (double& v : out) {
    const double unit = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
    v = 2.0 * unit - 1.0;
  }
}

std::vector<double> stand_in_word_embedding(std::string_view text, std::uint64_t seed) {
  const std::string bracketed = "<" + std::string(text) + ">";
  std::vector<double> sum(kWordEmbeddingDim, 0.0);
  std::vector<double> direction(kWordEmbeddingDim);
  auto accumulate = [&](std::string_view gram) {
    hashed_direction(hash_bytes(gram, seed), direction);
    for (std::size_t i = 0; i < kWordEmbeddingDim; ++i) sum[i] += direction[i];
  };
  accumulate(bracketed);
  for (std::size_t n = 3; n <= 5; ++n) {
    for (std::size_t start = 0; start + n <= bracketed.size(); ++start) {
      accumulate(std::string_view(bracketed).substr(start, n));
    }
  }
  double norm = 0.0;
  for (double v : sum) norm += v * v;
  norm = std::sqrt(norm);
  for (double& v : sum) v /= norm;
  return sum;
}

}  // namespace textfuse
