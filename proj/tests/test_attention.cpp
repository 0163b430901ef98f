#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "textfuse/attention.hpp"
#include "textfuse/errors.hpp"
#include "textfuse/ops.hpp"

using namespace textfuse;

namespace {

constexpr std::size_t kD = 6;

Tensor random_tensor(Rng& rng, Shape shape, double scale = 1.0) {
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = rng.normal(0.0, scale);
  return Tensor::from(std::move(shape), std::move(v));
}

Mask random_mask(Rng& rng, std::size_t n) {
  Mask m(n);
  for (std::size_t i = 0; i < n; ++i) m[i] = rng.index(3) != 0;
  m[rng.index(n)] = true;
  return m;
}

Tensor permute_rows(const Tensor& x, const std::vector<std::size_t>& perm) { return embedding_lookup(x, perm); }

double relu_value(double v) { return v > 0.0 ? v : 0.0; }

// g = sum_i s_i x_i with p_i = W[relu(W_s q) o relu(W_x x_i)] + b, by loops.
std::vector<double> block_oracle(const AttentionBlock& blk, const Tensor& q, const Tensor& x, const Mask& valid) {
  const std::size_t n = x.rows(), d = x.cols(), a = blk.query_proj.out_features();
  std::vector<double> guide(a);
  for (std::size_t j = 0; j < a; ++j) {
    double acc = blk.query_proj.bias.at(j);
    for (std::size_t i = 0; i < d; ++i) acc += q.at(i) * blk.query_proj.weight.at(i, j);
    guide[j] = relu_value(acc);
  }
  std::vector<double> p(n, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    double logit = blk.score.bias.at(0);
    for (std::size_t j = 0; j < a; ++j) {
      double acc = blk.feature_proj.bias.at(j);
      for (std::size_t i = 0; i < d; ++i) acc += x.at(r, i) * blk.feature_proj.weight.at(i, j);
      logit += relu_value(acc) * guide[j] * blk.score.weight.at(j, 0);
    }
    p[r] = logit;
  }
  double top = -INFINITY;
  for (std::size_t r = 0; r < n; ++r) {
    if (valid[r]) top = std::max(top, p[r]);
  }
  double z = 0.0;
  for (std::size_t r = 0; r < n; ++r) z += valid[r] ? std::exp(p[r] - top) : 0.0;
  std::vector<double> g(d, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    if (!valid[r]) continue;
    const double s = std::exp(p[r] - top) / z;
    for (std::size_t i = 0; i < d; ++i) g[i] += s * x.at(r, i);
  }
  return g;
}

struct Modules {
  ParameterStore store;
  Rng rng;
  SelfAttentionHead head;
  AttentionBlock block;
  explicit Modules(std::uint64_t seed)
      : rng(seed), head(store, "head", kD, 5, rng), block(store, "block", kD, 4, rng) {
    for (const Parameter& p : store.all()) {
      for (double& v : p.value.node().data) v = rng.normal(0.0, 0.7);
    }
  }
};

}  // namespace

TEST_CASE("self-attention: single row and identical rows") {
  Modules m(1);
  const Tensor one = random_tensor(m.rng, {1, kD});
  const Tensor out = m.head(one, Mask{true});
  for (std::size_t i = 0; i < kD; ++i) CHECK(out.at(i) == one.at(i));

  std::vector<double> rows;
  for (int r = 0; r < 4; ++r) rows.insert(rows.end(), one.data().begin(), one.data().end());
  const Tensor same = m.head(Tensor::from({4, kD}, rows), Mask(4, true));
  for (std::size_t i = 0; i < kD; ++i) CHECK(std::abs(same.at(i) - one.at(i)) <= 1e-12 * (1.0 + std::abs(one.at(i))));
}

TEST_CASE("self-attention matches a direct summation oracle") {
  Modules m(2);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + m.rng.index(8);
    const Tensor q = random_tensor(m.rng, {n, kD});
    const Mask valid = random_mask(m.rng, n);
    const Tensor a = m.head.weights(q, valid);
    const Tensor out = m.head(q, valid);
    for (std::size_t i = 0; i < kD; ++i) {
      double acc = 0.0;
      for (std::size_t r = 0; r < n; ++r) acc += a.at(r) * q.at(r, i);
      CHECK(std::abs(out.at(i) - acc) <= 1e-12);
    }
  }
  const Tensor q = random_tensor(m.rng, {3, kD});
  CHECK_THROWS_AS(m.head(q, Mask{false, false, false}), DegenerateMaskError);
}

TEST_CASE("attention block: single slot returns the row exactly") {
  Modules m(3);
  const Tensor x = random_tensor(m.rng, {1, kD});
  const Tensor g = m.block(random_tensor(m.rng, {1, kD}), x, Mask{true});
  for (std::size_t i = 0; i < kD; ++i) CHECK(g.at(i) == x.at(i));
}

TEST_CASE("attention block matches the loop oracle") {
  Modules m(4);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 1 + m.rng.index(9);
    const Tensor q = random_tensor(m.rng, {1, kD});
    const Tensor x = random_tensor(m.rng, {n, kD});
    const Mask valid = random_mask(m.rng, n);
    const Tensor g = m.block(q, x, valid);
    const auto expected = block_oracle(m.block, q, x, valid);
    for (std::size_t i = 0; i < kD; ++i) CHECK(std::abs(g.at(i) - expected[i]) <= 1e-12);
  }
  CHECK_THROWS_AS(m.block(random_tensor(m.rng, {1, kD}), random_tensor(m.rng, {2, kD}), Mask{false, false}),
                  DegenerateMaskError);
}

TEST_CASE("property: attention block is permutation invariant (120 cases)") {
  Modules m(5);
  for (int trial = 0; trial < 120; ++trial) {
    const std::size_t n = 1 + m.rng.index(12);
    const Tensor q = random_tensor(m.rng, {1, kD});
    const Tensor x = random_tensor(m.rng, {n, kD});
    const Mask valid = random_mask(m.rng, n);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), m.rng.engine());
    Mask permuted_mask(n);
    for (std::size_t r = 0; r < n; ++r) permuted_mask[r] = valid[perm[r]];
    const Tensor g = m.block(q, x, valid);
    const Tensor gp = m.block(q, permute_rows(x, perm), permuted_mask);
    for (std::size_t i = 0; i < kD; ++i) CHECK(std::abs(g.at(i) - gp.at(i)) <= 1e-12 * (1.0 + std::abs(g.at(i))));
  }
}

TEST_CASE("property: a single valid slot is returned unchanged (120 cases)") {
  Modules m(6);
  for (int trial = 0; trial < 120; ++trial) {
    const std::size_t n = 1 + m.rng.index(10);
    const Tensor q = random_tensor(m.rng, {1, kD});
    const Tensor x = random_tensor(m.rng, {n, kD});
    const std::size_t keep = m.rng.index(n);
    Mask valid(n, false);
    valid[keep] = true;
    const Tensor g = m.block(q, x, valid);
    const Tensor s = m.head(x, valid);
    for (std::size_t i = 0; i < kD; ++i) {
      CHECK(g.at(i) == x.at(keep, i));
      CHECK(s.at(i) == x.at(keep, i));
    }
  }
}

TEST_CASE("property: weights are convex over the valid slots (120 cases)") {
  Modules m(7);
  for (int trial = 0; trial < 120; ++trial) {
    const std::size_t n = 1 + m.rng.index(12);
    const Tensor q = random_tensor(m.rng, {1, kD}, 1.0 + 4.0 * m.rng.uniform(0, 1));
    const Tensor x = random_tensor(m.rng, {n, kD});
    const Mask valid = random_mask(m.rng, n);
    for (const Tensor& w : {m.block.weights(q, x, valid), m.head.weights(x, valid)}) {
      double total = 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        if (valid[r]) {
          CHECK(w.at(r) >= 0.0);
          total += w.at(r);
        } else {
          CHECK(w.at(r) == 0.0);
        }
      }
      CHECK(std::abs(total - 1.0) <= 1e-12);
    }
    // Positive query scaling changes the weights, and g stays the convex
    // combination of rows under the recomputed weights.
    const Tensor scaled = affine(q, 3.0);
    const Tensor s = m.block.weights(scaled, x, valid);
    const Tensor g = m.block(scaled, x, valid);
    for (std::size_t i = 0; i < kD; ++i) {
      double acc = 0.0;
      for (std::size_t r = 0; r < n; ++r) acc += s.at(r) * x.at(r, i);
      CHECK(std::abs(g.at(i) - acc) <= 1e-12);
    }
  }
}

TEST_CASE("property: pad slots never influence the output (120 cases)") {
  Modules m(8);
  for (int trial = 0; trial < 120; ++trial) {
    const std::size_t n = 2 + m.rng.index(10);
    const Tensor q = random_tensor(m.rng, {1, kD});
    Tensor x = random_tensor(m.rng, {n, kD});
    const Mask valid = random_mask(m.rng, n);
    const Tensor g = m.block(q, x, valid);
    const Tensor s = m.head(x, valid);
    Tensor mutated = x.detach();
    auto data = mutated.mutable_data();
    for (std::size_t r = 0; r < n; ++r) {
      if (valid[r]) continue;
      for (std::size_t i = 0; i < kD; ++i) data[r * kD + i] = m.rng.normal(0.0, 100.0);
    }
    const Tensor g2 = m.block(q, mutated, valid);
    const Tensor s2 = m.head(mutated, valid);
    for (std::size_t i = 0; i < kD; ++i) {
      CHECK(g2.at(i) == g.at(i));
      CHECK(s2.at(i) == s.at(i));
    }
  }
}

TEST_CASE("attention parameters all receive gradient") {
  Modules m(9);
  const Tensor q = random_tensor(m.rng, {5, kD});
  const Tensor x = random_tensor(m.rng, {7, kD});
  m.store.zero_grad();
  Tape tape;
  {
    TapeScope scope(tape);
    const Tensor guide = m.head(q, Mask(5, true));
    const Tensor g = m.block(guide, x, Mask(7, true));
    tape.backward(sum(mul(g, g)));
  }
  for (const Parameter& p : m.store.all()) {
    INFO(p.name);
    bool nonzero = false;
    for (double v : p.value.grad()) nonzero = nonzero || v != 0.0;
    CHECK(nonzero);
  }
}

TEST_CASE("independent heads share no parameters") {
  ParameterStore store;
  Rng rng(10);
  SelfAttentionHead a(store, "a", kD, kD, rng), b(store, "b", kD, kD, rng);
  CHECK(a.conv1.weight.identity() != b.conv1.weight.identity());
  CHECK(a.conv2.weight.identity() != b.conv2.weight.identity());
}

TEST_CASE("recurrent encoder") {
  ParameterStore store;
  Rng rng(11);
  RecurrentEncoder lstm(store, "lstm", 4, rng);

  SUBCASE("zero weights and zero input give zero states") {
    for (const Parameter& p : store.all()) {
      for (double& v : p.value.node().data) v = 0.0;
    }
    const Tensor h = lstm(Tensor::zeros({3, 4}));
    for (double v : h.data()) CHECK(v == 0.0);
  }

  SUBCASE("one step equals the cell equations") {
    const Tensor x = random_tensor(rng, {1, 4});
    const Tensor h = lstm(x);
    const std::size_t d = 4;
    auto gate = [&](std::size_t block, std::size_t j) {
      double acc = lstm.input.bias.at(block * d + j);
      for (std::size_t i = 0; i < d; ++i) acc += x.at(i) * lstm.input.weight.at(i, block * d + j);
      return acc;
    };
    for (std::size_t j = 0; j < d; ++j) {
      const double in = 1.0 / (1.0 + std::exp(-gate(0, j)));
      const double cand = std::tanh(gate(2, j));
      const double out = 1.0 / (1.0 + std::exp(-gate(3, j)));
      const double c = in * cand;
      CHECK(std::abs(h.at(j) - out * std::tanh(c)) <= 1e-14);
    }
  }

  SUBCASE("state t ignores positions after t") {
    const Tensor x = random_tensor(rng, {5, 4});
    Tensor y = x.detach();
    for (std::size_t i = 3 * 4; i < 5 * 4; ++i) y.mutable_data()[i] += 10.0;
    const Tensor hx = lstm(x), hy = lstm(y);
    for (std::size_t r = 0; r < 3; ++r) {
      for (std::size_t i = 0; i < 4; ++i) CHECK(hx.at(r, i) == hy.at(r, i));
    }
    bool later_differs = false;
    for (std::size_t i = 0; i < 4; ++i) later_differs = later_differs || hx.at(3, i) != hy.at(3, i);
    CHECK(later_differs);
  }
}
