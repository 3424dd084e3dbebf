#include "doctest.h"

#include <stdexcept>

#include "celiac/rng.hpp"
#include "celiac/tensor.hpp"

using celiac::Rng;
using celiac::Tensor;

TEST_CASE("tensor shape and data invariants") {
  Tensor t({2, 3});
  CHECK(t.size() == 6);
  CHECK(t[0] == 0.0);
  CHECK_THROWS_AS(Tensor({2, 0}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({2, 3}, {1.0, 2.0}), std::invalid_argument);
  CHECK(Tensor::from({1, 2, 3}).shape() == std::vector<int>{3});
  CHECK(Tensor::scalar(4.5)[0] == 4.5);
}

TEST_CASE("softmax rows are a probability distribution") {
  Rng rng(11);
  Tensor logits({8, 4});
  for (std::int64_t i = 0; i < logits.size(); ++i) logits[i] = rng.uniform(-5, 5);
  Tensor p = celiac::softmax_rows(logits);
  for (int r = 0; r < 8; ++r) {
    double s = 0.0;
    for (int c = 0; c < 4; ++c) {
      CHECK(p.at2(r, c) >= 0.0);
      s += p.at2(r, c);
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("softmax is shift invariant and stable at large logits") {
  Tensor a({1, 3}, {1000.0, 0.0, -1000.0});
  Tensor p = celiac::softmax_rows(a);
  CHECK(p.at2(0, 0) == doctest::Approx(1.0));
  CHECK(p.all_finite());
}

TEST_CASE("rng streams are independent of draw history") {
  Rng a(42);
  Rng b(42);
  (void)a.next_u64();
  (void)a.next_u64();
  Rng s1 = a.stream("dropout");
  Rng s2 = b.stream("dropout");
  for (int i = 0; i < 16; ++i) CHECK(s1.next_u64() == s2.next_u64());
  // distinct names give distinct streams
  CHECK(Rng(42).stream("init").next_u64() != Rng(42).stream("shuffle").next_u64());
}

TEST_CASE("rng uniform_int covers [0,n) uniformly enough") {
  Rng rng(7);
  int counts[5] = {0, 0, 0, 0, 0};
  for (int i = 0; i < 50000; ++i) counts[rng.uniform_int(5)]++;
  for (int c : counts) CHECK(std::abs(c - 10000) < 500);
}
