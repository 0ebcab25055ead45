#include <cmath>
#include <limits>
#include <stdexcept>

#include "doctest.h"
#include "dsppnet/random.hpp"
#include "dsppnet/tensor.hpp"

using dsppnet::Rng;
using dsppnet::Tensor;

TEST_CASE("tensor stores row-major data with shape checking") {
  Tensor t({2, 2}, {1, 2, 3, 4});
  CHECK(t.rank() == 2);
  CHECK(t.size() == 4);
  // Row-major: element (i, j) lives at i*cols + j.
  CHECK(t.at(0 * 2 + 0) == 1.0);
  CHECK(t.at(0 * 2 + 1) == 2.0);
  CHECK(t.at(1 * 2 + 0) == 3.0);
  CHECK(t.at(1 * 2 + 1) == 4.0);
}

TEST_CASE("zero tensor sums to zero") {
  Tensor z = Tensor::zeros({3});
  double s = 0.0;
  for (double v : z.values()) s += v;
  CHECK(s == 0.0);
}

TEST_CASE("shape/data length mismatch is rejected") {
  CHECK_THROWS_AS(Tensor({2}, {1, 2, 3}), std::invalid_argument);
}

TEST_CASE("non-finite construction values are rejected") {
  CHECK_THROWS_AS(Tensor({2}, {1.0, std::numeric_limits<double>::quiet_NaN()}),
                  std::invalid_argument);
  CHECK_THROWS_AS(Tensor({1}, {std::numeric_limits<double>::infinity()}),
                  std::invalid_argument);
}

TEST_CASE("non-positive dimensions are rejected") {
  CHECK_THROWS_AS(Tensor::zeros({2, 0}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor::zeros({-1}), std::invalid_argument);
}

TEST_CASE("item and scalar helpers") {
  CHECK(Tensor::scalar(2.5).item() == 2.5);
  CHECK_THROWS_AS(Tensor::zeros({2}).item(), std::invalid_argument);
  Tensor f = Tensor::full({2, 3}, 7.0);
  CHECK(f.size() == 6);
  for (double v : f.values()) CHECK(v == 7.0);
}

TEST_CASE("dim performs range checking") {
  Tensor t = Tensor::zeros({2, 3});
  CHECK(t.dim(0) == 2);
  CHECK(t.dim(1) == 3);
  CHECK_THROWS_AS(t.dim(2), std::invalid_argument);
  CHECK_THROWS_AS(t.dim(-1), std::invalid_argument);
}

TEST_CASE("derived seeds separate components and stay stable") {
  const std::uint64_t base = 42;
  CHECK(dsppnet::derive_seed(base, "model") != dsppnet::derive_seed(base, "data"));
  CHECK(dsppnet::derive_seed(base, "model") == dsppnet::derive_seed(base, "model"));
  CHECK(dsppnet::derive_seed(base, "model") != dsppnet::derive_seed(base + 1, "model"));
}

TEST_CASE("rng uniform stays in range and reproduces") {
  Rng a(123), b(123);
  for (int i = 0; i < 1000; ++i) {
    const double v = a.uniform();
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
    CHECK(v == b.uniform());
  }
}

TEST_CASE("rng uniform_int covers the inclusive range") {
  Rng rng(7);
  bool saw_lo = false, saw_hi = false;
  for (int i = 0; i < 2000; ++i) {
    const auto v = rng.uniform_int(2, 5);
    CHECK(v >= 2);
    CHECK(v <= 5);
    saw_lo = saw_lo || v == 2;
    saw_hi = saw_hi || v == 5;
  }
  CHECK(saw_lo);
  CHECK(saw_hi);
  CHECK(rng.uniform_int(3, 3) == 3);
}

TEST_CASE("random_permutation is a permutation and seed-stable") {
  auto p = dsppnet::random_permutation(10, 5);
  auto q = dsppnet::random_permutation(10, 5);
  CHECK(p == q);
  std::vector<bool> seen(10, false);
  for (int v : p) {
    REQUIRE(v >= 0);
    REQUIRE(v < 10);
    CHECK(!seen[static_cast<std::size_t>(v)]);
    seen[static_cast<std::size_t>(v)] = true;
  }
  CHECK(dsppnet::random_permutation(10, 6) != p);
}
