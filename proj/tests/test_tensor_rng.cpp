#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "lumos/core/rng.hpp"
#include "lumos/core/tensor.hpp"

using namespace lumos;

TEST_SUITE("tensor_rng") {

TEST_CASE("tensor shape bookkeeping") {
  Tensor t({2, 3, 4});
  CHECK(t.numel() == 24);
  CHECK(t.ndim() == 3);
  CHECK(t.dim(0) == 2);
  CHECK(t.dim(2) == 4);
  for (int64_t i = 0; i < t.numel(); ++i) CHECK(t[i] == 0.0f);  // zero-initialized
  CHECK(t.same_shape(Tensor({2, 3, 4})));
  CHECK(!t.same_shape(Tensor({2, 3, 5})));
}

TEST_CASE("reshape shares storage, clone does not") {
  Tensor t({2, 6});
  t.at(1, 2) = 5.0f;
  Tensor r = t.reshape({3, 4});
  CHECK(r.numel() == 12);
  r[8] = 7.0f;  // same flat index as t.at(1,2)
  CHECK(t.at(1, 2) == 7.0f);

  Tensor c = t.clone();
  c[8] = 9.0f;
  CHECK(t[8] == 7.0f);
}

TEST_CASE("full and fill") {
  Tensor f = Tensor::full({3}, 0.25f);
  CHECK(f[0] == 0.25f);
  CHECK(f[2] == 0.25f);
  f.fill(-1.0f);
  CHECK(f[1] == -1.0f);
}

TEST_CASE("same seed gives the same stream, different seeds differ") {
  Rng a(42), b(42), c(43);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 100; ++i) {
    const double va = a.uniform();
    all_equal &= va == b.uniform();
    any_diff |= va != c.uniform();
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("uniform ranges") {
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const double v = rng.uniform(-3.0, 5.0);
    CHECK(v >= -3.0);
    CHECK(v < 5.0);
    const int64_t k = rng.uniform_int(17);
    CHECK(k >= 0);
    CHECK(k < 17);
  }
}

TEST_CASE("normal moments are near standard over many draws") {
  Rng rng(11);
  const int n = 20000;
  double sum = 0, sq = 0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  const double stddev = std::sqrt(sq / n - mean * mean);
  CHECK(std::abs(mean) < 0.05);
  CHECK(std::abs(stddev - 1.0) < 0.05);
}

TEST_CASE("save_state restores the exact stream") {
  Rng rng(99);
  for (int i = 0; i < 17; ++i) rng.uniform();  // advance off a seed boundary
  const std::string s = rng.save_state();
  std::vector<double> want;
  for (int i = 0; i < 50; ++i) want.push_back(rng.normal());
  Rng other(1);
  other.load_state(s);
  for (int i = 0; i < 50; ++i) CHECK(other.normal() == want[(size_t)i]);
}

TEST_CASE("derive yields distinct deterministic substreams") {
  std::set<uint64_t> seen;
  for (uint64_t i = 0; i < 8; ++i) {
    const uint64_t d = Rng::derive(1234, i);
    CHECK(d == Rng::derive(1234, i));
    seen.insert(d);
  }
  CHECK(seen.size() == 8);
  CHECK(Rng::derive(1234, 0) != Rng::derive(1235, 0));
}

TEST_CASE("shuffle is a permutation and is seed-deterministic") {
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[(size_t)i] = i;
  std::vector<int> w = v;
  Rng a(5), b(5);
  a.shuffle(v);
  b.shuffle(w);
  CHECK(v == w);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) CHECK(sorted[(size_t)i] == i);
}

}  // TEST_SUITE
