#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "vppsim/common.hpp"

using namespace vppsim;

TEST_CASE("streams are deterministic and independent") {
  Rng a = Rng::derive(42, "stream", 1, 2);
  Rng b = Rng::derive(42, "stream", 1, 2);
  Rng c = Rng::derive(42, "stream", 1, 3);
  bool differs = false;
  for (int i = 0; i < 16; ++i) {
    const auto va = a.next_u64();
    CHECK(va == b.next_u64());
    if (va != c.next_u64()) differs = true;
  }
  CHECK(differs);
}

TEST_CASE("uniform01 stays in range with sane mean") {
  Rng rng(7);
  double sum = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform01();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(std::abs(sum / n - 0.5) < 0.02);
}

TEST_CASE("normal has unit variance") {
  Rng rng(11);
  double sum = 0.0, sq = 0.0;
  const int n = 50000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sq += x * x;
  }
  CHECK(std::abs(sum / n) < 0.02);
  CHECK(std::abs(sq / n - 1.0) < 0.05);
}

TEST_CASE("weighted pick follows the weight ratio") {
  Rng rng(3);
  const std::vector<double> w = {1.0, 3.0};
  int counts[2] = {0, 0};
  const int n = 40000;
  for (int i = 0; i < n; ++i) ++counts[rng.pick_weighted(w)];
  const double ratio = static_cast<double>(counts[1]) / counts[0];
  CHECK(ratio > 2.6);
  CHECK(ratio < 3.4);
}

TEST_CASE("degenerate weights") {
  Rng rng(5);
  CHECK(rng.pick_weighted({0.0, 0.0}) == -1);
  CHECK(rng.pick_weighted({0.0, 2.0}) == 1);
  CHECK_THROWS_AS(rng.pick_weighted({-1.0}), ParameterError);
}

TEST_CASE("leading load injects reactive power") {
  const double q = reactive_from_active_kw(1.0, 0.95, true);
  CHECK(q == doctest::Approx(std::sqrt(1.0 - 0.95 * 0.95) / 0.95));
  CHECK(reactive_from_active_kw(1.0, 0.95, false) == doctest::Approx(-q));
}
