#include <catch2/catch_amalgamated.hpp>

#include "q2opt/rng.hpp"

using q2opt::Rng;

TEST_CASE("rng streams are deterministic per seed") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const auto va = a.next_u64();
    REQUIRE(va == b.next_u64());
  }
  bool any_diff = false;
  Rng a2(42);
  for (int i = 0; i < 100; ++i) any_diff |= a2.next_u64() != c.next_u64();
  REQUIRE(any_diff);
}

TEST_CASE("uniform stays in [0,1) with sane mean") {
  Rng rng(7);
  double acc = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    acc += u;
  }
  REQUIRE(std::abs(acc / n - 0.5) < 0.01);
}

TEST_CASE("normal has unit scale") {
  Rng rng(11);
  double sum = 0.0, sq = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  REQUIRE(std::abs(sum / n) < 0.02);
  REQUIRE(std::abs(sq / n - 1.0) < 0.03);
}

TEST_CASE("uniform_int covers its range uniformly") {
  Rng rng(3);
  int counts[5] = {0, 0, 0, 0, 0};
  for (int i = 0; i < 50000; ++i) counts[rng.uniform_int(5)]++;
  for (int k = 0; k < 5; ++k) REQUIRE(std::abs(counts[k] - 10000) < 500);
}

TEST_CASE("split streams differ from the parent and are seed-stable") {
  Rng parent(99);
  Rng s1 = parent.split(1);
  Rng s2 = parent.split(2);
  Rng s1_again = Rng(99).split(1);
  REQUIRE(s1.next_u64() == s1_again.next_u64());
  Rng s1b = Rng(99).split(1);
  REQUIRE(s1b.next_u64() != s2.next_u64());
}
