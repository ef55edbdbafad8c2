#include "doctest.h"

#include <cmath>
#include <cstdint>

#include "stnq/rng.hpp"

using namespace stnq;

TEST_CASE("mix_seed is deterministic and stream-sensitive") {
  CHECK(mix_seed(42, 0) == mix_seed(42, 0));
  CHECK(mix_seed(42, 0) != mix_seed(42, 1));
  CHECK(mix_seed(42, 0) != mix_seed(43, 0));
}

TEST_CASE("fixed seed reproduces the draw sequence") {
  RngStream a(123), b(123);
  for (int i = 0; i < 100; ++i) {
    CHECK(a.uniform() == b.uniform());
    CHECK(a.poisson(2.5) == b.poisson(2.5));
    CHECK(a.normal() == b.normal());
  }
}

TEST_CASE("uniform stays in [0,1) and uniform_range respects bounds") {
  RngStream rng(7);
  for (int i = 0; i < 10000; ++i) {
    double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    double v = rng.uniform_range(2.0, 5.0);
    CHECK(v >= 2.0);
    CHECK(v < 5.0);
  }
}

TEST_CASE("poisson with zero mean always returns zero") {
  RngStream rng(11);
  for (int i = 0; i < 1000; ++i) CHECK(rng.poisson(0.0) == 0);
}

TEST_CASE("poisson(2.0) empirical mean within 0.01 over 1e6 draws") {
  RngStream rng(2024);
  double acc = 0.0;
  const int n = 1000000;
  for (int i = 0; i < n; ++i) acc += static_cast<double>(rng.poisson(2.0));
  double mean = acc / n;
  CHECK(mean == doctest::Approx(2.0).epsilon(0.005));
  CHECK(std::abs(mean - 2.0) <= 0.01);
}

TEST_CASE("poisson large mean goes through chunking and keeps its mean") {
  RngStream rng(99);
  double acc = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) acc += static_cast<double>(rng.poisson(75.0));
  CHECK(std::abs(acc / n - 75.0) <= 0.1);
}

TEST_CASE("poisson rejects invalid means") {
  RngStream rng(1);
  CHECK_THROWS(rng.poisson(-1.0));
  CHECK_THROWS(rng.poisson(std::nan("")));
}

TEST_CASE("bernoulli(0.4) empirical mean within 0.01 over 1e6 draws") {
  RngStream rng(5);
  long long acc = 0;
  const int n = 1000000;
  for (int i = 0; i < n; ++i) acc += rng.bernoulli(0.4);
  CHECK(std::abs(static_cast<double>(acc) / n - 0.4) <= 0.01);
}

TEST_CASE("normal draws have roughly standard moments") {
  RngStream rng(31);
  double s = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double x = rng.normal();
    s += x;
    s2 += x * x;
  }
  double mean = s / n;
  double var = s2 / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("categorical follows the given probabilities") {
  RngStream rng(77);
  std::vector<double> probs = {0.2, 0.5, 0.3};
  std::vector<long long> counts(3, 0);
  const int n = 300000;
  for (int i = 0; i < n; ++i) ++counts[rng.categorical(probs)];
  for (int k = 0; k < 3; ++k) {
    CHECK(std::abs(static_cast<double>(counts[k]) / n - probs[k]) < 0.01);
  }
}

TEST_CASE("categorical degenerate distribution always picks its atom") {
  RngStream rng(3);
  std::vector<double> probs = {0.0, 1.0, 0.0};
  for (int i = 0; i < 100; ++i) CHECK(rng.categorical(probs) == 1);
}
