#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "cso/rng.hpp"

using cso::Rng;

TEST_CASE("derive_seed is deterministic and label-sensitive") {
  CHECK(cso::derive_seed(42, "a") == cso::derive_seed(42, "a"));
  CHECK(cso::derive_seed(42, "a") != cso::derive_seed(42, "b"));
  CHECK(cso::derive_seed(42, "a") != cso::derive_seed(43, "a"));
  CHECK_THROWS(cso::derive_seed(42, ""));
}

TEST_CASE("derive_seed 10^4 labels collision scan") {
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 10000; ++i) {
    seen.insert(cso::derive_seed(7, "label/" + std::to_string(i)));
  }
  CHECK(seen.size() == 10000);
}

TEST_CASE("derive_seed low bits pass a chi-square smoke test") {
  // 16 buckets over the low 4 bits of 10^4 derived seeds
  std::vector<int> counts(16, 0);
  for (int i = 0; i < 10000; ++i) {
    ++counts[cso::derive_seed(99, "s/" + std::to_string(i)) & 0xF];
  }
  double chi2 = 0.0;
  const double expect = 10000.0 / 16.0;
  for (int c : counts) chi2 += (c - expect) * (c - expect) / expect;
  // 15 dof, 0.999 quantile ~ 37.7
  CHECK(chi2 < 37.7);
}

TEST_CASE("uniform stays in [0,1) and matches moments") {
  Rng rng(1);
  double sum = 0.0, sum2 = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
    sum2 += u * u;
  }
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
  CHECK(sum2 / n == doctest::Approx(1.0 / 3.0).epsilon(0.01));
}

TEST_CASE("normal moments") {
  Rng rng(2);
  double sum = 0.0, sum2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sum2 += x * x;
  }
  CHECK(std::fabs(sum / n) < 0.01);
  CHECK(sum2 / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("poisson moments across the small/large switch") {
  for (double mean : {0.5, 5.0, 25.0, 40.0, 1000.0}) {
    Rng rng(3);
    double sum = 0.0, sum2 = 0.0;
    const int n = 50000;
    for (int i = 0; i < n; ++i) {
      const double k = static_cast<double>(rng.poisson(mean));
      sum += k;
      sum2 += k * k;
    }
    const double m = sum / n;
    const double var = sum2 / n - m * m;
    CHECK(m == doctest::Approx(mean).epsilon(0.03));
    CHECK(var == doctest::Approx(mean).epsilon(0.05));
  }
}

TEST_CASE("poisson of zero mean is zero") {
  Rng rng(4);
  for (int i = 0; i < 100; ++i) CHECK(rng.poisson(0.0) == 0);
}

TEST_CASE("same seed reproduces the stream") {
  Rng a(77), b(77);
  for (int i = 0; i < 1000; ++i) CHECK(a.uniform() == b.uniform());
}

TEST_CASE("permutation is a permutation") {
  Rng rng(5);
  const auto p = rng.permutation(100);
  std::set<std::size_t> s(p.begin(), p.end());
  CHECK(s.size() == 100);
  CHECK(*s.begin() == 0);
  CHECK(*s.rbegin() == 99);
}
