#include <cmath>
#include <random>

#include "doctest.h"
#include "impec/oracle.hpp"

using namespace impec;

TEST_CASE("luce probability closed form") {
  CHECK(luce_probability(2.0, 1.0, 1.0) == doctest::Approx(std::exp(1.0) / (std::exp(1.0) + 1.0)).epsilon(1e-14));
  CHECK(luce_probability(2.0, 1.0, 1.0) == doctest::Approx(0.7310585786300049).epsilon(1e-14));
  for (double r : {-3.0, 0.0, 12.5})
    for (double beta : {0.1, 1.0, 50.0}) CHECK(luce_probability(r, r, beta) == 0.5);
}

TEST_CASE("luce probability does not overflow") {
  const double p = luce_probability(100.0, 0.0, 1.0);
  CHECK(std::isfinite(p));
  CHECK(p == doctest::Approx(1.0).epsilon(1e-40));
  CHECK(luce_probability(0.0, 1e6, 5.0) == 0.0);
  CHECK(std::isfinite(luce_probability(1e300, -1e300, 1.0)));
}

TEST_CASE("luce probability deterministic limit") {
  CHECK(luce_probability(2.0, 1.0, INFINITY) == 1.0);
  CHECK(luce_probability(1.0, 2.0, INFINITY) == 0.0);
  CHECK(luce_probability(1.0, 1.0, INFINITY) == 0.5);
}

TEST_CASE("luce probability is complementary and monotone") {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> r(-40.0, 40.0), b(0.01, 10.0);
  for (int i = 0; i < 2000; ++i) {
    const double x = r(gen), y = r(gen), beta = b(gen);
    CHECK(luce_probability(x, y, beta) + luce_probability(y, x, beta) == 1.0);
  }
  double prev = 0.0;
  for (double d = -8.0; d <= 8.0; d += 0.25) {
    const double p = luce_probability(d, 0.0, 1.0);
    CHECK(p > prev);
    prev = p;
  }
}

TEST_CASE("labels round trip and flip") {
  for (PreferenceLabel l : {PreferenceLabel::FirstPreferred, PreferenceLabel::SecondPreferred, PreferenceLabel::Equal}) {
    CHECK(parse_preference_label(to_string(l)) == l);
    CHECK(flip(flip(l)) == l);
  }
  CHECK(flip(PreferenceLabel::FirstPreferred) == PreferenceLabel::SecondPreferred);
  CHECK(flip(PreferenceLabel::Equal) == PreferenceLabel::Equal);
  CHECK_THROWS(parse_preference_label("maybe"));
}

TEST_CASE("equal returns are always Equal") {
  Oracle o(OracleConfig{1.0, 0.0}, 4);
  for (int i = 0; i < 200; ++i) CHECK(o.compare(3.0, 3.0) == PreferenceLabel::Equal);
  Oracle banded(OracleConfig{1.0, 0.5}, 4);
  CHECK(banded.compare(3.0, 3.4) == PreferenceLabel::Equal);
  CHECK(banded.compare(3.4, 3.0) == PreferenceLabel::Equal);
  CHECK(banded.compare(3.0, 3.6) != PreferenceLabel::Equal);
}

TEST_CASE("deterministic oracle follows the larger return") {
  Oracle o(OracleConfig{INFINITY, 0.0}, 0);
  CHECK(o.deterministic());
  CHECK(o.compare(2.0, 1.0) == PreferenceLabel::FirstPreferred);
  CHECK(o.compare(1.0, 2.0) == PreferenceLabel::SecondPreferred);
  CHECK(o.compare(1.0, 1.0) == PreferenceLabel::Equal);
  CHECK_FALSE(Oracle(OracleConfig{5.0, 0.0}).deterministic());
}

TEST_CASE("noisy oracle frequency matches the choice rule") {
  Oracle o(OracleConfig{1.0, 0.0}, 12);
  int first = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) first += o.compare(1.0, 0.0) == PreferenceLabel::FirstPreferred ? 1 : 0;
  const double f = first / static_cast<double>(n);
  CHECK(f >= 0.72);
  CHECK(f <= 0.75);
}

TEST_CASE("every compare counts once") {
  Oracle o(OracleConfig{}, 1);
  CHECK(o.query_count() == 0);
  o.compare(1.0, 1.0);
  o.compare(5.0, 1.0);
  o.compare(1.0, 5.0);
  CHECK(o.query_count() == 3);
}

TEST_CASE("same seed gives the same label stream") {
  Oracle a(OracleConfig{0.5, 0.0}, 99), b(OracleConfig{0.5, 0.0}, 99);
  for (int i = 0; i < 500; ++i) CHECK(a.compare(i % 7, 3.0) == b.compare(i % 7, 3.0));
}
