#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "metaroute/numeric.hpp"

using namespace metaroute;

TEST_CASE("softmax normalizes and handles ties") {
  Vector logits = Vector::Zero(5);
  const Vector p = softmax(logits);
  for (int i = 0; i < 5; ++i) CHECK(p[i] == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("softmax shift invariance stays below 1e-12") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> dist(0.0, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    Vector logits(17);
    for (int i = 0; i < logits.size(); ++i) logits[i] = dist(rng);
    const Vector p = softmax(logits);
    const Vector q = softmax((logits.array() + 123.456).matrix());
    CHECK((p - q).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("softmax excludes -inf entries exactly") {
  Vector logits(4);
  logits << 0.0, kNegInf, 1.0, kNegInf;
  const Vector p = softmax(logits);
  CHECK(p[1] == 0.0);
  CHECK(p[3] == 0.0);
  CHECK(p[0] + p[2] == doctest::Approx(1.0).epsilon(1e-12));

  Vector word_only(2);
  word_only << 0.0, 1.0;
  const Vector q = softmax(word_only);
  CHECK(p[0] == q[0]);
  CHECK(p[2] == q[1]);
}

TEST_CASE("softmax rejects all-excluded and NaN input") {
  Vector all_masked(2);
  all_masked << kNegInf, kNegInf;
  CHECK_THROWS_AS(softmax(all_masked), Error);
  Vector with_nan(2);
  with_nan << 0.0, std::nan("");
  CHECK_THROWS_AS(softmax(with_nan), Error);
}

TEST_CASE("argmax tie-break picks the lowest index") {
  Vector v(4);
  v << 1.0, 3.0, 3.0, 2.0;
  CHECK(argmax_lowest_tie(v) == 1);
  Vector u = Vector::Constant(6, 0.5);
  CHECK(argmax_lowest_tie(u) == 0);
}

TEST_CASE("argmax is shift invariant") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    Vector v(11);
    for (int i = 0; i < v.size(); ++i) v[i] = dist(rng);
    CHECK(argmax_lowest_tie(v) == argmax_lowest_tie((v.array() + 42.0).matrix()));
  }
}

TEST_CASE("log_sum_exp matches direct computation on small values") {
  Vector v(3);
  v << 0.0, std::log(2.0), std::log(3.0);
  CHECK(log_sum_exp(v) == doctest::Approx(std::log(6.0)).epsilon(1e-12));
}

TEST_CASE("checksum is stable and sensitive") {
  Matrix m = Matrix::Random(4, 3);
  CHECK(checksum(m) == checksum(m));
  Matrix n = m;
  n(2, 1) = std::nextafter(n(2, 1), 2.0);
  CHECK(checksum(m) != checksum(n));
  Matrix reshaped = m.transpose();
  CHECK(checksum(m) != checksum(reshaped));
}

TEST_CASE("layer norm row has zero mean and unit-ish variance") {
  RowVector row(4);
  row << 1.0, 2.0, 3.0, 4.0;
  const RowVector out = layer_norm_row(row);
  CHECK(out.sum() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(out.squaredNorm() / 4.0 == doctest::Approx(1.0).epsilon(1e-4));
}
