#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>

#include "metaroute/errors.hpp"

namespace metaroute {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Numerically stable softmax. Entries equal to -inf are treated as excluded
/// (probability exactly 0) and do not participate in the max or the sum, so a
/// masked distribution restricted to its finite entries is bit-identical to the
/// softmax of those entries alone.
template <typename Derived>
Vector softmax(const Eigen::MatrixBase<Derived>& logits) {
  Vector x = logits;
  const Eigen::Index n = x.size();
  double mx = kNegInf;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::isnan(x[i])) throw Error("softmax: non-finite logit");
    if (x[i] > mx) mx = x[i];
  }
  if (mx == kNegInf) throw Error("softmax: all logits excluded");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    x[i] = (x[i] == kNegInf) ? 0.0 : std::exp(x[i] - mx);
    sum += x[i];
  }
  for (Eigen::Index i = 0; i < n; ++i) x[i] /= sum;
  return x;
}

/// log(sum(exp(v))) over finite entries, max-shifted.
template <typename Derived>
double log_sum_exp(const Eigen::MatrixBase<Derived>& v) {
  double mx = kNegInf;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (v[i] > mx) mx = v[i];
  }
  if (mx == kNegInf) throw Error("log_sum_exp: all entries excluded");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (v[i] != kNegInf) sum += std::exp(v[i] - mx);
  }
  return mx + std::log(sum);
}

/// Index of the maximum entry; ties resolve to the lowest index.
template <typename Derived>
Eigen::Index argmax_lowest_tie(const Eigen::MatrixBase<Derived>& v) {
  if (v.size() == 0) throw Error("argmax of empty vector");
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

/// Per-row layer normalization (no learned scale/shift).
template <typename Derived>
RowVector layer_norm_row(const Eigen::MatrixBase<Derived>& row, double eps = 1e-5) {
  const Eigen::Index n = row.size();
  double mean = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) mean += row[i];
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = row[i] - mean;
    var += d * d;
  }
  var /= static_cast<double>(n);
  const double denom = 1.0 / std::sqrt(var + eps);
  RowVector out(n);
  for (Eigen::Index i = 0; i < n; ++i) out[i] = (row[i] - mean) * denom;
  return out;
}

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      if (!std::isfinite(m(r, c))) return false;
    }
  }
  return true;
}

inline constexpr std::uint64_t kFnvOffsetBasis = 1469598103934665603ull;
inline constexpr std::uint64_t kFnvPrime = 1099511628211ull;

inline std::uint64_t fnv1a_bytes(const void* data, std::size_t n,
                                 std::uint64_t h = kFnvOffsetBasis) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= kFnvPrime;
  }
  return h;
}

/// Bit-exact checksum of a matrix: dimensions then entries in row-major order.
inline std::uint64_t checksum(const Matrix& m, std::uint64_t h = kFnvOffsetBasis) {
  const std::int64_t dims[2] = {m.rows(), m.cols()};
  h = fnv1a_bytes(dims, sizeof(dims), h);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const double v = m(r, c);
      h = fnv1a_bytes(&v, sizeof(v), h);
    }
  }
  return h;
}

}  // namespace metaroute
