#include "sybilsim/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "sybilsim/errors.hpp"

namespace sybilsim {

namespace {

void require_same_size(const ParamVector& a, const ParamVector& b, const char* op) {
  if (a.size() != b.size()) {
    throw DimensionError(std::string(op) + ": length mismatch (" + std::to_string(a.size()) +
                         " vs " + std::to_string(b.size()) + ")");
  }
}

}  // namespace

bool ParamVector::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

bool ParamVector::bitwise_equal(const ParamVector& other) const noexcept {
  return values_.size() == other.values_.size() &&
         (values_.empty() ||
          std::memcmp(values_.data(), other.values_.data(), values_.size() * sizeof(double)) == 0);
}

double dot(const ParamVector& a, const ParamVector& b) {
  require_same_size(a, b, "dot");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

double l2_norm(const ParamVector& a) {
  double sum = 0.0;
  for (double v : a) sum += v * v;
  return std::sqrt(sum);
}

double cosine_distance(const ParamVector& a, const ParamVector& b) {
  require_same_size(a, b, "cosine_distance");
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) return 1.0;
  // a[i]*b[i] and na*nb commute, so the result is symmetric bit-for-bit.
  const double cd = 1.0 - dot(a, b) / (na * nb);
  return std::clamp(cd, 0.0, 2.0);
}

ParamVector elementwise_median(std::span<const ParamVector> vectors) {
  if (vectors.empty()) throw PreconditionError("elementwise_median: empty list");
  const std::size_t d = vectors.front().size();
  for (const auto& v : vectors) require_same_size(vectors.front(), v, "elementwise_median");
  const std::size_t n = vectors.size();
  if (n == 1) return vectors.front();

  ParamVector out(d);
  std::vector<double> column(n);
  const std::size_t mid = n / 2;
  for (std::size_t c = 0; c < d; ++c) {
    for (std::size_t k = 0; k < n; ++k) column[k] = vectors[k][c];
    std::nth_element(column.begin(), column.begin() + static_cast<std::ptrdiff_t>(mid),
                     column.end());
    const double upper = column[mid];
    if (n % 2 == 1) {
      out[c] = upper;
    } else {
      const double lower =
          *std::max_element(column.begin(), column.begin() + static_cast<std::ptrdiff_t>(mid));
      out[c] = lower == upper ? upper : 0.5 * (lower + upper);
    }
  }
  return out;
}

double squared_euclidean(const ParamVector& a, const ParamVector& b) {
  require_same_size(a, b, "squared_euclidean");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    sum += diff * diff;
  }
  return sum;
}

ParamVector accumulate(const ParamVector& history, const ParamVector& update) {
  ParamVector out = history;
  accumulate_into(out, update);
  return out;
}

void accumulate_into(ParamVector& history, const ParamVector& update) {
  require_same_size(history, update, "accumulate");
  for (std::size_t i = 0; i < history.size(); ++i) history[i] += update[i];
}

void axpy(double scale, const ParamVector& b, ParamVector& a) {
  require_same_size(a, b, "axpy");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += scale * b[i];
}

}  // namespace sybilsim
