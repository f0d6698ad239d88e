#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace sybilsim {

// A point or displacement in model-parameter space. All vectors exchanged
// within one experiment share the same length.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(std::size_t size, double fill = 0.0) : values_(size, fill) {}
  explicit ParamVector(std::vector<double> values) : values_(std::move(values)) {}
  ParamVector(std::initializer_list<double> values) : values_(values) {}

  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& operator[](std::size_t i) noexcept { return values_[i]; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }

  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }

  std::span<double> span() noexcept { return values_; }
  std::span<const double> span() const noexcept { return values_; }

  const std::vector<double>& values() const noexcept { return values_; }

  auto begin() noexcept { return values_.begin(); }
  auto end() noexcept { return values_.end(); }
  auto begin() const noexcept { return values_.begin(); }
  auto end() const noexcept { return values_.end(); }

  bool all_finite() const noexcept;

  // Bitwise comparison of the underlying doubles (distinguishes -0.0 and 0.0).
  bool bitwise_equal(const ParamVector& other) const noexcept;

  friend bool operator==(const ParamVector&, const ParamVector&) = default;

 private:
  std::vector<double> values_;
};

double dot(const ParamVector& a, const ParamVector& b);
double l2_norm(const ParamVector& a);

// 1 - a.b / (|a| |b|), clamped to [0, 2]. A zero-norm operand yields exactly
// 1.0 so that an empty update never looks similar to anything.
double cosine_distance(const ParamVector& a, const ParamVector& b);

// Per-component median. Even-sized inputs take the midpoint of the two middle
// order statistics.
ParamVector elementwise_median(std::span<const ParamVector> vectors);

double squared_euclidean(const ParamVector& a, const ParamVector& b);

// history + update, component-wise.
ParamVector accumulate(const ParamVector& history, const ParamVector& update);
void accumulate_into(ParamVector& history, const ParamVector& update);

// a += scale * b
void axpy(double scale, const ParamVector& b, ParamVector& a);

}  // namespace sybilsim
