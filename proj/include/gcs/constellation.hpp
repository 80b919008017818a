#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gcs/types.hpp"

namespace gcs {

/// M complex points carried with uniform prior 1/M.
///
/// Constructing from raw points keeps them as given; use `normalized` to get
/// the unit-average-power version.
class Constellation {
 public:
  Constellation() = default;
  explicit Constellation(ComplexVec points) : points_(std::move(points)) {}

  /// Scale all points by one common factor so that the mean |x|^2 is 1.
  /// Throws DegenerateConstellation if every point is zero.
  static Constellation normalized(ComplexVec points);

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const cd& operator[](std::size_t i) const { return points_[i]; }
  std::span<const cd> points() const { return points_; }

  double mean_power() const;

  /// Symbol sequence for a list of indices.
  ComplexVec map(std::span<const int> indices) const;

  bool operator==(const Constellation&) const = default;

 private:
  ComplexVec points_;
};

/// Square QAM with unit average power. M must be a power of 4.
/// Index i maps to column i / sqrt(M), row i % sqrt(M).
Constellation square_qam(int M);

}  // namespace gcs
