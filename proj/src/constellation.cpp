#include "gcs/constellation.hpp"

#include <cmath>

#include "gcs/errors.hpp"

namespace gcs {

Constellation Constellation::normalized(ComplexVec points) {
  double power = 0.0;
  for (const cd& p : points) power += std::norm(p);
  if (points.empty() || power == 0.0)
    throw DegenerateConstellation("constellation has no energy; normalization undefined");
  power /= static_cast<double>(points.size());
  const double scale = 1.0 / std::sqrt(power);
  for (cd& p : points) p *= scale;
  return Constellation(std::move(points));
}

double Constellation::mean_power() const {
  if (points_.empty()) return 0.0;
  double power = 0.0;
  for (const cd& p : points_) power += std::norm(p);
  return power / static_cast<double>(points_.size());
}

ComplexVec Constellation::map(std::span<const int> indices) const {
  ComplexVec out;
  out.reserve(indices.size());
  for (int i : indices) out.push_back(points_.at(static_cast<std::size_t>(i)));
  return out;
}

Constellation square_qam(int M) {
  const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(M))));
  if (M < 4 || side * side != M || (side & (side - 1)) != 0)
    throw InputError("square QAM needs M = 4^k, got " + std::to_string(M));
  ComplexVec pts;
  pts.reserve(static_cast<std::size_t>(M));
  for (int i = 0; i < side; ++i)
    for (int q = 0; q < side; ++q) pts.emplace_back(2.0 * i - (side - 1), 2.0 * q - (side - 1));
  return Constellation::normalized(std::move(pts));
}

}  // namespace gcs
