#pragma once

#include <random>

#include "sgl/geometry.hpp"

namespace sgl::testing {

inline Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::Quaterniond q(gauss(rng), gauss(rng), gauss(rng), gauss(rng));
  while (q.norm() < 1e-6) q = {gauss(rng), gauss(rng), gauss(rng), gauss(rng)};
  q.normalize();
  return q.toRotationMatrix();
}

inline Vec3 random_unit_axis(std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec3 axis(gauss(rng), gauss(rng), gauss(rng));
  while (axis.norm() < 1e-6) axis = {gauss(rng), gauss(rng), gauss(rng)};
  return axis.normalized();
}

// Independent projection route: full 3x4 homogeneous matrix P = K [R|t],
// multiplied against (x, y, z, 1), then dehomogenized. Kept deliberately
// separate from sgl::project.
inline Vec2 homogeneous_projection_oracle(const Intrinsics& k, const Pose& pose, const Vec3& y) {
  Eigen::Matrix<double, 3, 4> rt;
  rt.leftCols<3>() = pose.R;
  rt.rightCols<1>() = pose.t;
  const Eigen::Matrix<double, 3, 4> p = k.matrix() * rt;
  Eigen::Vector4d yh;
  yh << y.x(), y.y(), y.z(), 1.0;
  const Vec3 uvw = p * yh;
  return {uvw.x() / uvw.z(), uvw.y() / uvw.z()};
}

}  // namespace sgl::testing
