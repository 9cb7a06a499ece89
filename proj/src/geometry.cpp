#include "sgl/geometry.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/SVD>

namespace sgl {

bool is_rotation(const Mat3& m, double tol) {
  if (!m.allFinite()) return false;
  const Mat3 gram = m.transpose() * m;
  if (((gram - Mat3::Identity()).array().abs() > tol).any()) return false;
  return std::abs(m.determinant() - 1.0) <= tol;
}

Mat3 skew(const Vec3& w) {
  Mat3 k;
  k << 0.0, -w.z(), w.y(), w.z(), 0.0, -w.x(), -w.y(), w.x(), 0.0;
  return k;
}

Mat3 project_to_rotation(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0) {
    Mat3 flip = Mat3::Identity();
    flip(2, 2) = -1.0;
    r = svd.matrixU() * flip * svd.matrixV().transpose();
  }
  return r;
}

Mat3 exp_so3(const Vec3& w) {
  const double theta2 = w.squaredNorm();
  const double theta = std::sqrt(theta2);
  Mat3 k;
  k << 0.0, -w.z(), w.y(), w.z(), 0.0, -w.x(), -w.y(), w.x(), 0.0;
  if (theta < 1e-9) return Mat3::Identity() + k + 0.5 * k * k;
  return Mat3::Identity() + k * (std::sin(theta) / theta) +
         k * k * ((1.0 - std::cos(theta)) / theta2);
}

Vec3 log_so3(const Mat3& r) {
  const double cos_theta = std::clamp(0.5 * (r.trace() - 1.0), -1.0, 1.0);
  const double theta = std::acos(cos_theta);
  Vec3 w(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  if (theta < 1e-9) return 0.5 * w;
  if (theta > M_PI - 1e-6) {
    // Near pi the antisymmetric part vanishes; recover the axis from R + I.
    const Mat3 s = 0.5 * (r + Mat3::Identity());
    Vec3 axis(std::sqrt(std::max(0.0, s(0, 0))), std::sqrt(std::max(0.0, s(1, 1))),
              std::sqrt(std::max(0.0, s(2, 2))));
    int k = 0;
    axis.cwiseAbs().maxCoeff(&k);
    if (std::abs(axis[k]) > 0) {
      for (int i = 0; i < 3; ++i)
        if (i != k) axis[i] = s(k, i) / axis[k] * (axis[i] < 0 ? -1.0 : 1.0);
    }
    if (w.dot(axis) < 0) axis = -axis;
    return theta * axis.normalized();
  }
  return w * (0.5 * theta / std::sin(theta));
}

Vec2 project(const Intrinsics& k, const Pose& pose, const Vec3& y) {
  const Vec3 q = pose.R * y + pose.t;
  if (q.z() <= kMinDepth) throw PointBehindCamera("point has non-positive camera depth");
  return {k.fx * q.x() / q.z() + k.cx, k.fy * q.y() / q.z() + k.cy};
}

double angle_error(const Mat3& r_gt, const Mat3& r_est) {
  const double c = std::clamp(((r_gt.transpose() * r_est).trace() - 1.0) * 0.5, -1.0, 1.0);
  return std::acos(c) / M_PI;
}

double translation_error(const Vec3& t_gt, const Vec3& t_est) { return (t_gt - t_est).norm(); }

double reprojection_residual(const Vec2& p, const Intrinsics& k, const Pose& pose, const Vec3& y) {
  return (p - project(k, pose, y)).norm();
}

Pose invert_pose(const Pose& pose) {
  Pose inv;
  inv.R = pose.R.transpose();
  inv.t = -(pose.R.transpose() * pose.t);
  return inv;
}

Pose compose(const Pose& a, const Pose& b) {
  Pose out;
  out.R = a.R * b.R;
  out.t = a.R * b.t + a.t;
  return out;
}

}  // namespace sgl
