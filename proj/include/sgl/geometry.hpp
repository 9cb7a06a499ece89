#pragma once

#include <Eigen/Dense>

#include "sgl/errors.hpp"

namespace sgl {

using Mat3 = Eigen::Matrix3d;
using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

// Minimum camera-frame depth for a point to count as in front of the camera.
inline constexpr double kMinDepth = 1e-6;

// World-to-camera rigid transform: x_cam = R * x_world + t.
struct Pose {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  // Camera position in world coordinates: -R^T t.
  Vec3 center() const { return -(R.transpose() * t); }
};

// Pinhole intrinsics, zero skew.
struct Intrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;

  Mat3 matrix() const {
    Mat3 k = Mat3::Zero();
    k(0, 0) = fx;
    k(1, 1) = fy;
    k(0, 2) = cx;
    k(1, 2) = cy;
    k(2, 2) = 1.0;
    return k;
  }

  // Intrinsics of an axis-aligned crop whose top-left pixel is (ox, oy).
  Intrinsics cropped(double ox, double oy) const { return {fx, fy, cx - ox, cy - oy}; }
};

// Orthonormality + det(+1) check.
bool is_rotation(const Mat3& m, double tol = 1e-9);

// Cross-product matrix: skew(w) * v = w x v.
Mat3 skew(const Vec3& w);

// Nearest rotation matrix in the Frobenius sense (SVD projection onto SO(3)).
Mat3 project_to_rotation(const Mat3& m);

// Rodrigues exponential map so(3) -> SO(3).
Mat3 exp_so3(const Vec3& w);

// Logarithm map SO(3) -> so(3).
Vec3 log_so3(const Mat3& r);

// Perspective projection of a world point. Throws PointBehindCamera when the
// camera-frame depth is <= kMinDepth.
Vec2 project(const Intrinsics& k, const Pose& pose, const Vec3& y);

// Geodesic rotation distance scaled to [0, 1]: arccos(clamp((tr(Rgt^T R)-1)/2)) / pi.
double angle_error(const Mat3& r_gt, const Mat3& r_est);

// Euclidean distance between translation vectors.
double translation_error(const Vec3& t_gt, const Vec3& t_est);

// || p - project(k, pose, y) ||. Propagates PointBehindCamera.
double reprojection_residual(const Vec2& p, const Intrinsics& k, const Pose& pose, const Vec3& y);

// (R^T, -R^T t): swaps the world-to-camera and camera-to-world conventions.
Pose invert_pose(const Pose& pose);

// Composition: (a * b)(x) = a(b(x)).
Pose compose(const Pose& a, const Pose& b);

}  // namespace sgl
