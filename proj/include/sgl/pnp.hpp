#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sgl/geometry.hpp"

namespace sgl {

// A refined 2D keypoint with its predicted 3D scene coordinate.
struct Correspondence {
  Vec2 pixel = Vec2::Zero();   // pixels
  Vec3 world = Vec3::Zero();   // metres, global frame
  double confidence = 0.0;     // [0, 1)
};

struct RansacConfig {
  double inlier_threshold_px = 10.0;
  int max_iterations = 1000;
  double confidence = 0.999;  // probability of sampling one all-inlier subset
  int min_inliers = 6;
  std::uint64_t rng_seed = 0;
};

struct PoseEstimate {
  Pose pose;
  std::vector<std::uint8_t> inlier_mask;  // aligned with the input correspondences
  double mean_inlier_residual_px = 0.0;
};

struct RefineResult {
  Pose pose;
  bool converged = false;
  int iterations = 0;
  double initial_cost = 0.0;  // sum of squared reprojection residuals
  double final_cost = 0.0;
};

// Direct linear transform over >= 6 correspondences on K-normalized image
// coordinates, with the rotation projected back onto SO(3). Coplanar scenes
// take a homography decomposition path. Throws DegenerateConfiguration for
// rank-deficient inputs (coincident or collinear world points).
Pose solve_pnp_direct(std::span<const Correspondence> corrs, const Intrinsics& k);

// Hypothesize-and-verify loop over minimal 6-point subsets, scored by inlier
// count under cfg.inlier_threshold_px, followed by a DLT refit and
// Gauss-Newton refinement on the winning inlier set. Deterministic for a
// fixed cfg.rng_seed. Throws InsufficientInliers when no hypothesis reaches
// cfg.min_inliers.
PoseEstimate ransac_pnp(std::span<const Correspondence> corrs, const Intrinsics& k,
                        const RansacConfig& cfg);

// Damped Gauss-Newton minimization of the summed squared reprojection
// residuals. Never returns a pose with higher cost than the initial one; the
// converged flag is false when the iteration cap is hit first.
RefineResult refine_pose(const Pose& initial, std::span<const Correspondence> inliers,
                         const Intrinsics& k);

}  // namespace sgl
