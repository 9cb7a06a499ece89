#include "sgl/pnp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Dense>
#include <Eigen/SVD>

namespace sgl {

namespace {

// Residual of one correspondence, +inf when the point falls behind the camera.
double residual_or_inf(const Correspondence& c, const Intrinsics& k, const Pose& pose) {
  const Vec3 q = pose.R * c.world + pose.t;
  if (q.z() <= kMinDepth) return std::numeric_limits<double>::infinity();
  const Vec2 proj(k.fx * q.x() / q.z() + k.cx, k.fy * q.y() / q.z() + k.cy);
  return (c.pixel - proj).norm();
}

struct PointStats {
  Vec3 centroid;
  Mat3 axes;        // eigenvectors of the scatter matrix, descending eigenvalue
  Vec3 eigenvalues; // descending
};

PointStats scatter_stats(std::span<const Correspondence> corrs) {
  PointStats s;
  s.centroid = Vec3::Zero();
  for (const auto& c : corrs) s.centroid += c.world;
  s.centroid /= double(corrs.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& c : corrs) {
    const Vec3 d = c.world - s.centroid;
    cov += d * d.transpose();
  }
  cov /= double(corrs.size());
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  // SelfAdjointEigenSolver sorts ascending; flip to descending.
  for (int i = 0; i < 3; ++i) {
    s.eigenvalues[i] = eig.eigenvalues()[2 - i];
    s.axes.col(i) = eig.eigenvectors().col(2 - i);
  }
  if (s.axes.determinant() < 0) s.axes.col(2) = -s.axes.col(2);
  return s;
}

// General (non-planar) DLT for the 3x4 projection matrix in K-normalized
// image coordinates, Hartley-normalized world points.
Pose solve_dlt_general(std::span<const Correspondence> corrs, const Intrinsics& k,
                       const PointStats& stats) {
  const int n = int(corrs.size());
  double mean_dist = 0.0;
  for (const auto& c : corrs) mean_dist += (c.world - stats.centroid).norm();
  mean_dist /= n;
  const double scale = std::sqrt(3.0) / std::max(mean_dist, 1e-12);

  Eigen::MatrixXd a(2 * n, 12);
  for (int i = 0; i < n; ++i) {
    const Vec3 xw = (corrs[i].world - stats.centroid) * scale;
    const double u = (corrs[i].pixel.x() - k.cx) / k.fx;
    const double v = (corrs[i].pixel.y() - k.cy) / k.fy;
    a.row(2 * i) << xw.x(), xw.y(), xw.z(), 1, 0, 0, 0, 0, -u * xw.x(), -u * xw.y(), -u * xw.z(),
        -u;
    a.row(2 * i + 1) << 0, 0, 0, 0, xw.x(), xw.y(), xw.z(), 1, -v * xw.x(), -v * xw.y(),
        -v * xw.z(), -v;
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv[0] <= 0 || sv[10] / sv[0] < 1e-9)
    throw DegenerateConfiguration("DLT design matrix is rank-deficient");

  Eigen::Matrix<double, 3, 4> p;
  const Eigen::VectorXd sol = svd.matrixV().col(11);
  p << sol[0], sol[1], sol[2], sol[3], sol[4], sol[5], sol[6], sol[7], sol[8], sol[9], sol[10],
      sol[11];

  // Undo the world normalization: X' = scale * (X - centroid).
  Eigen::Matrix4d t_norm = Eigen::Matrix4d::Identity();
  t_norm.topLeftCorner<3, 3>() *= scale;
  t_norm.topRightCorner<3, 1>() = -scale * stats.centroid;
  p = p * t_norm;

  Mat3 m = p.leftCols<3>();
  if (m.determinant() < 0) p = -p;
  m = p.leftCols<3>();

  Eigen::JacobiSVD<Mat3> msvd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const double s = msvd.singularValues().mean();
  if (s < 1e-12) throw DegenerateConfiguration("projection matrix has vanishing scale");

  Pose pose;
  pose.R = project_to_rotation(m);
  pose.t = p.rightCols<1>() / s;
  return pose;
}

// Planar scenes: homography from in-plane coordinates to K-normalized image
// coordinates, decomposed into [r1 r2 t].
Pose solve_planar(std::span<const Correspondence> corrs, const Intrinsics& k,
                  const PointStats& stats) {
  const int n = int(corrs.size());

  // Plane coordinates and their Hartley normalization.
  std::vector<Vec2> plane(n), img(n);
  Vec2 pc = Vec2::Zero(), ic = Vec2::Zero();
  for (int i = 0; i < n; ++i) {
    const Vec3 d = corrs[i].world - stats.centroid;
    plane[i] = {stats.axes.col(0).dot(d), stats.axes.col(1).dot(d)};
    img[i] = {(corrs[i].pixel.x() - k.cx) / k.fx, (corrs[i].pixel.y() - k.cy) / k.fy};
    pc += plane[i];
    ic += img[i];
  }
  pc /= n;
  ic /= n;
  double ps = 0, is = 0;
  for (int i = 0; i < n; ++i) {
    ps += (plane[i] - pc).norm();
    is += (img[i] - ic).norm();
  }
  ps = std::sqrt(2.0) / std::max(ps / n, 1e-12);
  is = std::sqrt(2.0) / std::max(is / n, 1e-12);

  Eigen::MatrixXd a(2 * n, 9);
  for (int i = 0; i < n; ++i) {
    const Vec2 q = (plane[i] - pc) * ps;
    const Vec2 x = (img[i] - ic) * is;
    a.row(2 * i) << q.x(), q.y(), 1, 0, 0, 0, -x.x() * q.x(), -x.x() * q.y(), -x.x();
    a.row(2 * i + 1) << 0, 0, 0, q.x(), q.y(), 1, -x.y() * q.x(), -x.y() * q.y(), -x.y();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv[0] <= 0 || sv[7] / sv[0] < 1e-9)
    throw DegenerateConfiguration("homography design matrix is rank-deficient");

  const Eigen::VectorXd sol = svd.matrixV().col(8);
  Mat3 hn;
  hn << sol[0], sol[1], sol[2], sol[3], sol[4], sol[5], sol[6], sol[7], sol[8];

  // Undo both normalizations: x_img ~ Ti^-1 * Hn * Tp.
  Mat3 tp = Mat3::Identity(), ti_inv = Mat3::Identity();
  tp(0, 0) = tp(1, 1) = ps;
  tp.col(2) << -ps * pc.x(), -ps * pc.y(), 1.0;
  ti_inv(0, 0) = ti_inv(1, 1) = 1.0 / is;
  ti_inv.col(2) << ic.x(), ic.y(), 1.0;
  Mat3 h = ti_inv * hn * tp;

  const double lambda = 2.0 / (h.col(0).norm() + h.col(1).norm());
  if (!std::isfinite(lambda) || lambda <= 0)
    throw DegenerateConfiguration("homography has vanishing scale");
  h *= lambda;

  // Resolve the sign so points land in front of the camera: depth of the
  // centroid is h3.z (centroid maps to plane origin).
  if (h(2, 2) < 0) h = -h;

  Mat3 rp;
  rp.col(0) = h.col(0);
  rp.col(1) = h.col(1);
  rp.col(2) = h.col(0).cross(h.col(1));
  const Mat3 r0 = project_to_rotation(rp);

  Pose pose;
  pose.R = r0 * stats.axes.transpose();
  pose.t = h.col(2) - pose.R * stats.centroid;
  return pose;
}

int adaptive_iteration_cap(double inlier_ratio, int sample_size, double confidence,
                           int max_iterations) {
  const double w = std::clamp(inlier_ratio, 0.0, 1.0);
  const double p_all = std::pow(w, sample_size);
  if (p_all >= 1.0 - 1e-12) return 1;
  if (p_all <= 1e-12) return max_iterations;
  const double n = std::log(1.0 - confidence) / std::log(1.0 - p_all);
  if (!std::isfinite(n) || n >= double(max_iterations)) return max_iterations;
  return std::max(1, int(std::ceil(n)));
}

}  // namespace

Pose solve_pnp_direct(std::span<const Correspondence> corrs, const Intrinsics& k) {
  if (corrs.size() < 6)
    throw DegenerateConfiguration("solve_pnp_direct needs at least 6 correspondences");

  const PointStats stats = scatter_stats(corrs);
  const double lead = std::max(stats.eigenvalues[0], 1e-300);
  if (stats.eigenvalues[0] < 1e-18)
    throw DegenerateConfiguration("world points are coincident");
  if (stats.eigenvalues[1] / lead < 1e-12)
    throw DegenerateConfiguration("world points are collinear");
  if (stats.eigenvalues[2] / lead < 1e-10) return solve_planar(corrs, k, stats);
  return solve_dlt_general(corrs, k, stats);
}

RefineResult refine_pose(const Pose& initial, std::span<const Correspondence> inliers,
                         const Intrinsics& k) {
  constexpr int kMaxIterations = 50;
  constexpr int kMaxBacktracks = 12;

  auto cost_of = [&](const Pose& pose) {
    double c = 0.0;
    for (const auto& corr : inliers) {
      const double r = residual_or_inf(corr, k, pose);
      if (!std::isfinite(r)) return std::numeric_limits<double>::infinity();
      c += r * r;
    }
    return c;
  };

  RefineResult out;
  out.pose = initial;
  out.initial_cost = cost_of(initial);
  out.final_cost = out.initial_cost;
  if (inliers.empty() || !std::isfinite(out.initial_cost)) return out;

  double cost = out.initial_cost;
  for (int it = 0; it < kMaxIterations; ++it) {
    out.iterations = it + 1;

    Eigen::Matrix<double, 6, 6> jtj = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> jtr = Eigen::Matrix<double, 6, 1>::Zero();
    for (const auto& corr : inliers) {
      const Vec3 q = out.pose.R * corr.world + out.pose.t;
      if (q.z() <= kMinDepth) continue;
      const double iz = 1.0 / q.z();
      const Vec2 proj(k.fx * q.x() * iz + k.cx, k.fy * q.y() * iz + k.cy);
      const Vec2 r = corr.pixel - proj;

      Eigen::Matrix<double, 2, 3> dpi;
      dpi << k.fx * iz, 0, -k.fx * q.x() * iz * iz, 0, k.fy * iz, -k.fy * q.y() * iz * iz;
      Eigen::Matrix<double, 3, 6> dq;
      dq.leftCols<3>() = -skew(q);
      dq.rightCols<3>() = Mat3::Identity();
      const Eigen::Matrix<double, 2, 6> j = dpi * dq;

      jtj += j.transpose() * j;
      jtr += j.transpose() * r;
    }

    const Eigen::Matrix<double, 6, 1> delta = jtj.ldlt().solve(jtr);
    if (!delta.allFinite()) break;

    // Backtracking line search on the left-multiplicative update.
    double step = 1.0;
    double improvement = -1.0;
    for (int bt = 0; bt < kMaxBacktracks; ++bt, step *= 0.5) {
      Pose trial;
      const Mat3 dr = exp_so3(step * delta.head<3>());
      trial.R = dr * out.pose.R;
      trial.t = dr * out.pose.t + step * delta.tail<3>();
      const double trial_cost = cost_of(trial);
      if (trial_cost < cost) {
        out.pose = trial;
        improvement = cost - trial_cost;
        cost = trial_cost;
        break;
      }
    }
    if (improvement < 0 || improvement <= 1e-14 * std::max(1.0, cost) ||
        delta.norm() < 1e-14) {
      out.converged = true;
      break;
    }
  }

  out.final_cost = cost;
  return out;
}

PoseEstimate ransac_pnp(std::span<const Correspondence> corrs, const Intrinsics& k,
                        const RansacConfig& cfg) {
  constexpr int kSampleSize = 6;
  const int n = int(corrs.size());
  const int min_inliers = std::max(cfg.min_inliers, 4);
  if (n < min_inliers || n < kSampleSize)
    throw InsufficientInliers("fewer correspondences than the minimum inlier count");

  std::mt19937_64 rng(cfg.rng_seed);
  std::uniform_int_distribution<int> pick(0, n - 1);

  auto score = [&](const Pose& pose, std::vector<std::uint8_t>& mask, double& mean_res) {
    int count = 0;
    double sum = 0.0;
    mask.assign(n, 0);
    for (int i = 0; i < n; ++i) {
      const double r = residual_or_inf(corrs[i], k, pose);
      if (r <= cfg.inlier_threshold_px) {
        mask[i] = 1;
        ++count;
        sum += r;
      }
    }
    mean_res = count > 0 ? sum / count : std::numeric_limits<double>::infinity();
    return count;
  };

  int best_count = 0;
  double best_mean = std::numeric_limits<double>::infinity();
  Pose best_pose;
  std::vector<std::uint8_t> best_mask, mask;
  int iteration_cap = cfg.max_iterations;

  std::array<int, kSampleSize> sample{};
  std::vector<Correspondence> subset(kSampleSize);
  for (int it = 0; it < iteration_cap; ++it) {
    for (int s = 0; s < kSampleSize; ++s) {
      bool fresh = true;
      do {
        sample[s] = pick(rng);
        fresh = true;
        for (int t = 0; t < s; ++t)
          if (sample[t] == sample[s]) fresh = false;
      } while (!fresh);
      subset[s] = corrs[sample[s]];
    }

    Pose hypothesis;
    try {
      hypothesis = solve_pnp_direct(subset, k);
    } catch (const DegenerateConfiguration&) {
      continue;
    }

    double mean_res = 0.0;
    const int count = score(hypothesis, mask, mean_res);
    if (count > best_count || (count == best_count && mean_res < best_mean)) {
      best_count = count;
      best_mean = mean_res;
      best_pose = hypothesis;
      best_mask = mask;
      iteration_cap = std::min(
          cfg.max_iterations,
          std::max(it + 1, adaptive_iteration_cap(double(count) / n, kSampleSize, cfg.confidence,
                                                  cfg.max_iterations)));
    }
  }

  if (best_count < min_inliers)
    throw InsufficientInliers("no hypothesis reached the minimum inlier count");

  // Refit on the winning inlier set, then polish with Gauss-Newton.
  std::vector<Correspondence> inliers;
  inliers.reserve(best_count);
  for (int i = 0; i < n; ++i)
    if (best_mask[i]) inliers.push_back(corrs[i]);

  Pose refit = best_pose;
  if (int(inliers.size()) >= kSampleSize) {
    try {
      refit = solve_pnp_direct(inliers, k);
    } catch (const DegenerateConfiguration&) {
      refit = best_pose;
    }
  }
  RefineResult gn = refine_pose(refit, inliers, k);
  const RefineResult gn_hypothesis = refine_pose(best_pose, inliers, k);
  // The full-set DLT refit occasionally lands in a worse basin than the
  // minimal-sample hypothesis; keep whichever polished pose fits better.
  if (gn_hypothesis.final_cost < gn.final_cost) gn = gn_hypothesis;

  PoseEstimate est;
  est.pose = gn.pose;
  double mean_res = 0.0;
  const int final_count = score(gn.pose, est.inlier_mask, mean_res);
  est.mean_inlier_residual_px = mean_res;
  if (final_count < min_inliers)
    throw InsufficientInliers("refined pose lost the minimum inlier support");
  return est;
}

}  // namespace sgl
