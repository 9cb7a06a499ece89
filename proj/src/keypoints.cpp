#include "sgl/keypoints.hpp"

#include <algorithm>
#include <cmath>

namespace sgl {

std::vector<double> patch_confidence(const ConfMap& conf) {
  std::vector<double> grid(std::size_t(conf.gh) * conf.gw, 0.0);
  for (int row = 0; row < conf.gh; ++row) {
    for (int col = 0; col < conf.gw; ++col) {
      float best = conf.at(0, row, col);
      for (int c = 1; c < ConfMap::kChannels; ++c) best = std::max(best, conf.at(c, row, col));
      grid[std::size_t(row) * conf.gw + col] = double(best);
    }
  }
  return grid;
}

PixelBias argmax_bias(const ConfMap& conf, int u, int v) {
  int best_c = 0;
  float best = conf.at(0, v, u);
  for (int c = 1; c < ConfMap::kChannels; ++c) {
    const float value = conf.at(c, v, u);
    if (value > best) {
      best = value;
      best_c = c;
    }
  }
  return {best_c % kPatch, best_c / kPatch};
}

double dynamic_threshold(std::span<const double> grid, double alpha) {
  const auto [lo, hi] = std::minmax_element(grid.begin(), grid.end());
  return alpha * *hi + (1.0 - alpha) * *lo;
}

double dynamic_threshold(const ConfMap& conf, double alpha) {
  return dynamic_threshold(patch_confidence(conf), alpha);
}

std::vector<Correspondence> select_correspondences(const CoordMap& coord, const ConfMap& conf,
                                                   const SelectionConfig& cfg, int image_w,
                                                   int image_h) {
  if (coord.gh != conf.gh || coord.gw != conf.gw)
    throw ShapeMismatch("coordinate and confidence maps disagree in shape");
  if (image_w != conf.gw * kPatch || image_h != conf.gh * kPatch)
    throw ShapeMismatch("map shape does not match the image size");

  const std::vector<double> grid = patch_confidence(conf);
  const double thresh = dynamic_threshold(grid, cfg.alpha);

  std::vector<Correspondence> out;
  for (int v = 0; v < conf.gh; ++v) {
    for (int u = 0; u < conf.gw; ++u) {
      const double c = grid[std::size_t(v) * conf.gw + u];
      if (c < thresh) continue;
      const PixelBias bias = argmax_bias(conf, u, v);
      Correspondence corr;
      corr.pixel = {kPatch * u + bias.i + 0.5, kPatch * v + bias.j + 0.5};
      corr.world = coord.point(v, u);
      corr.confidence = c;
      out.push_back(corr);
    }
  }
  if (out.empty()) throw NoSurvivors("the dynamic threshold filtered every patch");
  return out;
}

Vec2 soft_argmax_bias(const ConfMap& conf, int u, int v, double temperature) {
  double max_logit = -std::numeric_limits<double>::infinity();
  for (int c = 0; c < ConfMap::kChannels; ++c)
    max_logit = std::max(max_logit, double(conf.at(c, v, u)) / temperature);

  double z = 0.0;
  Vec2 expectation = Vec2::Zero();
  for (int c = 0; c < ConfMap::kChannels; ++c) {
    const double w = std::exp(double(conf.at(c, v, u)) / temperature - max_logit);
    z += w;
    expectation += w * Vec2(c % kPatch, c / kPatch);
  }
  return expectation / z;
}

}  // namespace sgl
