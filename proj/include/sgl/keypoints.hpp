#pragma once

#include <span>
#include <vector>

#include "sgl/maps.hpp"
#include "sgl/pnp.hpp"

namespace sgl {

// Sub-patch offset decoded from a confidence channel: i is the column offset,
// j the row offset, both in {0..7}.
struct PixelBias {
  int i = 0;
  int j = 0;
};

struct SelectionConfig {
  double alpha = 0.8;  // in [0, 1]
};

// Scalar confidence per patch: the max over the 64 channels. Row-major gh x gw.
std::vector<double> patch_confidence(const ConfMap& conf);

// Channel argmax at one patch, decoded to (i, j) = (c % 8, c / 8). Ties go to
// the lowest channel index.
PixelBias argmax_bias(const ConfMap& conf, int u, int v);

// alpha * max + (1 - alpha) * min over the patch-confidence grid.
double dynamic_threshold(std::span<const double> grid, double alpha);
double dynamic_threshold(const ConfMap& conf, double alpha);

// Confidence-gated refinement: every patch whose confidence clears the
// dynamic threshold emits one correspondence at pixel
// (8u + i + 0.5, 8v + j + 0.5) with the patch's predicted scene coordinate.
// Output is row-major by (v, u). Throws NoSurvivors when the filter drops
// every patch, ShapeMismatch when the maps disagree with image_w/image_h.
std::vector<Correspondence> select_correspondences(const CoordMap& coord, const ConfMap& conf,
                                                   const SelectionConfig& cfg, int image_w,
                                                   int image_h);

// Differentiable surrogate for argmax_bias: the expectation of (i, j) under a
// softmax over the 64 channel values divided by temperature.
Vec2 soft_argmax_bias(const ConfMap& conf, int u, int v, double temperature);

}  // namespace sgl
