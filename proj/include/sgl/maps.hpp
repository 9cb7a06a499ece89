#pragma once

#include <vector>

#include "sgl/geometry.hpp"

namespace sgl {

// Side length of the square pixel patch behind each map cell.
inline constexpr int kPatch = 8;

// Per-patch 3D scene coordinates (metres, global frame), 3 x gh x gw,
// channel-major storage.
struct CoordMap {
  int gh = 0, gw = 0;
  std::vector<float> v;

  CoordMap() = default;
  CoordMap(int gh_, int gw_) : gh(gh_), gw(gw_), v(std::size_t(3) * gh_ * gw_, 0.0f) {}

  float& at(int c, int row, int col) { return v[(std::size_t(c) * gh + row) * gw + col]; }
  float at(int c, int row, int col) const { return v[(std::size_t(c) * gh + row) * gw + col]; }

  Vec3 point(int row, int col) const {
    return {double(at(0, row, col)), double(at(1, row, col)), double(at(2, row, col))};
  }
  void set_point(int row, int col, const Vec3& p) {
    at(0, row, col) = float(p.x());
    at(1, row, col) = float(p.y());
    at(2, row, col) = float(p.z());
  }
};

// Per-patch confidence volume, 64 x gh x gw. Channel c remaps to the patch
// cell (i, j) = (c % 8, c / 8); values live in [0, 1).
struct ConfMap {
  static constexpr int kChannels = kPatch * kPatch;

  int gh = 0, gw = 0;
  std::vector<float> v;

  ConfMap() = default;
  ConfMap(int gh_, int gw_) : gh(gh_), gw(gw_), v(std::size_t(kChannels) * gh_ * gw_, 0.0f) {}

  float& at(int c, int row, int col) { return v[(std::size_t(c) * gh + row) * gw + col]; }
  float at(int c, int row, int col) const { return v[(std::size_t(c) * gh + row) * gw + col]; }
};

}  // namespace sgl
