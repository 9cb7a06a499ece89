#include <doctest.h>

#include <random>
#include <vector>

#include "sgl/keypoints.hpp"

using namespace sgl;

namespace {

ConfMap random_conf(std::mt19937_64& rng, int gh, int gw) {
  std::uniform_real_distribution<double> value(0.0, 1.0 - 1e-6);
  ConfMap conf(gh, gw);
  for (auto& x : conf.v) x = float(value(rng));
  return conf;
}

CoordMap random_coord(std::mt19937_64& rng, int gh, int gw) {
  std::uniform_real_distribution<double> value(-3.0, 3.0);
  CoordMap coord(gh, gw);
  for (auto& x : coord.v) x = float(value(rng));
  return coord;
}

// Brute-force re-selection used as the oracle: loops every patch, recomputes
// the max channel, the threshold, the bias and the refined pixel from scratch.
std::vector<Correspondence> brute_force_select(const CoordMap& coord, const ConfMap& conf,
                                               double alpha) {
  double grid_max = -1e300, grid_min = 1e300;
  for (int v = 0; v < conf.gh; ++v) {
    for (int u = 0; u < conf.gw; ++u) {
      double m = -1e300;
      for (int c = 0; c < 64; ++c) m = std::max(m, double(conf.at(c, v, u)));
      grid_max = std::max(grid_max, m);
      grid_min = std::min(grid_min, m);
    }
  }
  const double thresh = alpha * grid_max + (1.0 - alpha) * grid_min;

  std::vector<Correspondence> out;
  for (int v = 0; v < conf.gh; ++v) {
    for (int u = 0; u < conf.gw; ++u) {
      double m = -1e300;
      int best_c = -1;
      for (int c = 0; c < 64; ++c) {
        if (double(conf.at(c, v, u)) > m) {
          m = double(conf.at(c, v, u));
          best_c = c;
        }
      }
      if (m < thresh) continue;
      Correspondence corr;
      corr.pixel = {8.0 * u + (best_c % 8) + 0.5, 8.0 * v + (best_c / 8) + 0.5};
      corr.world = coord.point(v, u);
      corr.confidence = m;
      out.push_back(corr);
    }
  }
  return out;
}

}  // namespace

TEST_SUITE_BEGIN("keypoints");

TEST_CASE("patch_confidence: constant and spiked channels") {
  ConfMap conf(2, 2);
  for (auto& x : conf.v) x = 0.3f;
  auto grid = patch_confidence(conf);
  for (double g : grid) CHECK(g == doctest::Approx(0.3).epsilon(1e-7));

  for (auto& x : conf.v) x = 0.1f;
  conf.at(37, 1, 0) = 0.9f;
  grid = patch_confidence(conf);
  CHECK(grid[1 * 2 + 0] == doctest::Approx(0.9).epsilon(1e-7));
  CHECK(grid[0] == doctest::Approx(0.1).epsilon(1e-7));
}

TEST_CASE("patch_confidence equals exhaustive channel max") {
  std::mt19937_64 rng(9001);
  const ConfMap conf = random_conf(rng, 5, 7);
  const auto grid = patch_confidence(conf);
  for (int v = 0; v < 5; ++v) {
    for (int u = 0; u < 7; ++u) {
      double m = 0.0;
      for (int c = 0; c < 64; ++c) m = std::max(m, double(conf.at(c, v, u)));
      CHECK(grid[v * 7 + u] == m);
    }
  }
}

TEST_CASE("argmax_bias: corner channel, channel 19, uniform tie") {
  ConfMap conf(1, 1);
  for (auto& x : conf.v) x = 0.2f;
  conf.at(0, 0, 0) = 0.9f;
  PixelBias b = argmax_bias(conf, 0, 0);
  CHECK(b.i == 0);
  CHECK(b.j == 0);

  for (auto& x : conf.v) x = 0.2f;
  conf.at(19, 0, 0) = 0.9f;
  b = argmax_bias(conf, 0, 0);
  CHECK(b.i == 3);
  CHECK(b.j == 2);

  for (auto& x : conf.v) x = 0.5f;
  b = argmax_bias(conf, 0, 0);
  CHECK(b.i == 0);
  CHECK(b.j == 0);
}

TEST_CASE("argmax_bias is invariant under strictly monotone transforms") {
  std::mt19937_64 rng(9002);
  const ConfMap conf = random_conf(rng, 3, 3);
  ConfMap warped = conf;
  for (auto& x : warped.v) x = std::tanh(3.0f * x) * 0.5f;
  for (int v = 0; v < 3; ++v) {
    for (int u = 0; u < 3; ++u) {
      const PixelBias a = argmax_bias(conf, u, v);
      const PixelBias b = argmax_bias(warped, u, v);
      CHECK(a.i == b.i);
      CHECK(a.j == b.j);
    }
  }
}

TEST_CASE("dynamic_threshold: direct evaluation and endpoints") {
  const std::vector<double> grid{0.2, 1.0};
  CHECK(dynamic_threshold(grid, 0.75) == 0.8);
  CHECK(dynamic_threshold(grid, 0.0) == 0.2);
  CHECK(dynamic_threshold(grid, 1.0) == 1.0);

  std::mt19937_64 rng(9003);
  std::uniform_real_distribution<double> value(0.0, 1.0);
  std::vector<double> random_grid(40);
  for (auto& g : random_grid) g = value(rng);
  const auto [lo, hi] = std::minmax_element(random_grid.begin(), random_grid.end());
  for (double alpha : {0.0, 0.1, 0.5, 0.9, 1.0}) {
    const double t = dynamic_threshold(random_grid, alpha);
    CHECK(t >= *lo - 1e-15);
    CHECK(t <= *hi + 1e-15);
  }
}

TEST_CASE("select_correspondences: alpha=0 emits every patch in row-major order") {
  std::mt19937_64 rng(9004);
  const int gh = 4, gw = 6;
  const ConfMap conf = random_conf(rng, gh, gw);
  const CoordMap coord = random_coord(rng, gh, gw);
  const auto out = select_correspondences(coord, conf, {0.0}, gw * 8, gh * 8);
  REQUIRE(int(out.size()) == gh * gw);
  int idx = 0;
  for (int v = 0; v < gh; ++v) {
    for (int u = 0; u < gw; ++u, ++idx) {
      CHECK(out[idx].world == coord.point(v, u));
      CHECK(out[idx].pixel.x() >= 8.0 * u);
      CHECK(out[idx].pixel.x() < 8.0 * (u + 1));
      CHECK(out[idx].pixel.y() >= 8.0 * v);
      CHECK(out[idx].pixel.y() < 8.0 * (v + 1));
    }
  }
}

TEST_CASE("select_correspondences: declared pixel convention") {
  ConfMap conf(8, 8);
  for (auto& x : conf.v) x = 0.1f;
  // Bias (i=3, j=2) at patch (u=5, v=7): channel 2*8+3 = 19.
  conf.at(19, 7, 5) = 0.9f;
  CoordMap coord(8, 8);
  coord.set_point(7, 5, {1, 2, 3});
  const auto out = select_correspondences(coord, conf, {1.0}, 64, 64);
  REQUIRE(out.size() == 1);
  CHECK(out[0].pixel.x() == 43.5);
  CHECK(out[0].pixel.y() == 58.5);
  CHECK(out[0].world == Vec3(1, 2, 3));
}

TEST_CASE("select_correspondences matches the brute-force oracle") {
  std::mt19937_64 rng(9005);
  for (int trial = 0; trial < 100; ++trial) {
    const int gh = 3 + int(rng() % 6);
    const int gw = 3 + int(rng() % 6);
    const ConfMap conf = random_conf(rng, gh, gw);
    const CoordMap coord = random_coord(rng, gh, gw);
    const double alpha = 0.7;
    const auto expected = brute_force_select(coord, conf, alpha);
    const auto actual = select_correspondences(coord, conf, {alpha}, gw * 8, gh * 8);
    const double thresh = dynamic_threshold(patch_confidence(conf), alpha);
    REQUIRE(actual.size() == expected.size());
    for (std::size_t i = 0; i < actual.size(); ++i) {
      CHECK(actual[i].pixel == expected[i].pixel);
      CHECK(actual[i].world == expected[i].world);
      CHECK(actual[i].confidence == expected[i].confidence);
      CHECK(actual[i].confidence >= thresh);
    }
  }
}

TEST_CASE("select_correspondences: survivors stay strictly inside the image") {
  std::mt19937_64 rng(9006);
  const int gh = 4, gw = 4;
  const ConfMap conf = random_conf(rng, gh, gw);
  const CoordMap coord = random_coord(rng, gh, gw);
  const auto out = select_correspondences(coord, conf, {0.0}, gw * 8, gh * 8);
  for (const auto& c : out) {
    CHECK(c.pixel.x() >= 0.0);
    CHECK(c.pixel.x() < gw * 8.0);
    CHECK(c.pixel.y() >= 0.0);
    CHECK(c.pixel.y() < gh * 8.0);
  }
}

TEST_CASE("select_correspondences: survivor count is non-increasing in alpha") {
  std::mt19937_64 rng(9007);
  const ConfMap conf = random_conf(rng, 6, 6);
  const CoordMap coord = random_coord(rng, 6, 6);
  std::size_t previous = SIZE_MAX;
  for (int step = 0; step <= 20; ++step) {
    const double alpha = step / 20.0;
    std::size_t count = 0;
    try {
      count = select_correspondences(coord, conf, {alpha}, 48, 48).size();
    } catch (const NoSurvivors&) {
      count = 0;
    }
    CHECK(count <= previous);
    previous = count;
  }
}

TEST_CASE("select_correspondences: alpha=1 keeps exactly the max patches") {
  ConfMap conf(2, 2);
  for (auto& x : conf.v) x = 0.25f;
  conf.at(5, 0, 1) = 0.75f;
  CoordMap coord(2, 2);
  const auto out = select_correspondences(coord, conf, {1.0}, 16, 16);
  REQUIRE(out.size() == 1);
  CHECK(out[0].confidence == doctest::Approx(0.75).epsilon(1e-7));
}

TEST_CASE("select_correspondences throws ShapeMismatch on inconsistent sizes") {
  ConfMap conf(2, 2);
  CoordMap coord(2, 3);
  CHECK_THROWS_AS(select_correspondences(coord, conf, {0.5}, 16, 16), ShapeMismatch);
  CoordMap coord_ok(2, 2);
  CHECK_THROWS_AS(select_correspondences(coord_ok, conf, {0.5}, 24, 16), ShapeMismatch);
}

TEST_CASE("soft_argmax_bias: uniform input gives the channel-grid mean") {
  ConfMap conf(1, 1);
  for (auto& x : conf.v) x = 0.4f;
  const Vec2 b = soft_argmax_bias(conf, 0, 0, 0.1);
  CHECK(b.x() == doctest::Approx(3.5).epsilon(1e-12));
  CHECK(b.y() == doctest::Approx(3.5).epsilon(1e-12));
}

TEST_CASE("soft_argmax_bias: one-hot input at low temperature") {
  ConfMap conf(1, 1);
  for (auto& x : conf.v) x = 0.0f;
  conf.at(19, 0, 0) = 1.0f - 1e-6f;
  const Vec2 b = soft_argmax_bias(conf, 0, 0, 1e-3);
  CHECK(std::abs(b.x() - 3.0) < 1e-3);
  CHECK(std::abs(b.y() - 2.0) < 1e-3);
}

TEST_CASE("soft_argmax_bias converges to argmax_bias at low temperature") {
  std::mt19937_64 rng(9008);
  const ConfMap conf = random_conf(rng, 4, 4);
  for (int v = 0; v < 4; ++v) {
    for (int u = 0; u < 4; ++u) {
      const Vec2 soft = soft_argmax_bias(conf, u, v, 1e-4);
      const PixelBias hard = argmax_bias(conf, u, v);
      CHECK(int(std::lround(soft.x())) == hard.i);
      CHECK(int(std::lround(soft.y())) == hard.j);
    }
  }
}

TEST_SUITE_END();
