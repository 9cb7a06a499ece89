#pragma once

#include <stdexcept>
#include <string>

namespace sgl {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A 3D point maps to non-positive depth in the camera frame.
struct PointBehindCamera : Error {
  using Error::Error;
};

// The 2D-3D configuration is rank-deficient (coincident/collinear points).
struct DegenerateConfiguration : Error {
  using Error::Error;
};

// RANSAC found no hypothesis reaching the minimum inlier count.
struct InsufficientInliers : Error {
  using Error::Error;
};

// Keypoint selection filtered every patch.
struct NoSurvivors : Error {
  using Error::Error;
};

struct InvalidConfig : Error {
  using Error::Error;
};

struct ShapeMismatch : Error {
  using Error::Error;
};

// Dataset directory does not follow the expected layout.
struct LayoutError : Error {
  using Error::Error;
};

struct PoseParseError : Error {
  using Error::Error;
};

// Training loss became non-finite.
struct DivergenceDetected : Error {
  using Error::Error;
};

// Fewer landmarks visible than required to render a usable view.
struct EmptyView : Error {
  using Error::Error;
};

}  // namespace sgl
