#pragma once

#include "duet/tensor.hpp"

namespace duet {

// Pinhole camera with identity extrinsics; focal length is derived from the
// diagonal field of view: focal = sqrt(w^2 + h^2) / (2 tan(fov/2)).
struct CameraModel {
  int width = 0, height = 0;
  double fov_deg = 55.0;
  double focal = 0.0;
  Vec2 principal = Vec2::Zero();

  static CameraModel from_fov(int width, int height, double fov_deg = 55.0);
  void validate() const;
};

constexpr double kMinDepth = 1e-6;

// plain projection; points with z <= kMinDepth are flagged invalid
struct Projected {
  MatX pixels;   // K x 2
  ArrayX valid;  // K, 1.0 or 0.0
};
Projected project(const MatX& points, const CameraModel& cam);
Vec2 project_point(const Vec3& p, const CameraModel& cam);

// autodiff projection of [K,3] -> [K,2]; `valid` is an output mask, invalid
// rows produce zero pixels and zero gradient (callers must mask losses).
Tensor project_op(const Tensor& points, const CameraModel& cam, ArrayX* valid = nullptr);

enum class DepthOrder { A_NEARER, B_NEARER, TIE };

// evaluation-only ordinal: which person's root is nearer the camera
DepthOrder depth_order(double root_depth_a, double root_depth_b, double eps = 1e-9);

}  // namespace duet
