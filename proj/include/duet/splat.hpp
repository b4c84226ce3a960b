#pragma once

#include <vector>

#include "duet/camera.hpp"
#include "duet/tensor.hpp"

namespace duet {

struct SplatOptions {
  double near = 0.01;        // meters
  double blur = 0.3;         // screen-space isotropic blur, px^2
  double alpha_max = 0.99;
  double alpha_min = 1e-4;   // fragments below this are dropped
};

// Differentiable front-to-back splatting of two-person anisotropic Gaussians.
// Both persons render in one depth-sorted pass (ties broken by index). The
// underlying op emits [6,H,W]: rgb(3) | alpha(1) | identity(2).
struct RenderOutput {
  Tensor planes;  // [6,H,W]
  int height = 0, width = 0;

  Tensor rgb() const;       // [3,H,W]
  Tensor alpha() const;     // [1,H,W]
  Tensor identity() const;  // [2,H,W]
};

RenderOutput splat(const Tensor& positions,   // [G,3] camera coords
                   const Tensor& rotations,   // [G,9] row-major rotation matrices
                   const Tensor& scales,      // [G,3] positive, meters
                   const Tensor& colors,      // [G,3] in [0,1]
                   const Tensor& opacities,   // [G] in [0,1]
                   const std::vector<int>& identity,  // person index per Gaussian
                   const CameraModel& cam, const Vec3& background,
                   const SplatOptions& opt = {});

// Tile-free reference: literal per-pixel loop over the depth-sorted Gaussians.
// Same math as the fragment path; used as the rasterization oracle.
ArrayX splat_reference(const ArrayX& positions, const ArrayX& rotations, const ArrayX& scales,
                       const ArrayX& colors, const ArrayX& opacities,
                       const std::vector<int>& identity, const CameraModel& cam,
                       const Vec3& background, const SplatOptions& opt = {});

// Keypoint filter per rendered identity coverage: keeps keypoint k iff its
// pixel is inside the image, alpha >= 0.3, and this person owns at least half
// of the composited identity weight there.
std::vector<bool> region_gate(const ArrayX& planes, int height, int width,
                              const MatX& keypoints_uv,  // K x 2
                              int person, double alpha_thresh = 0.3,
                              double share_thresh = 0.5);

}  // namespace duet
