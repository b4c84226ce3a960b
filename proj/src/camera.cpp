#include "duet/camera.hpp"

#include <cmath>

namespace duet {

CameraModel CameraModel::from_fov(int width, int height, double fov_deg) {
  DUET_CHECK(width >= 1 && height >= 1, "camera: image size ", width, "x", height);
  DUET_CHECK(fov_deg > 0 && fov_deg < 180, "camera: fov ", fov_deg);
  CameraModel cam;
  cam.width = width;
  cam.height = height;
  cam.fov_deg = fov_deg;
  double diag = std::sqrt(static_cast<double>(width) * width +
                          static_cast<double>(height) * height);
  cam.focal = diag / (2.0 * std::tan(fov_deg * M_PI / 360.0));
  cam.principal = Vec2(width / 2.0, height / 2.0);
  return cam;
}

void CameraModel::validate() const {
  DUET_CHECK(width >= 1 && height >= 1 && focal > 0, "camera: invalid model");
}

Vec2 project_point(const Vec3& p, const CameraModel& cam) {
  return Vec2(cam.focal * p.x() / p.z() + cam.principal.x(),
              cam.focal * p.y() / p.z() + cam.principal.y());
}

Projected project(const MatX& points, const CameraModel& cam) {
  cam.validate();
  Projected out;
  out.pixels = MatX::Zero(points.rows(), 2);
  out.valid = ArrayX::Zero(points.rows());
  for (int i = 0; i < points.rows(); ++i) {
    double z = points(i, 2);
    if (z <= kMinDepth) continue;
    out.valid[i] = 1.0;
    out.pixels(i, 0) = cam.focal * points(i, 0) / z + cam.principal.x();
    out.pixels(i, 1) = cam.focal * points(i, 1) / z + cam.principal.y();
  }
  return out;
}

Tensor project_op(const Tensor& points, const CameraModel& cam, ArrayX* valid) {
  DUET_CHECK(points.ndim() == 2 && points.dim(1) == 3, "project_op: expects [K,3]");
  cam.validate();
  int K = points.dim(0);
  ArrayX out = ArrayX::Zero(K * 2);
  ArrayX vmask = ArrayX::Zero(K);
  const ArrayX& pv = points.value();
  for (int i = 0; i < K; ++i) {
    double z = pv[3 * i + 2];
    if (z <= kMinDepth) continue;
    vmask[i] = 1.0;
    out[2 * i] = cam.focal * pv[3 * i] / z + cam.principal.x();
    out[2 * i + 1] = cam.focal * pv[3 * i + 1] / z + cam.principal.y();
  }
  if (valid) *valid = vmask;
  double f = cam.focal;
  return make_op("project", {K, 2}, std::move(out), {points}, [K, f, vmask](ad::Node& n) {
    if (!n.parents[0]->requires_grad) return;
    const ArrayX& pv = n.parents[0]->value;
    ArrayX& d = n.parents[0]->ensure_grad();
    for (int i = 0; i < K; ++i) {
      if (vmask[i] == 0.0) continue;
      double x = pv[3 * i], y = pv[3 * i + 1], z = pv[3 * i + 2];
      double gu = n.grad[2 * i], gv = n.grad[2 * i + 1];
      d[3 * i] += gu * f / z;
      d[3 * i + 1] += gv * f / z;
      d[3 * i + 2] += -f * (gu * x + gv * y) / (z * z);
    }
  });
}

DepthOrder depth_order(double root_depth_a, double root_depth_b, double eps) {
  if (std::abs(root_depth_a - root_depth_b) <= eps) return DepthOrder::TIE;
  return root_depth_a < root_depth_b ? DepthOrder::A_NEARER : DepthOrder::B_NEARER;
}

}  // namespace duet
