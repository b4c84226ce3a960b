#include "duet/splat.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace duet {

namespace {

using V2 = Eigen::Vector2d;
using V3 = Eigen::Vector3d;
using M2 = Eigen::Matrix2d;
using M3 = Eigen::Matrix3d;

struct GaussScreen {
  bool live = false;
  V2 mean;       // pixel center
  M2 cov;        // screen-space covariance (with blur)
  M2 inv;        // cov^-1
  double z = 0;
  int x0 = 0, x1 = -1, y0 = 0, y1 = -1;  // inclusive pixel bbox
};

M3 rowmat3(const double* p) {
  M3 m;
  m << p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7], p[8];
  return m;
}

// screen-space mean/covariance of one Gaussian; identical in the fragment
// path and the reference rasterizer
GaussScreen project_gaussian(const double* pos, const double* rot, const double* scl,
                             double opacity, const CameraModel& cam,
                             const SplatOptions& opt) {
  GaussScreen g;
  double x = pos[0], y = pos[1], z = pos[2];
  if (z <= opt.near) return g;
  double f = cam.focal;
  g.z = z;
  g.mean = V2(f * x / z + cam.principal.x(), f * y / z + cam.principal.y());

  Eigen::Matrix<double, 2, 3> J;
  J << f / z, 0, -f * x / (z * z), 0, f / z, -f * y / (z * z);
  M3 R = rowmat3(rot);
  M3 S2 = V3(scl[0] * scl[0], scl[1] * scl[1], scl[2] * scl[2]).asDiagonal();
  M3 cov3 = R * S2 * R.transpose();
  g.cov = J * cov3 * J.transpose() + opt.blur * M2::Identity();
  double det = g.cov.determinant();
  if (det <= 1e-18) return g;
  g.inv << g.cov(1, 1) / det, -g.cov(0, 1) / det, -g.cov(1, 0) / det, g.cov(0, 0) / det;

  // extent at which alpha falls to alpha_min (conservative axis-aligned box)
  double sigma = std::max(opacity, opt.alpha_min * 2.0);
  double q = 2.0 * std::log(sigma / opt.alpha_min);
  if (q <= 0) return g;
  double tr = 0.5 * (g.cov(0, 0) + g.cov(1, 1));
  double disc = std::sqrt(std::max(0.0, tr * tr - det));
  double lmax = tr + disc;
  double radius = std::sqrt(q * lmax) + 1.0;
  g.x0 = std::max(0, static_cast<int>(std::floor(g.mean.x() - radius)));
  g.x1 = std::min(cam.width - 1, static_cast<int>(std::ceil(g.mean.x() + radius)));
  g.y0 = std::max(0, static_cast<int>(std::floor(g.mean.y() - radius)));
  g.y1 = std::min(cam.height - 1, static_cast<int>(std::ceil(g.mean.y() + radius)));
  g.live = g.x0 <= g.x1 && g.y0 <= g.y1;
  return g;
}

std::vector<int> depth_order_indices(const std::vector<GaussScreen>& gs) {
  std::vector<int> order;
  for (size_t i = 0; i < gs.size(); ++i)
    if (gs[i].live) order.push_back(static_cast<int>(i));
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (gs[a].z != gs[b].z) return gs[a].z < gs[b].z;
    return a < b;  // deterministic tie break
  });
  return order;
}

double gauss_weight(const GaussScreen& g, double px, double py) {
  V2 d(px - g.mean.x(), py - g.mean.y());
  return std::exp(-0.5 * d.dot(g.inv * d));
}

}  // namespace

Tensor RenderOutput::rgb() const { return ops::slice_dim0(planes, 0, 3); }
Tensor RenderOutput::alpha() const { return ops::slice_dim0(planes, 3, 1); }
Tensor RenderOutput::identity() const { return ops::slice_dim0(planes, 4, 2); }

RenderOutput splat(const Tensor& positions, const Tensor& rotations, const Tensor& scales,
                   const Tensor& colors, const Tensor& opacities,
                   const std::vector<int>& identity, const CameraModel& cam,
                   const Vec3& background, const SplatOptions& opt) {
  cam.validate();
  int G = positions.defined() ? positions.dim(0) : 0;
  DUET_CHECK(static_cast<int>(identity.size()) == G, "splat: identity size mismatch");
  if (G > 0) {
    DUET_CHECK(positions.dim(1) == 3 && rotations.dim(0) == G && rotations.dim(1) == 9 &&
                   scales.dim(0) == G && scales.dim(1) == 3 && colors.dim(0) == G &&
                   colors.dim(1) == 3 && opacities.size() == G,
               "splat: inconsistent gaussian tensors");
    for (int p : identity) DUET_CHECK(p == 0 || p == 1, "splat: identity labels must be 0/1");
  }
  const int H = cam.height, W = cam.width;
  const int64_t HW = static_cast<int64_t>(H) * W;

  // screen-space projection
  std::vector<GaussScreen> gs(G);
  for (int i = 0; i < G; ++i)
    gs[i] = project_gaussian(positions.value().data() + 3 * i,
                             rotations.value().data() + 9 * i, scales.value().data() + 3 * i,
                             opacities.value()[i], cam, opt);
  std::vector<int> order = depth_order_indices(gs);

  // fragment lists in CSR layout, depth-sorted per pixel by construction
  std::vector<int> counts(HW, 0);
  auto for_each_fragment = [&](auto&& cb) {
    for (int oi : order) {
      const GaussScreen& g = gs[oi];
      double sigma = opacities.value()[oi];
      for (int py = g.y0; py <= g.y1; ++py)
        for (int px = g.x0; px <= g.x1; ++px) {
          double w = gauss_weight(g, px + 0.5, py + 0.5);
          double a = std::min(opt.alpha_max, sigma * w);
          if (a < opt.alpha_min) continue;
          cb(py * W + px, oi, a);
        }
    }
  };
  for_each_fragment([&](int64_t pix, int, double) { ++counts[pix]; });
  std::vector<int64_t> start(HW + 1, 0);
  for (int64_t p = 0; p < HW; ++p) start[p + 1] = start[p] + counts[p];
  int64_t total = start[HW];
  std::vector<int> frag_g(total);
  std::vector<double> frag_a(total);
  std::vector<int64_t> cursor(start.begin(), start.end() - 1);
  for_each_fragment([&](int64_t pix, int gi, double a) {
    frag_g[cursor[pix]] = gi;
    frag_a[cursor[pix]] = a;
    ++cursor[pix];
  });

  // composite
  ArrayX planes = ArrayX::Zero(6 * HW);
  for (int64_t pix = 0; pix < HW; ++pix) {
    double T = 1.0, r = 0, gcol = 0, b = 0, ia = 0, ib = 0;
    for (int64_t k = start[pix]; k < start[pix + 1]; ++k) {
      int gi = frag_g[k];
      double a = frag_a[k];
      double w = a * T;
      r += colors.value()[3 * gi] * w;
      gcol += colors.value()[3 * gi + 1] * w;
      b += colors.value()[3 * gi + 2] * w;
      (identity[gi] == 0 ? ia : ib) += w;
      T *= 1.0 - a;
    }
    planes[0 * HW + pix] = r + T * background.x();
    planes[1 * HW + pix] = gcol + T * background.y();
    planes[2 * HW + pix] = b + T * background.z();
    planes[3 * HW + pix] = 1.0 - T;
    planes[4 * HW + pix] = ia;
    planes[5 * HW + pix] = ib;
  }

  std::vector<int> ident = identity;
  Vec3 bg = background;
  SplatOptions o = opt;
  CameraModel camera = cam;
  auto frag_g_s = std::make_shared<std::vector<int>>(std::move(frag_g));
  auto frag_a_s = std::make_shared<std::vector<double>>(std::move(frag_a));
  auto start_s = std::make_shared<std::vector<int64_t>>(std::move(start));

  Tensor out = make_op(
      "splat", {6, H, W}, std::move(planes),
      {positions, rotations, scales, colors, opacities},
      [G, H, W, HW, ident, bg, o, camera, frag_g_s, frag_a_s, start_s](ad::Node& n) {
        const ArrayX& pv = n.parents[0]->value;
        const ArrayX& rv = n.parents[1]->value;
        const ArrayX& sv = n.parents[2]->value;
        const ArrayX& cv = n.parents[3]->value;
        const ArrayX& ov = n.parents[4]->value;

        // re-derive screen-space quantities
        std::vector<GaussScreen> gs(G);
        for (int i = 0; i < G; ++i)
          gs[i] = project_gaussian(pv.data() + 3 * i, rv.data() + 9 * i, sv.data() + 3 * i,
                                   ov[i], camera, o);

        // per-gaussian accumulators in screen space
        MatX gmean = MatX::Zero(G, 2);
        std::vector<M2> gM(G, M2::Zero());
        ArrayX gsig = ArrayX::Zero(G);
        MatX gcol = MatX::Zero(G, 3);

        const double* grad = n.grad.data();
        std::vector<double> Ts;
        for (int64_t pix = 0; pix < HW; ++pix) {
          int64_t lo = (*start_s)[pix], hi = (*start_s)[pix + 1];
          if (lo == hi) continue;
          double gC[3] = {grad[0 * HW + pix], grad[1 * HW + pix], grad[2 * HW + pix]};
          double gA = grad[3 * HW + pix];
          double gI[2] = {grad[4 * HW + pix], grad[5 * HW + pix]};

          Ts.assign(hi - lo + 1, 1.0);
          for (int64_t k = lo; k < hi; ++k)
            Ts[k - lo + 1] = Ts[k - lo] * (1.0 - (*frag_a_s)[k]);
          double Tfinal = Ts[hi - lo];

          // suffix S carries d(loss)/dT scaled contributions of later frags
          double bgdot = bg.x() * gC[0] + bg.y() * gC[1] + bg.z() * gC[2];
          double S = Tfinal * (bgdot - gA);  // alpha plane is 1 - T_final
          double px = static_cast<double>(pix % W) + 0.5;
          double py = static_cast<double>(pix / W) + 0.5;
          for (int64_t k = hi - 1; k >= lo; --k) {
            int gi = (*frag_g_s)[k];
            double a = (*frag_a_s)[k];
            double T = Ts[k - lo];
            double common = cv[3 * gi] * gC[0] + cv[3 * gi + 1] * gC[1] +
                            cv[3 * gi + 2] * gC[2] + gA + gI[ident[gi]];
            double dalpha = T * common - S / (1.0 - a);
            // color gradient
            double w = a * T;
            gcol(gi, 0) += w * gC[0];
            gcol(gi, 1) += w * gC[1];
            gcol(gi, 2) += w * gC[2];
            S += a * T * common;
            // alpha = min(alpha_max, sigma * gw)
            if (a >= o.alpha_max) continue;  // clamped: zero gradient
            const GaussScreen& g = gs[gi];
            double gw = gauss_weight(g, px, py);
            gsig[gi] += gw * dalpha;
            double dgw = ov[gi] * dalpha;
            V2 d(px - g.mean.x(), py - g.mean.y());
            V2 md = g.inv * d;
            gmean(gi, 0) += dgw * gw * md.x();
            gmean(gi, 1) += dgw * gw * md.y();
            gM[gi] += dgw * gw * (-0.5) * (d * d.transpose());
          }
        }

        // chain screen-space grads to 3D parameters
        ArrayX* dpos = n.parents[0]->requires_grad ? &n.parents[0]->ensure_grad() : nullptr;
        ArrayX* drot = n.parents[1]->requires_grad ? &n.parents[1]->ensure_grad() : nullptr;
        ArrayX* dscl = n.parents[2]->requires_grad ? &n.parents[2]->ensure_grad() : nullptr;
        ArrayX* dcol = n.parents[3]->requires_grad ? &n.parents[3]->ensure_grad() : nullptr;
        ArrayX* dopa = n.parents[4]->requires_grad ? &n.parents[4]->ensure_grad() : nullptr;

        double f = camera.focal;
        for (int i = 0; i < G; ++i) {
          if (!gs[i].live) continue;
          if (dcol)
            for (int c = 0; c < 3; ++c) (*dcol)[3 * i + c] += gcol(i, c);
          if (dopa) (*dopa)[i] += gsig[i];

          // dM -> dCov2D (M = Cov^-1)
          M2 M = gs[i].inv;
          M2 dcov2 = -M * gM[i] * M;

          double x = pv[3 * i], y = pv[3 * i + 1], z = pv[3 * i + 2];
          Eigen::Matrix<double, 2, 3> J;
          J << f / z, 0, -f * x / (z * z), 0, f / z, -f * y / (z * z);
          M3 R = rowmat3(rv.data() + 9 * i);
          V3 s(sv[3 * i], sv[3 * i + 1], sv[3 * i + 2]);
          M3 S2 = V3(s[0] * s[0], s[1] * s[1], s[2] * s[2]).asDiagonal();
          M3 cov3 = R * S2 * R.transpose();

          Eigen::Matrix<double, 2, 3> dJ = (dcov2 + dcov2.transpose()) * J * cov3;
          M3 dcov3 = J.transpose() * dcov2 * J;
          if (drot) {
            M3 dR = (dcov3 + dcov3.transpose()) * R * S2;
            for (int a = 0; a < 3; ++a)
              for (int b = 0; b < 3; ++b) (*drot)[9 * i + 3 * a + b] += dR(a, b);
          }
          if (dscl) {
            M3 rtgr = R.transpose() * dcov3 * R;
            for (int k = 0; k < 3; ++k) (*dscl)[3 * i + k] += 2.0 * s[k] * rtgr(k, k);
          }
          if (dpos) {
            double gu = gmean(i, 0), gv = gmean(i, 1);
            (*dpos)[3 * i] += gu * f / z + dJ(0, 2) * (-f / (z * z));
            (*dpos)[3 * i + 1] += gv * f / z + dJ(1, 2) * (-f / (z * z));
            (*dpos)[3 * i + 2] += -f * (gu * x + gv * y) / (z * z) +
                                  dJ(0, 0) * (-f / (z * z)) + dJ(1, 1) * (-f / (z * z)) +
                                  dJ(0, 2) * (2 * f * x / (z * z * z)) +
                                  dJ(1, 2) * (2 * f * y / (z * z * z));
          }
        }
      });

  RenderOutput ro;
  ro.planes = out;
  ro.height = H;
  ro.width = W;
  return ro;
}

ArrayX splat_reference(const ArrayX& positions, const ArrayX& rotations, const ArrayX& scales,
                       const ArrayX& colors, const ArrayX& opacities,
                       const std::vector<int>& identity, const CameraModel& cam,
                       const Vec3& background, const SplatOptions& opt) {
  int G = static_cast<int>(opacities.size());
  const int H = cam.height, W = cam.width;
  const int64_t HW = static_cast<int64_t>(H) * W;
  std::vector<GaussScreen> gs(G);
  for (int i = 0; i < G; ++i)
    gs[i] = project_gaussian(positions.data() + 3 * i, rotations.data() + 9 * i,
                             scales.data() + 3 * i, opacities[i], cam, opt);
  std::vector<int> order = depth_order_indices(gs);

  ArrayX planes = ArrayX::Zero(6 * HW);
  for (int py = 0; py < H; ++py)
    for (int px = 0; px < W; ++px) {
      int64_t pix = static_cast<int64_t>(py) * W + px;
      double T = 1.0, r = 0, g = 0, b = 0, ia = 0, ib = 0;
      for (int oi : order) {  // every live gaussian, front to back
        double a = std::min(opt.alpha_max,
                            opacities[oi] * gauss_weight(gs[oi], px + 0.5, py + 0.5));
        if (a < opt.alpha_min) continue;
        double w = a * T;
        r += colors[3 * oi] * w;
        g += colors[3 * oi + 1] * w;
        b += colors[3 * oi + 2] * w;
        (identity[oi] == 0 ? ia : ib) += w;
        T *= 1.0 - a;
      }
      planes[0 * HW + pix] = r + T * background.x();
      planes[1 * HW + pix] = g + T * background.y();
      planes[2 * HW + pix] = b + T * background.z();
      planes[3 * HW + pix] = 1.0 - T;
      planes[4 * HW + pix] = ia;
      planes[5 * HW + pix] = ib;
    }
  return planes;
}

std::vector<bool> region_gate(const ArrayX& planes, int height, int width,
                              const MatX& keypoints_uv, int person, double alpha_thresh,
                              double share_thresh) {
  DUET_CHECK(person == 0 || person == 1, "region_gate: person must be 0 or 1");
  DUET_CHECK(planes.size() == static_cast<int64_t>(6) * height * width,
             "region_gate: plane size mismatch");
  const int64_t HW = static_cast<int64_t>(height) * width;
  std::vector<bool> keep(keypoints_uv.rows(), false);
  for (int k = 0; k < keypoints_uv.rows(); ++k) {
    int px = static_cast<int>(std::lround(keypoints_uv(k, 0)));
    int py = static_cast<int>(std::lround(keypoints_uv(k, 1)));
    if (px < 0 || px >= width || py < 0 || py >= height) continue;  // dropped
    int64_t pix = static_cast<int64_t>(py) * width + px;
    double alpha = planes[3 * HW + pix];
    if (alpha < alpha_thresh) continue;
    double ia = planes[4 * HW + pix], ib = planes[5 * HW + pix];
    double mine = person == 0 ? ia : ib;
    if (mine >= share_thresh * (ia + ib)) keep[k] = true;
  }
  return keep;
}

}  // namespace duet
