#include "duet/collision.hpp"

#include <algorithm>

namespace duet {

namespace {

using V3 = Eigen::Vector3d;

// gather the parametric interval where a triangle crosses the other's plane
bool plane_interval(const double t[3], const double d[3], double& lo, double& hi) {
  double pts[3];
  int n = 0;
  for (int i = 0; i < 3; ++i)
    if (d[i] == 0.0) pts[n++] = t[i];
  for (int i = 0; i < 3; ++i) {
    int j = (i + 1) % 3;
    if (d[i] * d[j] < 0.0) pts[n++] = t[i] + (t[j] - t[i]) * (d[i] / (d[i] - d[j]));
  }
  if (n == 0) return false;
  lo = *std::min_element(pts, pts + n);
  hi = *std::max_element(pts, pts + n);
  return true;
}

bool seg2d_intersect(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  auto orient = [](const Vec2& p, const Vec2& q, const Vec2& r) {
    return (q.x() - p.x()) * (r.y() - p.y()) - (q.y() - p.y()) * (r.x() - p.x());
  };
  double o1 = orient(a, b, c), o2 = orient(a, b, d);
  double o3 = orient(c, d, a), o4 = orient(c, d, b);
  if (((o1 > 0) != (o2 > 0)) && ((o3 > 0) != (o4 > 0))) return true;
  auto on = [&](const Vec2& p, const Vec2& q, const Vec2& r) {
    return orient(p, q, r) == 0 && r.x() >= std::min(p.x(), q.x()) &&
           r.x() <= std::max(p.x(), q.x()) && r.y() >= std::min(p.y(), q.y()) &&
           r.y() <= std::max(p.y(), q.y());
  };
  return on(a, b, c) || on(a, b, d) || on(c, d, a) || on(c, d, b);
}

bool point_in_tri2d(const Vec2& p, const Vec2& a, const Vec2& b, const Vec2& c) {
  auto orient = [](const Vec2& p0, const Vec2& q, const Vec2& r) {
    return (q.x() - p0.x()) * (r.y() - p0.y()) - (q.y() - p0.y()) * (r.x() - p0.x());
  };
  double o1 = orient(a, b, p), o2 = orient(b, c, p), o3 = orient(c, a, p);
  return (o1 >= 0 && o2 >= 0 && o3 >= 0) || (o1 <= 0 && o2 <= 0 && o3 <= 0);
}

bool coplanar_tri_tri(const V3& n, const V3 t1[3], const V3 t2[3]) {
  int axis = 0;
  V3 an = n.cwiseAbs();
  if (an.y() > an.x()) axis = 1;
  if (an.z() > an[axis]) axis = 2;
  int u = (axis + 1) % 3, v = (axis + 2) % 3;
  Vec2 a[3], b[3];
  for (int i = 0; i < 3; ++i) {
    a[i] = Vec2(t1[i][u], t1[i][v]);
    b[i] = Vec2(t2[i][u], t2[i][v]);
  }
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (seg2d_intersect(a[i], a[(i + 1) % 3], b[j], b[(j + 1) % 3])) return true;
  return point_in_tri2d(a[0], b[0], b[1], b[2]) || point_in_tri2d(b[0], a[0], a[1], a[2]);
}

}  // namespace

bool triangles_intersect(const Vec3& p1, const Vec3& q1, const Vec3& r1, const Vec3& p2,
                         const Vec3& q2, const Vec3& r2) {
  V3 n1 = (q1 - p1).cross(r1 - p1);
  V3 n2 = (q2 - p2).cross(r2 - p2);

  double d2[3] = {n1.dot(p2 - p1), n1.dot(q2 - p1), n1.dot(r2 - p1)};
  if ((d2[0] > 0 && d2[1] > 0 && d2[2] > 0) || (d2[0] < 0 && d2[1] < 0 && d2[2] < 0))
    return false;
  double d1[3] = {n2.dot(p1 - p2), n2.dot(q1 - p2), n2.dot(r1 - p2)};
  if ((d1[0] > 0 && d1[1] > 0 && d1[2] > 0) || (d1[0] < 0 && d1[1] < 0 && d1[2] < 0))
    return false;

  if (d1[0] == 0 && d1[1] == 0 && d1[2] == 0) {
    V3 t1[3] = {p1, q1, r1}, t2[3] = {p2, q2, r2};
    return coplanar_tri_tri(n1, t1, t2);
  }

  // parametrize the intersection line by its dominant axis
  V3 dir = n1.cross(n2);
  V3 ad = dir.cwiseAbs();
  int axis = 0;
  if (ad.y() > ad.x()) axis = 1;
  if (ad.z() > ad[axis]) axis = 2;
  double t1p[3] = {p1[axis], q1[axis], r1[axis]};
  double t2p[3] = {p2[axis], q2[axis], r2[axis]};
  double lo1, hi1, lo2, hi2;
  if (!plane_interval(t1p, d1, lo1, hi1)) return false;
  if (!plane_interval(t2p, d2, lo2, hi2)) return false;
  return std::max(lo1, lo2) <= std::min(hi1, hi2);
}

// ---------------------------------------------------------------------------
// BVH

Bvh::Bvh(const Mesh& mesh) : mesh_(&mesh) {
  int F = mesh.num_faces();
  DUET_CHECK(F > 0, "Bvh: empty mesh");
  tri_.resize(F);
  for (int f = 0; f < F; ++f) tri_[f] = f;
  centroids_.resize(F, 3);
  for (int f = 0; f < F; ++f)
    centroids_.row(f) = (mesh.vertices.row(mesh.faces(f, 0)) +
                         mesh.vertices.row(mesh.faces(f, 1)) +
                         mesh.vertices.row(mesh.faces(f, 2))) / 3.0;
  nodes_.reserve(2 * F);
  build(0, F);
}

int Bvh::build(int start, int count) {
  int idx = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{});
  V3 lo = V3::Constant(1e30), hi = V3::Constant(-1e30);
  for (int i = start; i < start + count; ++i) {
    int f = tri_[i];
    for (int k = 0; k < 3; ++k) {
      V3 v = mesh_->vertices.row(mesh_->faces(f, k));
      lo = lo.cwiseMin(v);
      hi = hi.cwiseMax(v);
    }
  }
  nodes_[idx].lo = lo;
  nodes_[idx].hi = hi;
  if (count <= 4) {
    nodes_[idx].start = start;
    nodes_[idx].count = count;
    return idx;
  }
  V3 ext = hi - lo;
  int axis = 0;
  if (ext.y() > ext.x()) axis = 1;
  if (ext.z() > ext[axis]) axis = 2;
  int mid = start + count / 2;
  std::nth_element(tri_.begin() + start, tri_.begin() + mid, tri_.begin() + start + count,
                   [&](int a, int b) { return centroids_(a, axis) < centroids_(b, axis); });
  int left = build(start, mid - start);
  int right = build(mid, start + count - mid);
  nodes_[idx].left = left;
  nodes_[idx].right = right;
  return idx;
}

void Bvh::query(const Vec3& lo, const Vec3& hi, std::vector<int>& out) const {
  std::vector<int> stack = {0};
  while (!stack.empty()) {
    const Node& n = nodes_[stack.back()];
    stack.pop_back();
    if ((n.lo.array() > hi.array()).any() || (n.hi.array() < lo.array()).any()) continue;
    if (n.left < 0) {
      for (int i = n.start; i < n.start + n.count; ++i) out.push_back(tri_[i]);
    } else {
      stack.push_back(n.left);
      stack.push_back(n.right);
    }
  }
}

CollisionSet detect_collisions(const Mesh& a, const Mesh& b) {
  CollisionSet out;
  if (a.num_faces() == 0 || b.num_faces() == 0) return out;
  Bvh tree(b);
  std::vector<int> cand;
  for (int fa = 0; fa < a.num_faces(); ++fa) {
    V3 a0 = a.vertices.row(a.faces(fa, 0));
    V3 a1 = a.vertices.row(a.faces(fa, 1));
    V3 a2 = a.vertices.row(a.faces(fa, 2));
    V3 lo = a0.cwiseMin(a1).cwiseMin(a2);
    V3 hi = a0.cwiseMax(a1).cwiseMax(a2);
    cand.clear();
    tree.query(lo, hi, cand);
    std::sort(cand.begin(), cand.end());  // deterministic pair order
    for (int fb : cand) {
      V3 b0 = b.vertices.row(b.faces(fb, 0));
      V3 b1 = b.vertices.row(b.faces(fb, 1));
      V3 b2 = b.vertices.row(b.faces(fb, 2));
      if (triangles_intersect(a0, a1, a2, b0, b1, b2)) out.push_back({fa, fb});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// penetration field

namespace {

struct FieldGrad {
  V3 dp = V3::Zero(), dq0 = V3::Zero(), dq1 = V3::Zero(), dq2 = V3::Zero();
};

// psi and optionally d(psi)/d(inputs); returns 0 outside the support
double field_eval(const V3& p, const V3& q0, const V3& q1, const V3& q2, FieldGrad* grad) {
  V3 m = (q0 + q1 + q2) / 3.0;
  V3 e1 = q1 - q0, e2 = q2 - q0;
  V3 cr = e1.cross(e2);
  double crn = cr.norm();
  if (crn < 1e-14) return 0.0;
  V3 n = cr / crn;
  V3 u = p - m;
  double h = -u.dot(n);  // depth below the plane (positive inside)
  if (h <= 0.0) return 0.0;
  double rho2 = ((q0 - m).squaredNorm() + (q1 - m).squaredNorm() + (q2 - m).squaredNorm()) / 3.0;
  V3 lat = u - u.dot(n) * n;
  double r2 = lat.squaredNorm();
  double a = 1.0 - r2 / rho2;
  if (a <= 0.0) return 0.0;
  double w = a * a;
  double psi = h * w;
  if (!grad) return psi;

  // backward: psi = h * w, w = (1 - r2/rho2)^2
  double gh = w;        // dpsi/dh
  double gw = h;        // dpsi/dw
  double g_r2 = gw * (-2.0 * a / rho2);
  double g_rho2 = gw * (2.0 * a * r2 / (rho2 * rho2));
  V3 g_lat = 2.0 * g_r2 * lat;
  double s = u.dot(n);
  V3 g_u = g_lat - g_lat.dot(n) * n;
  V3 g_n = -g_lat.dot(n) * u - s * g_lat;
  g_u += -gh * n;
  g_n += -gh * u;
  // u = p - m
  grad->dp += g_u;
  V3 g_m = -g_u;
  // rho2 wrt vertices
  grad->dq0 += g_rho2 * (2.0 / 3.0) * (q0 - m);
  grad->dq1 += g_rho2 * (2.0 / 3.0) * (q1 - m);
  grad->dq2 += g_rho2 * (2.0 / 3.0) * (q2 - m);
  // n = cr / |cr|
  V3 g_cr = (g_n - n * n.dot(g_n)) / crn;
  V3 g_e1 = e2.cross(g_cr);
  V3 g_e2 = g_cr.cross(e1);
  grad->dq1 += g_e1;
  grad->dq2 += g_e2;
  grad->dq0 += -g_e1 - g_e2;
  // m = mean of vertices
  grad->dq0 += g_m / 3.0;
  grad->dq1 += g_m / 3.0;
  grad->dq2 += g_m / 3.0;
  return psi;
}

}  // namespace

double penetration_field(const Vec3& p, const Vec3& q0, const Vec3& q1, const Vec3& q2) {
  return field_eval(p, q0, q1, q2, nullptr);
}

double penetration_loss_value(const Mesh& a, const Mesh& b, const CollisionSet& pairs) {
  double loss = 0.0;
  for (const TrianglePair& pr : pairs) {
    V3 a0 = a.vertices.row(a.faces(pr.fa, 0));
    V3 a1 = a.vertices.row(a.faces(pr.fa, 1));
    V3 a2 = a.vertices.row(a.faces(pr.fa, 2));
    V3 b0 = b.vertices.row(b.faces(pr.fb, 0));
    V3 b1 = b.vertices.row(b.faces(pr.fb, 1));
    V3 b2 = b.vertices.row(b.faces(pr.fb, 2));
    for (const V3& v : {a0, a1, a2}) {
      double psi = field_eval(v, b0, b1, b2, nullptr);
      loss += psi * psi;
    }
    for (const V3& v : {b0, b1, b2}) {
      double psi = field_eval(v, a0, a1, a2, nullptr);
      loss += psi * psi;
    }
  }
  return loss;
}

Tensor penetration_loss_op(const Tensor& verts_a, const Tensor& verts_b,
                           const Eigen::MatrixXi& faces_a, const Eigen::MatrixXi& faces_b,
                           const CollisionSet& pairs) {
  DUET_CHECK(verts_a.ndim() == 2 && verts_a.dim(1) == 3, "penetration_loss_op: [V,3] expected");
  DUET_CHECK(verts_b.ndim() == 2 && verts_b.dim(1) == 3, "penetration_loss_op: [V,3] expected");

  auto vert = [](const ArrayX& v, const Eigen::MatrixXi& faces, int f, int k) {
    int idx = faces(f, k);
    return V3(v[3 * idx], v[3 * idx + 1], v[3 * idx + 2]);
  };

  double loss = 0.0;
  for (const TrianglePair& pr : pairs)
    for (int side = 0; side < 2; ++side) {
      const ArrayX& pv = side == 0 ? verts_a.value() : verts_b.value();
      const ArrayX& qv = side == 0 ? verts_b.value() : verts_a.value();
      const Eigen::MatrixXi& pf = side == 0 ? faces_a : faces_b;
      const Eigen::MatrixXi& qf = side == 0 ? faces_b : faces_a;
      int fp = side == 0 ? pr.fa : pr.fb;
      int fq = side == 0 ? pr.fb : pr.fa;
      for (int k = 0; k < 3; ++k) {
        double psi = field_eval(vert(pv, pf, fp, k), vert(qv, qf, fq, 0),
                                vert(qv, qf, fq, 1), vert(qv, qf, fq, 2), nullptr);
        loss += psi * psi;
      }
    }

  ArrayX out(1);
  out[0] = loss;
  CollisionSet saved = pairs;
  Eigen::MatrixXi fa = faces_a, fb = faces_b;
  return make_op("penetration_loss", {1}, std::move(out), {verts_a, verts_b},
                 [saved, fa, fb, vert](ad::Node& n) {
    double g = n.grad[0];
    for (const TrianglePair& pr : saved)
      for (int side = 0; side < 2; ++side) {
        int pi = side == 0 ? 0 : 1, qi = 1 - pi;
        const ArrayX& pv = n.parents[pi]->value;
        const ArrayX& qv = n.parents[qi]->value;
        const Eigen::MatrixXi& pf = side == 0 ? fa : fb;
        const Eigen::MatrixXi& qf = side == 0 ? fb : fa;
        int fp = side == 0 ? pr.fa : pr.fb;
        int fq = side == 0 ? pr.fb : pr.fa;
        for (int k = 0; k < 3; ++k) {
          FieldGrad fg;
          V3 p = vert(pv, pf, fp, k);
          V3 q0 = vert(qv, qf, fq, 0), q1 = vert(qv, qf, fq, 1), q2 = vert(qv, qf, fq, 2);
          double psi = field_eval(p, q0, q1, q2, &fg);
          if (psi == 0.0) continue;
          double scale = 2.0 * psi * g;
          if (n.parents[pi]->requires_grad) {
            ArrayX& d = n.parents[pi]->ensure_grad();
            for (int c = 0; c < 3; ++c) d[3 * pf(fp, k) + c] += scale * fg.dp[c];
          }
          if (n.parents[qi]->requires_grad) {
            ArrayX& d = n.parents[qi]->ensure_grad();
            for (int c = 0; c < 3; ++c) {
              d[3 * qf(fq, 0) + c] += scale * fg.dq0[c];
              d[3 * qf(fq, 1) + c] += scale * fg.dq1[c];
              d[3 * qf(fq, 2) + c] += scale * fg.dq2[c];
            }
          }
        }
      }
  });
}

double penetration_loss(const Mesh& a, const Mesh& b) {
  return penetration_loss_value(a, b, detect_collisions(a, b));
}

}  // namespace duet
