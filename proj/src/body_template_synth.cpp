#include <array>
#include <cmath>
#include <vector>

#include "duet/body_model.hpp"

namespace duet {

// Procedural low-poly humanoid. Camera convention is y-down, so the head sits
// at negative y and the feet at positive y; the skeleton uses the standard
// 24-joint topology (pelvis root, spine chain, limbs, collars, head, hands).

namespace {

using V3 = Eigen::Vector3d;

constexpr int kParents[kNumJoints] = {-1, 0, 0, 0,  1,  2,  3,  4,  5,  6,  7,  8,
                                      9,  9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21};

enum J {
  PELVIS = 0, L_HIP = 1, R_HIP = 2, SPINE1 = 3, L_KNEE = 4, R_KNEE = 5, SPINE2 = 6,
  L_ANKLE = 7, R_ANKLE = 8, SPINE3 = 9, L_FOOT = 10, R_FOOT = 11, NECK = 12,
  L_COLLAR = 13, R_COLLAR = 14, HEAD = 15, L_SHOULDER = 16, R_SHOULDER = 17,
  L_ELBOW = 18, R_ELBOW = 19, L_WRIST = 20, R_WRIST = 21, L_HAND = 22, R_HAND = 23
};

struct Builder {
  std::vector<V3> verts;
  std::vector<std::array<int, 3>> faces;
  std::vector<std::array<std::pair<int, double>, 2>> weights;  // two-joint blends

  struct Patch {  // one UV-mappable parametric grid (rings x segments)
    int vert_start = 0;
    int nrings = 0, nseg = 0;
    int face_start = 0;  // side faces laid out (ring, seg, 2 tris)
    double area = 0;     // rough share for the atlas
  };
  std::vector<Patch> patches;

  int add_vert(const V3& p, int j0, double w0, int j1, double w1) {
    verts.push_back(p);
    weights.push_back({std::make_pair(j0, w0), std::make_pair(j1, w1)});
    return static_cast<int>(verts.size()) - 1;
  }

  // Tube along p0->p1 with per-ring radius and joint blend. `stations` holds
  // (joint, param) pairs; ring weights interpolate between adjacent stations.
  void add_tube(const V3& p0, const V3& p1, double r0, double r1, double sx, double sz,
                int nrings, int nseg, const std::vector<std::pair<int, double>>& stations,
                bool caps = true) {
    V3 w = (p1 - p0).normalized();
    V3 helper = std::abs(w.z()) < 0.9 ? V3(0, 0, 1) : V3(1, 0, 0);
    V3 e1 = w.cross(helper).normalized();
    V3 e2 = w.cross(e1);

    Patch patch;
    patch.vert_start = static_cast<int>(verts.size());
    patch.nrings = nrings;
    patch.nseg = nseg;
    patch.area = (p1 - p0).norm() * (r0 + r1);

    for (int i = 0; i < nrings; ++i) {
      double t = static_cast<double>(i) / (nrings - 1);
      V3 c = p0 + t * (p1 - p0);
      double r = r0 + t * (r1 - r0);
      // joint blend from stations
      int s = 0;
      while (s + 2 < static_cast<int>(stations.size()) && stations[s + 1].second < t) ++s;
      double lo = stations[s].second, hi = stations[s + 1].second;
      double f = hi > lo ? std::clamp((t - lo) / (hi - lo), 0.0, 1.0) : 0.0;
      int j0 = stations[s].first, j1 = stations[s + 1].first;
      for (int a = 0; a < nseg; ++a) {
        double phi = 2.0 * M_PI * a / nseg;
        V3 p = c + r * (std::cos(phi) * sx * e1 + std::sin(phi) * sz * e2);
        add_vert(p, j0, 1.0 - f, j1, f);
      }
    }
    patch.face_start = static_cast<int>(faces.size());
    for (int i = 0; i + 1 < nrings; ++i)
      for (int a = 0; a < nseg; ++a) {
        int a1 = (a + 1) % nseg;
        int v00 = patch.vert_start + i * nseg + a;
        int v10 = patch.vert_start + (i + 1) * nseg + a;
        int v11 = patch.vert_start + (i + 1) * nseg + a1;
        int v01 = patch.vert_start + i * nseg + a1;
        faces.push_back({v00, v10, v11});
        faces.push_back({v00, v11, v01});
      }
    patches.push_back(patch);

    if (caps) {
      int first = stations.front().first, last = stations.back().first;
      int pole0 = add_vert(p0 - w * (0.4 * r0), first, 1.0, first, 0.0);
      int pole1 = add_vert(p1 + w * (0.4 * r1), last, 1.0, last, 0.0);
      for (int a = 0; a < nseg; ++a) {
        int a1 = (a + 1) % nseg;
        faces.push_back({pole0, patch.vert_start + a1, patch.vert_start + a});
        int base = patch.vert_start + (nrings - 1) * nseg;
        faces.push_back({pole1, base + a, base + a1});
      }
    }
  }

  void add_sphere(const V3& center, double r, int nrings, int nseg, int joint) {
    Patch patch;
    patch.vert_start = static_cast<int>(verts.size());
    patch.nrings = nrings;
    patch.nseg = nseg;
    patch.area = 2.0 * r * r;
    for (int i = 0; i < nrings; ++i) {
      double theta = M_PI * (i + 1) / (nrings + 1);  // poles excluded
      for (int a = 0; a < nseg; ++a) {
        double phi = 2.0 * M_PI * a / nseg;
        V3 p = center + r * V3(std::sin(theta) * std::cos(phi), -std::cos(theta),
                               std::sin(theta) * std::sin(phi));
        add_vert(p, joint, 1.0, joint, 0.0);
      }
    }
    patch.face_start = static_cast<int>(faces.size());
    for (int i = 0; i + 1 < nrings; ++i)
      for (int a = 0; a < nseg; ++a) {
        int a1 = (a + 1) % nseg;
        int v00 = patch.vert_start + i * nseg + a;
        int v10 = patch.vert_start + (i + 1) * nseg + a;
        int v11 = patch.vert_start + (i + 1) * nseg + a1;
        int v01 = patch.vert_start + i * nseg + a1;
        faces.push_back({v00, v10, v11});
        faces.push_back({v00, v11, v01});
      }
    patches.push_back(patch);
    int top = add_vert(center + V3(0, -r, 0), joint, 1.0, joint, 0.0);
    int bottom = add_vert(center + V3(0, r, 0), joint, 1.0, joint, 0.0);
    for (int a = 0; a < nseg; ++a) {
      int a1 = (a + 1) % nseg;
      faces.push_back({top, patch.vert_start + a1, patch.vert_start + a});
      int base = patch.vert_start + (nrings - 1) * nseg;
      faces.push_back({bottom, base + a, base + a1});
    }
  }
};

}  // namespace

BodyTemplate BodyTemplate::make_synthetic(int uv_res) {
  DUET_CHECK(uv_res >= 16, "make_synthetic: uv_res too small");

  // rest skeleton, meters, y-down, T-pose with arms along +-x
  std::array<V3, kNumJoints> joint;
  joint[PELVIS] = V3(0, 0, 0);
  joint[L_HIP] = V3(0.09, 0.06, 0);
  joint[R_HIP] = V3(-0.09, 0.06, 0);
  joint[SPINE1] = V3(0, -0.12, 0);
  joint[L_KNEE] = V3(0.10, 0.48, 0);
  joint[R_KNEE] = V3(-0.10, 0.48, 0);
  joint[SPINE2] = V3(0, -0.24, 0);
  joint[L_ANKLE] = V3(0.105, 0.88, 0);
  joint[R_ANKLE] = V3(-0.105, 0.88, 0);
  joint[SPINE3] = V3(0, -0.33, 0);
  joint[L_FOOT] = V3(0.11, 0.95, -0.10);
  joint[R_FOOT] = V3(-0.11, 0.95, -0.10);
  joint[NECK] = V3(0, -0.46, 0);
  joint[L_COLLAR] = V3(0.07, -0.41, 0);
  joint[R_COLLAR] = V3(-0.07, -0.41, 0);
  joint[HEAD] = V3(0, -0.56, 0);
  joint[L_SHOULDER] = V3(0.18, -0.42, 0);
  joint[R_SHOULDER] = V3(-0.18, -0.42, 0);
  joint[L_ELBOW] = V3(0.44, -0.42, 0);
  joint[R_ELBOW] = V3(-0.44, -0.42, 0);
  joint[L_WRIST] = V3(0.68, -0.42, 0);
  joint[R_WRIST] = V3(-0.68, -0.42, 0);
  joint[L_HAND] = V3(0.76, -0.42, 0);
  joint[R_HAND] = V3(-0.76, -0.42, 0);

  Builder b;
  // torso from pelvis bottom to neck, blended across the spine chain
  b.add_tube(V3(0, 0.10, 0), joint[NECK], 0.125, 0.105, 1.0, 0.62, 7, 12,
             {{PELVIS, 0.0}, {SPINE1, 0.35}, {SPINE2, 0.55}, {SPINE3, 0.75}, {NECK, 1.0}});
  b.add_tube(joint[NECK], joint[HEAD], 0.045, 0.05, 1.0, 1.0, 3, 8,
             {{NECK, 0.0}, {HEAD, 1.0}});
  b.add_sphere(joint[HEAD] + V3(0, -0.07, 0.01), 0.105, 7, 10, HEAD);
  for (int side = 0; side < 2; ++side) {
    int hip = side ? R_HIP : L_HIP, knee = side ? R_KNEE : L_KNEE;
    int ankle = side ? R_ANKLE : L_ANKLE, foot = side ? R_FOOT : L_FOOT;
    int sho = side ? R_SHOULDER : L_SHOULDER, elb = side ? R_ELBOW : L_ELBOW;
    int wri = side ? R_WRIST : L_WRIST, hand = side ? R_HAND : L_HAND;
    b.add_tube(joint[hip], joint[knee], 0.072, 0.052, 1.0, 1.0, 5, 9,
               {{hip, 0.0}, {hip, 0.72}, {knee, 1.0}});
    b.add_tube(joint[knee], joint[ankle], 0.052, 0.036, 1.0, 1.0, 5, 9,
               {{knee, 0.0}, {knee, 0.72}, {ankle, 1.0}});
    b.add_tube(joint[ankle] + V3(0, 0.02, 0.05), joint[foot] + V3(0, 0.02, -0.04), 0.035,
               0.032, 1.0, 1.0, 3, 8, {{ankle, 0.0}, {ankle, 0.6}, {foot, 1.0}});
    b.add_tube(joint[sho], joint[elb], 0.046, 0.038, 1.0, 1.0, 5, 8,
               {{sho, 0.0}, {sho, 0.72}, {elb, 1.0}});
    b.add_tube(joint[elb], joint[wri], 0.038, 0.03, 1.0, 1.0, 5, 8,
               {{elb, 0.0}, {elb, 0.72}, {wri, 1.0}});
    b.add_tube(joint[wri], joint[hand] + V3(side ? -0.02 : 0.02, 0, 0), 0.03, 0.024,
               1.0, 0.6, 3, 6, {{wri, 0.0}, {wri, 0.6}, {hand, 1.0}});
  }

  BodyTemplate t;
  int V = static_cast<int>(b.verts.size());
  t.vertices.resize(V, 3);
  for (int v = 0; v < V; ++v) t.vertices.row(v) = b.verts[v].transpose();
  t.faces.resize(b.faces.size(), 3);
  for (size_t f = 0; f < b.faces.size(); ++f)
    for (int k = 0; k < 3; ++k) t.faces(static_cast<int>(f), k) = b.faces[f][k];
  t.parents.assign(kParents, kParents + kNumJoints);

  t.skin_weights = MatX::Zero(V, kNumJoints);
  for (int v = 0; v < V; ++v) {
    for (const auto& [j, w] : b.weights[v])
      if (w > 0) t.skin_weights(v, j) += w;
    t.skin_weights.row(v) /= t.skin_weights.row(v).sum();
  }

  // joint regressor: inverse-distance weights over the nearest vertices
  t.joint_regressor = MatX::Zero(kNumJoints, V);
  for (int j = 0; j < kNumJoints; ++j) {
    std::vector<std::pair<double, int>> d(V);
    for (int v = 0; v < V; ++v) d[v] = {(b.verts[v] - joint[j]).squaredNorm(), v};
    std::partial_sort(d.begin(), d.begin() + 12, d.end());
    double sigma2 = std::max(d[11].first, 1e-6);
    double sum = 0;
    for (int k = 0; k < 12; ++k) {
      double w = std::exp(-d[k].first / sigma2);
      t.joint_regressor(j, d[k].second) = w;
      sum += w;
    }
    t.joint_regressor.row(j) /= sum;
  }

  // shape basis: smooth displacement fields over the rest vertices (meters
  // per unit coefficient)
  t.shape_basis = MatX::Zero(kShapeDim, 3 * V);
  V3 head_c = joint[HEAD] + V3(0, -0.07, 0.01);
  for (int v = 0; v < V; ++v) {
    const V3 p = b.verts[v];
    auto set = [&](int k, const V3& d) { t.shape_basis.block<1, 3>(k, 3 * v) = d.transpose(); };
    set(0, 0.05 * p);                                    // overall scale
    set(1, V3(0, 0.05 * p.y(), 0));                      // height
    set(2, V3(0.04 * p.x(), 0, 0.025 * p.z()));          // width
    double torso = std::exp(-std::pow((p.y() + 0.22) / 0.25, 2));
    set(3, torso * V3(0.03 * p.x(), 0, 0.05 * p.z()));   // torso girth
    double arm = std::max(0.0, std::abs(p.x()) - 0.18);
    set(4, V3(0.06 * arm * (p.x() > 0 ? 1 : -1), 0, 0)); // arm length
    double leg = std::max(0.0, p.y() - 0.06);
    set(5, V3(0, 0.06 * leg, 0));                        // leg length
    double head = std::exp(-(p - head_c).squaredNorm() / (2 * 0.12 * 0.12));
    set(6, head * 0.04 * (p - head_c));                  // head size
    double belly = std::exp(-(p - V3(0, -0.08, 0.08)).squaredNorm() / (2 * 0.18 * 0.18));
    set(7, belly * V3(0, 0.01, 0.05));                   // belly
    double sho = std::exp(-std::pow((p.y() + 0.42) / 0.10, 2));
    set(8, sho * V3(0.04 * p.x(), 0, 0));                // shoulder width
    double hip = std::exp(-std::pow((p.y() - 0.05) / 0.12, 2));
    set(9, hip * V3(0.04 * p.x(), 0, 0.02 * p.z()));     // hip width
  }

  // uv atlas: one horizontal band per patch, rows split by ring share
  t.uvmap.width = uv_res;
  t.uvmap.height = uv_res;
  t.uvmap.face.assign(uv_res * uv_res, -1);
  t.uvmap.bary = MatX::Zero(uv_res * uv_res, 3);
  double total_rings = 0;
  for (const auto& p : b.patches) total_rings += p.nrings - 1;
  int row = 0;
  for (const auto& p : b.patches) {
    int band = std::max(2, static_cast<int>(std::floor((p.nrings - 1) / total_rings * uv_res)));
    band = std::min(band, uv_res - row);
    if (band <= 0) break;
    for (int i = 0; i < band; ++i) {
      double tpar = (i + 0.5) / band * (p.nrings - 1);
      int it = std::min(static_cast<int>(tpar), p.nrings - 2);
      double ft = tpar - it;
      for (int jcol = 0; jcol < uv_res; ++jcol) {
        double apar = (jcol + 0.5) / uv_res * p.nseg;
        int ia = std::min(static_cast<int>(apar), p.nseg - 1);
        double fa = apar - ia;
        int cell_face = p.face_start + 2 * (it * p.nseg + ia);
        int texel = (row + i) * uv_res + jcol;
        if (ft >= fa) {  // triangle (v00, v10, v11)
          t.uvmap.face[texel] = cell_face;
          t.uvmap.bary.row(texel) << 1.0 - ft, ft - fa, fa;
        } else {  // triangle (v00, v11, v01)
          t.uvmap.face[texel] = cell_face + 1;
          t.uvmap.bary.row(texel) << 1.0 - fa, ft, fa - ft;
        }
      }
    }
    row += band;
    if (row >= uv_res) break;
  }

  t.validate();
  return t;
}

}  // namespace duet
