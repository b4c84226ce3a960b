#pragma once

#include "duet/body_model.hpp"
#include "duet/collision.hpp"

namespace duet::testutil {

inline Mesh make_uv_sphere(const Vec3& center, double r, int nlat = 10, int nlon = 14) {
  std::vector<Vec3> verts;
  std::vector<std::array<int, 3>> faces;
  for (int i = 1; i < nlat; ++i) {
    double theta = M_PI * i / nlat;
    for (int a = 0; a < nlon; ++a) {
      double phi = 2 * M_PI * a / nlon;
      verts.push_back(center + r * Vec3(std::sin(theta) * std::cos(phi), std::cos(theta),
                                        std::sin(theta) * std::sin(phi)));
    }
  }
  int top = static_cast<int>(verts.size());
  verts.push_back(center + Vec3(0, r, 0));
  int bottom = top + 1;
  verts.push_back(center + Vec3(0, -r, 0));
  auto ring = [&](int i, int a) { return i * nlon + (a % nlon); };
  for (int i = 0; i + 2 < nlat; ++i)
    for (int a = 0; a < nlon; ++a) {
      faces.push_back({ring(i, a), ring(i + 1, a), ring(i + 1, a + 1)});
      faces.push_back({ring(i, a), ring(i + 1, a + 1), ring(i, a + 1)});
    }
  for (int a = 0; a < nlon; ++a) {
    faces.push_back({top, ring(0, a), ring(0, a + 1)});
    faces.push_back({bottom, ring(nlat - 2, a + 1), ring(nlat - 2, a)});
  }
  MatX V(verts.size(), 3);
  for (size_t i = 0; i < verts.size(); ++i) V.row(i) = verts[i].transpose();
  Eigen::MatrixXi F(faces.size(), 3);
  for (size_t i = 0; i < faces.size(); ++i)
    for (int k = 0; k < 3; ++k) F(static_cast<int>(i), k) = faces[i][k];
  return Mesh::make(std::move(V), std::move(F));
}

inline Mesh make_box(const Vec3& center, const Vec3& half) {
  MatX V(8, 3);
  int i = 0;
  for (int sx : {-1, 1})
    for (int sy : {-1, 1})
      for (int sz : {-1, 1})
        V.row(i++) = (center + Vec3(sx * half.x(), sy * half.y(), sz * half.z())).transpose();
  Eigen::MatrixXi F(12, 3);
  int quads[6][4] = {{0, 1, 3, 2}, {4, 6, 7, 5}, {0, 4, 5, 1},
                     {2, 3, 7, 6}, {0, 2, 6, 4}, {1, 5, 7, 3}};
  for (int q = 0; q < 6; ++q) {
    F.row(2 * q) << quads[q][0], quads[q][1], quads[q][2];
    F.row(2 * q + 1) << quads[q][0], quads[q][2], quads[q][3];
  }
  return Mesh::make(std::move(V), std::move(F));
}

// Independent triangle-triangle oracle built on segment-triangle crossings
// (does not share code with the library's interval test).
inline bool seg_hits_triangle(const Vec3& a, const Vec3& b, const Vec3& t0, const Vec3& t1,
                              const Vec3& t2) {
  Vec3 n = (t1 - t0).cross(t2 - t0);
  double da = n.dot(a - t0), db = n.dot(b - t0);
  if (da * db > 0) return false;
  if (da == db) return false;  // parallel (coplanar ignored)
  double s = da / (da - db);
  Vec3 p = a + s * (b - a);
  // inside test via same-side checks
  auto side = [&](const Vec3& u, const Vec3& v) { return (v - u).cross(p - u).dot(n); };
  double s0 = side(t0, t1), s1 = side(t1, t2), s2 = side(t2, t0);
  return (s0 >= 0 && s1 >= 0 && s2 >= 0) || (s0 <= 0 && s1 <= 0 && s2 <= 0);
}

inline bool tri_tri_oracle(const Vec3& a0, const Vec3& a1, const Vec3& a2, const Vec3& b0,
                           const Vec3& b1, const Vec3& b2) {
  return seg_hits_triangle(a0, a1, b0, b1, b2) || seg_hits_triangle(a1, a2, b0, b1, b2) ||
         seg_hits_triangle(a2, a0, b0, b1, b2) || seg_hits_triangle(b0, b1, a0, a1, a2) ||
         seg_hits_triangle(b1, b2, a0, a1, a2) || seg_hits_triangle(b2, b0, a0, a1, a2);
}

inline CollisionSet detect_collisions_brute(const Mesh& a, const Mesh& b) {
  CollisionSet out;
  for (int fa = 0; fa < a.num_faces(); ++fa)
    for (int fb = 0; fb < b.num_faces(); ++fb) {
      Vec3 a0 = a.vertices.row(a.faces(fa, 0)), a1 = a.vertices.row(a.faces(fa, 1)),
           a2 = a.vertices.row(a.faces(fa, 2));
      Vec3 b0 = b.vertices.row(b.faces(fb, 0)), b1 = b.vertices.row(b.faces(fb, 1)),
           b2 = b.vertices.row(b.faces(fb, 2));
      if (tri_tri_oracle(a0, a1, a2, b0, b1, b2)) out.push_back({fa, fb});
    }
  return out;
}

}  // namespace duet::testutil
