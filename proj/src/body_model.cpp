#include "duet/body_model.hpp"

#include <array>
#include <iostream>

#include "duet/ops.hpp"
#include "duet/serialize.hpp"

namespace duet {

namespace {
constexpr double kDegenEps = 1e-8;

using V3 = Eigen::Vector3d;
using M3 = Eigen::Matrix3d;

V3 row3(const ArrayX& a, int i) { return V3(a[3 * i], a[3 * i + 1], a[3 * i + 2]); }
M3 rowmat3(const double* p) {
  M3 m;
  m << p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7], p[8];
  return m;
}
void put_mat3(double* p, const M3& m) {
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) p[3 * i + j] = m(i, j);
}
}  // namespace

// ---------------------------------------------------------------------------
// params

void PersonParams::validate() const {
  DUET_CHECK(pose.size() == kPoseDim, "PersonParams: pose length ", pose.size());
  DUET_CHECK(shape.size() == kShapeDim, "PersonParams: shape length ", shape.size());
  DUET_CHECK(all_finite(pose) && all_finite(shape) && translation.allFinite(),
             "PersonParams: non-finite value");
}

ArrayX PersonParams::flat() const {
  ArrayX out(kPersonDim);
  out.segment(0, kPoseDim) = pose;
  out.segment(kPoseDim, kShapeDim) = shape;
  out.segment(kPoseDim + kShapeDim, 3) = translation.array();
  return out;
}

PersonParams PersonParams::from_flat(const ArrayX& v) {
  DUET_CHECK(v.size() == kPersonDim, "PersonParams::from_flat: size ", v.size());
  PersonParams p;
  p.pose = v.segment(0, kPoseDim);
  p.shape = v.segment(kPoseDim, kShapeDim);
  p.translation = V3(v[kPoseDim + kShapeDim], v[kPoseDim + kShapeDim + 1],
                     v[kPoseDim + kShapeDim + 2]);
  return p;
}

PersonParams PersonParams::rest() {
  PersonParams p;
  for (int j = 0; j < kNumJoints; ++j) {
    p.pose[6 * j + 0] = 1.0;  // identity 6D: first two columns of I
    p.pose[6 * j + 4] = 1.0;
  }
  return p;
}

ArrayX MotionSequence::flat() const {
  ArrayX out(num_frames() * 2 * kPersonDim);
  for (int i = 0; i < num_frames(); ++i)
    for (int p = 0; p < 2; ++p)
      out.segment((i * 2 + p) * kPersonDim, kPersonDim) = frames[i][p].flat();
  return out;
}

MotionSequence MotionSequence::from_flat(const ArrayX& v, int num_frames) {
  DUET_CHECK(v.size() == static_cast<int64_t>(num_frames) * 2 * kPersonDim,
             "MotionSequence::from_flat: size mismatch");
  MotionSequence m;
  m.frames.resize(num_frames);
  for (int i = 0; i < num_frames; ++i)
    for (int p = 0; p < 2; ++p)
      m.frames[i][p] = PersonParams::from_flat(v.segment((i * 2 + p) * kPersonDim, kPersonDim));
  return m;
}

void MotionSequence::validate() const {
  for (const auto& f : frames) {
    f[0].validate();
    f[1].validate();
  }
}

// ---------------------------------------------------------------------------
// mesh

Mesh Mesh::make(MatX vertices, Eigen::MatrixXi faces) {
  Mesh m;
  m.vertices = std::move(vertices);
  m.faces = std::move(faces);
  m.recompute_normals();
  return m;
}

void Mesh::recompute_normals() {
  face_normals.resize(faces.rows(), 3);
  for (int f = 0; f < faces.rows(); ++f) {
    V3 a = vertices.row(faces(f, 0));
    V3 b = vertices.row(faces(f, 1));
    V3 c = vertices.row(faces(f, 2));
    V3 n = (b - a).cross(c - a);
    double len = n.norm();
    if (len > 1e-14)
      face_normals.row(f) = (n / len).transpose();
    else
      face_normals.row(f) = V3(0, 0, 1).transpose();
  }
}

// ---------------------------------------------------------------------------
// uv map

std::vector<int> UVCoordinateMap::bound_texels() const {
  std::vector<int> out;
  for (int i = 0; i < num_texels(); ++i)
    if (face[i] >= 0) out.push_back(i);
  return out;
}

void UVCoordinateMap::validate(int num_faces) const {
  DUET_CHECK(static_cast<int>(face.size()) == num_texels(), "uvmap: face table size");
  DUET_CHECK(bary.rows() == num_texels(), "uvmap: bary table size");
  for (int i = 0; i < num_texels(); ++i) {
    if (face[i] < 0) continue;
    DUET_CHECK(face[i] < num_faces, "uvmap: face index out of range at texel ", i);
    double s = bary.row(i).sum();
    DUET_CHECK(std::abs(s - 1.0) <= 1e-6, "uvmap: barycentric sum ", s, " at texel ", i);
    DUET_CHECK(bary.row(i).minCoeff() >= -1e-9, "uvmap: negative barycentric at texel ", i);
  }
}

// ---------------------------------------------------------------------------
// 6D rotations

Mat3 rot6d_to_matrix(const Eigen::Matrix<double, 6, 1>& r, bool* degenerate) {
  DUET_CHECK(r.allFinite(), "rot6d_to_matrix: non-finite input");
  bool degen = false;
  V3 a1 = r.head<3>(), a2 = r.tail<3>();
  V3 b1;
  if (a1.norm() < kDegenEps) {
    b1 = V3::UnitX();
    degen = true;
  } else {
    b1 = a1.normalized();
  }
  V3 u = a2 - b1.dot(a2) * b1;
  V3 b2;
  if (u.norm() < kDegenEps) {
    int axis = 0;
    for (int k = 1; k < 3; ++k)
      if (std::abs(b1[k]) < std::abs(b1[axis])) axis = k;
    V3 e = V3::Unit(axis);
    b2 = (e - b1.dot(e) * b1).normalized();
    degen = true;
  } else {
    b2 = u.normalized();
  }
  if (degenerate) *degenerate = degen;
  Mat3 m;
  m.col(0) = b1;
  m.col(1) = b2;
  m.col(2) = b1.cross(b2);
  return m;
}

Eigen::Matrix<double, 6, 1> matrix_to_rot6d(const Mat3& m) {
  Eigen::Matrix<double, 6, 1> r;
  r.head<3>() = m.col(0);
  r.tail<3>() = m.col(1);
  return r;
}

Tensor rot6d_to_mats(const Tensor& pose) {
  DUET_CHECK(pose.ndim() == 2 && pose.dim(1) == kPoseDim, "rot6d_to_mats: expects [B,144]");
  int B = pose.dim(0);
  ArrayX out(B * kNumJoints * 9);
  const ArrayX& in = pose.value();
  for (int b = 0; b < B; ++b)
    for (int j = 0; j < kNumJoints; ++j) {
      Eigen::Matrix<double, 6, 1> r;
      for (int k = 0; k < 6; ++k) r[k] = in[b * kPoseDim + 6 * j + k];
      put_mat3(out.data() + (b * kNumJoints + j) * 9, rot6d_to_matrix(r));
    }

  return make_op("rot6d_to_mats", {B, kNumJoints * 9}, std::move(out), {pose},
                 [B](ad::Node& n) {
    if (!n.parents[0]->requires_grad) return;
    const ArrayX& in = n.parents[0]->value;
    ArrayX& din = n.parents[0]->ensure_grad();
    for (int b = 0; b < B; ++b)
      for (int j = 0; j < kNumJoints; ++j) {
        V3 a1, a2;
        for (int k = 0; k < 3; ++k) {
          a1[k] = in[b * kPoseDim + 6 * j + k];
          a2[k] = in[b * kPoseDim + 6 * j + 3 + k];
        }
        const double* g = n.grad.data() + (b * kNumJoints + j) * 9;
        V3 g1(g[0], g[3], g[6]), g2(g[1], g[4], g[7]), g3(g[2], g[5], g[8]);

        double n1 = a1.norm();
        bool deg1 = n1 < kDegenEps;
        V3 b1 = deg1 ? V3::UnitX() : V3(a1 / n1);
        double d = b1.dot(a2);
        V3 u = a2 - d * b1;
        double n2 = u.norm();
        bool deg2 = n2 < kDegenEps;
        V3 b2;
        if (deg2) {
          int axis = 0;
          for (int k = 1; k < 3; ++k)
            if (std::abs(b1[k]) < std::abs(b1[axis])) axis = k;
          V3 e = V3::Unit(axis);
          b2 = (e - b1.dot(e) * b1).normalized();
        } else {
          b2 = u / n2;
        }

        // b3 = b1 x b2
        g1 += b2.cross(g3);
        g2 += g3.cross(b1);
        V3 ga1 = V3::Zero(), ga2 = V3::Zero();
        if (!deg2) {
          V3 gu = (g2 - b2 * b2.dot(g2)) / n2;
          ga2 += gu - b1 * b1.dot(gu);
          g1 += -a2 * b1.dot(gu) - d * gu;
        }
        if (!deg1) ga1 = (g1 - b1 * b1.dot(g1)) / n1;
        for (int k = 0; k < 3; ++k) {
          din[b * kPoseDim + 6 * j + k] += ga1[k];
          din[b * kPoseDim + 6 * j + 3 + k] += ga2[k];
        }
      }
  });
}

// ---------------------------------------------------------------------------
// rigid-transform ops (row batches of [R(9) | t(3)])

namespace {

// G = Gp * A with A = [Ra | ta]
Tensor compose_rigid(const Tensor& gp, const Tensor& ra, const Tensor& ta) {
  int B = gp.dim(0);
  DUET_CHECK(gp.dim(1) == 12 && ra.dim(1) == 9 && ta.dim(1) == 3 && ra.dim(0) == B &&
                 ta.dim(0) == B,
             "compose_rigid: bad shapes");
  ArrayX out(B * 12);
  for (int b = 0; b < B; ++b) {
    M3 Rp = rowmat3(gp.value().data() + b * 12);
    V3 tp = row3(gp.value(), 4 * b + 3);  // gp row layout: 9 rot + 3 trans
    M3 Ra = rowmat3(ra.value().data() + b * 9);
    V3 tav = row3(ta.value(), b);
    M3 Rc = Rp * Ra;
    V3 tc = Rp * tav + tp;
    put_mat3(out.data() + b * 12, Rc);
    for (int k = 0; k < 3; ++k) out[b * 12 + 9 + k] = tc[k];
  }
  return make_op("compose_rigid", {B, 12}, std::move(out), {gp, ra, ta}, [B](ad::Node& n) {
    const ArrayX& gpv = n.parents[0]->value;
    const ArrayX& rav = n.parents[1]->value;
    const ArrayX& tav = n.parents[2]->value;
    for (int b = 0; b < B; ++b) {
      M3 Rp = rowmat3(gpv.data() + b * 12);
      M3 Ra = rowmat3(rav.data() + b * 9);
      V3 tvec = row3(tav, b);
      M3 gRc = rowmat3(n.grad.data() + b * 12);
      V3 gtc(n.grad[b * 12 + 9], n.grad[b * 12 + 10], n.grad[b * 12 + 11]);
      if (n.parents[0]->requires_grad) {
        M3 dRp = gRc * Ra.transpose() + gtc * tvec.transpose();
        ArrayX& d = n.parents[0]->ensure_grad();
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j) d[b * 12 + 3 * i + j] += dRp(i, j);
        for (int k = 0; k < 3; ++k) d[b * 12 + 9 + k] += gtc[k];
      }
      if (n.parents[1]->requires_grad) {
        M3 dRa = Rp.transpose() * gRc;
        ArrayX& d = n.parents[1]->ensure_grad();
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j) d[b * 9 + 3 * i + j] += dRa(i, j);
      }
      if (n.parents[2]->requires_grad) {
        V3 dta = Rp.transpose() * gtc;
        ArrayX& d = n.parents[2]->ensure_grad();
        for (int k = 0; k < 3; ++k) d[b * 3 + k] += dta[k];
      }
    }
  });
}

// y_i = R_i x_i
Tensor rotate_rows(const Tensor& r, const Tensor& x) {
  int B = r.dim(0);
  DUET_CHECK(r.dim(1) == 9 && x.dim(0) == B && x.dim(1) == 3, "rotate_rows: bad shapes");
  ArrayX out(B * 3);
  for (int b = 0; b < B; ++b) {
    V3 y = rowmat3(r.value().data() + b * 9) * row3(x.value(), b);
    for (int k = 0; k < 3; ++k) out[b * 3 + k] = y[k];
  }
  return make_op("rotate_rows", {B, 3}, std::move(out), {r, x}, [B](ad::Node& n) {
    const ArrayX& rv = n.parents[0]->value;
    const ArrayX& xv = n.parents[1]->value;
    for (int b = 0; b < B; ++b) {
      V3 g = row3(n.grad, b);
      if (n.parents[0]->requires_grad) {
        V3 x = row3(xv, b);
        ArrayX& d = n.parents[0]->ensure_grad();
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j) d[b * 9 + 3 * i + j] += g[i] * x[j];
      }
      if (n.parents[1]->requires_grad) {
        V3 dx = rowmat3(rv.data() + b * 9).transpose() * g;
        ArrayX& d = n.parents[1]->ensure_grad();
        for (int k = 0; k < 3; ++k) d[b * 3 + k] += dx[k];
      }
    }
  });
}

// y_i = R_i x_i + t_i with rows [R(9)|t(3)]
Tensor apply_transform_rows(const Tensor& t, const Tensor& x) {
  int B = t.dim(0);
  DUET_CHECK(t.dim(1) == 12 && x.dim(0) == B && x.dim(1) == 3,
             "apply_transform_rows: bad shapes");
  ArrayX out(B * 3);
  for (int b = 0; b < B; ++b) {
    V3 y = rowmat3(t.value().data() + b * 12) * row3(x.value(), b);
    for (int k = 0; k < 3; ++k) out[b * 3 + k] = y[k] + t.value()[b * 12 + 9 + k];
  }
  return make_op("apply_transform_rows", {B, 3}, std::move(out), {t, x}, [B](ad::Node& n) {
    const ArrayX& tv = n.parents[0]->value;
    const ArrayX& xv = n.parents[1]->value;
    for (int b = 0; b < B; ++b) {
      V3 g = row3(n.grad, b);
      if (n.parents[0]->requires_grad) {
        V3 x = row3(xv, b);
        ArrayX& d = n.parents[0]->ensure_grad();
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j) d[b * 12 + 3 * i + j] += g[i] * x[j];
        for (int k = 0; k < 3; ++k) d[b * 12 + 9 + k] += g[k];
      }
      if (n.parents[1]->requires_grad) {
        V3 dx = rowmat3(tv.data() + b * 12).transpose() * g;
        ArrayX& d = n.parents[1]->ensure_grad();
        for (int k = 0; k < 3; ++k) d[b * 3 + k] += dx[k];
      }
    }
  });
}

Tensor const_tensor(const MatX& m) {
  ArrayX a(m.size());
  std::copy(m.data(), m.data() + m.size(), a.data());
  return Tensor::from({static_cast<int>(m.rows()), static_cast<int>(m.cols())}, std::move(a));
}

struct FkResult {
  std::vector<Tensor> globals;  // per joint [B,12]
  Tensor rest_joints;           // [B,72]
};

// forward kinematics over row batches
FkResult fk_transforms(const Tensor& pose, const Tensor& shape, const BodyTemplate& tmpl) {
  int B = pose.dim(0);
  DUET_CHECK(shape.dim(0) == B && shape.dim(1) == kShapeDim, "fk: bad shape tensor");

  // rest joints as a linear function of shape: J0 + beta * JB
  MatX J0m = tmpl.joint_regressor * tmpl.vertices;  // 24x3
  MatX JB(kShapeDim, kNumJoints * 3);
  for (int k = 0; k < kShapeDim; ++k) {
    ConstMatMap basis_k(tmpl.shape_basis.row(k).data(), tmpl.num_vertices(), 3);
    MatX jb = tmpl.joint_regressor * basis_k;  // 24x3
    JB.row(k) = Eigen::Map<Eigen::RowVectorXd>(jb.data(), jb.size());
  }
  Tensor j0 = Tensor::from({kNumJoints * 3},
                           Eigen::Map<ArrayX>(MatX(J0m).data(), J0m.size()));
  Tensor restj = ops::add_rowvec(ops::matmul(shape, const_tensor(JB)), j0);  // [B,72]

  Tensor rots = rot6d_to_mats(pose);  // [B,216]

  FkResult fk;
  fk.rest_joints = restj;
  fk.globals.resize(kNumJoints);
  for (int j = 0; j < kNumJoints; ++j) {
    Tensor rj = ops::slice_cols(rots, 9 * j, 9);
    Tensor restj_j = ops::slice_cols(restj, 3 * j, 3);
    if (j == 0) {
      fk.globals[0] = ops::concat_cols({rj, restj_j});
    } else {
      int p = tmpl.parents[j];
      Tensor tj = ops::sub(restj_j, ops::slice_cols(restj, 3 * p, 3));
      fk.globals[j] = compose_rigid(fk.globals[p], rj, tj);
    }
  }
  return fk;
}

}  // namespace

SkinResult skin(const Tensor& pose, const Tensor& shape, const Tensor& translation,
                const BodyTemplate& tmpl) {
  DUET_CHECK(pose.size() == kPoseDim && shape.size() == kShapeDim && translation.size() == 3,
             "skin: bad parameter sizes");
  Tensor pose_b = ops::reshape(pose, {1, kPoseDim});
  Tensor shape_b = ops::reshape(shape, {1, kShapeDim});
  int V = tmpl.num_vertices();

  // shaped rest vertices: template + beta * basis
  Tensor disp = ops::matmul(shape_b, const_tensor(tmpl.shape_basis));  // [1,3V]
  ArrayX tmpl_flat(V * 3);
  std::copy(tmpl.vertices.data(), tmpl.vertices.data() + V * 3, tmpl_flat.data());
  Tensor v_rest = ops::reshape(ops::add_const(disp, tmpl_flat), {V, 3});

  FkResult fk = fk_transforms(pose_b, shape_b, tmpl);

  // skinning transforms S_j = [R_j | t_j - R_j * restJ_j]
  std::vector<Tensor> srows;
  std::vector<Tensor> jrows;
  for (int j = 0; j < kNumJoints; ++j) {
    Tensor rj = ops::slice_cols(fk.globals[j], 0, 9);
    Tensor tj = ops::slice_cols(fk.globals[j], 9, 3);
    Tensor restj_j = ops::slice_cols(fk.rest_joints, 3 * j, 3);
    Tensor st = ops::sub(tj, rotate_rows(rj, restj_j));
    srows.push_back(ops::concat_cols({rj, st}));
    jrows.push_back(tj);
  }
  Tensor S = ops::concat_dim0(srows);                          // [24,12]
  Tensor T = ops::matmul(const_tensor(tmpl.skin_weights), S);  // [V,12]
  Tensor v_posed = apply_transform_rows(T, v_rest);

  SkinResult out;
  out.vertices = ops::add_rowvec(v_posed, translation);
  out.joints = ops::add_rowvec(ops::concat_dim0(jrows), translation);
  return out;
}

Tensor fk_joints(const Tensor& pose, const Tensor& shape, const Tensor& trans,
                 const BodyTemplate& tmpl) {
  int B = pose.dim(0);
  DUET_CHECK(trans.dim(0) == B && trans.dim(1) == 3, "fk_joints: bad trans");
  FkResult fk = fk_transforms(pose, shape, tmpl);
  std::vector<Tensor> cols;
  for (int j = 0; j < kNumJoints; ++j) cols.push_back(ops::slice_cols(fk.globals[j], 9, 3));
  Tensor joints = ops::concat_cols(cols);  // [B,72]
  // tile translation across joints
  MatX tile = MatX::Zero(3, kNumJoints * 3);
  for (int j = 0; j < kNumJoints; ++j)
    for (int k = 0; k < 3; ++k) tile(k, 3 * j + k) = 1.0;
  return ops::add(joints, ops::matmul(trans, const_tensor(tile)));
}

Mesh skin_mesh(const PersonParams& p, const BodyTemplate& tmpl) {
  Tensor pose = Tensor::from({kPoseDim}, p.pose);
  Tensor shape = Tensor::from({kShapeDim}, p.shape);
  Tensor trans = Tensor::from({3}, ArrayX(p.translation.array()));
  SkinResult r = skin(pose, shape, trans, tmpl);
  MatX verts(tmpl.num_vertices(), 3);
  std::copy(r.vertices.value().data(), r.vertices.value().data() + verts.size(), verts.data());
  return Mesh::make(std::move(verts), tmpl.faces);
}

MatX skin_joints(const PersonParams& p, const BodyTemplate& tmpl) {
  Tensor pose = Tensor::from({1, kPoseDim}, p.pose);
  Tensor shape = Tensor::from({1, kShapeDim}, p.shape);
  Tensor trans = Tensor::from({1, 3}, ArrayX(p.translation.array()));
  Tensor j = fk_joints(pose, shape, trans, tmpl);
  MatX out(kNumJoints, 3);
  std::copy(j.value().data(), j.value().data() + out.size(), out.data());
  return out;
}

// ---------------------------------------------------------------------------
// uv binding

SurfacePoints uv_to_surface(const UVCoordinateMap& uvmap, const Mesh& mesh) {
  uvmap.validate(mesh.num_faces());
  std::vector<int> bound = uvmap.bound_texels();
  SurfacePoints sp;
  sp.points.resize(bound.size(), 3);
  sp.frames.resize(bound.size(), 9);
  for (size_t i = 0; i < bound.size(); ++i) {
    int t = bound[i];
    int f = uvmap.face[t];
    V3 a = mesh.vertices.row(mesh.faces(f, 0));
    V3 b = mesh.vertices.row(mesh.faces(f, 1));
    V3 c = mesh.vertices.row(mesh.faces(f, 2));
    sp.points.row(i) =
        (uvmap.bary(t, 0) * a + uvmap.bary(t, 1) * b + uvmap.bary(t, 2) * c).transpose();
    V3 t1 = (b - a).normalized();
    V3 n = (b - a).cross(c - a).normalized();
    V3 t2 = n.cross(t1);
    M3 fr;
    fr.col(0) = t1;
    fr.col(1) = t2;
    fr.col(2) = n;
    put_mat3(sp.frames.row(i).data(), fr);
  }
  return sp;
}

Tensor uv_surface_op(const Tensor& vertices, const UVCoordinateMap& uvmap,
                     const Eigen::MatrixXi& faces) {
  DUET_CHECK(vertices.ndim() == 2 && vertices.dim(1) == 3, "uv_surface_op: expects [V,3]");
  std::vector<int> bound = uvmap.bound_texels();
  int T = static_cast<int>(bound.size());
  int F = static_cast<int>(faces.rows());
  for (int t : bound) DUET_CHECK(uvmap.face[t] < F, "uv_surface_op: face index out of range");

  const ArrayX& vv = vertices.value();
  ArrayX out(T * 12);
  for (int i = 0; i < T; ++i) {
    int t = bound[i];
    int f = uvmap.face[t];
    V3 a = row3(vv, faces(f, 0)), b = row3(vv, faces(f, 1)), c = row3(vv, faces(f, 2));
    V3 p = uvmap.bary(t, 0) * a + uvmap.bary(t, 1) * b + uvmap.bary(t, 2) * c;
    V3 e1 = b - a;
    V3 t1 = e1.normalized();
    V3 cr = e1.cross(c - a);
    V3 n = cr.normalized();
    V3 t2 = n.cross(t1);
    for (int k = 0; k < 3; ++k) out[i * 12 + k] = p[k];
    M3 fr;
    fr.col(0) = t1;
    fr.col(1) = t2;
    fr.col(2) = n;
    put_mat3(out.data() + i * 12 + 3, fr);
  }

  std::vector<int> bface(T), bv0(T), bv1(T), bv2(T);
  MatX bbary(T, 3);
  for (int i = 0; i < T; ++i) {
    int t = bound[i];
    bface[i] = uvmap.face[t];
    bv0[i] = faces(bface[i], 0);
    bv1[i] = faces(bface[i], 1);
    bv2[i] = faces(bface[i], 2);
    bbary.row(i) = uvmap.bary.row(t);
  }

  return make_op("uv_surface", {T, 12}, std::move(out), {vertices},
                 [T, bv0, bv1, bv2, bbary](ad::Node& n) {
    if (!n.parents[0]->requires_grad) return;
    const ArrayX& vv = n.parents[0]->value;
    ArrayX& dv = n.parents[0]->ensure_grad();
    for (int i = 0; i < T; ++i) {
      V3 a = row3(vv, bv0[i]), b = row3(vv, bv1[i]), c = row3(vv, bv2[i]);
      V3 gp = row3(n.grad, i * 4 + 0);  // grad layout: 12 per texel
      const double* gf = n.grad.data() + i * 12 + 3;
      V3 g1(gf[0], gf[3], gf[6]), g2(gf[1], gf[4], gf[7]), gn(gf[2], gf[5], gf[8]);

      V3 da = bbary(i, 0) * gp, db = bbary(i, 1) * gp, dc = bbary(i, 2) * gp;

      // frame backward: t1 = e1/|e1|, n = (e1 x e2)/|..|, t2 = n x t1
      V3 e1 = b - a, e2 = c - a;
      double n1 = e1.norm();
      V3 t1 = e1 / n1;
      V3 cr = e1.cross(e2);
      double nc = cr.norm();
      V3 nn = cr / nc;
      // t2 = n x t1 contributes to both n and t1
      gn += t1.cross(g2);
      g1 += g2.cross(nn);
      // normalize backward
      V3 ge1 = (g1 - t1 * t1.dot(g1)) / n1;
      V3 gcr = (gn - nn * nn.dot(gn)) / nc;
      // cross backward: cr = e1 x e2
      ge1 += e2.cross(gcr);
      V3 ge2 = gcr.cross(e1);
      da += -ge1 - ge2;
      db += ge1;
      dc += ge2;
      for (int k = 0; k < 3; ++k) {
        dv[bv0[i] * 3 + k] += da[k];
        dv[bv1[i] * 3 + k] += db[k];
        dv[bv2[i] * 3 + k] += dc[k];
      }
    }
  });
}

const std::array<int, kNumKeypoints>& keypoint_to_joint_table() {
  // nose, l/r eye, l/r ear -> head; then shoulders, elbows, wrists, hips,
  // knees, ankles (left first), matching the 17-joint detector order.
  static const std::array<int, kNumKeypoints> table = {15, 15, 15, 15, 15, 16, 17, 18, 19,
                                                       20, 21, 1,  2,  4,  5,  7,  8};
  return table;
}

// ---------------------------------------------------------------------------
// template validation and IO

void BodyTemplate::validate() const {
  int V = num_vertices(), J = num_joints(), F = num_faces();
  DUET_CHECK(J == kNumJoints, "template: joint count ", J);
  DUET_CHECK(parents[0] == -1, "template: joint 0 must be the root");
  for (int j = 1; j < J; ++j)
    DUET_CHECK(parents[j] >= 0 && parents[j] < j, "template: parent table not topological at ",
               j);
  DUET_CHECK(joint_regressor.rows() == J && joint_regressor.cols() == V,
             "template: regressor shape");
  DUET_CHECK(skin_weights.rows() == V && skin_weights.cols() == J,
             "template: skin weight shape");
  for (int v = 0; v < V; ++v) {
    DUET_CHECK(skin_weights.row(v).minCoeff() >= 0.0, "template: negative skin weight at ", v);
    DUET_CHECK(std::abs(skin_weights.row(v).sum() - 1.0) <= 1e-6,
               "template: skin weights of vertex ", v, " sum to ", skin_weights.row(v).sum());
  }
  for (int f = 0; f < F; ++f)
    for (int k = 0; k < 3; ++k)
      DUET_CHECK(faces(f, k) >= 0 && faces(f, k) < V, "template: face ", f,
                 " references invalid vertex");
  DUET_CHECK(shape_basis.rows() == kShapeDim && shape_basis.cols() == 3 * V,
             "template: shape basis shape");
  uvmap.validate(F);
}

void BodyTemplate::save(const std::string& path) const {
  ArchiveWriter w;
  w.set_meta({{"kind", "body-template"},
              {"version", 1},
              {"uv_width", uvmap.width},
              {"uv_height", uvmap.height}});
  ArrayX vflat(vertices.size());
  std::copy(vertices.data(), vertices.data() + vertices.size(), vflat.data());
  w.add_f64("vertices", {num_vertices(), 3}, vflat);
  std::vector<int32_t> f(faces.size());
  std::copy(faces.data(), faces.data() + faces.size(), f.begin());
  w.add_i32("faces", {num_faces(), 3}, f);
  ArrayX jr(joint_regressor.size());
  std::copy(joint_regressor.data(), joint_regressor.data() + jr.size(), jr.data());
  w.add_f64("joint_regressor", {num_joints(), num_vertices()}, jr);
  ArrayX sw(skin_weights.size());
  std::copy(skin_weights.data(), skin_weights.data() + sw.size(), sw.data());
  w.add_f64("skin_weights", {num_vertices(), num_joints()}, sw);
  ArrayX sb(shape_basis.size());
  std::copy(shape_basis.data(), shape_basis.data() + sb.size(), sb.data());
  w.add_f64("shape_basis", {kShapeDim, 3 * num_vertices()}, sb);
  std::vector<int32_t> par(parents.begin(), parents.end());
  w.add_i32("parents", {num_joints()}, par);
  std::vector<int32_t> uvf(uvmap.face.begin(), uvmap.face.end());
  w.add_i32("uv_face", {uvmap.num_texels()}, uvf);
  ArrayX uvb(uvmap.bary.size());
  std::copy(uvmap.bary.data(), uvmap.bary.data() + uvb.size(), uvb.data());
  w.add_f64("uv_bary", {uvmap.num_texels(), 3}, uvb);
  w.save(path);
}

BodyTemplate BodyTemplate::load(const std::string& path) {
  ArchiveReader r(path);
  DUET_CHECK(r.meta().value("kind", "") == "body-template", path,
             ": not a body-template archive");
  BodyTemplate t;
  auto vs = r.shape("vertices");
  int V = static_cast<int>(vs[0]);
  ArrayX vflat = r.get_floats("vertices");
  t.vertices.resize(V, 3);
  std::copy(vflat.data(), vflat.data() + vflat.size(), t.vertices.data());
  auto fv = r.get_i32("faces");
  int F = static_cast<int>(r.shape("faces")[0]);
  t.faces.resize(F, 3);
  std::copy(fv.begin(), fv.end(), t.faces.data());
  ArrayX jr = r.get_floats("joint_regressor");
  t.joint_regressor.resize(kNumJoints, V);
  std::copy(jr.data(), jr.data() + jr.size(), t.joint_regressor.data());
  ArrayX sw = r.get_floats("skin_weights");
  t.skin_weights.resize(V, kNumJoints);
  std::copy(sw.data(), sw.data() + sw.size(), t.skin_weights.data());
  ArrayX sb = r.get_floats("shape_basis");
  t.shape_basis.resize(kShapeDim, 3 * V);
  std::copy(sb.data(), sb.data() + sb.size(), t.shape_basis.data());
  auto par = r.get_i32("parents");
  t.parents.assign(par.begin(), par.end());
  t.uvmap.width = r.meta().at("uv_width").get<int>();
  t.uvmap.height = r.meta().at("uv_height").get<int>();
  auto uvf = r.get_i32("uv_face");
  t.uvmap.face.assign(uvf.begin(), uvf.end());
  ArrayX uvb = r.get_floats("uv_bary");
  t.uvmap.bary.resize(t.uvmap.num_texels(), 3);
  std::copy(uvb.data(), uvb.data() + uvb.size(), t.uvmap.bary.data());
  t.validate();
  return t;
}

}  // namespace duet
