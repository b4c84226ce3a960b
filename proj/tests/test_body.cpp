#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Geometry>
#include <filesystem>

#include "duet/body_model.hpp"
#include "duet/camera.hpp"
#include "duet/ops.hpp"
#include "duet/rng.hpp"
#include "test_util.hpp"

using namespace duet;
namespace fs = std::filesystem;

namespace {

const BodyTemplate& tmpl() {
  static BodyTemplate t = BodyTemplate::make_synthetic(48);
  return t;
}

Eigen::Matrix<double, 6, 1> rot6(double a, double b, double c, double d, double e, double f) {
  Eigen::Matrix<double, 6, 1> r;
  r << a, b, c, d, e, f;
  return r;
}

ArrayX random_pose(Rng& rng, double scale = 0.3) {
  PersonParams p = PersonParams::rest();
  return p.pose + rng.normal_array(kPoseDim) * scale;
}

}  // namespace

TEST_CASE("rot6d canonical examples") {
  CHECK(rot6d_to_matrix(rot6(1, 0, 0, 0, 1, 0)).isApprox(Mat3::Identity(), 1e-12));
  // Gram-Schmidt normalizes scale
  CHECK(rot6d_to_matrix(rot6(2, 0, 0, 0, 3, 0)).isApprox(Mat3::Identity(), 1e-12));
  // identity round trip
  Eigen::Matrix<double, 6, 1> r = matrix_to_rot6d(Mat3::Identity());
  CHECK(r.isApprox(rot6(1, 0, 0, 0, 1, 0), 1e-12));
}

TEST_CASE("rot6d equals QR-based orthonormalization oracle") {
  // (1,0,0,1,1,0) and random cases: compare against Householder QR of the
  // two input vectors (signs fixed to positive diagonal)
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::Matrix<double, 6, 1> r;
    if (trial == 0)
      r = rot6(1, 0, 0, 1, 1, 0);
    else
      for (int k = 0; k < 6; ++k) r[k] = rng.normal();
    Eigen::Matrix<double, 3, 2> a;
    a.col(0) = r.head<3>();
    a.col(1) = r.tail<3>();
    if (a.col(0).norm() < 0.3 || a.col(0).cross(a.col(1)).norm() < 0.3) continue;

    Eigen::HouseholderQR<Eigen::Matrix<double, 3, 2>> qr(a);
    Eigen::Matrix3d q = qr.householderQ();
    Eigen::Matrix<double, 3, 2> rr = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int k = 0; k < 2; ++k)
      if (rr(k, k) < 0) q.col(k) *= -1.0;

    Mat3 m = rot6d_to_matrix(r);
    CHECK((m.col(0) - q.col(0)).norm() < 1e-9);
    CHECK((m.col(1) - q.col(1)).norm() < 1e-9);
    CHECK(m.determinant() == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("rot6d is a right inverse on rotation matrices") {
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    q.normalize();
    Mat3 m = q.toRotationMatrix();
    Mat3 back = rot6d_to_matrix(matrix_to_rot6d(m));
    CHECK((back - m).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("rot6d degenerate inputs fall back to canonical axes") {
  bool degen = false;
  Mat3 m = rot6d_to_matrix(rot6(0, 0, 0, 0, 1, 0), &degen);
  CHECK(degen);
  CHECK(m.determinant() == doctest::Approx(1.0));
  CHECK((m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-9);

  degen = false;
  m = rot6d_to_matrix(rot6(1, 0, 0, 2, 0, 0), &degen);  // parallel second vector
  CHECK(degen);
  CHECK(m.determinant() == doctest::Approx(1.0));
  CHECK((m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("rot6d batched op matches single decode and its gradient checks out") {
  Rng rng(7);
  ArrayX pose = random_pose(rng, 0.5);
  Tensor pose_t = Tensor::from({1, kPoseDim}, pose, true);
  Tensor mats = rot6d_to_mats(pose_t);
  for (int j = 0; j < kNumJoints; ++j) {
    Eigen::Matrix<double, 6, 1> r;
    for (int k = 0; k < 6; ++k) r[k] = pose[6 * j + k];
    Mat3 expect = rot6d_to_matrix(r);
    for (int i = 0; i < 3; ++i)
      for (int c = 0; c < 3; ++c)
        CHECK(mats.value()[9 * j + 3 * i + c] == doctest::Approx(expect(i, c)).epsilon(1e-12));
  }

  ArrayX dir = rng.normal_array(kNumJoints * 9);
  auto f = [&](const std::vector<Tensor>& v) {
    return ops::sum(ops::mul_const(rot6d_to_mats(v[0]), dir));
  };
  auto res = testutil::grad_check(f, {pose_t}, 1e-6);
  CHECK(res.failed == 0);
}

TEST_CASE("synthetic template satisfies its invariants") {
  const BodyTemplate& t = tmpl();
  CHECK(t.num_vertices() > 500);
  CHECK(t.num_vertices() < 1200);
  CHECK(t.num_joints() == 24);
  t.validate();  // throws on violation

  // regressor reproduces plausible joint locations (within 6 cm of rest)
  MatX rj = t.rest_joints();
  CHECK(rj.rows() == 24);
  CHECK((rj.row(0) - Eigen::RowVector3d(0, 0, 0)).norm() < 0.12);
}

TEST_CASE("template save/load round trip") {
  fs::path dir = fs::temp_directory_path() / "duet_test_body";
  fs::create_directories(dir);
  std::string path = (dir / "template.duet").string();
  tmpl().save(path);
  BodyTemplate back = BodyTemplate::load(path);
  CHECK((back.vertices - tmpl().vertices).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.faces == tmpl().faces);
  CHECK((back.skin_weights - tmpl().skin_weights).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.uvmap.face == tmpl().uvmap.face);
}

TEST_CASE("rest pose skin returns template vertices exactly") {
  PersonParams p = PersonParams::rest();
  Mesh m = skin_mesh(p, tmpl());
  CHECK((m.vertices - tmpl().vertices).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("skin is equivariant to root translation") {
  Rng rng(11);
  PersonParams p = PersonParams::rest();
  p.pose = random_pose(rng);
  p.shape = rng.normal_array(kShapeDim) * 0.5;
  Mesh m0 = skin_mesh(p, tmpl());
  MatX j0 = skin_joints(p, tmpl());
  p.translation = Vec3(0.5, 0, 0);
  Mesh m1 = skin_mesh(p, tmpl());
  MatX j1 = skin_joints(p, tmpl());
  MatX dv = m1.vertices - m0.vertices;
  for (int v = 0; v < dv.rows(); ++v) {
    CHECK(dv(v, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(dv(v, 1) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(dv(v, 2) == doctest::Approx(0.0).epsilon(1e-12));
  }
  MatX dj = j1 - j0;
  for (int jj = 0; jj < 24; ++jj)
    CHECK((Vec3(dj.row(jj)) - Vec3(0.5, 0, 0)).norm() < 1e-12);
}

TEST_CASE("single-joint rotation matches an independent FK oracle") {
  // rotate the left elbow 90 degrees about x; probe forearm-bound vertices
  const BodyTemplate& t = tmpl();
  PersonParams p = PersonParams::rest();
  Mat3 rx = Eigen::AngleAxisd(M_PI / 2, Vec3::UnitX()).toRotationMatrix();
  Eigen::Matrix<double, 6, 1> r6 = matrix_to_rot6d(rx);
  int elbow = 18;
  for (int k = 0; k < 6; ++k) p.pose[6 * elbow + k] = r6[k];

  Mesh m = skin_mesh(p, t);
  MatX rest_j = t.rest_joints();
  Vec3 pivot = rest_j.row(elbow);

  // oracle: every vertex fully bound to the elbow rotates rigidly about the
  // elbow joint; all ancestors are identity so the chain is just this joint
  int probes = 0;
  for (int v = 0; v < t.num_vertices() && probes < 5; ++v) {
    if (t.skin_weights(v, elbow) < 0.999) continue;
    Vec3 rest = t.vertices.row(v);
    Vec3 expect = pivot + rx * (rest - pivot);
    Vec3 got = m.vertices.row(v);
    CHECK((got - expect).norm() < 1e-10);
    ++probes;
  }
  CHECK(probes == 5);

  // the wrist joint (child of elbow) must rotate the same way
  Vec3 wrist_expect = pivot + rx * (Vec3(rest_j.row(20)) - pivot);
  MatX joints = skin_joints(p, t);
  CHECK((Vec3(joints.row(20)) - wrist_expect).norm() < 1e-10);
}

TEST_CASE("skinning gradients match finite differences") {
  Rng rng(13);
  const BodyTemplate& t = tmpl();
  ArrayX pose = random_pose(rng);
  ArrayX shape = rng.normal_array(kShapeDim) * 0.3;
  ArrayX trans(3);
  trans << 0.1, -0.05, 2.0;

  // random projection of 5 random vertices as the scalar output
  std::vector<int> verts;
  for (int i = 0; i < 5; ++i) verts.push_back(rng.uniform_int(0, t.num_vertices() - 1));
  ArrayX w = rng.normal_array(15);

  auto f = [&](const std::vector<Tensor>& v) {
    SkinResult s = skin(v[0], v[1], v[2], t);
    std::vector<Tensor> picks;
    for (int vi : verts) picks.push_back(ops::slice_dim0(s.vertices, vi, 1));
    return ops::sum(ops::mul_const(ops::concat_dim0(picks), w));
  };
  Tensor pt = Tensor::from({kPoseDim}, pose, true);
  Tensor st = Tensor::from({kShapeDim}, shape, true);
  Tensor tt = Tensor::from({3}, trans, true);
  auto res = testutil::grad_check(f, {pt, st, tt}, 1e-6, 1e-3);
  CHECK(res.checked == kPoseDim + kShapeDim + 3);
  CHECK(res.failed == 0);
}

TEST_CASE("fk_joints batched matches per-person skin joints") {
  Rng rng(17);
  int B = 3;
  ArrayX poses(B * kPoseDim), shapes(B * kShapeDim), trans(B * 3);
  for (int b = 0; b < B; ++b) {
    poses.segment(b * kPoseDim, kPoseDim) = random_pose(rng);
    shapes.segment(b * kShapeDim, kShapeDim) = rng.normal_array(kShapeDim) * 0.4;
    trans.segment(b * 3, 3) = rng.normal_array(3);
  }
  Tensor j = fk_joints(Tensor::from({B, kPoseDim}, poses), Tensor::from({B, kShapeDim}, shapes),
                       Tensor::from({B, 3}, trans), tmpl());
  for (int b = 0; b < B; ++b) {
    PersonParams p;
    p.pose = poses.segment(b * kPoseDim, kPoseDim);
    p.shape = shapes.segment(b * kShapeDim, kShapeDim);
    p.translation = Vec3(trans[b * 3], trans[b * 3 + 1], trans[b * 3 + 2]);
    MatX expect = skin_joints(p, tmpl());
    for (int jj = 0; jj < kNumJoints; ++jj)
      for (int k = 0; k < 3; ++k)
        CHECK(j.value()[b * 72 + 3 * jj + k] ==
              doctest::Approx(expect(jj, k)).epsilon(1e-10));
  }
}

TEST_CASE("uv_to_surface barycentric examples") {
  const BodyTemplate& t = tmpl();
  Mesh m = skin_mesh(PersonParams::rest(), t);

  UVCoordinateMap uv;
  uv.width = 2;
  uv.height = 1;
  uv.face = {0, 3};
  uv.bary = MatX::Zero(2, 3);
  uv.bary.row(0) << 1.0, 0.0, 0.0;               // first vertex of face 0
  uv.bary.row(1) << 1.0 / 3, 1.0 / 3, 1.0 / 3;   // centroid of face 3

  SurfacePoints sp = uv_to_surface(uv, m);
  Vec3 v0 = m.vertices.row(m.faces(0, 0));
  CHECK((Vec3(sp.points.row(0)) - v0).norm() < 1e-12);
  Vec3 centroid = (Vec3(m.vertices.row(m.faces(3, 0))) + Vec3(m.vertices.row(m.faces(3, 1))) +
                   Vec3(m.vertices.row(m.faces(3, 2)))) / 3.0;
  CHECK((Vec3(sp.points.row(1)) - centroid).norm() < 1e-12);

  // frames are orthonormal
  for (int i = 0; i < 2; ++i) {
    Mat3 fr;
    fr << sp.frames(i, 0), sp.frames(i, 1), sp.frames(i, 2), sp.frames(i, 3), sp.frames(i, 4),
        sp.frames(i, 5), sp.frames(i, 6), sp.frames(i, 7), sp.frames(i, 8);
    CHECK((fr.transpose() * fr - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-9);
  }

  // rigid translation moves every bound texel point by the same amount
  PersonParams p = PersonParams::rest();
  p.translation = Vec3(0.2, -0.1, 0.4);
  SurfacePoints sp2 = uv_to_surface(uv, skin_mesh(p, t));
  for (int i = 0; i < 2; ++i)
    CHECK((Vec3(sp2.points.row(i)) - Vec3(sp.points.row(i)) - p.translation).norm() < 1e-12);

  // face index out of range is a hard error
  uv.face[1] = 100000;
  CHECK_THROWS(uv_to_surface(uv, m));
}

TEST_CASE("uv_surface_op gradient") {
  Rng rng(19);
  const BodyTemplate& t = tmpl();
  // small random mesh distortion, a handful of texels
  Tensor verts = Tensor::from({t.num_vertices(), 3},
                              [&] {
                                ArrayX v(t.num_vertices() * 3);
                                std::copy(t.vertices.data(), t.vertices.data() + v.size(),
                                          v.data());
                                return v + rng.normal_array(v.size()) * 0.002;
                              }(),
                              true);
  UVCoordinateMap uv;
  uv.width = 4;
  uv.height = 1;
  uv.face = {0, 7, 19, -1};
  uv.bary = MatX::Zero(4, 3);
  uv.bary.row(0) << 0.2, 0.3, 0.5;
  uv.bary.row(1) << 1.0, 0.0, 0.0;
  uv.bary.row(2) << 0.1, 0.1, 0.8;
  ArrayX dir = rng.normal_array(3 * 12);
  auto f = [&](const std::vector<Tensor>& v) {
    return ops::sum(ops::mul_const(uv_surface_op(v[0], uv, t.faces), dir));
  };
  // only vertices of the three touched faces matter; check a full pass anyway
  auto res = testutil::grad_check(f, {verts}, 1e-6);
  CHECK(res.failed == 0);
}

TEST_CASE("camera focal from diagonal fov") {
  CameraModel cam = CameraModel::from_fov(1000, 1000, 55.0);
  // sqrt(2)*1000 / (2 tan(27.5 deg))
  double expect = std::sqrt(2.0) * 1000.0 / (2.0 * std::tan(27.5 * M_PI / 180.0));
  CHECK(cam.focal == doctest::Approx(expect).epsilon(1e-12));
  CHECK(cam.focal == doctest::Approx(1358.3).epsilon(1e-4));
}

TEST_CASE("projection examples and validity") {
  CameraModel cam = CameraModel::from_fov(512, 512, 55.0);
  Vec2 c = project_point(Vec3(0, 0, 2.0), cam);
  CHECK(c.x() == doctest::Approx(256.0));
  CHECK(c.y() == doctest::Approx(256.0));

  Vec2 off = project_point(Vec3(0.5, 0, 1.0), cam);
  CHECK(off.x() == doctest::Approx(256.0 + 0.5 * cam.focal).epsilon(1e-12));
  CHECK(off.y() == doctest::Approx(256.0));

  MatX pts(2, 3);
  pts << 0, 0, 1.0, 0, 0, -1.0;
  Projected pr = project(pts, cam);
  CHECK(pr.valid[0] == 1.0);
  CHECK(pr.valid[1] == 0.0);
}

TEST_CASE("projection scale consistency") {
  CameraModel cam1 = CameraModel::from_fov(640, 480, 55.0);
  CameraModel cam2 = CameraModel::from_fov(1280, 960, 55.0);
  CHECK(cam2.focal == doctest::Approx(2.0 * cam1.focal));
  Vec3 p(0.3, -0.2, 1.7);
  Vec2 a = project_point(p, cam1) - cam1.principal;
  Vec2 b = project_point(p, cam2) - cam2.principal;
  CHECK(b.x() == doctest::Approx(2.0 * a.x()));
  CHECK(b.y() == doctest::Approx(2.0 * a.y()));
}

TEST_CASE("projection gradients match finite differences") {
  Rng rng(23);
  CameraModel cam = CameraModel::from_fov(256, 256, 55.0);
  ArrayX pts(20 * 3);
  for (int i = 0; i < 20; ++i) {
    pts[3 * i] = rng.uniform(-0.5, 0.5);
    pts[3 * i + 1] = rng.uniform(-0.5, 0.5);
    pts[3 * i + 2] = rng.uniform(1.0, 4.0);
  }
  ArrayX dir = rng.normal_array(40);
  auto f = [&](const std::vector<Tensor>& v) {
    return ops::sum(ops::mul_const(project_op(v[0], cam), dir));
  };
  auto res = testutil::grad_check(f, {Tensor::from({20, 3}, pts, true)}, 1e-6, 1e-4);
  CHECK(res.failed == 0);
}

TEST_CASE("depth order labels") {
  CHECK(depth_order(2.0, 3.0) == DepthOrder::A_NEARER);
  CHECK(depth_order(3.0, 2.0) == DepthOrder::B_NEARER);
  CHECK(depth_order(2.5, 2.5) == DepthOrder::TIE);
}
