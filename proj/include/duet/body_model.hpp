#pragma once

#include <string>
#include <vector>

#include <Eigen/Geometry>

#include "duet/tensor.hpp"

namespace duet {

// One person's parameters for one frame: 24-joint 6D pose, shape blend
// coefficients, and root translation in camera coordinates (meters).
struct PersonParams {
  ArrayX pose = ArrayX::Zero(kPoseDim);
  ArrayX shape = ArrayX::Zero(kShapeDim);
  Vec3 translation = Vec3::Zero();

  void validate() const;
  ArrayX flat() const;  // [157] = pose | shape | translation
  static PersonParams from_flat(const ArrayX& v);
  static PersonParams rest();  // identity rotations everywhere
};

// N frames x 2 persons.
struct MotionSequence {
  std::vector<std::array<PersonParams, 2>> frames;

  int num_frames() const { return static_cast<int>(frames.size()); }
  ArrayX flat() const;  // [N*2*157]
  static MotionSequence from_flat(const ArrayX& v, int num_frames);
  void validate() const;
};

struct Mesh {
  MatX vertices;          // V x 3
  Eigen::MatrixXi faces;  // F x 3
  MatX face_normals;      // F x 3, unit length

  static Mesh make(MatX vertices, Eigen::MatrixXi faces);
  void recompute_normals();
  int num_vertices() const { return static_cast<int>(vertices.rows()); }
  int num_faces() const { return static_cast<int>(faces.rows()); }
};

// Texture-space binding of texels to surface points.
struct UVCoordinateMap {
  int width = 0, height = 0;
  std::vector<int> face;  // height*width, -1 for empty texels
  MatX bary;              // (height*width) x 3

  int num_texels() const { return width * height; }
  std::vector<int> bound_texels() const;
  void validate(int num_faces) const;
};

struct BodyTemplate {
  MatX vertices;           // V x 3 rest pose
  Eigen::MatrixXi faces;   // F x 3
  MatX joint_regressor;    // J x V
  MatX skin_weights;       // V x J, rows sum to 1
  MatX shape_basis;        // 10 x 3V (displacement fields, x0 y0 z0 x1 ...)
  std::vector<int> parents;  // J entries, parents[0] == -1
  UVCoordinateMap uvmap;

  int num_vertices() const { return static_cast<int>(vertices.rows()); }
  int num_faces() const { return static_cast<int>(faces.rows()); }
  int num_joints() const { return static_cast<int>(parents.size()); }
  MatX rest_joints() const { return joint_regressor * vertices; }

  void validate() const;
  void save(const std::string& path) const;
  static BodyTemplate load(const std::string& path);
  // Procedural low-poly humanoid with the standard 24-joint topology.
  static BodyTemplate make_synthetic(int uv_res = 64);
};

// --- rotation utilities ----------------------------------------------------

// Gram-Schmidt decode of the 6D rotation representation (two matrix columns).
// Degenerate inputs fall back to canonical axes; `degenerate` is set if given.
Mat3 rot6d_to_matrix(const Eigen::Matrix<double, 6, 1>& r, bool* degenerate = nullptr);
Eigen::Matrix<double, 6, 1> matrix_to_rot6d(const Mat3& m);

// Batched autodiff decode: [B,144] -> [B,216] (24 row-major 3x3 blocks).
Tensor rot6d_to_mats(const Tensor& pose);

// --- skinning ---------------------------------------------------------------

struct SkinResult {
  Tensor vertices;  // [V,3]
  Tensor joints;    // [24,3]
};

// Differentiable LBS: shape blend, joint regression, forward kinematics,
// blend skinning, root translation.
SkinResult skin(const Tensor& pose, const Tensor& shape, const Tensor& translation,
                const BodyTemplate& tmpl);

// Joints only, batched over rows (used by sequence losses and training).
// pose [B,144], shape [B,10], trans [B,3] -> [B,72].
Tensor fk_joints(const Tensor& pose, const Tensor& shape, const Tensor& trans,
                 const BodyTemplate& tmpl);

// plain (non-autodiff) convenience
Mesh skin_mesh(const PersonParams& p, const BodyTemplate& tmpl);
MatX skin_joints(const PersonParams& p, const BodyTemplate& tmpl);  // 24 x 3

// --- uv binding --------------------------------------------------------------

struct SurfacePoints {
  MatX points;  // T x 3 for bound texels (in bound_texels() order)
  MatX frames;  // T x 9 row-major tangent frames, columns (t1, t2, n)
};

SurfacePoints uv_to_surface(const UVCoordinateMap& uvmap, const Mesh& mesh);

// Autodiff version over mesh vertices: returns [T,12] rows (point | frame).
Tensor uv_surface_op(const Tensor& vertices, const UVCoordinateMap& uvmap,
                     const Eigen::MatrixXi& faces);

// Detector-skeleton mapping: 17 keypoints expressed as model joint indices.
// Order: nose, eyes, ears, shoulders, elbows, wrists, hips, knees, ankles
// (left before right). Head-area keypoints share the head joint.
const std::array<int, kNumKeypoints>& keypoint_to_joint_table();

}  // namespace duet
