#pragma once

#include <vector>

#include "duet/body_model.hpp"

namespace duet {

// colliding triangle pair between two meshes, each unordered pair stored once
struct TrianglePair {
  int fa = 0, fb = 0;
  bool operator==(const TrianglePair&) const = default;
};
using CollisionSet = std::vector<TrianglePair>;

// exact triangle-triangle overlap (interval test on the intersection line;
// coplanar pairs handled in 2D)
bool triangles_intersect(const Vec3& p1, const Vec3& q1, const Vec3& r1, const Vec3& p2,
                         const Vec3& q2, const Vec3& r2);

// AABB tree over mesh triangles
class Bvh {
 public:
  explicit Bvh(const Mesh& mesh);
  // collect triangle indices whose boxes overlap [lo, hi]
  void query(const Vec3& lo, const Vec3& hi, std::vector<int>& out) const;

 private:
  struct Node {
    Vec3 lo, hi;
    int left = -1, right = -1;
    int start = 0, count = 0;  // leaf range into tri_
  };
  std::vector<Node> nodes_;
  std::vector<int> tri_;
  const Mesh* mesh_ = nullptr;
  MatX centroids_;

  int build(int start, int count);
};

// BVH-accelerated collision detection; pairs are ordered (fa from a, fb from b)
CollisionSet detect_collisions(const Mesh& a, const Mesh& b);

// Local penetration field of a triangle: depth below the triangle plane,
// windowed to zero outside the triangle's support radius (RMS distance of the
// vertices to the centroid, which equals the circumradius for equilateral
// triangles). Smooth in all vertex positions.
double penetration_field(const Vec3& p, const Vec3& q0, const Vec3& q1, const Vec3& q2);

// sum over pairs of squared field values at the opposing triangle's vertices
double penetration_loss_value(const Mesh& a, const Mesh& b, const CollisionSet& pairs);

// autodiff penetration loss over two vertex tensors with a fixed pair set
Tensor penetration_loss_op(const Tensor& verts_a, const Tensor& verts_b,
                           const Eigen::MatrixXi& faces_a, const Eigen::MatrixXi& faces_b,
                           const CollisionSet& pairs);

// convenience: detect + evaluate
double penetration_loss(const Mesh& a, const Mesh& b);

}  // namespace duet
