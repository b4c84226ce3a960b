#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "duet/common.hpp"

namespace duet {

// Reverse-mode autodiff over flat double arrays with C-ordered shapes.
// Graphs are built define-by-run; a tape node stores its parents and a
// backward closure that scatters the node gradient into the parents.

namespace ad {

struct Node {
  ArrayX value;
  ArrayX grad;  // sized lazily on first accumulation
  std::vector<int> shape;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
  const char* op = "leaf";

  int size() const { return static_cast<int>(value.size()); }
  ArrayX& ensure_grad() {
    if (grad.size() != value.size()) grad = ArrayX::Zero(value.size());
    return grad;
  }
};

}  // namespace ad

class Tensor {
 public:
  Tensor() = default;

  static Tensor leaf(std::vector<int> shape, bool requires_grad = false);
  static Tensor from(std::vector<int> shape, ArrayX value, bool requires_grad = false);
  static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
    return leaf(std::move(shape), requires_grad);
  }
  static Tensor scalar(double v);

  bool defined() const { return n_ != nullptr; }
  int size() const { return n_ ? n_->size() : 0; }
  const std::vector<int>& shape() const { return n_->shape; }
  int dim(int i) const { return n_->shape.at(i); }
  int ndim() const { return static_cast<int>(n_->shape.size()); }

  ArrayX& value() { return n_->value; }
  const ArrayX& value() const { return n_->value; }
  const ArrayX& grad() const;
  bool has_grad() const { return n_ && n_->grad.size() == n_->value.size(); }
  bool requires_grad() const { return n_ && n_->requires_grad; }
  double item() const;

  // 2D row-major views of the flat storage
  MatMap mat();
  ConstMatMap mat() const;
  int rows() const { return n_->shape.at(0); }
  int cols() const;

  void zero_grad();
  void backward() const;  // from a scalar tensor

  std::shared_ptr<ad::Node> node() const { return n_; }
  explicit Tensor(std::shared_ptr<ad::Node> n) : n_(std::move(n)) {}

 private:
  std::shared_ptr<ad::Node> n_;
};

// Helper for op implementations. `backward` receives the result node; it must
// add into `parents[i]->ensure_grad()` for every parent that requires grad.
Tensor make_op(const char* name, std::vector<int> shape, ArrayX value,
               const std::vector<Tensor>& parents,
               std::function<void(ad::Node&)> backward);

int shape_size(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

}  // namespace duet
