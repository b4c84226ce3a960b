#include "duet/tensor.hpp"

#include <unordered_set>

namespace duet {

int shape_size(const std::vector<int>& shape) {
  int n = 1;
  for (int d : shape) {
    DUET_CHECK(d >= 0, "negative shape dim");
    n *= d;
  }
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor Tensor::leaf(std::vector<int> shape, bool requires_grad) {
  auto n = std::make_shared<ad::Node>();
  n->value = ArrayX::Zero(shape_size(shape));
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::from(std::vector<int> shape, ArrayX value, bool requires_grad) {
  DUET_CHECK(shape_size(shape) == value.size(), "Tensor::from: shape ", shape_str(shape),
             " does not match data size ", value.size());
  auto n = std::make_shared<ad::Node>();
  n->value = std::move(value);
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v) {
  ArrayX a(1);
  a[0] = v;
  return from({1}, std::move(a));
}

const ArrayX& Tensor::grad() const {
  DUET_CHECK(n_ != nullptr, "grad() on undefined tensor");
  return n_->ensure_grad();
}

double Tensor::item() const {
  DUET_CHECK(n_ && n_->value.size() == 1, "item() requires a size-1 tensor");
  return n_->value[0];
}

MatMap Tensor::mat() {
  DUET_CHECK(n_->shape.size() == 2, "mat() on non-2D tensor ", shape_str(n_->shape));
  return MatMap(n_->value.data(), n_->shape[0], n_->shape[1]);
}

ConstMatMap Tensor::mat() const {
  DUET_CHECK(n_->shape.size() == 2, "mat() on non-2D tensor ", shape_str(n_->shape));
  return ConstMatMap(n_->value.data(), n_->shape[0], n_->shape[1]);
}

int Tensor::cols() const {
  DUET_CHECK(n_->shape.size() == 2, "cols() on non-2D tensor");
  return n_->shape[1];
}

void Tensor::zero_grad() {
  if (n_) n_->grad.setZero(n_->value.size());
}

void Tensor::backward() const {
  DUET_CHECK(n_ && n_->value.size() == 1, "backward() must start from a scalar");
  DUET_CHECK(n_->requires_grad, "backward() from a tensor that does not require grad");

  // iterative post-order topological sort over the requires-grad subgraph
  std::vector<ad::Node*> topo;
  std::unordered_set<ad::Node*> visited;
  std::vector<std::pair<ad::Node*, size_t>> stack;
  stack.emplace_back(n_.get(), 0);
  visited.insert(n_.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      ad::Node* p = node->parents[idx++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      topo.push_back(node);
      stack.pop_back();
    }
  }

  n_->ensure_grad();
  n_->grad[0] += 1.0;
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    ad::Node* node = *it;
    if (node->backward && node->grad.size() == node->value.size()) node->backward(*node);
  }
}

Tensor make_op(const char* name, std::vector<int> shape, ArrayX value,
               const std::vector<Tensor>& parents,
               std::function<void(ad::Node&)> backward) {
  DUET_CHECK(shape_size(shape) == value.size(), "op ", name, ": shape ", shape_str(shape),
             " does not match value size ", value.size());
  auto n = std::make_shared<ad::Node>();
  n->value = std::move(value);
  n->shape = std::move(shape);
  n->op = name;
  bool grad = false;
  for (const Tensor& p : parents) {
    DUET_CHECK(p.defined(), "op ", name, ": undefined parent");
    n->parents.push_back(p.node());
    grad = grad || p.requires_grad();
  }
  n->requires_grad = grad;
  if (grad) n->backward = std::move(backward);
  return Tensor(std::move(n));
}

}  // namespace duet
