#pragma once

#include <string>
#include <utility>
#include <vector>

#include "duet/ops.hpp"
#include "duet/rng.hpp"
#include "duet/tensor.hpp"

namespace duet {

// Named parameter set; the order of insertion defines the serialization order.
struct ParamMap {
  std::vector<std::pair<std::string, Tensor>> items;

  void add(const std::string& name, const Tensor& t) { items.emplace_back(name, t); }
  Tensor* find(const std::string& name) {
    for (auto& [n, t] : items)
      if (n == name) return &t;
    return nullptr;
  }
  std::vector<Tensor> tensors() const {
    std::vector<Tensor> out;
    out.reserve(items.size());
    for (const auto& [n, t] : items) out.push_back(t);
    return out;
  }
  int total_size() const {
    int n = 0;
    for (const auto& [name, t] : items) n += t.size();
    return n;
  }
};

struct Linear {
  Tensor W;  // [out, in]
  Tensor b;  // [out]

  static Linear create(int in, int out, Rng& rng);
  Tensor operator()(const Tensor& x) const {  // x: [n, in]
    return ops::add_rowvec(ops::matmul(x, W, false, true), b);
  }
  void collect(const std::string& prefix, ParamMap& pm) const {
    pm.add(prefix + ".W", W);
    pm.add(prefix + ".b", b);
  }
};

struct LayerNorm {
  Tensor gamma, beta;

  static LayerNorm create(int dim);
  Tensor operator()(const Tensor& x) const { return ops::layer_norm(x, gamma, beta); }
  void collect(const std::string& prefix, ParamMap& pm) const {
    pm.add(prefix + ".gamma", gamma);
    pm.add(prefix + ".beta", beta);
  }
};

struct Conv2d {
  Tensor W;  // [Co,Ci,kh,kw]
  Tensor b;  // [Co]
  int stride = 1;
  int pad = 1;

  static Conv2d create(int ci, int co, int k, int stride, int pad, Rng& rng);
  Tensor operator()(const Tensor& x) const { return ops::conv2d(x, W, b, stride, pad); }
  void collect(const std::string& prefix, ParamMap& pm) const {
    pm.add(prefix + ".W", W);
    pm.add(prefix + ".b", b);
  }
};

// First-order adaptive-moment optimizer (bias-corrected).
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Tensor> params, double lr);

  void zero_grad();
  void step();
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

  // full state snapshots for rollback on non-finite losses
  struct Snapshot {
    std::vector<ArrayX> values, m, v;
    long t = 0;
    double lr = 0;
  };
  Snapshot snapshot() const;
  void restore(const Snapshot& s);

 private:
  std::vector<Tensor> params_;
  std::vector<ArrayX> m_, v_;
  double lr_ = 1e-3;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
};

// Sinusoidal position/timestep features, dim must be even. Returns [n, dim].
ArrayX sinusoidal_embedding(const std::vector<double>& positions, int dim);

}  // namespace duet
