#include "duet/nn.hpp"

namespace duet {

Linear Linear::create(int in, int out, Rng& rng) {
  Linear l;
  double s = std::sqrt(2.0 / (in + out));
  l.W = Tensor::from({out, in}, rng.normal_array(out * in) * s, true);
  l.b = Tensor::leaf({out}, true);
  return l;
}

LayerNorm LayerNorm::create(int dim) {
  LayerNorm ln;
  ln.gamma = Tensor::from({dim}, ArrayX::Ones(dim), true);
  ln.beta = Tensor::leaf({dim}, true);
  return ln;
}

Conv2d Conv2d::create(int ci, int co, int k, int stride, int pad, Rng& rng) {
  Conv2d c;
  double s = std::sqrt(2.0 / (ci * k * k));
  c.W = Tensor::from({co, ci, k, k}, rng.normal_array(co * ci * k * k) * s, true);
  c.b = Tensor::leaf({co}, true);
  c.stride = stride;
  c.pad = pad;
  return c;
}

Adam::Adam(std::vector<Tensor> params, double lr) : params_(std::move(params)), lr_(lr) {
  m_.resize(params_.size());
  v_.resize(params_.size());
  for (size_t i = 0; i < params_.size(); ++i) {
    m_[i] = ArrayX::Zero(params_[i].size());
    v_[i] = ArrayX::Zero(params_[i].size());
  }
}

void Adam::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

void Adam::step() {
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (!p.has_grad()) continue;
    const ArrayX& g = p.grad();
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.square();
    p.value() -= lr_ * (m_[i] / bc1) / ((v_[i] / bc2).sqrt() + eps_);
  }
}

Adam::Snapshot Adam::snapshot() const {
  Snapshot s;
  s.t = t_;
  s.lr = lr_;
  for (size_t i = 0; i < params_.size(); ++i) {
    s.values.push_back(params_[i].value());
    s.m.push_back(m_[i]);
    s.v.push_back(v_[i]);
  }
  return s;
}

void Adam::restore(const Snapshot& s) {
  DUET_CHECK(s.values.size() == params_.size(), "Adam::restore: param count changed");
  t_ = s.t;
  lr_ = s.lr;
  for (size_t i = 0; i < params_.size(); ++i) {
    params_[i].value() = s.values[i];
    m_[i] = s.m[i];
    v_[i] = s.v[i];
  }
}

ArrayX sinusoidal_embedding(const std::vector<double>& positions, int dim) {
  DUET_CHECK(dim % 2 == 0, "sinusoidal_embedding: dim must be even");
  int n = static_cast<int>(positions.size());
  int half = dim / 2;
  ArrayX out(n * dim);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < half; ++k) {
      double freq = std::pow(10000.0, -static_cast<double>(k) / half);
      out[i * dim + k] = std::sin(positions[i] * freq);
      out[i * dim + half + k] = std::cos(positions[i] * freq);
    }
  }
  return out;
}

}  // namespace duet
