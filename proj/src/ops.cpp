#include "duet/ops.hpp"

#include <cmath>

namespace duet {
namespace ops {

namespace {

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  DUET_CHECK(a.shape() == b.shape(), op, ": shape mismatch ", shape_str(a.shape()), " vs ",
             shape_str(b.shape()));
}

ArrayX& pgrad(ad::Node& n, int i) { return n.parents[i]->ensure_grad(); }
const ArrayX& pval(const ad::Node& n, int i) { return n.parents[i]->value; }
bool pneeds(const ad::Node& n, int i) { return n.parents[i]->requires_grad; }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  return make_op("add", a.shape(), a.value() + b.value(), {a, b}, [](ad::Node& n) {
    if (pneeds(n, 0)) pgrad(n, 0) += n.grad;
    if (pneeds(n, 1)) pgrad(n, 1) += n.grad;
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  return make_op("sub", a.shape(), a.value() - b.value(), {a, b}, [](ad::Node& n) {
    if (pneeds(n, 0)) pgrad(n, 0) += n.grad;
    if (pneeds(n, 1)) pgrad(n, 1) -= n.grad;
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  return make_op("mul", a.shape(), a.value() * b.value(), {a, b}, [](ad::Node& n) {
    if (pneeds(n, 0)) pgrad(n, 0) += n.grad * pval(n, 1);
    if (pneeds(n, 1)) pgrad(n, 1) += n.grad * pval(n, 0);
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  check_same_shape("div", a, b);
  return make_op("div", a.shape(), a.value() / b.value(), {a, b}, [](ad::Node& n) {
    if (pneeds(n, 0)) pgrad(n, 0) += n.grad / pval(n, 1);
    if (pneeds(n, 1)) pgrad(n, 1) -= n.grad * pval(n, 0) / pval(n, 1).square();
  });
}

Tensor neg(const Tensor& x) {
  return make_op("neg", x.shape(), -x.value(), {x}, [](ad::Node& n) {
    if (pneeds(n, 0)) pgrad(n, 0) -= n.grad;
  });
}

Tensor add_scalar(const Tensor& x, double s) {
  return make_op("add_scalar", x.shape(), x.value() + s, {x}, [](ad::Node& n) {
    if (pneeds(n, 0)) pgrad(n, 0) += n.grad;
  });
}

Tensor mul_scalar(const Tensor& x, double s) {
  return make_op("mul_scalar", x.shape(), x.value() * s, {x}, [s](ad::Node& n) {
    if (pneeds(n, 0)) pgrad(n, 0) += n.grad * s;
  });
}

Tensor mul_const(const Tensor& x, const ArrayX& c) {
  DUET_CHECK(c.size() == x.size(), "mul_const: size mismatch");
  return make_op("mul_const", x.shape(), x.value() * c, {x}, [c](ad::Node& n) {
    if (pneeds(n, 0)) pgrad(n, 0) += n.grad * c;
  });
}

Tensor add_const(const Tensor& x, const ArrayX& c) {
  DUET_CHECK(c.size() == x.size(), "add_const: size mismatch");
  return make_op("add_const", x.shape(), x.value() + c, {x}, [](ad::Node& n) {
    if (pneeds(n, 0)) pgrad(n, 0) += n.grad;
  });
}

Tensor relu(const Tensor& x) {
  return make_op("relu", x.shape(), x.value().max(0.0), {x}, [](ad::Node& n) {
    if (pneeds(n, 0)) pgrad(n, 0) += n.grad * (pval(n, 0) > 0.0).cast<double>();
  });
}

Tensor gelu(const Tensor& x) {
  const ArrayX& v = x.value();
  ArrayX cdf = v.unaryExpr([](double t) { return 0.5 * (1.0 + std::erf(t * M_SQRT1_2)); });
  return make_op("gelu", x.shape(), v * cdf, {x}, [cdf](ad::Node& n) {
    if (!pneeds(n, 0)) return;
    const ArrayX& v = pval(n, 0);
    ArrayX pdf = (-0.5 * v.square()).exp() * 0.3989422804014327;
    pgrad(n, 0) += n.grad * (cdf + v * pdf);
  });
}

Tensor silu(const Tensor& x) {
  ArrayX sg = 1.0 / (1.0 + (-x.value()).exp());
  return make_op("silu", x.shape(), x.value() * sg, {x}, [sg](ad::Node& n) {
    if (!pneeds(n, 0)) return;
    const ArrayX& v = pval(n, 0);
    pgrad(n, 0) += n.grad * (sg * (1.0 + v * (1.0 - sg)));
  });
}

Tensor sigmoid(const Tensor& x) {
  ArrayX y = 1.0 / (1.0 + (-x.value()).exp());
  return make_op("sigmoid", x.shape(), y, {x}, [y](ad::Node& n) {
    if (pneeds(n, 0)) pgrad(n, 0) += n.grad * y * (1.0 - y);
  });
}

Tensor softplus(const Tensor& x) {
  const ArrayX& v = x.value();
  ArrayX y = v.max(0.0) + (-(v.abs())).exp().log1p();
  return make_op("softplus", x.shape(), y, {x}, [](ad::Node& n) {
    if (!pneeds(n, 0)) return;
    pgrad(n, 0) += n.grad / (1.0 + (-pval(n, 0)).exp());
  });
}

Tensor tanh_(const Tensor& x) {
  ArrayX y = x.value().tanh();
  return make_op("tanh", x.shape(), y, {x}, [y](ad::Node& n) {
    if (pneeds(n, 0)) pgrad(n, 0) += n.grad * (1.0 - y.square());
  });
}

Tensor exp_(const Tensor& x) {
  ArrayX y = x.value().exp();
  return make_op("exp", x.shape(), y, {x}, [y](ad::Node& n) {
    if (pneeds(n, 0)) pgrad(n, 0) += n.grad * y;
  });
}

Tensor log_(const Tensor& x) {
  return make_op("log", x.shape(), x.value().log(), {x}, [](ad::Node& n) {
    if (pneeds(n, 0)) pgrad(n, 0) += n.grad / pval(n, 0);
  });
}

Tensor sqrt_(const Tensor& x) {
  ArrayX y = x.value().sqrt();
  return make_op("sqrt", x.shape(), y, {x}, [y](ad::Node& n) {
    if (pneeds(n, 0)) pgrad(n, 0) += n.grad * 0.5 / y.max(1e-300);
  });
}

Tensor square(const Tensor& x) {
  return make_op("square", x.shape(), x.value().square(), {x}, [](ad::Node& n) {
    if (pneeds(n, 0)) pgrad(n, 0) += n.grad * 2.0 * pval(n, 0);
  });
}

Tensor abs_(const Tensor& x) {
  return make_op("abs", x.shape(), x.value().abs(), {x}, [](ad::Node& n) {
    if (pneeds(n, 0)) pgrad(n, 0) += n.grad * pval(n, 0).sign();
  });
}

Tensor clamp_max(const Tensor& x, double cap) {
  return make_op("clamp_max", x.shape(), x.value().min(cap), {x}, [cap](ad::Node& n) {
    if (pneeds(n, 0)) pgrad(n, 0) += n.grad * (pval(n, 0) < cap).cast<double>();
  });
}

Tensor clamp_min(const Tensor& x, double floor) {
  return make_op("clamp_min", x.shape(), x.value().max(floor), {x}, [floor](ad::Node& n) {
    if (pneeds(n, 0)) pgrad(n, 0) += n.grad * (pval(n, 0) > floor).cast<double>();
  });
}

Tensor sum(const Tensor& x) {
  ArrayX y(1);
  y[0] = x.value().sum();
  return make_op("sum", {1}, y, {x}, [](ad::Node& n) {
    if (pneeds(n, 0)) pgrad(n, 0) += n.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  DUET_CHECK(x.size() > 0, "mean of empty tensor");
  ArrayX y(1);
  y[0] = x.value().mean();
  double inv = 1.0 / x.size();
  return make_op("mean", {1}, y, {x}, [inv](ad::Node& n) {
    if (pneeds(n, 0)) pgrad(n, 0) += n.grad[0] * inv;
  });
}

Tensor sum_sq(const Tensor& x) {
  ArrayX y(1);
  y[0] = x.value().square().sum();
  return make_op("sum_sq", {1}, y, {x}, [](ad::Node& n) {
    if (pneeds(n, 0)) pgrad(n, 0) += 2.0 * n.grad[0] * pval(n, 0);
  });
}

Tensor matmul(const Tensor& a, const Tensor& b, bool ta, bool tb) {
  DUET_CHECK(a.ndim() == 2 && b.ndim() == 2, "matmul needs 2D tensors");
  int m = ta ? a.dim(1) : a.dim(0);
  int k = ta ? a.dim(0) : a.dim(1);
  int k2 = tb ? b.dim(1) : b.dim(0);
  int nn = tb ? b.dim(0) : b.dim(1);
  DUET_CHECK(k == k2, "matmul: inner dims ", k, " vs ", k2);

  ConstMatMap A(a.value().data(), a.dim(0), a.dim(1));
  ConstMatMap B(b.value().data(), b.dim(0), b.dim(1));
  ArrayX out(m * nn);
  MatMap O(out.data(), m, nn);
  if (!ta && !tb) O.noalias() = A * B;
  else if (ta && !tb) O.noalias() = A.transpose() * B;
  else if (!ta && tb) O.noalias() = A * B.transpose();
  else O.noalias() = A.transpose() * B.transpose();

  return make_op("matmul", {m, nn}, std::move(out), {a, b}, [ta, tb, m, nn](ad::Node& n) {
    ConstMatMap A(pval(n, 0).data(), n.parents[0]->shape[0], n.parents[0]->shape[1]);
    ConstMatMap B(pval(n, 1).data(), n.parents[1]->shape[0], n.parents[1]->shape[1]);
    ConstMatMap G(n.grad.data(), m, nn);
    if (pneeds(n, 0)) {
      MatMap dA(pgrad(n, 0).data(), A.rows(), A.cols());
      if (!ta && !tb) dA.noalias() += G * B.transpose();
      else if (ta && !tb) dA.noalias() += B * G.transpose();
      else if (!ta && tb) dA.noalias() += G * B;
      else dA.noalias() += B.transpose() * G.transpose();
    }
    if (pneeds(n, 1)) {
      MatMap dB(pgrad(n, 1).data(), B.rows(), B.cols());
      if (!ta && !tb) dB.noalias() += A.transpose() * G;
      else if (ta && !tb) dB.noalias() += A * G;
      else if (!ta && tb) dB.noalias() += G.transpose() * A;
      else dB.noalias() += G.transpose() * A.transpose();
    }
  });
}

Tensor add_rowvec(const Tensor& x, const Tensor& b) {
  DUET_CHECK(x.ndim() == 2 && b.size() == x.dim(1), "add_rowvec: bad shapes");
  ArrayX out = x.value();
  MatMap O(out.data(), x.dim(0), x.dim(1));
  O.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.value().data(), b.size());
  int m = x.dim(0), nn = x.dim(1);
  return make_op("add_rowvec", x.shape(), std::move(out), {x, b}, [m, nn](ad::Node& n) {
    if (pneeds(n, 0)) pgrad(n, 0) += n.grad;
    if (pneeds(n, 1)) {
      ConstMatMap G(n.grad.data(), m, nn);
      Eigen::Map<Eigen::RowVectorXd>(pgrad(n, 1).data(), nn) += G.colwise().sum();
    }
  });
}

Tensor row_softmax(const Tensor& x) {
  DUET_CHECK(x.ndim() == 2, "row_softmax needs 2D");
  int m = x.dim(0), nn = x.dim(1);
  ArrayX out(m * nn);
  ConstMatMap X(x.value().data(), m, nn);
  MatMap Y(out.data(), m, nn);
  for (int i = 0; i < m; ++i) {
    Eigen::ArrayXd row = X.row(i).array();
    row -= row.maxCoeff();
    row = row.exp();
    Y.row(i) = (row / row.sum()).matrix();
  }
  ArrayX saved = out;
  return make_op("row_softmax", x.shape(), std::move(out), {x}, [m, nn, saved](ad::Node& n) {
    if (!pneeds(n, 0)) return;
    ConstMatMap Y(saved.data(), m, nn);
    ConstMatMap G(n.grad.data(), m, nn);
    MatMap DX(pgrad(n, 0).data(), m, nn);
    for (int i = 0; i < m; ++i) {
      double dot = G.row(i).dot(Y.row(i));
      DX.row(i).array() += (G.row(i).array() - dot) * Y.row(i).array();
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  DUET_CHECK(x.ndim() == 2, "layer_norm needs 2D");
  int m = x.dim(0), nn = x.dim(1);
  DUET_CHECK(gamma.size() == nn && beta.size() == nn, "layer_norm: param size");
  ArrayX xhat(m * nn), istd(m), out(m * nn);
  ConstMatMap X(x.value().data(), m, nn);
  MatMap XH(xhat.data(), m, nn);
  for (int i = 0; i < m; ++i) {
    double mu = X.row(i).mean();
    double var = (X.row(i).array() - mu).square().mean();
    istd[i] = 1.0 / std::sqrt(var + eps);
    XH.row(i) = ((X.row(i).array() - mu) * istd[i]).matrix();
  }
  MatMap O(out.data(), m, nn);
  Eigen::Map<const Eigen::RowVectorXd> g(gamma.value().data(), nn), bb(beta.value().data(), nn);
  for (int i = 0; i < m; ++i) O.row(i) = XH.row(i).cwiseProduct(g) + bb;

  return make_op("layer_norm", x.shape(), std::move(out), {x, gamma, beta},
                 [m, nn, xhat, istd](ad::Node& n) {
    ConstMatMap XH(xhat.data(), m, nn);
    ConstMatMap G(n.grad.data(), m, nn);
    Eigen::Map<const Eigen::RowVectorXd> gamma(pval(n, 1).data(), nn);
    if (pneeds(n, 0)) {
      MatMap DX(pgrad(n, 0).data(), m, nn);
      for (int i = 0; i < m; ++i) {
        Eigen::ArrayXd dxh = G.row(i).cwiseProduct(gamma).array();
        double s1 = dxh.sum();
        double s2 = (dxh * XH.row(i).transpose().array()).sum();
        DX.row(i).array() +=
            istd[i] * (dxh - s1 / nn - XH.row(i).transpose().array() * s2 / nn);
      }
    }
    if (pneeds(n, 1)) {
      Eigen::Map<Eigen::RowVectorXd> dg(pgrad(n, 1).data(), nn);
      for (int i = 0; i < m; ++i) dg.array() += G.row(i).array() * XH.row(i).array();
    }
    if (pneeds(n, 2)) {
      Eigen::Map<Eigen::RowVectorXd> db(pgrad(n, 2).data(), nn);
      db += G.colwise().sum();
    }
  });
}

Tensor reshape(const Tensor& x, std::vector<int> shape) {
  DUET_CHECK(shape_size(shape) == x.size(), "reshape: size mismatch");
  return make_op("reshape", std::move(shape), x.value(), {x}, [](ad::Node& n) {
    if (pneeds(n, 0)) pgrad(n, 0) += n.grad;
  });
}

Tensor slice_cols(const Tensor& x, int lo, int len) {
  DUET_CHECK(x.ndim() == 2 && lo >= 0 && lo + len <= x.dim(1), "slice_cols: out of range");
  int m = x.dim(0), nn = x.dim(1);
  ArrayX out(m * len);
  MatMap O(out.data(), m, len);
  O = ConstMatMap(x.value().data(), m, nn).middleCols(lo, len);
  return make_op("slice_cols", {m, len}, std::move(out), {x}, [m, nn, lo, len](ad::Node& n) {
    if (!pneeds(n, 0)) return;
    MatMap DX(pgrad(n, 0).data(), m, nn);
    DX.middleCols(lo, len) += ConstMatMap(n.grad.data(), m, len);
  });
}

Tensor concat_cols(const std::vector<Tensor>& xs) {
  DUET_CHECK(!xs.empty(), "concat_cols: empty");
  int m = xs[0].dim(0), total = 0;
  for (const Tensor& t : xs) {
    DUET_CHECK(t.ndim() == 2 && t.dim(0) == m, "concat_cols: row mismatch");
    total += t.dim(1);
  }
  ArrayX out(m * total);
  MatMap O(out.data(), m, total);
  std::vector<int> widths;
  int at = 0;
  for (const Tensor& t : xs) {
    O.middleCols(at, t.dim(1)) = t.mat();
    widths.push_back(t.dim(1));
    at += t.dim(1);
  }
  return make_op("concat_cols", {m, total}, std::move(out), xs, [m, total, widths](ad::Node& n) {
    ConstMatMap G(n.grad.data(), m, total);
    int at = 0;
    for (size_t i = 0; i < widths.size(); ++i) {
      if (pneeds(n, static_cast<int>(i))) {
        MatMap DX(pgrad(n, static_cast<int>(i)).data(), m, widths[i]);
        DX += G.middleCols(at, widths[i]);
      }
      at += widths[i];
    }
  });
}

Tensor slice_dim0(const Tensor& x, int lo, int len) {
  DUET_CHECK(x.ndim() >= 1 && lo >= 0 && lo + len <= x.dim(0), "slice_dim0: out of range");
  int inner = x.size() / x.dim(0);
  std::vector<int> shape = x.shape();
  shape[0] = len;
  ArrayX out = x.value().segment(lo * inner, len * inner);
  return make_op("slice_dim0", std::move(shape), std::move(out), {x}, [lo, len, inner](ad::Node& n) {
    if (pneeds(n, 0)) pgrad(n, 0).segment(lo * inner, len * inner) += n.grad;
  });
}

Tensor concat_dim0(const std::vector<Tensor>& xs) {
  DUET_CHECK(!xs.empty(), "concat_dim0: empty");
  std::vector<int> shape = xs[0].shape();
  int inner = xs[0].size() / std::max(1, xs[0].dim(0));
  int total = 0;
  for (const Tensor& t : xs) {
    DUET_CHECK(t.ndim() == static_cast<int>(shape.size()), "concat_dim0: rank mismatch");
    DUET_CHECK(t.dim(0) == 0 || t.size() / t.dim(0) == inner, "concat_dim0: inner mismatch");
    total += t.dim(0);
  }
  shape[0] = total;
  ArrayX out(total * inner);
  std::vector<int> lens;
  int at = 0;
  for (const Tensor& t : xs) {
    out.segment(at, t.size()) = t.value();
    lens.push_back(t.dim(0));
    at += t.size();
  }
  return make_op("concat_dim0", std::move(shape), std::move(out), xs, [lens, inner](ad::Node& n) {
    int at = 0;
    for (size_t i = 0; i < lens.size(); ++i) {
      int sz = lens[i] * inner;
      if (pneeds(n, static_cast<int>(i))) pgrad(n, static_cast<int>(i)) += n.grad.segment(at, sz);
      at += sz;
    }
  });
}

// ---------------------------------------------------------------------------
// image ops

namespace {

// im2col for [Ci,H,W] -> [Ci*kh*kw, Ho*Wo]
void im2col(const double* x, int ci, int h, int w, int kh, int kw, int stride, int pad,
            int ho, int wo, MatX& K) {
  K.setZero(ci * kh * kw, ho * wo);
  for (int c = 0; c < ci; ++c) {
    const double* xc = x + c * h * w;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        int row = (c * kh + ky) * kw + kx;
        for (int oy = 0; oy < ho; ++oy) {
          int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < wo; ++ox) {
            int ix = ox * stride + kx - pad;
            if (ix < 0 || ix >= w) continue;
            K(row, oy * wo + ox) = xc[iy * w + ix];
          }
        }
      }
    }
  }
}

void col2im_add(const MatX& K, int ci, int h, int w, int kh, int kw, int stride, int pad,
                int ho, int wo, double* dx) {
  for (int c = 0; c < ci; ++c) {
    double* xc = dx + c * h * w;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        int row = (c * kh + ky) * kw + kx;
        for (int oy = 0; oy < ho; ++oy) {
          int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < wo; ++ox) {
            int ix = ox * stride + kx - pad;
            if (ix < 0 || ix >= w) continue;
            xc[iy * w + ix] += K(row, oy * wo + ox);
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  DUET_CHECK(x.ndim() == 3 && w.ndim() == 4, "conv2d: expects [C,H,W] and [Co,Ci,kh,kw]");
  int ci = x.dim(0), h = x.dim(1), ww = x.dim(2);
  int co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  DUET_CHECK(w.dim(1) == ci, "conv2d: channel mismatch");
  DUET_CHECK(b.size() == co, "conv2d: bias size");
  int ho = (h + 2 * pad - kh) / stride + 1;
  int wo = (ww + 2 * pad - kw) / stride + 1;
  DUET_CHECK(ho > 0 && wo > 0, "conv2d: empty output");

  MatX K;
  im2col(x.value().data(), ci, h, ww, kh, kw, stride, pad, ho, wo, K);
  ConstMatMap W(w.value().data(), co, ci * kh * kw);
  ArrayX out(co * ho * wo);
  MatMap O(out.data(), co, ho * wo);
  O.noalias() = W * K;
  for (int c = 0; c < co; ++c) O.row(c).array() += b.value()[c];

  // im2col is recomputed in the backward pass to keep graph memory flat
  return make_op("conv2d", {co, ho, wo}, std::move(out), {x, w, b},
                 [ci, h, ww, co, kh, kw, stride, pad, ho, wo](ad::Node& n) {
    ConstMatMap G(n.grad.data(), co, ho * wo);
    ConstMatMap W(pval(n, 1).data(), co, ci * kh * kw);
    if (pneeds(n, 1) || pneeds(n, 0)) {
      MatX K;
      im2col(pval(n, 0).data(), ci, h, ww, kh, kw, stride, pad, ho, wo, K);
      if (pneeds(n, 1)) {
        MatMap DW(pgrad(n, 1).data(), co, ci * kh * kw);
        DW.noalias() += G * K.transpose();
      }
      if (pneeds(n, 0)) {
        MatX DK = W.transpose() * G;
        col2im_add(DK, ci, h, ww, kh, kw, stride, pad, ho, wo, pgrad(n, 0).data());
      }
    }
    if (pneeds(n, 2)) {
      ArrayX& db = pgrad(n, 2);
      for (int c = 0; c < co; ++c) db[c] += G.row(c).sum();
    }
  });
}

Tensor upsample_nearest2(const Tensor& x) {
  DUET_CHECK(x.ndim() == 3, "upsample_nearest2: expects [C,H,W]");
  int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  ArrayX out(c * 4 * h * w);
  const double* src = x.value().data();
  double* dst = out.data();
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < 2 * h; ++y)
      for (int xx = 0; xx < 2 * w; ++xx)
        dst[(ch * 2 * h + y) * 2 * w + xx] = src[(ch * h + y / 2) * w + xx / 2];
  return make_op("upsample_nearest2", {c, 2 * h, 2 * w}, std::move(out), {x},
                 [c, h, w](ad::Node& n) {
    if (!pneeds(n, 0)) return;
    double* dx = pgrad(n, 0).data();
    const double* g = n.grad.data();
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < 2 * h; ++y)
        for (int xx = 0; xx < 2 * w; ++xx)
          dx[(ch * h + y / 2) * w + xx / 2] += g[(ch * 2 * h + y) * 2 * w + xx];
  });
}

namespace {

// 1D zero-padded convolution along rows then cols with a symmetric kernel;
// the same routine serves forward and backward.
void blur_image(const double* src, double* dst, int c, int h, int w, const ArrayX& k) {
  int r = (static_cast<int>(k.size()) - 1) / 2;
  std::vector<double> tmp(static_cast<size_t>(h) * w);
  for (int ch = 0; ch < c; ++ch) {
    const double* s = src + static_cast<size_t>(ch) * h * w;
    double* d = dst + static_cast<size_t>(ch) * h * w;
    // horizontal
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0;
        for (int t = -r; t <= r; ++t) {
          int xx = x + t;
          if (xx >= 0 && xx < w) acc += k[t + r] * s[y * w + xx];
        }
        tmp[y * w + x] = acc;
      }
    // vertical
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0;
        for (int t = -r; t <= r; ++t) {
          int yy = y + t;
          if (yy >= 0 && yy < h) acc += k[t + r] * tmp[yy * w + x];
        }
        d[y * w + x] = acc;
      }
  }
}

}  // namespace

Tensor gaussian_blur2d(const Tensor& x, const ArrayX& kernel1d) {
  DUET_CHECK(x.ndim() == 3, "gaussian_blur2d: expects [C,H,W]");
  DUET_CHECK(kernel1d.size() % 2 == 1, "gaussian_blur2d: kernel must be odd-length");
  int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  ArrayX out(x.size());
  blur_image(x.value().data(), out.data(), c, h, w, kernel1d);
  ArrayX k = kernel1d;
  return make_op("gaussian_blur2d", x.shape(), std::move(out), {x}, [c, h, w, k](ad::Node& n) {
    if (!pneeds(n, 0)) return;
    ArrayX dx(n.grad.size());
    blur_image(n.grad.data(), dx.data(), c, h, w, k);
    pgrad(n, 0) += dx;
  });
}

Tensor crop2d(const Tensor& x, int margin) {
  DUET_CHECK(x.ndim() == 3, "crop2d: expects [C,H,W]");
  int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  int hh = h - 2 * margin, ww = w - 2 * margin;
  DUET_CHECK(hh > 0 && ww > 0, "crop2d: margin too large");
  ArrayX out(c * hh * ww);
  const double* src = x.value().data();
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < hh; ++y)
      for (int xx = 0; xx < ww; ++xx)
        out[(ch * hh + y) * ww + xx] = src[(ch * h + y + margin) * w + xx + margin];
  return make_op("crop2d", {c, hh, ww}, std::move(out), {x}, [c, h, w, hh, ww, margin](ad::Node& n) {
    if (!pneeds(n, 0)) return;
    double* dx = pgrad(n, 0).data();
    const double* g = n.grad.data();
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < hh; ++y)
        for (int xx = 0; xx < ww; ++xx)
          dx[(ch * h + y + margin) * w + xx + margin] += g[(ch * hh + y) * ww + xx];
  });
}

}  // namespace ops
}  // namespace duet
