#pragma once

#include <vector>

#include "duet/tensor.hpp"

namespace duet {
namespace ops {

// elementwise
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& x);
Tensor add_scalar(const Tensor& x, double s);
Tensor mul_scalar(const Tensor& x, double s);
Tensor mul_const(const Tensor& x, const ArrayX& c);   // elementwise by a constant
Tensor add_const(const Tensor& x, const ArrayX& c);

Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor silu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor tanh_(const Tensor& x);
Tensor exp_(const Tensor& x);
Tensor log_(const Tensor& x);
Tensor sqrt_(const Tensor& x);
Tensor square(const Tensor& x);
Tensor abs_(const Tensor& x);
Tensor clamp_max(const Tensor& x, double cap);
Tensor clamp_min(const Tensor& x, double floor);

// reductions
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum_sq(const Tensor& x);

// linear algebra ([m,k] x [k,n]; ta/tb transpose the stored operand first)
Tensor matmul(const Tensor& a, const Tensor& b, bool ta = false, bool tb = false);
Tensor add_rowvec(const Tensor& x, const Tensor& b);  // [m,n] + [n]

// rows/softmax/norm
Tensor row_softmax(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

// structure
Tensor reshape(const Tensor& x, std::vector<int> shape);
Tensor slice_cols(const Tensor& x, int lo, int len);
Tensor concat_cols(const std::vector<Tensor>& xs);
Tensor slice_dim0(const Tensor& x, int lo, int len);
Tensor concat_dim0(const std::vector<Tensor>& xs);

// image ops; images are [C,H,W]
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);
Tensor upsample_nearest2(const Tensor& x);
Tensor gaussian_blur2d(const Tensor& x, const ArrayX& kernel1d);  // zero padding
Tensor crop2d(const Tensor& x, int margin);

}  // namespace ops
}  // namespace duet
