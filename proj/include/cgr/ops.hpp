#pragma once

#include <vector>

#include "cgr/tensor.hpp"

// Forward operations with recorded gradient rules. Shape violations throw
// std::invalid_argument naming both shapes. Unless stated otherwise the
// operands are rank-2 row-major matrices.
namespace cgr {

// elementwise, same shape
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor minimum(const Tensor& a, const Tensor& b);  // ties route grad to a
Tensor maximum(const Tensor& a, const Tensor& b);

// elementwise, unary
Tensor scale(const Tensor& x, double c);
Tensor add_scalar(const Tensor& x, double c);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softplus(const Tensor& x);  // log(1 + e^x), stable
Tensor abs_val(const Tensor& x);   // subgradient 0 at the kink
Tensor pow_scalar(const Tensor& x, double p);  // x >= 0 for fractional p

// linear algebra
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);

// softmax along `axis` (0 or 1 for matrices, 0 for vectors), max-subtracted
Tensor softmax(const Tensor& x, int axis);

// softmax(q k^T / sqrt(d)) v
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v);

// row selection / rearrangement
Tensor gather_rows(const Tensor& x, const std::vector<int>& idx);
std::vector<int> topk_indices(const Tensor& scores, int k);  // desc, ties -> smaller index
Tensor rowmax(const Tensor& x);  // per-row max; grad to first argmax
Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& x, int start, int len);

// reductions and row-vector broadcasts
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
Tensor mean_rows(const Tensor& x);  // [n,d] -> [1,d]
Tensor add_rowvec(const Tensor& x, const Tensor& v);
Tensor mul_rowvec(const Tensor& x, const Tensor& v);
Tensor scale_rows(const Tensor& x, const std::vector<double>& factors);

Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma,
                       const Tensor& beta, double eps = 1e-5);

// value copy detached from the graph
Tensor stop_grad(const Tensor& x);

}  // namespace cgr
