#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace heatlab::nn {

// Dense row-major 2-D tensor of doubles. Scalars are 1x1.
struct Tensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), v(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
  std::size_t size() const { return v.size(); }
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

  static Tensor scalar(double x) {
    Tensor t(1, 1);
    t.v[0] = x;
    return t;
  }
  double item() const {
    if (size() != 1) throw std::logic_error("item() on non-scalar tensor");
    return v[0];
  }
};

// Shared low-level kernels. Both the autodiff tape and the grad-free fast
// paths call these, so the two compute bit-identical forwards.
namespace kernels {

void matmul(const Tensor& a, const Tensor& b, Tensor& out);     // a[m,k] * b[k,n]
void matmul_nt(const Tensor& a, const Tensor& b, Tensor& out);  // a[m,k] * b[n,k]^T
void matmul_tn(const Tensor& a, const Tensor& b, Tensor& out);  // a[k,m]^T * b[k,n]
void add_row_bias(Tensor& x, const Tensor& bias);               // x[i,:] += bias
void add_inplace(Tensor& x, const Tensor& y);
void leaky_relu_inplace(Tensor& x, double slope);
void row_softmax_inplace(Tensor& x);
void row_log_softmax_inplace(Tensor& x);
void layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps,
                     Tensor& out, Tensor* mean_out = nullptr, Tensor* inv_std_out = nullptr);
void scale_inplace(Tensor& x, double c);

}  // namespace kernels

}  // namespace heatlab::nn
