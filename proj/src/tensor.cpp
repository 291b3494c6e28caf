#include "heatlab/tensor.hpp"

#include <cmath>

namespace heatlab::nn::kernels {

void matmul(const Tensor& a, const Tensor& b, Tensor& out) {
  if (a.cols != b.rows) throw std::logic_error("matmul shape mismatch");
  out = Tensor(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t k = 0; k < a.cols; ++k) {
      double aik = a.at(i, k);
      if (aik == 0.0) continue;
      const double* brow = &b.v[k * b.cols];
      double* orow = &out.v[i * out.cols];
      for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
    }
  }
}

void matmul_nt(const Tensor& a, const Tensor& b, Tensor& out) {
  if (a.cols != b.cols) throw std::logic_error("matmul_nt shape mismatch");
  out = Tensor(a.rows, b.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t j = 0; j < b.rows; ++j) {
      double acc = 0.0;
      const double* arow = &a.v[i * a.cols];
      const double* brow = &b.v[j * b.cols];
      for (std::size_t k = 0; k < a.cols; ++k) acc += arow[k] * brow[k];
      out.at(i, j) = acc;
    }
  }
}

void matmul_tn(const Tensor& a, const Tensor& b, Tensor& out) {
  if (a.rows != b.rows) throw std::logic_error("matmul_tn shape mismatch");
  out = Tensor(a.cols, b.cols);
  for (std::size_t k = 0; k < a.rows; ++k) {
    const double* arow = &a.v[k * a.cols];
    const double* brow = &b.v[k * b.cols];
    for (std::size_t i = 0; i < a.cols; ++i) {
      double aki = arow[i];
      if (aki == 0.0) continue;
      double* orow = &out.v[i * out.cols];
      for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aki * brow[j];
    }
  }
}

void add_row_bias(Tensor& x, const Tensor& bias) {
  if (bias.rows != 1 || bias.cols != x.cols) throw std::logic_error("bias shape mismatch");
  for (std::size_t i = 0; i < x.rows; ++i) {
    double* row = &x.v[i * x.cols];
    for (std::size_t j = 0; j < x.cols; ++j) row[j] += bias.v[j];
  }
}

void add_inplace(Tensor& x, const Tensor& y) {
  if (!x.same_shape(y)) throw std::logic_error("add shape mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) x.v[i] += y.v[i];
}

void leaky_relu_inplace(Tensor& x, double slope) {
  for (double& e : x.v) {
    if (e < 0) e *= slope;
  }
}

void row_softmax_inplace(Tensor& x) {
  for (std::size_t i = 0; i < x.rows; ++i) {
    double* row = &x.v[i * x.cols];
    double m = row[0];
    for (std::size_t j = 1; j < x.cols; ++j) m = std::max(m, row[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) {
      row[j] = std::exp(row[j] - m);
      sum += row[j];
    }
    for (std::size_t j = 0; j < x.cols; ++j) row[j] /= sum;
  }
}

void row_log_softmax_inplace(Tensor& x) {
  for (std::size_t i = 0; i < x.rows; ++i) {
    double* row = &x.v[i * x.cols];
    double m = row[0];
    for (std::size_t j = 1; j < x.cols; ++j) m = std::max(m, row[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) sum += std::exp(row[j] - m);
    double lse = m + std::log(sum);
    for (std::size_t j = 0; j < x.cols; ++j) row[j] -= lse;
  }
}

void layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps,
                     Tensor& out, Tensor* mean_out, Tensor* inv_std_out) {
  out = Tensor(x.rows, x.cols);
  if (mean_out) *mean_out = Tensor(x.rows, 1);
  if (inv_std_out) *inv_std_out = Tensor(x.rows, 1);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const double* row = &x.v[i * x.cols];
    double mean = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) mean += row[j];
    mean /= static_cast<double>(x.cols);
    double var = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) {
      double d = row[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(x.cols);
    double inv_std = 1.0 / std::sqrt(var + eps);
    if (mean_out) mean_out->v[i] = mean;
    if (inv_std_out) inv_std_out->v[i] = inv_std;
    double* orow = &out.v[i * out.cols];
    for (std::size_t j = 0; j < x.cols; ++j) {
      orow[j] = (row[j] - mean) * inv_std * gain.v[j] + bias.v[j];
    }
  }
}

void scale_inplace(Tensor& x, double c) {
  for (double& e : x.v) e *= c;
}

}  // namespace heatlab::nn::kernels
