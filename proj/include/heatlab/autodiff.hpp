#pragma once

#include <functional>
#include <vector>

#include "heatlab/tensor.hpp"

namespace heatlab::nn {

// External parameter leaf: gradients accumulate into *grad across backward
// passes until the optimizer consumes and clears them.
struct ParamRef {
  const Tensor* value = nullptr;
  Tensor* grad = nullptr;
};

// Reverse-mode tape over 2-D tensors. A fresh tape is built per training
// step; creation order is the topological order used for the backward sweep.
class Tape {
 public:
  using Id = int;

  Id input(Tensor v);          // constant, no gradient
  Id param(const ParamRef& p);  // leaf whose gradient accumulates externally

  Id linear(Id x, Id w, Id b);  // x*w + row-broadcast bias
  Id matmul(Id a, Id b);
  Id matmul_nt(Id a, Id b);  // a * b^T
  Id add(Id a, Id b);
  Id add_bias(Id x, Id b);  // row-broadcast bias add
  Id sub(Id a, Id b);
  Id mul(Id a, Id b);  // elementwise
  Id scale(Id a, double c);
  Id add_const(Id a, double c);
  Id rsub_const(double c, Id a);  // c - a
  Id leaky_relu(Id x, double slope = 0.01);
  Id row_softmax(Id x);
  Id row_log_softmax(Id x);
  Id layer_norm(Id x, Id gain, Id bias, double eps = 1e-5);
  Id concat_cols(const std::vector<Id>& parts);
  Id slice_cols(Id x, std::size_t c0, std::size_t c1);
  Id gather_cols(Id x, const std::vector<int>& index_per_row);
  Id log(Id x);
  Id square(Id x);
  Id expectile_sq(Id x, double rho);  // |rho - 1(x<0)| * x^2, elementwise
  Id mean_all(Id x);
  Id sum_rows(Id x);  // rows x 1

  void backward(Id scalar_root);

  const Tensor& val(Id id) const { return recs_[id].val; }
  const Tensor& grad(Id id) const { return recs_[id].grad; }
  std::size_t size() const { return recs_.size(); }

 private:
  struct Rec {
    Tensor val;
    Tensor grad;
    std::function<void(Tape&, Rec&)> back;  // adds into parents' grads
    ParamRef external;
  };
  Id push(Tensor val, std::function<void(Tape&, Rec&)> back);
  Tensor& grad_of(Id id) { return recs_[id].grad; }

  std::vector<Rec> recs_;
};

}  // namespace heatlab::nn
