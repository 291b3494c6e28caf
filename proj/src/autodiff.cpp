#include "heatlab/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace heatlab::nn {

Tape::Id Tape::push(Tensor val, std::function<void(Tape&, Rec&)> back) {
  recs_.push_back(Rec{std::move(val), Tensor{}, std::move(back), ParamRef{}});
  Id id = static_cast<Id>(recs_.size()) - 1;
  recs_[id].grad = Tensor(recs_[id].val.rows, recs_[id].val.cols);
  return id;
}

Tape::Id Tape::input(Tensor v) { return push(std::move(v), nullptr); }

Tape::Id Tape::param(const ParamRef& p) {
  Id id = push(*p.value, nullptr);
  recs_[id].external = p;
  return id;
}

Tape::Id Tape::linear(Id x, Id w, Id b) {
  Tensor out;
  kernels::matmul(val(x), val(w), out);
  kernels::add_row_bias(out, val(b));
  return push(std::move(out), [x, w, b](Tape& t, Rec& self) {
    Tensor dx, dw;
    kernels::matmul_nt(self.grad, t.val(w), dx);  // dY * W^T
    kernels::matmul_tn(t.val(x), self.grad, dw);  // X^T * dY
    kernels::add_inplace(t.grad_of(x), dx);
    kernels::add_inplace(t.grad_of(w), dw);
    Tensor& db = t.grad_of(b);
    for (std::size_t i = 0; i < self.grad.rows; ++i) {
      for (std::size_t j = 0; j < self.grad.cols; ++j) db.v[j] += self.grad.at(i, j);
    }
  });
}

Tape::Id Tape::matmul(Id a, Id b) {
  Tensor out;
  kernels::matmul(val(a), val(b), out);
  return push(std::move(out), [a, b](Tape& t, Rec& self) {
    Tensor da, db;
    kernels::matmul_nt(self.grad, t.val(b), da);
    kernels::matmul_tn(t.val(a), self.grad, db);
    kernels::add_inplace(t.grad_of(a), da);
    kernels::add_inplace(t.grad_of(b), db);
  });
}

Tape::Id Tape::matmul_nt(Id a, Id b) {
  Tensor out;
  kernels::matmul_nt(val(a), val(b), out);
  return push(std::move(out), [a, b](Tape& t, Rec& self) {
    // out = A B^T: dA = dOut * B ; dB = dOut^T * A
    Tensor da, db;
    kernels::matmul(self.grad, t.val(b), da);
    kernels::matmul_tn(self.grad, t.val(a), db);
    kernels::add_inplace(t.grad_of(a), da);
    kernels::add_inplace(t.grad_of(b), db);
  });
}

Tape::Id Tape::add(Id a, Id b) {
  Tensor out = val(a);
  kernels::add_inplace(out, val(b));
  return push(std::move(out), [a, b](Tape& t, Rec& self) {
    kernels::add_inplace(t.grad_of(a), self.grad);
    kernels::add_inplace(t.grad_of(b), self.grad);
  });
}

Tape::Id Tape::add_bias(Id x, Id b) {
  Tensor out = val(x);
  kernels::add_row_bias(out, val(b));
  return push(std::move(out), [x, b](Tape& t, Rec& self) {
    kernels::add_inplace(t.grad_of(x), self.grad);
    Tensor& gb = t.grad_of(b);
    for (std::size_t i = 0; i < self.grad.rows; ++i) {
      for (std::size_t j = 0; j < self.grad.cols; ++j) gb.v[j] += self.grad.at(i, j);
    }
  });
}

Tape::Id Tape::sub(Id a, Id b) {
  Tensor out = val(a);
  const Tensor& vb = val(b);
  if (!out.same_shape(vb)) throw std::logic_error("sub shape mismatch");
  for (std::size_t i = 0; i < out.size(); ++i) out.v[i] -= vb.v[i];
  return push(std::move(out), [a, b](Tape& t, Rec& self) {
    kernels::add_inplace(t.grad_of(a), self.grad);
    Tensor& gb = t.grad_of(b);
    for (std::size_t i = 0; i < gb.size(); ++i) gb.v[i] -= self.grad.v[i];
  });
}

Tape::Id Tape::mul(Id a, Id b) {
  Tensor out = val(a);
  const Tensor& vb = val(b);
  if (!out.same_shape(vb)) throw std::logic_error("mul shape mismatch");
  for (std::size_t i = 0; i < out.size(); ++i) out.v[i] *= vb.v[i];
  return push(std::move(out), [a, b](Tape& t, Rec& self) {
    Tensor& ga = t.grad_of(a);
    Tensor& gb = t.grad_of(b);
    const Tensor& va = t.val(a);
    const Tensor& vb2 = t.val(b);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      ga.v[i] += self.grad.v[i] * vb2.v[i];
      gb.v[i] += self.grad.v[i] * va.v[i];
    }
  });
}

Tape::Id Tape::scale(Id a, double c) {
  Tensor out = val(a);
  kernels::scale_inplace(out, c);
  return push(std::move(out), [a, c](Tape& t, Rec& self) {
    Tensor& ga = t.grad_of(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga.v[i] += self.grad.v[i] * c;
  });
}

Tape::Id Tape::add_const(Id a, double c) {
  Tensor out = val(a);
  for (double& e : out.v) e += c;
  return push(std::move(out), [a](Tape& t, Rec& self) {
    kernels::add_inplace(t.grad_of(a), self.grad);
  });
}

Tape::Id Tape::rsub_const(double c, Id a) {
  Tensor out = val(a);
  for (double& e : out.v) e = c - e;
  return push(std::move(out), [a](Tape& t, Rec& self) {
    Tensor& ga = t.grad_of(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga.v[i] -= self.grad.v[i];
  });
}

Tape::Id Tape::leaky_relu(Id x, double slope) {
  Tensor out = val(x);
  kernels::leaky_relu_inplace(out, slope);
  return push(std::move(out), [x, slope](Tape& t, Rec& self) {
    Tensor& gx = t.grad_of(x);
    const Tensor& vx = t.val(x);
    for (std::size_t i = 0; i < gx.size(); ++i) {
      gx.v[i] += self.grad.v[i] * (vx.v[i] > 0 ? 1.0 : slope);
    }
  });
}

Tape::Id Tape::row_softmax(Id x) {
  Tensor out = val(x);
  kernels::row_softmax_inplace(out);
  return push(std::move(out), [x](Tape& t, Rec& self) {
    Tensor& gx = t.grad_of(x);
    for (std::size_t i = 0; i < self.val.rows; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < self.val.cols; ++j) {
        dot += self.grad.at(i, j) * self.val.at(i, j);
      }
      for (std::size_t j = 0; j < self.val.cols; ++j) {
        gx.at(i, j) += self.val.at(i, j) * (self.grad.at(i, j) - dot);
      }
    }
  });
}

Tape::Id Tape::row_log_softmax(Id x) {
  Tensor out = val(x);
  kernels::row_log_softmax_inplace(out);
  return push(std::move(out), [x](Tape& t, Rec& self) {
    Tensor& gx = t.grad_of(x);
    for (std::size_t i = 0; i < self.val.rows; ++i) {
      double gsum = 0.0;
      for (std::size_t j = 0; j < self.val.cols; ++j) gsum += self.grad.at(i, j);
      for (std::size_t j = 0; j < self.val.cols; ++j) {
        gx.at(i, j) += self.grad.at(i, j) - std::exp(self.val.at(i, j)) * gsum;
      }
    }
  });
}

Tape::Id Tape::layer_norm(Id x, Id gain, Id bias, double eps) {
  Tensor out, mean, inv_std;
  kernels::layer_norm_rows(val(x), val(gain), val(bias), eps, out, &mean, &inv_std);
  Tensor mean_c = mean, inv_c = inv_std;
  return push(std::move(out), [x, gain, bias, mean_c, inv_c](Tape& t, Rec& self) {
    const Tensor& vx = t.val(x);
    const Tensor& vg = t.val(gain);
    Tensor& gx = t.grad_of(x);
    Tensor& gg = t.grad_of(gain);
    Tensor& gb = t.grad_of(bias);
    std::size_t d = vx.cols;
    for (std::size_t i = 0; i < vx.rows; ++i) {
      double m = mean_c.v[i], is = inv_c.v[i];
      double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
      std::vector<double> xhat(d), dxhat(d);
      for (std::size_t j = 0; j < d; ++j) {
        xhat[j] = (vx.at(i, j) - m) * is;
        dxhat[j] = self.grad.at(i, j) * vg.v[j];
        sum_dxhat += dxhat[j];
        sum_dxhat_xhat += dxhat[j] * xhat[j];
        gg.v[j] += self.grad.at(i, j) * xhat[j];
        gb.v[j] += self.grad.at(i, j);
      }
      double nd = static_cast<double>(d);
      for (std::size_t j = 0; j < d; ++j) {
        gx.at(i, j) += is * (dxhat[j] - sum_dxhat / nd - xhat[j] * sum_dxhat_xhat / nd);
      }
    }
  });
}

Tape::Id Tape::concat_cols(const std::vector<Id>& parts) {
  std::size_t rows = val(parts[0]).rows;
  std::size_t cols = 0;
  for (Id p : parts) {
    if (val(p).rows != rows) throw std::logic_error("concat row mismatch");
    cols += val(p).cols;
  }
  Tensor out(rows, cols);
  std::size_t off = 0;
  for (Id p : parts) {
    const Tensor& vp = val(p);
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < vp.cols; ++j) out.at(i, off + j) = vp.at(i, j);
    }
    off += vp.cols;
  }
  std::vector<Id> parts_c = parts;
  return push(std::move(out), [parts_c](Tape& t, Rec& self) {
    std::size_t off = 0;
    for (Id p : parts_c) {
      Tensor& gp = t.grad_of(p);
      for (std::size_t i = 0; i < gp.rows; ++i) {
        for (std::size_t j = 0; j < gp.cols; ++j) gp.at(i, j) += self.grad.at(i, off + j);
      }
      off += gp.cols;
    }
  });
}

Tape::Id Tape::slice_cols(Id x, std::size_t c0, std::size_t c1) {
  const Tensor& vx = val(x);
  Tensor out(vx.rows, c1 - c0);
  for (std::size_t i = 0; i < vx.rows; ++i) {
    for (std::size_t j = c0; j < c1; ++j) out.at(i, j - c0) = vx.at(i, j);
  }
  return push(std::move(out), [x, c0](Tape& t, Rec& self) {
    Tensor& gx = t.grad_of(x);
    for (std::size_t i = 0; i < self.grad.rows; ++i) {
      for (std::size_t j = 0; j < self.grad.cols; ++j) gx.at(i, c0 + j) += self.grad.at(i, j);
    }
  });
}

Tape::Id Tape::gather_cols(Id x, const std::vector<int>& index_per_row) {
  const Tensor& vx = val(x);
  if (index_per_row.size() != vx.rows) throw std::logic_error("gather index count mismatch");
  Tensor out(vx.rows, 1);
  for (std::size_t i = 0; i < vx.rows; ++i) out.v[i] = vx.at(i, index_per_row[i]);
  std::vector<int> idx = index_per_row;
  return push(std::move(out), [x, idx](Tape& t, Rec& self) {
    Tensor& gx = t.grad_of(x);
    for (std::size_t i = 0; i < self.grad.rows; ++i) gx.at(i, idx[i]) += self.grad.v[i];
  });
}

Tape::Id Tape::log(Id x) {
  Tensor out = val(x);
  for (double& e : out.v) e = std::log(e);
  return push(std::move(out), [x](Tape& t, Rec& self) {
    Tensor& gx = t.grad_of(x);
    const Tensor& vx = t.val(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx.v[i] += self.grad.v[i] / vx.v[i];
  });
}

Tape::Id Tape::square(Id x) {
  Tensor out = val(x);
  for (double& e : out.v) e *= e;
  return push(std::move(out), [x](Tape& t, Rec& self) {
    Tensor& gx = t.grad_of(x);
    const Tensor& vx = t.val(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx.v[i] += self.grad.v[i] * 2.0 * vx.v[i];
  });
}

Tape::Id Tape::expectile_sq(Id x, double rho) {
  const Tensor& vx = val(x);
  Tensor out = vx;
  for (double& e : out.v) {
    double w = e < 0 ? std::abs(rho - 1.0) : rho;
    e = w * e * e;
  }
  return push(std::move(out), [x, rho](Tape& t, Rec& self) {
    Tensor& gx = t.grad_of(x);
    const Tensor& vx2 = t.val(x);
    for (std::size_t i = 0; i < gx.size(); ++i) {
      double w = vx2.v[i] < 0 ? std::abs(rho - 1.0) : rho;
      gx.v[i] += self.grad.v[i] * 2.0 * w * vx2.v[i];
    }
  });
}

Tape::Id Tape::mean_all(Id x) {
  const Tensor& vx = val(x);
  double m = 0.0;
  for (double e : vx.v) m += e;
  m /= static_cast<double>(vx.size());
  return push(Tensor::scalar(m), [x](Tape& t, Rec& self) {
    Tensor& gx = t.grad_of(x);
    double g = self.grad.v[0] / static_cast<double>(gx.size());
    for (double& e : gx.v) e += g;
  });
}

Tape::Id Tape::sum_rows(Id x) {
  const Tensor& vx = val(x);
  Tensor out(vx.rows, 1);
  for (std::size_t i = 0; i < vx.rows; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < vx.cols; ++j) acc += vx.at(i, j);
    out.v[i] = acc;
  }
  return push(std::move(out), [x](Tape& t, Rec& self) {
    Tensor& gx = t.grad_of(x);
    for (std::size_t i = 0; i < gx.rows; ++i) {
      for (std::size_t j = 0; j < gx.cols; ++j) gx.at(i, j) += self.grad.v[i];
    }
  });
}

void Tape::backward(Id scalar_root) {
  if (recs_[scalar_root].val.size() != 1) throw std::logic_error("backward root must be scalar");
  recs_[scalar_root].grad.v[0] = 1.0;
  for (Id id = static_cast<Id>(recs_.size()) - 1; id >= 0; --id) {
    Rec& rec = recs_[id];
    if (rec.back) rec.back(*this, rec);
    if (rec.external.grad) kernels::add_inplace(*rec.external.grad, rec.grad);
  }
}

}  // namespace heatlab::nn
