#include "heatlab/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "heatlab/rng.hpp"

namespace heatlab::nn {

using nlohmann::json;

ParamStore::Entry& ParamStore::add(const std::string& name, std::size_t rows, std::size_t cols,
                                   double bound) {
  if (has(name)) throw std::logic_error("duplicate parameter name: " + name);
  Entry e;
  e.name = name;
  e.value = Tensor(rows, cols);
  e.grad = Tensor(rows, cols);
  e.m = Tensor(rows, cols);
  e.v = Tensor(rows, cols);
  if (bound > 0) {
    Rng rng = derive_rng(master_seed_, name);
    for (double& x : e.value.v) x = rng.uniform(-bound, bound);
  }
  index_[name] = entries_.size();
  entries_.push_back(std::move(e));
  order_.push_back(name);
  return entries_.back();
}

ParamStore::Entry& ParamStore::add_scalar(const std::string& name, double value) {
  Entry& e = add(name, 1, 1, 0.0);
  e.value.v[0] = value;
  return e;
}

ParamStore::Entry& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::logic_error("unknown parameter: " + name);
  return entries_[it->second];
}

const ParamStore::Entry& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::logic_error("unknown parameter: " + name);
  return entries_[it->second];
}

ParamRef ParamStore::ref(const std::string& name) {
  Entry& e = at(name);
  return ParamRef{&e.value, &e.grad};
}

void ParamStore::zero_grads() {
  for (Entry& e : entries_) std::fill(e.grad.v.begin(), e.grad.v.end(), 0.0);
}

void ParamStore::adam_step(const std::vector<std::string>& prefixes, const AdamConfig& cfg) {
  for (Entry& e : entries_) {
    bool match = false;
    for (const auto& p : prefixes) {
      if (e.name.rfind(p, 0) == 0) {
        match = true;
        break;
      }
    }
    if (!match) continue;
    for (double g : e.grad.v) {
      if (!std::isfinite(g)) throw TrainingError("non-finite gradient in " + e.name);
    }
    e.steps += 1;
    double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(e.steps));
    double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(e.steps));
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      double g = e.grad.v[i];
      e.m.v[i] = cfg.beta1 * e.m.v[i] + (1.0 - cfg.beta1) * g;
      e.v.v[i] = cfg.beta2 * e.v.v[i] + (1.0 - cfg.beta2) * g * g;
      double mhat = e.m.v[i] / bc1;
      double vhat = e.v.v[i] / bc2;
      e.value.v[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
    std::fill(e.grad.v.begin(), e.grad.v.end(), 0.0);
  }
}

void ParamStore::copy_values(const std::string& src_prefix, const std::string& dst_prefix) {
  for (Entry& e : entries_) {
    if (e.name.rfind(src_prefix, 0) != 0) continue;
    std::string dst = dst_prefix + e.name.substr(src_prefix.size());
    at(dst).value = e.value;
  }
}

namespace {
constexpr const char* kCheckpointMagic = "HEATCKPT";
constexpr int kCheckpointVersion = 1;
}  // namespace

void ParamStore::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  json manifest = json::array();
  for (const auto& name : order_) {
    const Entry& e = at(name);
    manifest.push_back({{"name", e.name}, {"rows", e.value.rows}, {"cols", e.value.cols}});
  }
  json header{{"magic", kCheckpointMagic}, {"version", kCheckpointVersion}, {"tensors", manifest}};
  std::string htxt = header.dump();
  out << htxt << "\n";
  for (const auto& name : order_) {
    const Entry& e = at(name);
    out.write(reinterpret_cast<const char*>(e.value.v.data()),
              static_cast<std::streamsize>(e.value.size() * sizeof(double)));
  }
}

void ParamStore::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string htxt;
  if (!std::getline(in, htxt)) throw std::runtime_error("checkpoint truncated: missing header");
  json header = json::parse(htxt);
  if (header.at("magic").get<std::string>() != kCheckpointMagic) {
    throw std::runtime_error("not a checkpoint file: " + path);
  }
  int version = header.at("version").get<int>();
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint version mismatch: file has " + std::to_string(version) +
                             ", this build reads " + std::to_string(kCheckpointVersion));
  }
  const json& manifest = header.at("tensors");
  if (manifest.size() != order_.size()) {
    throw std::runtime_error("checkpoint manifest has " + std::to_string(manifest.size()) +
                             " tensors, expected " + std::to_string(order_.size()));
  }
  for (std::size_t i = 0; i < order_.size(); ++i) {
    const json& m = manifest[i];
    Entry& e = at(order_[i]);
    if (m.at("name").get<std::string>() != e.name || m.at("rows").get<std::size_t>() != e.value.rows ||
        m.at("cols").get<std::size_t>() != e.value.cols) {
      throw std::runtime_error("checkpoint tensor mismatch at " + e.name);
    }
  }
  for (const auto& name : order_) {
    Entry& e = at(name);
    in.read(reinterpret_cast<char*>(e.value.v.data()),
            static_cast<std::streamsize>(e.value.size() * sizeof(double)));
    if (in.gcount() != static_cast<std::streamsize>(e.value.size() * sizeof(double))) {
      throw std::runtime_error("checkpoint truncated while reading " + name);
    }
  }
}

Dense make_dense(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out) {
  double bound = 1.0 / std::sqrt(static_cast<double>(in));
  store.add(prefix + ".w", in, out, bound);
  store.add(prefix + ".b", 1, out, bound);
  return Dense{prefix + ".w", prefix + ".b", in, out};
}

Tensor dense_forward(const ParamStore& store, const Dense& d, const Tensor& x) {
  Tensor out;
  kernels::matmul(x, store.at(d.w).value, out);
  kernels::add_row_bias(out, store.at(d.b).value);
  return out;
}

Tape::Id dense_forward(Tape& tape, ParamStore& store, const Dense& d, Tape::Id x) {
  return tape.linear(x, tape.param(store.ref(d.w)), tape.param(store.ref(d.b)));
}

Stack make_stack(ParamStore& store, const std::string& prefix,
                 const std::vector<std::size_t>& dims) {
  Stack s;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    s.layers.push_back(make_dense(store, prefix + ".l" + std::to_string(i), dims[i], dims[i + 1]));
  }
  return s;
}

Tensor stack_forward(const ParamStore& store, const Stack& s, const Tensor& x) {
  Tensor h = x;
  for (const Dense& d : s.layers) {
    h = dense_forward(store, d, h);
    kernels::leaky_relu_inplace(h, kLeakySlope);
  }
  return h;
}

Tape::Id stack_forward(Tape& tape, ParamStore& store, const Stack& s, Tape::Id x) {
  Tape::Id h = x;
  for (const Dense& d : s.layers) {
    h = tape.leaky_relu(dense_forward(tape, store, d, h), kLeakySlope);
  }
  return h;
}

namespace {
LayerNormParams make_layer_norm(ParamStore& store, const std::string& prefix, std::size_t dim) {
  auto& g = store.add(prefix + ".g", 1, dim, 0.0);
  std::fill(g.value.v.begin(), g.value.v.end(), 1.0);
  store.add(prefix + ".b", 1, dim, 0.0);
  return LayerNormParams{prefix + ".g", prefix + ".b"};
}
}  // namespace

Encoder make_encoder(ParamStore& store, const std::string& prefix, const EncoderConfig& cfg) {
  cfg.validate();
  Encoder enc;
  enc.cfg = cfg;
  enc.in_proj = make_dense(store, prefix + ".in", cfg.input_dim, cfg.model_dim);
  for (int l = 0; l < cfg.layers; ++l) {
    std::string lp = prefix + ".b" + std::to_string(l);
    EncoderLayer layer;
    layer.ln1 = make_layer_norm(store, lp + ".ln1", cfg.model_dim);
    layer.wq = make_dense(store, lp + ".q", cfg.model_dim, cfg.model_dim);
    layer.wk = make_dense(store, lp + ".k", cfg.model_dim, cfg.model_dim);
    layer.wv = make_dense(store, lp + ".v", cfg.model_dim, cfg.model_dim);
    layer.wo = make_dense(store, lp + ".o", cfg.model_dim, cfg.model_dim);
    layer.ln2 = make_layer_norm(store, lp + ".ln2", cfg.model_dim);
    layer.ff1 = make_dense(store, lp + ".f1", cfg.model_dim, cfg.ff_dim);
    layer.ff2 = make_dense(store, lp + ".f2", cfg.ff_dim, cfg.model_dim);
    enc.blocks.push_back(layer);
  }
  enc.final_ln = make_layer_norm(store, prefix + ".lnf", cfg.model_dim);
  return enc;
}

Tensor encoder_forward(const ParamStore& store, const Encoder& enc, const Tensor& x) {
  int dk = enc.cfg.model_dim / enc.cfg.heads;
  double att_scale = 1.0 / std::sqrt(static_cast<double>(dk));
  Tensor h = dense_forward(store, enc.in_proj, x);
  for (const auto& blk : enc.blocks) {
    Tensor n1;
    kernels::layer_norm_rows(h, store.at(blk.ln1.gain).value, store.at(blk.ln1.bias).value, 1e-5,
                             n1);
    Tensor q = dense_forward(store, blk.wq, n1);
    Tensor k = dense_forward(store, blk.wk, n1);
    Tensor v = dense_forward(store, blk.wv, n1);
    Tensor heads_out(h.rows, enc.cfg.model_dim);
    for (int hd = 0; hd < enc.cfg.heads; ++hd) {
      std::size_t c0 = static_cast<std::size_t>(hd) * dk;
      Tensor qh(h.rows, dk), kh(h.rows, dk), vh(h.rows, dk);
      for (std::size_t i = 0; i < h.rows; ++i) {
        for (int j = 0; j < dk; ++j) {
          qh.at(i, j) = q.at(i, c0 + j);
          kh.at(i, j) = k.at(i, c0 + j);
          vh.at(i, j) = v.at(i, c0 + j);
        }
      }
      Tensor scores;
      kernels::matmul_nt(qh, kh, scores);
      kernels::scale_inplace(scores, att_scale);
      kernels::row_softmax_inplace(scores);
      Tensor oh;
      kernels::matmul(scores, vh, oh);
      for (std::size_t i = 0; i < h.rows; ++i) {
        for (int j = 0; j < dk; ++j) heads_out.at(i, c0 + j) = oh.at(i, j);
      }
    }
    Tensor att = dense_forward(store, blk.wo, heads_out);
    kernels::add_inplace(h, att);
    Tensor n2;
    kernels::layer_norm_rows(h, store.at(blk.ln2.gain).value, store.at(blk.ln2.bias).value, 1e-5,
                             n2);
    Tensor f = dense_forward(store, blk.ff1, n2);
    kernels::leaky_relu_inplace(f, kLeakySlope);
    Tensor f2 = dense_forward(store, blk.ff2, f);
    kernels::add_inplace(h, f2);
  }
  Tensor out;
  kernels::layer_norm_rows(h, store.at(enc.final_ln.gain).value, store.at(enc.final_ln.bias).value,
                           1e-5, out);
  return out;
}

Tape::Id encoder_forward(Tape& tape, ParamStore& store, const Encoder& enc, Tape::Id x) {
  int dk = enc.cfg.model_dim / enc.cfg.heads;
  double att_scale = 1.0 / std::sqrt(static_cast<double>(dk));
  Tape::Id h = dense_forward(tape, store, enc.in_proj, x);
  for (const auto& blk : enc.blocks) {
    Tape::Id n1 = tape.layer_norm(h, tape.param(store.ref(blk.ln1.gain)),
                                  tape.param(store.ref(blk.ln1.bias)));
    Tape::Id q = dense_forward(tape, store, blk.wq, n1);
    Tape::Id k = dense_forward(tape, store, blk.wk, n1);
    Tape::Id v = dense_forward(tape, store, blk.wv, n1);
    std::vector<Tape::Id> head_outs;
    for (int hd = 0; hd < enc.cfg.heads; ++hd) {
      std::size_t c0 = static_cast<std::size_t>(hd) * dk;
      Tape::Id qh = tape.slice_cols(q, c0, c0 + dk);
      Tape::Id kh = tape.slice_cols(k, c0, c0 + dk);
      Tape::Id vh = tape.slice_cols(v, c0, c0 + dk);
      Tape::Id scores = tape.row_softmax(tape.scale(tape.matmul_nt(qh, kh), att_scale));
      head_outs.push_back(tape.matmul(scores, vh));
    }
    Tape::Id heads_out = tape.concat_cols(head_outs);
    Tape::Id att = dense_forward(tape, store, blk.wo, heads_out);
    h = tape.add(h, att);
    Tape::Id n2 = tape.layer_norm(h, tape.param(store.ref(blk.ln2.gain)),
                                  tape.param(store.ref(blk.ln2.bias)));
    Tape::Id f = tape.leaky_relu(dense_forward(tape, store, blk.ff1, n2), kLeakySlope);
    Tape::Id f2 = dense_forward(tape, store, blk.ff2, f);
    h = tape.add(h, f2);
  }
  return tape.layer_norm(h, tape.param(store.ref(enc.final_ln.gain)),
                         tape.param(store.ref(enc.final_ln.bias)));
}

}  // namespace heatlab::nn
