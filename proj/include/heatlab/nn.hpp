#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "heatlab/autodiff.hpp"
#include "heatlab/tensor.hpp"

namespace heatlab::nn {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Named flat tensors with gradient and Adam state. Initialization is keyed on
// (master seed, tensor name) so the same tensor gets the same initial values
// regardless of what else is registered.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor m;
    Tensor v;
    long steps = 0;
  };

  explicit ParamStore(std::uint64_t master_seed = 0) : master_seed_(master_seed) {}

  // Uniform init in [-bound, bound]; bound 0 means zero-initialized.
  Entry& add(const std::string& name, std::size_t rows, std::size_t cols, double bound);
  Entry& add_scalar(const std::string& name, double value);

  bool has(const std::string& name) const { return index_.count(name) > 0; }
  Entry& at(const std::string& name);
  const Entry& at(const std::string& name) const;
  ParamRef ref(const std::string& name);
  const std::vector<std::string>& names() const { return order_; }

  double scalar(const std::string& name) const { return at(name).value.v[0]; }
  void set_scalar(const std::string& name, double v) { at(name).value.v[0] = v; }

  void zero_grads();
  // One Adam step over every entry whose name starts with one of the given
  // prefixes; throws TrainingError on non-finite gradients. Clears the
  // gradients it consumed.
  void adam_step(const std::vector<std::string>& prefixes, const AdamConfig& cfg);
  // Hard copy: dst_prefix+rest <- src_prefix+rest for all matching entries.
  void copy_values(const std::string& src_prefix, const std::string& dst_prefix);

  // Binary checkpoint: text manifest with shapes followed by raw
  // little-endian doubles in manifest order. Bit-exact round-trip.
  void save(const std::string& path) const;
  void load(const std::string& path);

 private:
  std::uint64_t master_seed_;
  std::vector<Entry> entries_;
  std::vector<std::string> order_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline constexpr double kLeakySlope = 0.01;

struct Dense {
  std::string w;
  std::string b;
  std::size_t in = 0;
  std::size_t out = 0;
};

Dense make_dense(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out);

Tensor dense_forward(const ParamStore& store, const Dense& d, const Tensor& x);
Tape::Id dense_forward(Tape& tape, ParamStore& store, const Dense& d, Tape::Id x);

// Feature stack: dense + LeakyReLU per layer.
struct Stack {
  std::vector<Dense> layers;
};

Stack make_stack(ParamStore& store, const std::string& prefix, const std::vector<std::size_t>& dims);
Tensor stack_forward(const ParamStore& store, const Stack& s, const Tensor& x);
Tape::Id stack_forward(Tape& tape, ParamStore& store, const Stack& s, Tape::Id x);

// Transformer encoder without positional encoding: input projection, then
// pre-norm self-attention + feed-forward blocks, then a final norm. Row i of
// the output is the contextual feature of sequence element i; permuting input
// rows permutes output rows identically.
struct EncoderConfig {
  int layers = 2;
  int model_dim = 32;
  int heads = 2;
  int ff_dim = 64;
  int input_dim = 0;

  void validate() const {
    if (model_dim % heads != 0) throw std::domain_error("model_dim must be divisible by heads");
    if (layers < 1 || input_dim < 1) throw std::domain_error("bad encoder config");
  }
};

struct LayerNormParams {
  std::string gain;
  std::string bias;
};

struct EncoderLayer {
  LayerNormParams ln1;
  Dense wq, wk, wv, wo;
  LayerNormParams ln2;
  Dense ff1, ff2;
};

struct Encoder {
  EncoderConfig cfg;
  Dense in_proj;
  std::vector<EncoderLayer> blocks;
  LayerNormParams final_ln;
};

Encoder make_encoder(ParamStore& store, const std::string& prefix, const EncoderConfig& cfg);
Tensor encoder_forward(const ParamStore& store, const Encoder& enc, const Tensor& x);
Tape::Id encoder_forward(Tape& tape, ParamStore& store, const Encoder& enc, Tape::Id x);

}  // namespace heatlab::nn
