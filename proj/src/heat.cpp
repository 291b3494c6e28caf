#include "heatlab/heat.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace heatlab::heat {

using nn::Tape;
using nn::Tensor;

namespace {

// Split first trunk layer: one weight matrix per input path plus a shared
// bias, so enumeration over actions can reuse the state/global partial sums.
void add_trunk(nn::ParamStore& store, const std::string& prefix,
               const std::vector<std::pair<std::string, std::size_t>>& inputs,
               std::size_t out_dim, std::vector<std::string>& names_out) {
  std::size_t fan_in = 0;
  for (const auto& [_, d] : inputs) fan_in += d;
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (const auto& [suffix, dim] : inputs) {
    store.add(prefix + suffix, dim, out_dim, bound);
    names_out.push_back(prefix + suffix);
  }
  store.add(prefix + ".t_b", 1, out_dim, bound);
  names_out.push_back(prefix + ".t_b");
}

}  // namespace

ActorNet make_actor(nn::ParamStore& store, const std::string& prefix, int state_dim,
                    const std::vector<int>& head_sizes, int model_dim, const NetDims& dims) {
  ActorNet net;
  std::vector<std::size_t> sd{static_cast<std::size_t>(state_dim)};
  sd.insert(sd.end(), dims.state_hidden.begin(), dims.state_hidden.end());
  net.state_path = make_stack(store, prefix + ".s", sd);
  std::vector<std::size_t> gd{static_cast<std::size_t>(model_dim)};
  gd.insert(gd.end(), dims.g_hidden.begin(), dims.g_hidden.end());
  net.g_path = make_stack(store, prefix + ".g", gd);
  std::vector<std::string> names;
  add_trunk(store, prefix, {{".t_ws", sd.back()}, {".t_wg", gd.back()}}, dims.trunk, names);
  net.t_ws = names[0];
  net.t_wg = names[1];
  net.t_b = names[2];
  net.trunk_dim = dims.trunk;
  for (std::size_t k = 0; k < head_sizes.size(); ++k) {
    ActorNet::Head head;
    head.hidden = make_dense(store, prefix + ".h" + std::to_string(k), dims.trunk, dims.head_hidden);
    head.logits = make_dense(store, prefix + ".h" + std::to_string(k) + ".out", dims.head_hidden,
                             head_sizes[k]);
    net.heads.push_back(head);
  }
  return net;
}

CriticNet make_critic(nn::ParamStore& store, const std::string& prefix, int state_dim,
                      int action_dim, int model_dim, const NetDims& dims) {
  CriticNet net;
  std::vector<std::size_t> sd{static_cast<std::size_t>(state_dim)};
  sd.insert(sd.end(), dims.state_hidden.begin(), dims.state_hidden.end());
  net.state_path = make_stack(store, prefix + ".s", sd);
  std::vector<std::size_t> ad{static_cast<std::size_t>(action_dim)};
  ad.insert(ad.end(), dims.action_hidden.begin(), dims.action_hidden.end());
  net.action_path = make_stack(store, prefix + ".a", ad);
  std::vector<std::size_t> gd{static_cast<std::size_t>(model_dim)};
  gd.insert(gd.end(), dims.g_hidden.begin(), dims.g_hidden.end());
  net.g_path = make_stack(store, prefix + ".g", gd);
  std::vector<std::string> names;
  add_trunk(store, prefix, {{".t_ws", sd.back()}, {".t_wa", ad.back()}, {".t_wg", gd.back()}},
            dims.trunk, names);
  net.t_ws = names[0];
  net.t_wa = names[1];
  net.t_wg = names[2];
  net.t_b = names[3];
  net.out = make_dense(store, prefix + ".out", dims.trunk, 1);
  net.trunk_dim = dims.trunk;
  return net;
}

ValueNet make_value(nn::ParamStore& store, const std::string& prefix, int state_dim, int model_dim,
                    const NetDims& dims) {
  ValueNet net;
  std::vector<std::size_t> sd{static_cast<std::size_t>(state_dim)};
  sd.insert(sd.end(), dims.state_hidden.begin(), dims.state_hidden.end());
  net.state_path = make_stack(store, prefix + ".s", sd);
  std::vector<std::size_t> gd{static_cast<std::size_t>(model_dim)};
  gd.insert(gd.end(), dims.g_hidden.begin(), dims.g_hidden.end());
  net.g_path = make_stack(store, prefix + ".g", gd);
  std::vector<std::string> names;
  add_trunk(store, prefix, {{".t_ws", sd.back()}, {".t_wg", gd.back()}}, dims.trunk, names);
  net.t_ws = names[0];
  net.t_wg = names[1];
  net.t_b = names[2];
  net.out = make_dense(store, prefix + ".out", dims.trunk, 1);
  net.trunk_dim = dims.trunk;
  return net;
}

Tensor critic_forward(const nn::ParamStore& store, const CriticNet& net, const Tensor& S,
                      const Tensor& A, const Tensor& G) {
  Tensor sf = stack_forward(store, net.state_path, S);
  Tensor af = stack_forward(store, net.action_path, A);
  Tensor gf = stack_forward(store, net.g_path, G);
  Tensor ps, pa, pg;
  nn::kernels::matmul(sf, store.at(net.t_ws).value, ps);
  nn::kernels::matmul(af, store.at(net.t_wa).value, pa);
  nn::kernels::matmul(gf, store.at(net.t_wg).value, pg);
  nn::kernels::add_inplace(ps, pa);
  nn::kernels::add_inplace(ps, pg);
  nn::kernels::add_row_bias(ps, store.at(net.t_b).value);
  nn::kernels::leaky_relu_inplace(ps, nn::kLeakySlope);
  return dense_forward(store, net.out, ps);
}

Tensor value_forward(const nn::ParamStore& store, const ValueNet& net, const Tensor& S,
                     const Tensor& G) {
  Tensor sf = stack_forward(store, net.state_path, S);
  Tensor gf = stack_forward(store, net.g_path, G);
  Tensor ps, pg;
  nn::kernels::matmul(sf, store.at(net.t_ws).value, ps);
  nn::kernels::matmul(gf, store.at(net.t_wg).value, pg);
  nn::kernels::add_inplace(ps, pg);
  nn::kernels::add_row_bias(ps, store.at(net.t_b).value);
  nn::kernels::leaky_relu_inplace(ps, nn::kLeakySlope);
  return dense_forward(store, net.out, ps);
}

std::vector<Tensor> actor_logits(const nn::ParamStore& store, const ActorNet& net, const Tensor& S,
                                 const Tensor& G) {
  Tensor sf = stack_forward(store, net.state_path, S);
  Tensor gf = stack_forward(store, net.g_path, G);
  Tensor ps, pg;
  nn::kernels::matmul(sf, store.at(net.t_ws).value, ps);
  nn::kernels::matmul(gf, store.at(net.t_wg).value, pg);
  nn::kernels::add_inplace(ps, pg);
  nn::kernels::add_row_bias(ps, store.at(net.t_b).value);
  nn::kernels::leaky_relu_inplace(ps, nn::kLeakySlope);
  std::vector<Tensor> out;
  for (const auto& head : net.heads) {
    Tensor h = dense_forward(store, head.hidden, ps);
    nn::kernels::leaky_relu_inplace(h, nn::kLeakySlope);
    out.push_back(dense_forward(store, head.logits, h));
  }
  return out;
}

Tape::Id critic_forward(Tape& t, nn::ParamStore& store, const CriticNet& net, Tape::Id S,
                        Tape::Id A, Tape::Id G) {
  Tape::Id sf = stack_forward(t, store, net.state_path, S);
  Tape::Id af = stack_forward(t, store, net.action_path, A);
  Tape::Id gf = stack_forward(t, store, net.g_path, G);
  Tape::Id mix = t.add(t.add(t.matmul(sf, t.param(store.ref(net.t_ws))),
                             t.matmul(af, t.param(store.ref(net.t_wa)))),
                       t.matmul(gf, t.param(store.ref(net.t_wg))));
  Tape::Id h = t.leaky_relu(t.add_bias(mix, t.param(store.ref(net.t_b))), nn::kLeakySlope);
  return dense_forward(t, store, net.out, h);
}

Tape::Id value_forward(Tape& t, nn::ParamStore& store, const ValueNet& net, Tape::Id S,
                       Tape::Id G) {
  Tape::Id sf = stack_forward(t, store, net.state_path, S);
  Tape::Id gf = stack_forward(t, store, net.g_path, G);
  Tape::Id mix = t.add(t.matmul(sf, t.param(store.ref(net.t_ws))),
                       t.matmul(gf, t.param(store.ref(net.t_wg))));
  Tape::Id h = t.leaky_relu(t.add_bias(mix, t.param(store.ref(net.t_b))), nn::kLeakySlope);
  return dense_forward(t, store, net.out, h);
}

std::vector<Tape::Id> actor_logits(Tape& t, nn::ParamStore& store, const ActorNet& net, Tape::Id S,
                                   Tape::Id G) {
  Tape::Id sf = stack_forward(t, store, net.state_path, S);
  Tape::Id gf = stack_forward(t, store, net.g_path, G);
  Tape::Id mix = t.add(t.matmul(sf, t.param(store.ref(net.t_ws))),
                       t.matmul(gf, t.param(store.ref(net.t_wg))));
  Tape::Id h = t.leaky_relu(t.add_bias(mix, t.param(store.ref(net.t_b))), nn::kLeakySlope);
  std::vector<Tape::Id> out;
  for (const auto& head : net.heads) {
    Tape::Id hh = t.leaky_relu(dense_forward(t, store, head.hidden, h), nn::kLeakySlope);
    out.push_back(dense_forward(t, store, head.logits, hh));
  }
  return out;
}

Tensor critic_max_over_actions(const nn::ParamStore& store, const CriticNet& net, const Tensor& S,
                               const Tensor& G, const Tensor& all_action_feats,
                               const mac::SetsSpec* sets, int enum_cap) {
  Tensor sf = stack_forward(store, net.state_path, S);
  Tensor gf = stack_forward(store, net.g_path, G);
  Tensor af = stack_forward(store, net.action_path, all_action_feats);
  Tensor ps, pg, ca;
  nn::kernels::matmul(sf, store.at(net.t_ws).value, ps);
  nn::kernels::matmul(gf, store.at(net.t_wg).value, pg);
  nn::kernels::matmul(af, store.at(net.t_wa).value, ca);
  const Tensor& b = store.at(net.t_b).value;
  const Tensor& ow = store.at(net.out.w).value;
  double ob = store.at(net.out.b).value.v[0];
  std::size_t trunk = net.trunk_dim;
  std::size_t n_actions = all_action_feats.rows;
  bool factorized = enum_cap > 0 && n_actions > static_cast<std::size_t>(enum_cap);
  if (factorized && !sets) throw std::logic_error("factorized max needs the action sets");
  Tensor result(S.rows, 1);
  for (std::size_t i = 0; i < S.rows; ++i) {
    const double* psr = &ps.v[i * trunk];
    const double* pgr = &pg.v[i * trunk];
    auto eval = [&](std::size_t k) {
      const double* car = &ca.v[k * trunk];
      double acc = 0.0;
      for (std::size_t j = 0; j < trunk; ++j) {
        double x = ((psr[j] + car[j]) + pgr[j]) + b.v[j];
        if (x < 0) x *= nn::kLeakySlope;
        acc += x * ow.v[j];
      }
      return acc + ob;
    };
    double best;
    if (!factorized) {
      best = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < n_actions; ++k) best = std::max(best, eval(k));
    } else {
      // Approximate coordinate-ascent max over the branch-factorized space:
      // two sweeps, each branch maximized with the others held fixed.
      mdp::Action4 cur{};
      best = eval(static_cast<std::size_t>(mdp::action_flat_index(cur, *sets)));
      const std::size_t sizes[4] = {sets->usf.size(), sets->power_dbm.size(), sets->dsf.size(),
                                    sets->window_symbols.size()};
      for (int sweep = 0; sweep < 2; ++sweep) {
        for (int brn = 0; brn < 4; ++brn) {
          int* field = brn == 0 ? &cur.usf_i : brn == 1 ? &cur.p_i : brn == 2 ? &cur.dsf_i : &cur.w_i;
          for (int vi = 0; vi < static_cast<int>(sizes[brn]); ++vi) {
            int saved = *field;
            *field = vi;
            double q = eval(static_cast<std::size_t>(mdp::action_flat_index(cur, *sets)));
            if (q > best) {
              best = q;
            } else {
              *field = saved;
            }
          }
        }
      }
    }
    result.v[i] = best;
  }
  return result;
}

double expectile_loss(double x, double rho) {
  double w = x < 0 ? std::abs(rho - 1.0) : rho;
  return w * x * x;
}

double gamma_at(long updates, double gamma0, double gamma_max, long ramp_updates) {
  if (ramp_updates <= 0) return gamma_max;
  double frac = std::min(1.0, static_cast<double>(updates) / static_cast<double>(ramp_updates));
  return gamma0 + (gamma_max - gamma0) * frac;
}

HeatAgent::HeatAgent(const mac::SetsSpec& sets, const HeatConfig& cfg, std::uint64_t master_seed)
    : sets_(sets), cfg_(cfg), store_(master_seed), trainer_rng_(derive_seed(master_seed, "trainer")) {
  sets_.validate();
  int state_dim = mdp::state_feature_dim(sets_);
  int action_dim = mdp::action_feature_dim(sets_);
  std::vector<int> head_sizes{static_cast<int>(sets_.usf.size()),
                              static_cast<int>(sets_.power_dbm.size()),
                              static_cast<int>(sets_.dsf.size()),
                              static_cast<int>(sets_.window_symbols.size())};
  cfg_.encoder.input_dim = state_dim;
  cfg_.encoder.validate();

  encoder_ = make_encoder(store_, "enc", cfg_.encoder);
  actor_ = make_actor(store_, "actor", state_dim, head_sizes, cfg_.encoder.model_dim, cfg_.dims);
  for (int i = 0; i < 2; ++i) {
    qon_[i] = make_critic(store_, "qon" + std::to_string(i + 1), state_dim, action_dim,
                          cfg_.encoder.model_dim, cfg_.dims);
  }
  for (int i = 0; i < 2; ++i) {
    tqon_[i] = make_critic(store_, "tqon" + std::to_string(i + 1), state_dim, action_dim,
                           cfg_.encoder.model_dim, cfg_.dims);
    store_.copy_values("qon" + std::to_string(i + 1) + ".", "tqon" + std::to_string(i + 1) + ".");
  }
  store_.add_scalar("sched.on", 0.0);
  if (cfg_.offline_module) {
    for (int i = 0; i < 2; ++i) {
      qoff_[i] = make_critic(store_, "qoff" + std::to_string(i + 1), state_dim, action_dim,
                             cfg_.encoder.model_dim, cfg_.dims);
    }
    for (int i = 0; i < 2; ++i) {
      voff_[i] = make_value(store_, "voff" + std::to_string(i + 1), state_dim,
                            cfg_.encoder.model_dim, cfg_.dims);
    }
    for (int i = 0; i < 2; ++i) {
      tqoff_[i] = make_critic(store_, "tqoff" + std::to_string(i + 1), state_dim, action_dim,
                              cfg_.encoder.model_dim, cfg_.dims);
      store_.copy_values("qoff" + std::to_string(i + 1) + ".",
                         "tqoff" + std::to_string(i + 1) + ".");
      tvoff_[i] = make_value(store_, "tvoff" + std::to_string(i + 1), state_dim,
                             cfg_.encoder.model_dim, cfg_.dims);
      store_.copy_values("voff" + std::to_string(i + 1) + ".",
                         "tvoff" + std::to_string(i + 1) + ".");
    }
    store_.add_scalar("sched.off", 0.0);
  }

  int n_actions = static_cast<int>(sets_.action_space_size());
  all_action_feats_ = Tensor(n_actions, action_dim);
  for (int k = 0; k < n_actions; ++k) {
    mdp::Action4 a = mdp::action_from_flat(k, sets_);
    mdp::encode_action(a, sets_, &all_action_feats_.v[static_cast<std::size_t>(k) * action_dim]);
  }
}

double HeatAgent::gamma_offline() const {
  if (!store_.has("sched.off")) return cfg_.gamma0;
  return gamma_at(static_cast<long>(store_.scalar("sched.off")), cfg_.gamma0, cfg_.gamma_max,
                  cfg_.gamma_ramp_updates);
}

double HeatAgent::gamma_online() const {
  return gamma_at(static_cast<long>(store_.scalar("sched.on")), cfg_.gamma0, cfg_.gamma_max,
                  cfg_.gamma_ramp_updates);
}

Tensor HeatAgent::state_tensor(const std::vector<mdp::NodeState5>& states) const {
  int dim = mdp::state_feature_dim(sets_);
  Tensor S(states.size(), dim);
  for (std::size_t i = 0; i < states.size(); ++i) {
    mdp::encode_state(states[i], sets_, &S.v[i * dim]);
  }
  return S;
}

Tensor HeatAgent::encode_global(const Tensor& states) const {
  return encoder_forward(store_, encoder_, states);
}

std::vector<std::vector<double>> HeatAgent::branch_probs(
    const std::vector<mdp::NodeState5>& states, int node_index) const {
  Tensor S = state_tensor(states);
  Tensor G = encode_global(S);
  int dim = mdp::state_feature_dim(sets_);
  Tensor Srow(1, dim), Grow(1, cfg_.encoder.model_dim);
  for (int j = 0; j < dim; ++j) Srow.v[j] = S.at(node_index, j);
  for (int j = 0; j < cfg_.encoder.model_dim; ++j) Grow.v[j] = G.at(node_index, j);
  auto logits = actor_logits(store_, actor_, Srow, Grow);
  std::vector<std::vector<double>> probs;
  for (auto& l : logits) {
    nn::kernels::row_softmax_inplace(l);
    probs.push_back(l.v);
  }
  return probs;
}

mdp::Action4 HeatAgent::act(int node_index, mdp::PolicyContext& ctx) {
  std::vector<mdp::NodeState5> states;
  states.reserve(ctx.nodes.size());
  for (const auto& n : ctx.nodes) states.push_back(mdp::state_of(n, ctx.radius_m));
  auto probs = branch_probs(states, node_index);
  mdp::Action4 a;
  int* fields[4] = {&a.usf_i, &a.p_i, &a.dsf_i, &a.w_i};
  for (int k = 0; k < 4; ++k) {
    if (act_mode_ == ActMode::Sample) {
      *fields[k] = static_cast<int>(ctx.rng.categorical(probs[k]));
    } else {
      *fields[k] = static_cast<int>(
          std::max_element(probs[k].begin(), probs[k].end()) - probs[k].begin());
    }
  }
  return a;
}

Tensor HeatAgent::batch_states(const std::vector<mdp::Transition>& batch, bool next) const {
  int dim = mdp::state_feature_dim(sets_);
  Tensor S(batch.size(), dim);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    mdp::encode_state(next ? batch[i].s_next : batch[i].s, sets_, &S.v[i * dim]);
  }
  return S;
}

Tensor HeatAgent::batch_actions(const std::vector<mdp::Transition>& batch) const {
  int dim = mdp::action_feature_dim(sets_);
  Tensor A(batch.size(), dim);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    mdp::encode_action(batch[i].a, sets_, &A.v[i * dim]);
  }
  return A;
}

std::optional<UpdateStats> HeatAgent::offline_update() {
  if (!cfg_.offline_module || !offline_) return std::nullopt;
  std::vector<mdp::Transition> batch;
  try {
    batch = offline_->sample_global_batch(trainer_rng_);
  } catch (const mdp::NotReady&) {
    return std::nullopt;
  }
  std::size_t n = batch.size();
  Tensor S = batch_states(batch, false);
  Tensor S2 = batch_states(batch, true);
  Tensor A = batch_actions(batch);
  Tensor G = encoder_forward(store_, encoder_, S);
  Tensor G2 = encoder_forward(store_, encoder_, S2);
  double gamma = gamma_offline();

  // Targets, gradient-free: Y_v from the twin target critics at (s, a);
  // Y_q bootstraps off the twin target value nets at s'.
  Tensor qt1 = critic_forward(store_, tqoff_[0], S, A, G);
  Tensor qt2 = critic_forward(store_, tqoff_[1], S, A, G);
  Tensor vt1 = value_forward(store_, tvoff_[0], S2, G2);
  Tensor vt2 = value_forward(store_, tvoff_[1], S2, G2);
  Tensor Yv(n, 1), Yq(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    Yv.v[i] = std::min(qt1.v[i], qt2.v[i]);
    Yq.v[i] = batch[i].r + gamma * std::min(vt1.v[i], vt2.v[i]);
  }

  Tape t;
  Tape::Id S_id = t.input(S);
  Tape::Id A_id = t.input(A);
  Tape::Id G_id = encoder_forward(t, store_, encoder_, S_id);
  Tape::Id q1 = critic_forward(t, store_, qoff_[0], S_id, A_id, G_id);
  Tape::Id q2 = critic_forward(t, store_, qoff_[1], S_id, A_id, G_id);
  Tape::Id v1 = value_forward(t, store_, voff_[0], S_id, G_id);
  Tape::Id v2 = value_forward(t, store_, voff_[1], S_id, G_id);
  Tape::Id Yq_id = t.input(Yq);
  Tape::Id Yv_id = t.input(Yv);
  Tape::Id jq = t.add(t.mean_all(t.square(t.sub(Yq_id, q1))),
                      t.mean_all(t.square(t.sub(Yq_id, q2))));
  Tape::Id jv = t.add(t.mean_all(t.expectile_sq(t.sub(Yv_id, v1), cfg_.rho)),
                      t.mean_all(t.expectile_sq(t.sub(Yv_id, v2), cfg_.rho)));
  Tape::Id total = t.add(jq, jv);
  if (!std::isfinite(t.val(total).item())) {
    std::ostringstream os;
    os << "non-finite offline loss: critic=" << t.val(jq).item() << " value=" << t.val(jv).item();
    throw nn::TrainingError(os.str());
  }
  t.backward(total);
  store_.adam_step({"enc.", "qoff1.", "qoff2.", "voff1.", "voff2."}, cfg_.adam);
  store_.copy_values("qoff1.", "tqoff1.");
  store_.copy_values("qoff2.", "tqoff2.");
  store_.copy_values("voff1.", "tvoff1.");
  store_.copy_values("voff2.", "tvoff2.");
  store_.set_scalar("sched.off", store_.scalar("sched.off") + 1.0);
  n_offline_updates_ += 1;
  return UpdateStats{t.val(jq).item() / 2.0, t.val(jv).item() / 2.0, 0.0};
}

std::optional<UpdateStats> HeatAgent::online_update() {
  mdp::HybridBuffer hybrid(cfg_.offline_module ? offline_ : nullptr, online_);
  std::vector<mdp::Transition> batch;
  try {
    batch = hybrid.sample_global_batch(trainer_rng_);
  } catch (const mdp::NotReady&) {
    return std::nullopt;
  }
  std::size_t n = batch.size();
  Tensor S = batch_states(batch, false);
  Tensor S2 = batch_states(batch, true);
  Tensor A = batch_actions(batch);
  Tensor G = encoder_forward(store_, encoder_, S);
  Tensor G2 = encoder_forward(store_, encoder_, S2);
  double gamma = gamma_online();

  // TD target: exhaustive max over the joint action space under each target
  // critic, then the pointwise min of the two maxima.
  Tensor max1 =
      critic_max_over_actions(store_, tqon_[0], S2, G2, all_action_feats_, &sets_, cfg_.enum_cap);
  Tensor max2 =
      critic_max_over_actions(store_, tqon_[1], S2, G2, all_action_feats_, &sets_, cfg_.enum_cap);
  Tensor Y(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    Y.v[i] = batch[i].r + gamma * std::min(max1.v[i], max2.v[i]);
  }

  Tape t;
  Tape::Id S_id = t.input(S);
  Tape::Id A_id = t.input(A);
  Tape::Id G_id = encoder_forward(t, store_, encoder_, S_id);
  Tape::Id q1 = critic_forward(t, store_, qon_[0], S_id, A_id, G_id);
  Tape::Id q2 = critic_forward(t, store_, qon_[1], S_id, A_id, G_id);
  Tape::Id Y_id = t.input(Y);
  Tape::Id jq = t.add(t.mean_all(t.square(t.sub(Y_id, q1))),
                      t.mean_all(t.square(t.sub(Y_id, q2))));

  // Policy: per-branch distributions over the batch states.
  auto logits = actor_logits(t, store_, actor_, S_id, G_id);
  std::vector<Tape::Id> logp, prob;
  for (auto l : logits) {
    logp.push_back(t.row_log_softmax(l));
    prob.push_back(t.row_softmax(l));
  }
  // Fresh on-policy actions, sampled per branch from the current distributions.
  std::vector<mdp::Action4> sampled(n);
  std::array<std::vector<int>, 4> samp_idx, buf_idx;
  for (int k = 0; k < 4; ++k) {
    samp_idx[k].resize(n);
    buf_idx[k].resize(n);
  }
  for (std::size_t i = 0; i < n; ++i) {
    mdp::Action4 a;
    int* fields[4] = {&a.usf_i, &a.p_i, &a.dsf_i, &a.w_i};
    for (int k = 0; k < 4; ++k) {
      const Tensor& pk = t.val(prob[k]);
      std::span<const double> row(&pk.v[i * pk.cols], pk.cols);
      *fields[k] = static_cast<int>(trainer_rng_.categorical(row));
      samp_idx[k][i] = *fields[k];
    }
    sampled[i] = a;
    buf_idx[0][i] = batch[i].a.usf_i;
    buf_idx[1][i] = batch[i].a.p_i;
    buf_idx[2][i] = batch[i].a.dsf_i;
    buf_idx[3][i] = batch[i].a.w_i;
  }
  // log pi and pi of the sampled joint action (branch factorization).
  Tape::Id lp_s = t.add(t.add(t.gather_cols(logp[0], samp_idx[0]), t.gather_cols(logp[1], samp_idx[1])),
                        t.add(t.gather_cols(logp[2], samp_idx[2]), t.gather_cols(logp[3], samp_idx[3])));
  Tape::Id pi_s = t.mul(t.mul(t.gather_cols(prob[0], samp_idx[0]), t.gather_cols(prob[1], samp_idx[1])),
                        t.mul(t.gather_cols(prob[2], samp_idx[2]), t.gather_cols(prob[3], samp_idx[3])));
  // Ent(s, a, pi) = log(1 - pi(a|s) + eps): log-probability of everything else.
  Tape::Id ent = t.log(t.add_const(t.rsub_const(1.0, pi_s), 1e-9));

  // Detached value coefficients.
  Tensor A_samp(n, mdp::action_feature_dim(sets_));
  for (std::size_t i = 0; i < n; ++i) {
    mdp::encode_action(sampled[i], sets_, &A_samp.v[i * A_samp.cols]);
  }
  Tensor qpi1 = critic_forward(store_, qon_[0], S, A_samp, G);
  Tensor qpi2 = critic_forward(store_, qon_[1], S, A_samp, G);
  Tensor coeff_on(n, 1);
  for (std::size_t i = 0; i < n; ++i) coeff_on.v[i] = std::min(qpi1.v[i], qpi2.v[i]);
  Tensor margin(n, 1);  // beta * Mar(Qmu - Qpi) at the buffer action
  if (cfg_.offline_module) {
    Tensor qmu1 = critic_forward(store_, qoff_[0], S, A, G);
    Tensor qmu2 = critic_forward(store_, qoff_[1], S, A, G);
    Tensor qpi_b1 = critic_forward(store_, qon_[0], S, A, G);
    Tensor qpi_b2 = critic_forward(store_, qon_[1], S, A, G);
    for (std::size_t i = 0; i < n; ++i) {
      double m = std::min(qmu1.v[i], qmu2.v[i]) - std::min(qpi_b1.v[i], qpi_b2.v[i]);
      margin.v[i] = cfg_.beta_off * (m > 0 ? m : 0.0);
    }
  }

  Tape::Id lesson_on = t.add(t.scale(ent, cfg_.alpha), t.mul(t.input(coeff_on), lp_s));
  Tape::Id lp_b = t.add(t.add(t.gather_cols(logp[0], buf_idx[0]), t.gather_cols(logp[1], buf_idx[1])),
                        t.add(t.gather_cols(logp[2], buf_idx[2]), t.gather_cols(logp[3], buf_idx[3])));
  Tape::Id lesson_off = t.mul(t.input(margin), lp_b);
  Tape::Id jpi = cfg_.alg2_literal_sign
                     ? t.mean_all(t.sub(lesson_on, lesson_off))
                     : t.scale(t.mean_all(t.add(lesson_on, lesson_off)), -1.0);
  Tape::Id total = t.add(jq, jpi);
  if (!std::isfinite(t.val(total).item())) {
    std::ostringstream os;
    os << "non-finite online loss: critic=" << t.val(jq).item()
       << " policy=" << t.val(jpi).item() << " gamma=" << gamma;
    throw nn::TrainingError(os.str());
  }
  t.backward(total);
  store_.adam_step({"enc.", "qon1.", "qon2.", "actor."}, cfg_.adam);
  store_.copy_values("qon1.", "tqon1.");
  store_.copy_values("qon2.", "tqon2.");
  store_.set_scalar("sched.on", store_.scalar("sched.on") + 1.0);
  n_online_updates_ += 1;
  return UpdateStats{t.val(jq).item() / 2.0, 0.0, t.val(jpi).item()};
}

void HeatAgent::pretrain() {
  for (long i = 0; i < cfg_.pretrain_updates; ++i) {
    if (!offline_update()) throw mdp::NotReady{};
  }
}

void HeatAgent::on_transition_recorded(double) {
  transitions_seen_ += 1;
  if (cfg_.train_every <= 0 || transitions_seen_ % cfg_.train_every != 0) return;
  if (cfg_.offline_module) {
    for (int k = 0; k < cfg_.offline_steps_per_online; ++k) offline_update();
  }
  online_update();
}

}  // namespace heatlab::heat
