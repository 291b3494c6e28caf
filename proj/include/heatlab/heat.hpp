#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "heatlab/mdp.hpp"
#include "heatlab/nn.hpp"

namespace heatlab::heat {

// Branch-headed actor: state and global-feature inputs are mapped through
// separate stacks (widths rising for the state, falling for the global
// feature), joined in a trunk, and decoded by four independent softmax heads.
struct ActorNet {
  nn::Stack state_path;
  nn::Stack g_path;
  std::string t_ws, t_wg, t_b;  // trunk first layer, split by input
  struct Head {
    nn::Dense hidden;
    nn::Dense logits;
  };
  std::vector<Head> heads;
  std::size_t trunk_dim = 0;
};

// Twin-style critic: adds an action path; scalar value head.
struct CriticNet {
  nn::Stack state_path;
  nn::Stack action_path;
  nn::Stack g_path;
  std::string t_ws, t_wa, t_wg, t_b;
  nn::Dense out;
  std::size_t trunk_dim = 0;
};

struct ValueNet {
  nn::Stack state_path;
  nn::Stack g_path;
  std::string t_ws, t_wg, t_b;
  nn::Dense out;
  std::size_t trunk_dim = 0;
};

struct NetDims {
  std::vector<std::size_t> state_hidden{32, 64};
  std::vector<std::size_t> action_hidden{32, 64};
  std::vector<std::size_t> g_hidden{24, 16};
  std::size_t trunk = 64;
  std::size_t head_hidden = 32;
};

ActorNet make_actor(nn::ParamStore& store, const std::string& prefix, int state_dim,
                    const std::vector<int>& head_sizes, int model_dim, const NetDims& dims);
CriticNet make_critic(nn::ParamStore& store, const std::string& prefix, int state_dim,
                      int action_dim, int model_dim, const NetDims& dims);
ValueNet make_value(nn::ParamStore& store, const std::string& prefix, int state_dim, int model_dim,
                    const NetDims& dims);

// Kernel (gradient-free) forwards.
nn::Tensor critic_forward(const nn::ParamStore& store, const CriticNet& net, const nn::Tensor& S,
                          const nn::Tensor& A, const nn::Tensor& G);
nn::Tensor value_forward(const nn::ParamStore& store, const ValueNet& net, const nn::Tensor& S,
                         const nn::Tensor& G);
// Logits per head (before softmax), batched.
std::vector<nn::Tensor> actor_logits(const nn::ParamStore& store, const ActorNet& net,
                                     const nn::Tensor& S, const nn::Tensor& G);

// Tape forwards (for training).
nn::Tape::Id critic_forward(nn::Tape& t, nn::ParamStore& store, const CriticNet& net,
                            nn::Tape::Id S, nn::Tape::Id A, nn::Tape::Id G);
nn::Tape::Id value_forward(nn::Tape& t, nn::ParamStore& store, const ValueNet& net, nn::Tape::Id S,
                           nn::Tape::Id G);
std::vector<nn::Tape::Id> actor_logits(nn::Tape& t, nn::ParamStore& store, const ActorNet& net,
                                       nn::Tape::Id S, nn::Tape::Id G);

// Exact max over an enumerated action set, one result per batch row. The
// per-action work is restructured around the trunk's split first layer, so the
// result is bit-identical to running critic_forward once per action. When the
// action space exceeds enum_cap (> 0), falls back to an approximate
// coordinate-ascent max over the branch factorization.
nn::Tensor critic_max_over_actions(const nn::ParamStore& store, const CriticNet& net,
                                   const nn::Tensor& S, const nn::Tensor& G,
                                   const nn::Tensor& all_action_feats,
                                   const mac::SetsSpec* sets = nullptr, int enum_cap = 0);

// Asymmetric least squares weight |rho - 1(x<0)| x^2.
double expectile_loss(double x, double rho);

// Discount schedule: gamma0 at update 0, linear ramp to gamma_max over
// ramp_updates, constant after.
double gamma_at(long updates, double gamma0, double gamma_max, long ramp_updates);

struct HeatConfig {
  double rho = 0.7;
  double alpha = 0.05;
  double beta_off = 1.0;
  double gamma0 = 0.5;
  double gamma_max = 0.99;
  long gamma_ramp_updates = 1000;
  nn::AdamConfig adam{};
  long pretrain_updates = 1500;
  int train_every = 2;
  int offline_steps_per_online = 1;
  int enum_cap = 0;  // 0: exhaustive joint-action max; >0: factorized fallback above the cap
  bool alg2_literal_sign = false;
  nn::EncoderConfig encoder{};  // input_dim filled from the sets
  NetDims dims{};
  bool offline_module = true;  // false: the online-only ablation
};

struct UpdateStats {
  double critic_loss = 0.0;
  double value_loss = 0.0;
  double policy_loss = 0.0;
};

// The two-phase agent: shared encoder, branch actor, twin online critics, and
// (unless ablated) twin offline critics and value nets trained in-sample.
class HeatAgent : public mdp::Policy, public mdp::Trainer {
 public:
  enum class ActMode { Sample, Greedy };

  HeatAgent(const mac::SetsSpec& sets, const HeatConfig& cfg, std::uint64_t master_seed);

  // Policy interface.
  mdp::Action4 act(int node_index, mdp::PolicyContext& ctx) override;
  const char* name() const override { return cfg_.offline_module ? "heat" : "heat-online"; }

  // Trainer interface: interleaves offline and online updates every
  // train_every recorded transitions.
  void on_transition_recorded(double now) override;

  void set_offline_buffer(const mdp::ReplayBuffer* b) { offline_ = b; }
  void set_online_buffer(const mdp::ReplayBuffer* b) { online_ = b; }
  void set_act_mode(ActMode m) { act_mode_ = m; }

  // Offline pretraining over the whole configured budget.
  void pretrain();
  std::optional<UpdateStats> offline_update();
  std::optional<UpdateStats> online_update();

  long online_updates() const { return n_online_updates_; }
  long offline_updates() const { return n_offline_updates_; }
  long total_updates() const { return n_online_updates_ + n_offline_updates_; }
  double gamma_offline() const;
  double gamma_online() const;

  nn::ParamStore& store() { return store_; }
  const nn::ParamStore& store() const { return store_; }
  const HeatConfig& config() const { return cfg_; }

  // Contextual embedding of a global state (kernel path).
  nn::Tensor encode_global(const nn::Tensor& states) const;
  nn::Tensor state_tensor(const std::vector<mdp::NodeState5>& states) const;
  // Per-branch probabilities for one node (kernel path).
  std::vector<std::vector<double>> branch_probs(const std::vector<mdp::NodeState5>& states,
                                                int node_index) const;

  void save_checkpoint(const std::string& path) const { store_.save(path); }
  void load_checkpoint(const std::string& path) { store_.load(path); }

 private:
  nn::Tensor batch_states(const std::vector<mdp::Transition>& batch, bool next) const;
  nn::Tensor batch_actions(const std::vector<mdp::Transition>& batch) const;
  nn::Tensor min_twin_critic(const std::string& which, const nn::Tensor& S, const nn::Tensor& A,
                             const nn::Tensor& G) const;

  mac::SetsSpec sets_;
  HeatConfig cfg_;
  nn::ParamStore store_;
  nn::Encoder encoder_;
  ActorNet actor_;
  CriticNet qon_[2], tqon_[2];
  CriticNet qoff_[2], tqoff_[2];
  ValueNet voff_[2], tvoff_[2];
  nn::Tensor all_action_feats_;  // enumerated joint actions, feature-encoded
  Rng trainer_rng_;
  const mdp::ReplayBuffer* offline_ = nullptr;
  const mdp::ReplayBuffer* online_ = nullptr;
  ActMode act_mode_ = ActMode::Sample;
  long n_online_updates_ = 0;
  long n_offline_updates_ = 0;
  long transitions_seen_ = 0;
};

}  // namespace heatlab::heat
