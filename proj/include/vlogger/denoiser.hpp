#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vlogger/masking.hpp"
#include "vlogger/nn_ops.hpp"

namespace vlogger {

// Rank-2 [tokens x dim] embedding row block (text or image encoder output).
using Embedding = Tensor;

struct ConditioningBundle {
  Embedding text;                   // [Lt, cond_dim]; all-zero means "no prompt"
  std::optional<Embedding> actor;   // [La, cond_dim]
  double beta = 1.0;                // weight of the actor attention branch
  double guidance_scale = 7.5;
};

struct DenoiserConfig {
  Index width = 64;
  Index heads = 2;
  Index levels = 2;     // one STEB per resolution level on each path
  Index cond_dim = 64;  // text/actor embedding width
  Index time_dim = 64;
};

// Named trainable parameter registry shared by optimizer and checkpoints.
struct NamedParam {
  std::string name;
  ag::Var var;
};

class ParamStore {
 public:
  ag::Var add(const std::string& name, Tensor init) {
    ag::Var v = ag::Var::param(std::move(init));
    params_.push_back({name, v});
    return v;
  }
  std::vector<NamedParam>& params() { return params_; }
  const std::vector<NamedParam>& params() const { return params_; }
  ag::Var find(const std::string& name) const;
  void zero_grads();

 private:
  std::vector<NamedParam> params_;
};

// One Spatial-Temporal Enhanced Block. Ordering per forward():
// conv (+ timestep) -> spatial self attn -> spatial text cross attn ->
// spatial actor cross attn (weighted by beta) -> temporal self attn ->
// temporal text cross attn. Temporal sublayers are skipped when F == 1.
struct StebBlock {
  // conv unit
  ag::Var conv1_w, conv1_b, conv2_w, conv2_b, time_w, time_b;
  // layer norms
  ag::Var ln_sa_g, ln_sa_b, ln_ca_g, ln_ca_b, ln_ac_g, ln_ac_b;
  ag::Var ln_ts_g, ln_ts_b, ln_tc_g, ln_tc_b;
  // attention projections: self, text cross, actor cross, temporal self,
  // temporal text cross
  ag::Var sa_wq, sa_wk, sa_wv, sa_wo;
  ag::Var ca_wq, ca_wk, ca_wv, ca_wo;
  ag::Var ac_wq, ac_wk, ac_wv, ac_wo;
  ag::Var ts_wq, ts_wk, ts_wv, ts_wo;
  ag::Var tc_wq, tc_wk, tc_wv, tc_wo;

  Index heads = 2;

  static StebBlock init(ParamStore& store, const std::string& prefix,
                        const DenoiserConfig& cfg, Rng& rng);

  ag::Var forward(const ag::Var& x, const ag::Var& t_emb,
                  const ag::Var& text_kv, const ag::Var& actor_kv,
                  double beta, bool use_actor) const;
};

class DenoiserNet {
 public:
  DenoiserNet(const DenoiserConfig& cfg, std::uint64_t seed);

  const DenoiserConfig& config() const { return cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  // x_in: [F, 9, H, W] -> predicted noise [F, 4, H, W].
  ag::Var forward(const ag::Var& x_in, Index t,
                  const DiffusionSchedule& sched,
                  const ConditioningBundle& cond) const;

 private:
  DenoiserConfig cfg_;
  ParamStore store_;
  ag::Var conv_in_w, conv_in_b, conv_out_w, conv_out_b;
  ag::Var time_mlp_w1, time_mlp_b1, time_mlp_w2, time_mlp_b2;
  std::vector<StebBlock> down_;
  StebBlock mid_;
  std::vector<StebBlock> up_;
};

// Sinusoidal embedding of the diffusion step, [1 x dim].
Tensor timestep_embedding(Index t, Index dim);

// Inference-path noise prediction; validates shapes and finiteness.
LatentClip predict_noise(const DenoiserNet& net, const Tensor& x_in, Index t,
                         const DiffusionSchedule& sched,
                         const ConditioningBundle& cond);

// Classifier-free guidance combination.
inline LatentClip cfg_combine(const LatentClip& eps_uncond,
                              const LatentClip& eps_cond, double w) {
  check_same_shape(eps_uncond, eps_cond, "cfg_combine");
  if (w < 1.0) throw DomainError("cfg_combine: guidance scale must be >= 1");
  LatentClip out = eps_uncond;
  out.data += w * (eps_cond.data - eps_uncond.data);
  return out;
}

inline Embedding null_embedding(Index dim) { return Tensor::zeros({1, dim}); }

inline bool is_null_embedding(const Embedding& e) {
  return e.max_abs() == 0.0;
}

}  // namespace vlogger
