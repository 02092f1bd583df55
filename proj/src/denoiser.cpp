#include "vlogger/denoiser.hpp"

namespace vlogger {

using ag::Var;

ag::Var ParamStore::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return p.var;
  throw DomainError("ParamStore: no parameter named " + name);
}

void ParamStore::zero_grads() {
  for (auto& p : params_) p.var.zero_grad();
}

namespace {

Tensor randn_scaled(Shape s, Rng& rng, double stddev) {
  return Tensor::randn(std::move(s), rng, stddev);
}

Var add_param(ParamStore& store, const std::string& name, Tensor t) {
  return store.add(name, std::move(t));
}

// Tokens-per-frame view: [F,C,h,w] -> [F*h*w, C].
Var tokens_spatial(const Var& x) {
  Index f = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  return ag::reshape(ag::permute4(x, {0, 2, 3, 1}), {f * h * w, c});
}

Var from_tokens_spatial(const Var& t, Index f, Index c, Index h, Index w) {
  return ag::permute4(ag::reshape(t, {f, h, w, c}), {0, 3, 1, 2});
}

// Tokens-per-location view: [F,C,h,w] -> [(h*w)*F, C], batch major in (h,w).
Var tokens_temporal(const Var& x) {
  Index f = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  return ag::reshape(ag::permute4(x, {2, 3, 0, 1}), {h * w * f, c});
}

Var from_tokens_temporal(const Var& t, Index f, Index c, Index h, Index w) {
  return ag::permute4(ag::reshape(t, {h, w, f, c}), {2, 3, 0, 1});
}

// 2D sinusoidal location code for the spatial tokens; attention is otherwise
// purely content-based and absolute position would only leak in through conv
// padding at the borders.
Tensor spatial_position_encoding(Index f, Index h, Index w, Index c) {
  Index quarter = c / 4;
  Tensor pos = Tensor::zeros({f * h * w, c});
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      Index row = (y * w + x) * c;
      for (Index j = 0; j < quarter; ++j) {
        double freq =
            std::exp(-std::log(100.0) * double(j) / double(std::max<Index>(quarter, 1)));
        pos.data[row + j] = std::sin(double(y) * freq);
        pos.data[row + quarter + j] = std::cos(double(y) * freq);
        pos.data[row + 2 * quarter + j] = std::sin(double(x) * freq);
        pos.data[row + 3 * quarter + j] = std::cos(double(x) * freq);
      }
    }
  Index frame = h * w * c;
  for (Index b = 1; b < f; ++b)
    pos.data.segment(b * frame, frame) = pos.data.segment(0, frame);
  return pos;
}

// Sinusoidal frame-index code for the temporal tokens. Without it the
// temporal path is permutation-equivariant across frames, and generation
// mode (all-zero mask and context) could not tell frame i from frame j.
Tensor frame_position_encoding(Index f, Index hw, Index c) {
  Tensor pos({hw * f, c});
  Index half = c / 2;
  for (Index i = 0; i < f; ++i)
    for (Index j = 0; j < half; ++j) {
      double freq = std::exp(-std::log(10000.0) * double(j) / double(half));
      pos.data[i * c + j] = std::sin(double(i) * freq);
      pos.data[i * c + half + j] = std::cos(double(i) * freq);
    }
  if (c % 2 == 1)
    for (Index i = 0; i < f; ++i) pos.data[i * c + c - 1] = 0.0;
  for (Index b = 1; b < hw; ++b)
    pos.data.segment(b * f * c, f * c) = pos.data.segment(0, f * c);
  return pos;
}

}  // namespace

StebBlock StebBlock::init(ParamStore& store, const std::string& prefix,
                          const DenoiserConfig& cfg, Rng& rng) {
  StebBlock b;
  b.heads = cfg.heads;
  Index w = cfg.width, cd = cfg.cond_dim, td = cfg.time_dim;
  double conv_std = std::sqrt(2.0 / double(w * 9));
  double proj_std = 1.0 / std::sqrt(double(w));
  double cond_std = 1.0 / std::sqrt(double(cd));

  b.conv1_w = add_param(store, prefix + ".conv1.w",
                        randn_scaled({w, w, 3, 3}, rng, conv_std));
  b.conv1_b = add_param(store, prefix + ".conv1.b", Tensor::zeros({w}));
  // Second conv starts at zero so every STEB is the identity at init.
  b.conv2_w = add_param(store, prefix + ".conv2.w", Tensor::zeros({w, w, 3, 3}));
  b.conv2_b = add_param(store, prefix + ".conv2.b", Tensor::zeros({w}));
  b.time_w = add_param(store, prefix + ".time.w",
                       randn_scaled({td, w}, rng, 1.0 / std::sqrt(double(td))));
  b.time_b = add_param(store, prefix + ".time.b", Tensor::zeros({w}));

  auto ln = [&](const std::string& n, Var& g, Var& bb) {
    g = add_param(store, prefix + "." + n + ".g", Tensor::full({w}, 1.0));
    bb = add_param(store, prefix + "." + n + ".b", Tensor::zeros({w}));
  };
  ln("ln_sa", b.ln_sa_g, b.ln_sa_b);
  ln("ln_ca", b.ln_ca_g, b.ln_ca_b);
  ln("ln_ac", b.ln_ac_g, b.ln_ac_b);
  ln("ln_ts", b.ln_ts_g, b.ln_ts_b);
  ln("ln_tc", b.ln_tc_g, b.ln_tc_b);

  auto attn = [&](const std::string& n, Var& wq, Var& wk, Var& wv, Var& wo,
                  Index ctx_dim, double kv_std) {
    wq = add_param(store, prefix + "." + n + ".wq",
                   randn_scaled({w, w}, rng, proj_std));
    wk = add_param(store, prefix + "." + n + ".wk",
                   randn_scaled({ctx_dim, w}, rng, kv_std));
    wv = add_param(store, prefix + "." + n + ".wv",
                   randn_scaled({ctx_dim, w}, rng, kv_std));
    // Zero output projection: attention branches are silent at init.
    wo = add_param(store, prefix + "." + n + ".wo", Tensor::zeros({w, w}));
  };
  attn("sa", b.sa_wq, b.sa_wk, b.sa_wv, b.sa_wo, w, proj_std);
  attn("ca", b.ca_wq, b.ca_wk, b.ca_wv, b.ca_wo, cd, cond_std);
  attn("ac", b.ac_wq, b.ac_wk, b.ac_wv, b.ac_wo, cd, cond_std);
  attn("ts", b.ts_wq, b.ts_wk, b.ts_wv, b.ts_wo, w, proj_std);
  attn("tc", b.tc_wq, b.tc_wk, b.tc_wv, b.tc_wo, cd, cond_std);
  return b;
}

ag::Var StebBlock::forward(const Var& x, const Var& t_emb, const Var& text_kv,
                           const Var& actor_kv, double beta,
                           bool use_actor) const {
  Index f = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Index hw = h * w;
  Index lt = text_kv.dim(0);

  // X_cv: residual conv unit with the timestep embedding injected between
  // the two convolutions.
  Var t_vec = ag::reshape(ag::linear(t_emb, time_w, time_b), {c});
  Var hcv = ag::conv2d(ag::silu(x), conv1_w, conv1_b);
  hcv = ag::add_channel_bias(hcv, t_vec);
  hcv = ag::conv2d(ag::silu(hcv), conv2_w, conv2_b);
  Var x_cv = ag::add(x, hcv);

  // Spatial self attention per frame.
  Var xs = tokens_spatial(x_cv);
  Var xs_n = ag::layernorm(xs, ln_sa_g, ln_sa_b);
  Var xs_p =
      ag::add(xs_n, Var::constant(spatial_position_encoding(f, h, w, c)));
  Var x_sa = ag::add(xs, ag::attention(xs_p, xs_p, sa_wq, sa_wk, sa_wv, sa_wo,
                                       f, hw, hw, heads, false));

  // Spatial text cross attention (X_ca) and spatial actor cross attention
  // (Y_ca); both query X_sa, and the actor branch enters additively with
  // weight beta: Z_se = X_ca + beta * Y_ca applied as a residual.
  Var x_ca = ag::add(x_sa, ag::attention(ag::layernorm(x_sa, ln_ca_g, ln_ca_b),
                                         text_kv, ca_wq, ca_wk, ca_wv, ca_wo,
                                         f, hw, lt, heads, true));
  Var z_se = x_ca;
  if (use_actor && beta != 0.0) {
    Index la = actor_kv.dim(0);
    Var y_ca = ag::attention(ag::layernorm(x_sa, ln_ac_g, ln_ac_b), actor_kv,
                             ac_wq, ac_wk, ac_wv, ac_wo, f, hw, la, heads,
                             true);
    z_se = ag::add(x_ca, ag::scale(y_ca, beta));
  }
  Var z = from_tokens_spatial(z_se, f, c, h, w);

  if (f == 1) return z;  // image features skip the temporal sublayers

  // Temporal self attention across frames at each spatial location.
  Var zt = tokens_temporal(z);
  Var zt_n = ag::layernorm(zt, ln_ts_g, ln_ts_b);
  Var zt_p =
      ag::add(zt_n, Var::constant(frame_position_encoding(f, hw, c)));
  Var z_sa = ag::add(zt, ag::attention(zt_p, zt_p, ts_wq, ts_wk, ts_wv, ts_wo,
                                       hw, f, f, heads, false));

  // Temporal text cross attention.
  Var z_ca = ag::add(z_sa, ag::attention(ag::layernorm(z_sa, ln_tc_g, ln_tc_b),
                                         text_kv, tc_wq, tc_wk, tc_wv, tc_wo,
                                         hw, f, lt, heads, true));
  return from_tokens_temporal(z_ca, f, c, h, w);
}

Tensor timestep_embedding(Index t, Index dim) {
  Tensor emb({1, dim});
  Index half = dim / 2;
  for (Index i = 0; i < half; ++i) {
    double freq = std::exp(-std::log(10000.0) * double(i) / double(half));
    emb.data[i] = std::sin(double(t) * freq);
    emb.data[half + i] = std::cos(double(t) * freq);
  }
  return emb;
}

DenoiserNet::DenoiserNet(const DenoiserConfig& cfg, std::uint64_t seed)
    : cfg_(cfg) {
  Rng rng = make_rng(seed);
  Index w = cfg.width, td = cfg.time_dim;
  double conv_std = std::sqrt(2.0 / double(kDenoiserInputChannels * 9));

  // conv-in accepts 9 channels; the weights feeding channels 4..8 (context
  // and mask) start at zero so a fresh model matches the 4-channel base.
  Tensor ciw = randn_scaled({w, kDenoiserInputChannels, 3, 3}, rng, conv_std);
  for (Index co = 0; co < w; ++co)
    for (Index ci = kLatentChannels; ci < kDenoiserInputChannels; ++ci)
      for (Index ky = 0; ky < 3; ++ky)
        for (Index kx = 0; kx < 3; ++kx) ciw.at4(co, ci, ky, kx) = 0.0;
  conv_in_w = store_.add("conv_in.w", std::move(ciw));
  conv_in_b = store_.add("conv_in.b", Tensor::zeros({w}));

  conv_out_w = store_.add(
      "conv_out.w", randn_scaled({kLatentChannels, w, 3, 3}, rng, 1e-3));
  conv_out_b = store_.add("conv_out.b", Tensor::zeros({kLatentChannels}));

  time_mlp_w1 = store_.add("time_mlp.w1",
                           randn_scaled({td, 2 * td}, rng, 1.0 / std::sqrt(double(td))));
  time_mlp_b1 = store_.add("time_mlp.b1", Tensor::zeros({2 * td}));
  time_mlp_w2 = store_.add(
      "time_mlp.w2", randn_scaled({2 * td, td}, rng, 1.0 / std::sqrt(2.0 * double(td))));
  time_mlp_b2 = store_.add("time_mlp.b2", Tensor::zeros({td}));

  for (Index l = 0; l < cfg.levels; ++l)
    down_.push_back(StebBlock::init(store_, "down" + std::to_string(l), cfg, rng));
  mid_ = StebBlock::init(store_, "mid", cfg, rng);
  for (Index l = 0; l < cfg.levels; ++l)
    up_.push_back(StebBlock::init(store_, "up" + std::to_string(l), cfg, rng));
}

ag::Var DenoiserNet::forward(const Var& x_in, Index t,
                             const DiffusionSchedule& sched,
                             const ConditioningBundle& cond) const {
  if (t < 0 || t >= sched.steps)
    throw DomainError("denoiser forward: t out of schedule");
  if (x_in.shape().size() != 4 || x_in.dim(1) != kDenoiserInputChannels)
    throw ShapeError("denoiser forward: input must be [F,9,H,W]");

  Var t_emb = Var::constant(timestep_embedding(t, cfg_.time_dim));
  t_emb = ag::linear(t_emb, time_mlp_w1, time_mlp_b1);
  t_emb = ag::linear(ag::silu(t_emb), time_mlp_w2, time_mlp_b2);

  Var text_kv = Var::constant(cond.text);
  bool use_actor = cond.actor.has_value();
  Var actor_kv = use_actor ? Var::constant(*cond.actor)
                           : Var::constant(null_embedding(cfg_.cond_dim));

  Var h = ag::conv2d(x_in, conv_in_w, conv_in_b);
  std::vector<Var> skips;
  for (Index l = 0; l < cfg_.levels; ++l) {
    h = down_[std::size_t(l)].forward(h, t_emb, text_kv, actor_kv, cond.beta,
                                      use_actor);
    skips.push_back(h);
    if (l + 1 < cfg_.levels) h = ag::avgpool2(h);
  }
  h = mid_.forward(h, t_emb, text_kv, actor_kv, cond.beta, use_actor);
  for (Index l = cfg_.levels - 1; l >= 0; --l) {
    h = ag::add(h, skips[std::size_t(l)]);
    h = up_[std::size_t(l)].forward(h, t_emb, text_kv, actor_kv, cond.beta,
                                    use_actor);
    if (l > 0) h = ag::upsample2(h);
  }
  return ag::conv2d(ag::silu(h), conv_out_w, conv_out_b);
}

LatentClip predict_noise(const DenoiserNet& net, const Tensor& x_in, Index t,
                         const DiffusionSchedule& sched,
                         const ConditioningBundle& cond) {
  Var out = net.forward(Var::constant(x_in), t, sched, cond);
  if (!out.value().all_finite())
    throw NonFiniteError("predict_noise: non-finite output");
  return out.value();
}

}  // namespace vlogger
