#include "vlogger/sampler.hpp"

namespace vlogger {

LatentClip sample_clip(const DenoiserNet& net, const DiffusionSchedule& sched,
                       const ConditioningBundle& cond, const MaskedContext& ctx,
                       Index steps, Rng& rng, const SamplerOptions& opt) {
  if (steps < 1 || steps > sched.steps)
    throw DomainError("sample_clip: steps must be in [1, T]");
  if (ctx.x_k.rank() != 4 || ctx.x_k.shape[1] != kLatentChannels)
    throw ShapeError("sample_clip: context must be [F,4,h,w]");
  Index f = ctx.x_k.shape[0];
  Index per_frame = ctx.x_k.size() / f;

  // Strided descending timestep ladder T-1 .. 0.
  std::vector<Index> ts(static_cast<std::size_t>(steps), 0);
  for (Index i = 0; i < steps; ++i)
    ts[std::size_t(i)] =
        steps == 1 ? sched.steps - 1
                   : Index(std::llround(double(sched.steps - 1) *
                                        double(steps - 1 - i) /
                                        double(steps - 1)));

  LatentClip x = Tensor::randn(ctx.x_k.shape, rng);

  ConditioningBundle uncond = cond;
  uncond.text = null_embedding(net.config().cond_dim);
  uncond.actor.reset();
  bool need_guidance =
      cond.guidance_scale != 1.0 &&
      (!is_null_embedding(cond.text) || cond.actor.has_value());

  for (std::size_t i = 0; i < ts.size(); ++i) {
    Index t = ts[i];
    Index t_prev = i + 1 < ts.size() ? ts[i + 1] : -1;
    Tensor x_in = assemble_denoiser_input(x, ctx);
    LatentClip eps = predict_noise(net, x_in, t, sched, cond);
    if (need_guidance) {
      LatentClip eps_u = predict_noise(net, x_in, t, sched, uncond);
      eps = cfg_combine(eps_u, eps, cond.guidance_scale);
    }

    double abar_t = sched.alphas_cumprod[t];
    double abar_prev = t_prev >= 0 ? sched.alphas_cumprod[t_prev] : 1.0;

    Tensor x0 = x;
    x0.data = (x.data - std::sqrt(1.0 - abar_t) * eps.data) /
              std::sqrt(abar_t);
    if (opt.x0_clip > 0.0) {
      x0.data = x0.data.max(-opt.x0_clip).min(opt.x0_clip);
      // Re-derive the noise from the clipped estimate; keeping the raw eps
      // would feed the clipped-away error back into the trajectory.
      eps.data = (x.data - std::sqrt(abar_t) * x0.data) /
                 std::sqrt(1.0 - abar_t);
    }

    double sigma = 0.0;
    if (t_prev >= 0 && opt.eta > 0.0)
      sigma = opt.eta *
              std::sqrt((1.0 - abar_prev) / (1.0 - abar_t)) *
              std::sqrt(1.0 - abar_t / abar_prev);
    double dir = std::sqrt(std::max(1.0 - abar_prev - sigma * sigma, 0.0));

    x.data = std::sqrt(abar_prev) * x0.data + dir * eps.data;
    if (sigma > 0.0) {
      Tensor z = Tensor::randn(x.shape, rng);
      x.data += sigma * z.data;
    }
    if (!x.all_finite()) throw NonFiniteError("sample_clip: diverged");
  }

  // Continuity guarantee: preserved frames come back verbatim.
  for (Index fr = 0; fr < ctx.preserved; ++fr)
    x.data.segment(fr * per_frame, per_frame) =
        ctx.x_k.data.segment(fr * per_frame, per_frame);
  return x;
}

}  // namespace vlogger
