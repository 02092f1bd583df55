#include "vlogger/shooting.hpp"

#include <cmath>

namespace vlogger {

ShootPlan plan_clip_schedule(Index frames_needed, Index clip_len, Index k) {
  if (clip_len < 2) throw DomainError("plan_clip_schedule: clip_len < 2");
  if (k <= 0 || k >= clip_len)
    throw DomainError("plan_clip_schedule: k must be in (0, clip_len)");
  if (frames_needed < 1)
    throw DomainError("plan_clip_schedule: frames_needed < 1");
  ShootPlan p;
  p.frames_needed = frames_needed;
  p.clip_len = clip_len;
  p.k = k;
  p.new_frames_per_step = clip_len - k;
  p.clip_count =
      frames_needed <= clip_len
          ? 1
          : 1 + (frames_needed - clip_len + p.new_frames_per_step - 1) /
                    p.new_frames_per_step;
  return p;
}

Tensor stitch(const std::vector<Tensor>& clips, Index k) {
  if (clips.empty()) throw ShapeError("stitch: no clips");
  for (const Tensor& c : clips) {
    if (c.rank() != 4) throw ShapeError("stitch: clips must be rank-4");
    if (c.shape != clips.front().shape)
      throw ShapeError("stitch: clip geometry mismatch");
  }
  Index f = clips.front().shape[0];
  if (k < 0 || k >= f) throw ShapeError("stitch: k must be in [0, F)");
  Index per_frame = clips.front().size() / f;
  Index total = f + Index(clips.size() - 1) * (f - k);
  Shape s = clips.front().shape;
  s[0] = total;
  Tensor out(s);
  Index at = 0;
  for (std::size_t j = 0; j < clips.size(); ++j) {
    Index skip = j == 0 ? 0 : k;
    Index n = (f - skip) * per_frame;
    out.data.segment(at, n) = clips[j].data.segment(skip * per_frame, n);
    at += n;
  }
  return out;
}

Snippet shoot_scene(const DenoiserNet& net, const DiffusionSchedule& sched,
                    const LatentCoder& coder, const ModelGeometry& geom,
                    const Scene& scene, const Embedding& text_emb,
                    const Embedding* actor_emb, const ShootConfig& cfg,
                    Rng& rng, ShootTrace* trace) {
  if (!scene.duration_seconds)
    throw DomainError("shoot_scene: scene has no scheduled duration");
  Index frames_needed = seconds_to_frames(*scene.duration_seconds, kFps);
  if (frames_needed < 1)
    throw DomainError("shoot_scene: scene duration rounds to zero frames");
  ShootPlan plan = plan_clip_schedule(frames_needed, geom.clip_len, cfg.k);

  ConditioningBundle cond;
  cond.text = text_emb;
  cond.beta = cfg.beta;
  cond.guidance_scale = cfg.guidance_scale;

  Shape lat_shape{geom.clip_len, kLatentChannels, geom.latent_h(),
                  geom.latent_w()};
  Index per_frame = kLatentChannels * geom.latent_h() * geom.latent_w();

  std::vector<LatentClip> latents;
  latents.reserve(std::size_t(plan.clip_count));
  for (Index j = 0; j < plan.clip_count; ++j) {
    MaskedContext ctx;
    if (j == 0) {
      // Generation mode: no preserved frames, actor reference active.
      ctx = build_masked_context(Tensor::zeros(lat_shape), 0);
      if (actor_emb) cond.actor = *actor_emb;
    } else {
      // Prediction mode: seed with the cached last k latents, drop the actor.
      Tensor seed = Tensor::zeros(lat_shape);
      const LatentClip& prev = latents.back();
      seed.data.segment(0, cfg.k * per_frame) = prev.data.segment(
          (geom.clip_len - cfg.k) * per_frame, cfg.k * per_frame);
      ctx = build_masked_context(seed, cfg.k);
      cond.actor.reset();
    }
    if (trace) trace->actor_used_per_clip.push_back(cond.actor.has_value());
    latents.push_back(
        sample_clip(net, sched, cond, ctx, cfg.sampler_steps, rng, cfg.sampler));
  }

  Tensor lat_all = plan.clip_count == 1 ? latents.front()
                                        : stitch(latents, cfg.k);
  // Trim surplus frames from the tail, then decode.
  if (lat_all.shape[0] > frames_needed) {
    Shape s = lat_all.shape;
    s[0] = frames_needed;
    Tensor trimmed(s);
    trimmed.data = lat_all.data.segment(0, frames_needed * per_frame);
    lat_all = std::move(trimmed);
  }
  Snippet snip;
  snip.frames = coder.decode(lat_all);
  snip.scene_ref = scene.fragment_id;
  return snip;
}

}  // namespace vlogger
