#pragma once

#include "vlogger/checkpoint.hpp"
#include "vlogger/planning.hpp"
#include "vlogger/sampler.hpp"

namespace vlogger {

struct ShootPlan {
  Index frames_needed = 0;
  Index clip_len = 0;
  Index k = 0;
  Index clip_count = 0;
  Index new_frames_per_step = 0;  // clip_len - k
  Index total_frames() const {
    return clip_len + (clip_count - 1) * new_frames_per_step;
  }
};

ShootPlan plan_clip_schedule(Index frames_needed, Index clip_len, Index k);

struct Snippet {
  Tensor frames;  // [F_total,3,H,W] in [0,1]
  int scene_ref = 0;
};

struct ShootConfig {
  Index k = 1;
  Index sampler_steps = 25;
  SamplerOptions sampler;
  double guidance_scale = 7.5;
  double beta = 1.0;
};

struct ShootTrace {
  std::vector<bool> actor_used_per_clip;
};

// First clip in generation mode with actor conditioning; later clips in
// prediction mode from the cached last-k latents, actor dropped.
Snippet shoot_scene(const DenoiserNet& net, const DiffusionSchedule& sched,
                    const LatentCoder& coder, const ModelGeometry& geom,
                    const Scene& scene, const Embedding& text_emb,
                    const Embedding* actor_emb, const ShootConfig& cfg,
                    Rng& rng, ShootTrace* trace = nullptr);

// clip1 ++ clip2[k:] ++ ...; overlap frames appear exactly once.
Tensor stitch(const std::vector<Tensor>& clips, Index k);

}  // namespace vlogger
