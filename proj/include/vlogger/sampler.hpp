#pragma once

#include "vlogger/denoiser.hpp"

namespace vlogger {

struct SamplerOptions {
  double eta = 1.0;      // 1 = ancestral DDPM, 0 = deterministic DDIM
  double x0_clip = 3.0;  // predicted-x0 clamp, <= 0 disables
};

// Ancestral denoising from pure noise. Each step re-assembles the 9-channel
// input from the masked context and applies classifier-free guidance; after
// the loop the k preserved frames are hard-replaced by ctx.x_k so stitched
// clips are exactly continuous.
LatentClip sample_clip(const DenoiserNet& net, const DiffusionSchedule& sched,
                       const ConditioningBundle& cond, const MaskedContext& ctx,
                       Index steps, Rng& rng,
                       const SamplerOptions& opt = SamplerOptions{});

}  // namespace vlogger
