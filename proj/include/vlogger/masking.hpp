#pragma once

#include "vlogger/schedule.hpp"

namespace vlogger {

// Preserved clean frames plus the binary frame mask that marks them.
struct MaskedContext {
  LatentClip x_k;          // clean frames, zeroed where mask is 0
  Eigen::ArrayXd mask;     // [F], mask[i] = 1 iff i < k
  Index preserved = 0;     // k
};

inline MaskedContext build_masked_context(const LatentClip& x_clean, Index k) {
  if (x_clean.rank() != 4) throw ShapeError("build_masked_context: rank != 4");
  Index f = x_clean.shape[0];
  if (k < 0 || k > f) throw DomainError("build_masked_context: k out of [0,F]");
  MaskedContext ctx;
  ctx.preserved = k;
  ctx.mask = Eigen::ArrayXd::Zero(f);
  ctx.mask.head(k).setOnes();
  ctx.x_k = Tensor::zeros(x_clean.shape);
  Index per_frame = x_clean.size() / f;
  for (Index i = 0; i < k; ++i)
    ctx.x_k.data.segment(i * per_frame, per_frame) =
        x_clean.data.segment(i * per_frame, per_frame);
  return ctx;
}

// Channel layout: [x_noise(4) | x_k(4) | mask(1)] -> [F, 9, H, W].
inline Tensor assemble_denoiser_input(const LatentClip& x_noise,
                                      const MaskedContext& ctx) {
  if (x_noise.rank() != 4 || x_noise.shape[1] != kLatentChannels)
    throw ShapeError("assemble_denoiser_input: x_noise must be [F,4,H,W]");
  check_same_shape(x_noise, ctx.x_k, "assemble_denoiser_input");
  Index f = x_noise.shape[0], h = x_noise.shape[2], w = x_noise.shape[3];
  if (ctx.mask.size() != f)
    throw ShapeError("assemble_denoiser_input: mask length != F");
  Tensor out({f, kDenoiserInputChannels, h, w});
  Index plane = h * w;
  for (Index fr = 0; fr < f; ++fr) {
    out.data.segment(fr * 9 * plane, 4 * plane) =
        x_noise.data.segment(fr * 4 * plane, 4 * plane);
    out.data.segment(fr * 9 * plane + 4 * plane, 4 * plane) =
        ctx.x_k.data.segment(fr * 4 * plane, 4 * plane);
    out.data.segment(fr * 9 * plane + 8 * plane, plane)
        .setConstant(ctx.mask[fr]);
  }
  return out;
}

// Inverse slices of the 9-channel layout, used by round-trip checks.
inline LatentClip slice_noise(const Tensor& x_in) {
  Index f = x_in.shape[0], h = x_in.shape[2], w = x_in.shape[3];
  LatentClip out({f, 4, h, w});
  Index plane = h * w;
  for (Index fr = 0; fr < f; ++fr)
    out.data.segment(fr * 4 * plane, 4 * plane) =
        x_in.data.segment(fr * 9 * plane, 4 * plane);
  return out;
}

inline LatentClip slice_context(const Tensor& x_in) {
  Index f = x_in.shape[0], h = x_in.shape[2], w = x_in.shape[3];
  LatentClip out({f, 4, h, w});
  Index plane = h * w;
  for (Index fr = 0; fr < f; ++fr)
    out.data.segment(fr * 4 * plane, 4 * plane) =
        x_in.data.segment(fr * 9 * plane + 4 * plane, 4 * plane);
  return out;
}

inline Eigen::ArrayXd slice_mask(const Tensor& x_in) {
  Index f = x_in.shape[0], h = x_in.shape[2], w = x_in.shape[3];
  Eigen::ArrayXd mask(f);
  for (Index fr = 0; fr < f; ++fr)
    mask[fr] = x_in.data[fr * 9 * h * w + 8 * h * w];
  return mask;
}

}  // namespace vlogger
