#pragma once

#include <vector>

#include "vlogger/schedule.hpp"

namespace vlogger {

// Toy latent autoencoder. Three modes:
//  - identity: factor 1, latent channels 0..2 mirror RGB, channel 3 is zero;
//    decode(encode(x)) is bit-exact. Used by tests and small configs.
//  - affine: identity layout with a fixed per-value map scale*(x - shift),
//    the usual [0,1] -> [-1,1] pixel normalization the denoiser trains
//    better on (zero-centered latents match the unit-noise targets).
//  - linear_patch: non-overlapping (factor x factor) patches mapped to 4
//    latent channels by a PCA basis fitted on sample frames.
class LatentCoder {
 public:
  enum class Kind { identity, affine, linear_patch };

  static LatentCoder identity() {
    LatentCoder c;
    c.kind_ = Kind::identity;
    c.factor_ = 1;
    return c;
  }

  static LatentCoder affine(double scale, double shift) {
    if (scale == 0.0) throw DomainError("affine coder: scale must be nonzero");
    LatentCoder c;
    c.kind_ = Kind::affine;
    c.factor_ = 1;
    c.aff_scale_ = scale;
    c.aff_shift_ = shift;
    return c;
  }

  static LatentCoder linear_patch(Index factor) {
    if (factor < 2) throw DomainError("linear_patch: factor must be >= 2");
    LatentCoder c;
    c.kind_ = Kind::linear_patch;
    c.factor_ = factor;
    return c;
  }

  Kind kind() const { return kind_; }
  Index factor() const { return factor_; }
  double affine_scale() const { return aff_scale_; }
  double affine_shift() const { return aff_shift_; }
  bool fitted() const { return kind_ != Kind::linear_patch || enc_w.size() > 0; }

  // PCA fit on every patch of the given [F,3,H,W] frame blocks.
  void fit(const std::vector<Tensor>& frame_blocks);

  LatentClip encode(const Tensor& frames) const;
  Tensor decode(const LatentClip& latents) const;

  // Flat parameter arrays (empty for identity), used by checkpoints.
  Tensor enc_w;   // [4, d] with d = 3*factor^2
  Tensor dec_w;   // [d, 4]
  Tensor mean;    // [d]

 private:
  Kind kind_ = Kind::identity;
  Index factor_ = 1;
  double aff_scale_ = 1.0;
  double aff_shift_ = 0.0;

  void check_frames(const Tensor& frames) const;
};

}  // namespace vlogger
