#include "vlogger/autoencoder.hpp"

#include <Eigen/Eigenvalues>

namespace vlogger {

void LatentCoder::check_frames(const Tensor& frames) const {
  if (frames.rank() != 4 || frames.shape[1] != 3)
    throw ShapeError("LatentCoder: frames must be [F,3,H,W]");
  if (frames.shape[2] % factor_ || frames.shape[3] % factor_)
    throw ShapeError("LatentCoder: H,W must be multiples of the patch factor");
}

namespace {

// Gather one patch as a column of length 3*f*f (channel-major).
void read_patch(const Tensor& frames, Index fr, Index py, Index px, Index f,
                Eigen::VectorXd& out) {
  Index h = frames.shape[2], w = frames.shape[3];
  Index i = 0;
  for (Index c = 0; c < 3; ++c)
    for (Index y = 0; y < f; ++y)
      for (Index x = 0; x < f; ++x)
        out[i++] = frames.data[((fr * 3 + c) * h + py * f + y) * w + px * f + x];
}

void write_patch(Tensor& frames, Index fr, Index py, Index px, Index f,
                 const Eigen::VectorXd& in) {
  Index h = frames.shape[2], w = frames.shape[3];
  Index i = 0;
  for (Index c = 0; c < 3; ++c)
    for (Index y = 0; y < f; ++y)
      for (Index x = 0; x < f; ++x)
        frames.data[((fr * 3 + c) * h + py * f + y) * w + px * f + x] =
            std::clamp(in[i++], 0.0, 1.0);
}

}  // namespace

void LatentCoder::fit(const std::vector<Tensor>& frame_blocks) {
  if (kind_ != Kind::linear_patch) return;
  Index d = 3 * factor_ * factor_;
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(d);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
  Index n = 0;
  Eigen::VectorXd patch(d);
  for (const Tensor& frames : frame_blocks) {
    check_frames(frames);
    Index fcount = frames.shape[0];
    Index ph = frames.shape[2] / factor_, pw = frames.shape[3] / factor_;
    for (Index fr = 0; fr < fcount; ++fr)
      for (Index py = 0; py < ph; ++py)
        for (Index px = 0; px < pw; ++px) {
          read_patch(frames, fr, py, px, factor_, patch);
          mu += patch;
          cov += patch * patch.transpose();
          ++n;
        }
  }
  if (n < 2) throw DomainError("LatentCoder::fit: needs at least 2 patches");
  mu /= double(n);
  cov = cov / double(n) - mu * mu.transpose();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  // Top-4 principal directions (eigenvalues ascend in Eigen).
  Eigen::MatrixXd basis(d, kLatentChannels);
  Eigen::VectorXd scale(kLatentChannels);
  for (Index j = 0; j < kLatentChannels; ++j) {
    Index src = d - 1 - j;
    basis.col(j) = es.eigenvectors().col(src);
    double sd = std::sqrt(std::max(es.eigenvalues()[src], 0.0));
    scale[j] = sd > 1e-8 ? 1.0 / sd : 1.0;  // unit-variance latents
  }

  mean = Tensor({d});
  Eigen::Map<Eigen::VectorXd>(mean.data.data(), d) = mu;
  enc_w = Tensor({kLatentChannels, d});
  dec_w = Tensor({d, kLatentChannels});
  for (Index j = 0; j < kLatentChannels; ++j) {
    enc_w.mat().row(j) = basis.col(j).transpose() * scale[j];
    dec_w.mat().col(j) = basis.col(j) / scale[j];
  }
}

LatentClip LatentCoder::encode(const Tensor& frames) const {
  check_frames(frames);
  Index fcount = frames.shape[0];
  Index h = frames.shape[2], w = frames.shape[3];
  if (kind_ == Kind::identity || kind_ == Kind::affine) {
    LatentClip lat({fcount, kLatentChannels, h, w});
    Index plane = h * w;
    for (Index fr = 0; fr < fcount; ++fr) {
      if (kind_ == Kind::identity)
        lat.data.segment(fr * 4 * plane, 3 * plane) =
            frames.data.segment(fr * 3 * plane, 3 * plane);
      else
        lat.data.segment(fr * 4 * plane, 3 * plane) =
            (frames.data.segment(fr * 3 * plane, 3 * plane) - aff_shift_) *
            aff_scale_;
    }
    return lat;
  }
  if (!fitted()) throw DomainError("LatentCoder: encode before fit");
  Index d = 3 * factor_ * factor_;
  Index lh = h / factor_, lw = w / factor_;
  LatentClip lat({fcount, kLatentChannels, lh, lw});
  Eigen::VectorXd patch(d);
  auto muv = Eigen::Map<const Eigen::VectorXd>(mean.data.data(), d);
  for (Index fr = 0; fr < fcount; ++fr)
    for (Index py = 0; py < lh; ++py)
      for (Index px = 0; px < lw; ++px) {
        read_patch(frames, fr, py, px, factor_, patch);
        Eigen::VectorXd code = enc_w.mat() * (patch - muv);
        for (Index c = 0; c < kLatentChannels; ++c)
          lat.at4(fr, c, py, px) = code[c];
      }
  return lat;
}

Tensor LatentCoder::decode(const LatentClip& latents) const {
  if (latents.rank() != 4 || latents.shape[1] != kLatentChannels)
    throw ShapeError("LatentCoder: latents must be [F,4,h,w]");
  Index fcount = latents.shape[0];
  Index lh = latents.shape[2], lw = latents.shape[3];
  if (kind_ == Kind::identity || kind_ == Kind::affine) {
    Tensor frames({fcount, 3, lh, lw});
    Index plane = lh * lw;
    for (Index fr = 0; fr < fcount; ++fr) {
      if (kind_ == Kind::identity)
        frames.data.segment(fr * 3 * plane, 3 * plane) =
            latents.data.segment(fr * 4 * plane, 3 * plane).max(0.0).min(1.0);
      else
        frames.data.segment(fr * 3 * plane, 3 * plane) =
            (latents.data.segment(fr * 4 * plane, 3 * plane) / aff_scale_ +
             aff_shift_)
                .max(0.0)
                .min(1.0);
    }
    return frames;
  }
  if (!fitted()) throw DomainError("LatentCoder: decode before fit");
  Index d = 3 * factor_ * factor_;
  Tensor frames({fcount, 3, lh * factor_, lw * factor_});
  auto muv = Eigen::Map<const Eigen::VectorXd>(mean.data.data(), d);
  Eigen::VectorXd code(kLatentChannels);
  for (Index fr = 0; fr < fcount; ++fr)
    for (Index py = 0; py < lh; ++py)
      for (Index px = 0; px < lw; ++px) {
        for (Index c = 0; c < kLatentChannels; ++c)
          code[c] = latents.at4(fr, c, py, px);
        Eigen::VectorXd patch = dec_w.mat() * code + muv;
        write_patch(frames, fr, py, px, factor_, patch);
      }
  return frames;
}

}  // namespace vlogger
