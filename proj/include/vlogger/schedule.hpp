#pragma once

#include "vlogger/tensor.hpp"

namespace vlogger {

// Latent video clip, [F x C_lat x H_lat x W_lat] with C_lat = 4.
using LatentClip = Tensor;

constexpr Index kLatentChannels = 4;
constexpr Index kDenoiserInputChannels = 9;  // noise(4) | context(4) | mask(1)

enum class ScheduleKind { linear, scaled_linear };

struct DiffusionSchedule {
  Index steps = 0;  // T
  Eigen::ArrayXd betas;
  Eigen::ArrayXd alphas_cumprod;
  ScheduleKind kind = ScheduleKind::scaled_linear;
};

inline DiffusionSchedule make_schedule(Index steps,
                                       ScheduleKind kind = ScheduleKind::scaled_linear) {
  if (steps < 2) throw DomainError("make_schedule: T must be >= 2");
  DiffusionSchedule s;
  s.steps = steps;
  s.kind = kind;
  s.betas.resize(steps);
  const double b0 = 8.5e-4, b1 = 1.2e-2;
  for (Index t = 0; t < steps; ++t) {
    double u = double(t) / double(steps - 1);
    if (kind == ScheduleKind::linear) {
      s.betas[t] = 1e-4 + u * (2e-2 - 1e-4);
    } else {
      double r = std::sqrt(b0) + u * (std::sqrt(b1) - std::sqrt(b0));
      s.betas[t] = r * r;
    }
  }
  s.alphas_cumprod.resize(steps);
  double acc = 1.0;
  for (Index t = 0; t < steps; ++t) {
    acc *= 1.0 - s.betas[t];
    s.alphas_cumprod[t] = acc;
  }
  return s;
}

// Forward diffusion: sqrt(abar_t) x0 + sqrt(1 - abar_t) noise.
inline LatentClip q_sample(const LatentClip& x0, Index t, const Tensor& noise,
                           const DiffusionSchedule& sched) {
  if (t < 0 || t >= sched.steps) throw DomainError("q_sample: t out of range");
  check_same_shape(x0, noise, "q_sample");
  double abar = sched.alphas_cumprod[t];
  LatentClip out = x0;
  out.data = std::sqrt(abar) * x0.data + std::sqrt(1.0 - abar) * noise.data;
  return out;
}

}  // namespace vlogger
