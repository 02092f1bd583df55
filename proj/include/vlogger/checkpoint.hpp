#pragma once

#include <string>
#include <utility>
#include <vector>

#include "vlogger/autoencoder.hpp"
#include "vlogger/denoiser.hpp"
#include "vlogger/mode_select.hpp"
#include "vlogger/optimizer.hpp"

namespace vlogger {

struct ModelGeometry {
  Index clip_len = 16;   // F
  Index pixel_h = 8;
  Index pixel_w = 8;
  Index ae_factor = 1;   // 1 selects the identity coder
  Index latent_h() const { return pixel_h / ae_factor; }
  Index latent_w() const { return pixel_w / ae_factor; }
};

// Self-describing model container: named parameter arrays plus schedule,
// mode selector, and geometry metadata. Binary layout: magic, u32 version,
// u64 JSON header length, header, then raw little-endian doubles per array.
struct Checkpoint {
  std::uint32_t version = 1;
  std::int64_t step = 0;
  DenoiserConfig net;
  ModelGeometry geometry;
  Index schedule_steps = 1000;
  ScheduleKind schedule_kind = ScheduleKind::scaled_linear;
  ModeSelector selector;
  std::vector<std::pair<std::string, Tensor>> arrays;

  const Tensor* find(const std::string& name) const {
    for (const auto& [n, t] : arrays)
      if (n == name) return &t;
    return nullptr;
  }

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

// Capture / restore helpers.
Checkpoint make_checkpoint(const DenoiserNet& net, const ModelGeometry& geom,
                           const DiffusionSchedule& sched,
                           const ModeSelector& selector,
                           const LatentCoder& coder, std::int64_t step,
                           const AdamW* opt = nullptr);

void restore_params(const Checkpoint& ckpt, DenoiserNet& net);
void restore_optimizer(const Checkpoint& ckpt, AdamW& opt,
                       const ParamStore& store);
LatentCoder restore_coder(const Checkpoint& ckpt);

}  // namespace vlogger
