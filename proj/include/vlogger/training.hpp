#pragma once

#include <functional>
#include <string>
#include <vector>

#include "vlogger/backends.hpp"
#include "vlogger/checkpoint.hpp"
#include "vlogger/mode_select.hpp"
#include "vlogger/sampler.hpp"

namespace vlogger {

struct ToyDatasetSpec {
  Index n_samples = 4;
  Index frames = 16;
  Index h = 8;
  Index w = 8;
};

// A moving-shape clip with a template caption and a reference crop of the
// shape, standing in for (video, text, actor image) training triples.
struct ToySample {
  Tensor frames;  // [F,3,H,W] in [0,1]
  std::string caption;
  Tensor actor_frame;  // [3,H,W]
};

std::vector<ToySample> make_toy_dataset(const ToyDatasetSpec& spec,
                                        std::uint64_t seed);

struct TrainConfig {
  double learning_rate = 1e-4;
  double weight_decay = 0.0;
  Index batch_size = 1;
  Index steps = 0;
  ModeSelector selector;
  double prompt_drop_prob = 0.1;
  double image_ratio = 0.0;  // fraction of steps trained on F=1 stills
  std::uint64_t seed = 0;
  Index schedule_steps = 1000;
  ScheduleKind schedule_kind = ScheduleKind::scaled_linear;
  DenoiserConfig net;
  ModelGeometry geometry;
  std::vector<std::string> freeze_prefixes;
  Index checkpoint_every = 500;
  std::string checkpoint_path;  // empty disables periodic saving
  std::string metrics_csv;      // empty disables the CSV log
};

struct TrainExample {
  LatentClip x0;  // [F,4,h,w]
  Embedding text;
  Embedding actor;
  bool is_image = false;
};

TrainExample prepare_example(const ToySample& sample, const LatentCoder& coder,
                             const BackendDescriptor& text_backend,
                             const BackendDescriptor& image_backend, Rng& rng,
                             bool as_image = false);

struct StepStats {
  std::vector<Index> k_drawn;
  Index dropped = 0;  // null-conditioned samples
};

// One optimizer step over the batch: per sample draw k (images force k=0),
// draw t uniformly, noise, assemble the 9-channel input, optionally drop the
// prompt, and average the noise-prediction squared error over all frames.
double training_step(DenoiserNet& net, const std::vector<TrainExample>& batch,
                     const ModeSelector& selector,
                     const DiffusionSchedule& sched, const TrainConfig& cfg,
                     AdamW& opt, Rng& rng, StepStats* stats = nullptr);

// Full loop: deterministic per-step RNG derived from (seed, step), periodic
// checkpoints with a monotone step counter, resumable from checkpoint_path.
Checkpoint train(const TrainConfig& cfg, const std::vector<ToySample>& dataset,
                 const LatentCoder& coder,
                 const BackendDescriptor& text_backend,
                 const BackendDescriptor& image_backend, bool resume = false);

}  // namespace vlogger
