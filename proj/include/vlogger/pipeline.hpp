#pragma once

#include <string>

#include "vlogger/evalkit.hpp"
#include "vlogger/training.hpp"
#include "vlogger/voicing.hpp"

namespace vlogger {

struct PipelineConfig {
  std::string story_text;   // inline story, or
  std::string story_path;   // path to a plain-text story file
  BackendDescriptor director{BackendKind::director};
  BackendDescriptor image_gen{BackendKind::image_gen};
  BackendDescriptor tts{BackendKind::tts};
  BackendDescriptor text_embedder{BackendKind::text_embedder};
  BackendDescriptor image_embedder{BackendKind::image_embedder};
  std::string checkpoint_path;
  std::string templates_dir;  // empty selects the compiled-in templates
  Index k = 1;
  double guidance_scale = 7.5;
  Index sampler_steps = 10;
  Index actor_h = 64;
  Index actor_w = 64;
  Index workers = 1;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  TrainConfig train;  // consumed by the train command only
};

PipelineConfig load_pipeline_config(const std::string& path);
std::string story_of(const PipelineConfig& cfg);

// Binary P6 frame files used for all persisted frames.
void write_ppm(const std::string& path, const Tensor& frame);
Tensor read_ppm(const std::string& path);

// Stage commands. Each consumes only artifacts persisted by earlier stages
// under cfg.out_dir: script.json -> actors.json/protagonists.json/actors/ ->
// scenes/scene_<id>/ -> audio/scene_<id>.wav -> vlog_manifest.json.
void stage_plan(const PipelineConfig& cfg);
void stage_actors(const PipelineConfig& cfg);
void stage_shoot(const PipelineConfig& cfg);
void stage_voice(const PipelineConfig& cfg);
VlogManifest stage_assemble(const PipelineConfig& cfg);
void stage_train(const PipelineConfig& cfg);
void stage_eval(const PipelineConfig& cfg);

VlogManifest run_pipeline(const PipelineConfig& cfg);

// Hex digest over the manifest and every persisted frame/audio byte.
std::string output_digest(const std::string& out_dir);

}  // namespace vlogger
