#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vlogger/backends.hpp"

namespace vlogger {

struct Story {
  std::string text;
};

void validate(const Story& s);

enum class ScriptStage { Rough = 0, Detailed = 1, Completed = 2, Scheduled = 3 };

const char* stage_name(ScriptStage s);

struct Scene {
  int fragment_id = 0;
  std::string description;
  std::optional<double> duration_seconds;
};

struct Script {
  ScriptStage stage = ScriptStage::Rough;
  std::vector<Scene> scenes;
  std::vector<std::string> warnings;
};

struct ActorSpec {
  std::string actor_id;
  std::string description;
};

// actor_id -> reference frame [3,H,W] in [0,1].
using ActorImageSet = std::map<std::string, Tensor>;

struct ProtagonistDoc {
  std::map<int, std::optional<std::string>> assignments;
  std::vector<std::string> warnings;
};

struct Fragment {
  int fragment_id = 0;
  std::string description;
  std::optional<double> time;
};

// Instruction texts with {story}/{script}/{actors} placeholders. Defaults are
// compiled in; load_templates overrides them from plain-text files.
struct TemplateSet {
  std::string rough;
  std::string detailed;
  std::string completed;
  std::string scheduled;
  std::string actors;
  std::string protagonists;
};

TemplateSet default_templates();
TemplateSet load_templates(const std::string& dir);

struct PlannerLimits {
  double min_scene_s = 2.0;
  double max_scene_s = 60.0;
};

// Strict JSON-array parse first, then a balanced-bracket extraction retry.
// Ids are re-sequenced to 1..N when non-consecutive.
std::vector<Fragment> parse_fragments(const std::string& reply);

Script refine_script(const BackendDescriptor& backend, const Story& story,
                     const Script* prev, ScriptStage stage,
                     const TemplateSet& templates = default_templates(),
                     const PlannerLimits& limits = PlannerLimits{});

// Rough -> Detailed -> Completed -> Scheduled in one sweep.
Script plan_script(const BackendDescriptor& backend, const Story& story,
                   const TemplateSet& templates = default_templates(),
                   const PlannerLimits& limits = PlannerLimits{});

std::vector<ActorSpec> summarize_actors(
    const BackendDescriptor& backend, const Script& script,
    const TemplateSet& templates = default_templates());

ActorImageSet design_actor_images(const BackendDescriptor& image_backend,
                                  const std::vector<ActorSpec>& actors,
                                  Index h, Index w);

ProtagonistDoc assign_protagonists(
    const BackendDescriptor& backend, const Script& script,
    const std::vector<ActorSpec>& actors,
    const TemplateSet& templates = default_templates());

constexpr double kFps = 8.0;  // 16 frames per 2 seconds

Index seconds_to_frames(double duration, double fps);

// Script file round trip: JSON array of {"video fragment id",
// "video fragment description", "time"?}.
std::string serialize_script(const Script& script);
Script deserialize_script(const std::string& text);

std::string serialize_actors(const std::vector<ActorSpec>& actors);
std::vector<ActorSpec> deserialize_actors(const std::string& text);

std::string serialize_protagonists(const ProtagonistDoc& doc);
ProtagonistDoc deserialize_protagonists(const std::string& text);

}  // namespace vlogger
