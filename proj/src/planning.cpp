#include "vlogger/planning.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace vlogger {

using nlohmann::json;

void validate(const Story& s) {
  if (s.text.find_first_not_of(" \t\n\r") == std::string::npos)
    throw DomainError("story text is empty");
}

const char* stage_name(ScriptStage s) {
  switch (s) {
    case ScriptStage::Rough: return "Rough";
    case ScriptStage::Detailed: return "Detailed";
    case ScriptStage::Completed: return "Completed";
    case ScriptStage::Scheduled: return "Scheduled";
  }
  return "?";
}

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read template file " + path);
  std::ostringstream os;
  os << in.rdbuf();
  std::string s = os.str();
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
  return s;
}

std::string fill(std::string tpl,
                 std::initializer_list<std::pair<const char*, std::string>>
                     placeholders) {
  for (const auto& [key, value] : placeholders) {
    auto pos = tpl.find(key);
    while (pos != std::string::npos) {
      tpl.replace(pos, std::string(key).size(), value);
      pos = tpl.find(key, pos + value.size());
    }
  }
  return tpl;
}

std::string fragments_json(const Script& script) {
  json arr = json::array();
  for (const Scene& sc : script.scenes) {
    json o = {{"video fragment id", sc.fragment_id},
              {"video fragment description", sc.description}};
    if (sc.duration_seconds) o["time"] = *sc.duration_seconds;
    arr.push_back(o);
  }
  return arr.dump();
}

json parse_array_with_fallback(const std::string& reply) {
  try {
    json j = json::parse(reply);
    if (j.is_array()) return j;
  } catch (const json::exception&) {
  }
  // Extraction retry: first balanced top-level [...] substring.
  auto open = reply.find('[');
  while (open != std::string::npos) {
    int depth = 0;
    bool in_str = false;
    for (std::size_t i = open; i < reply.size(); ++i) {
      char c = reply[i];
      if (in_str) {
        if (c == '\\') ++i;
        else if (c == '"') in_str = false;
        continue;
      }
      if (c == '"') in_str = true;
      else if (c == '[') ++depth;
      else if (c == ']' && --depth == 0) {
        try {
          json j = json::parse(reply.substr(open, i - open + 1));
          if (j.is_array()) return j;
        } catch (const json::exception&) {
        }
        break;
      }
    }
    open = reply.find('[', open + 1);
  }
  throw ParseError("reply is not a fragment JSON array");
}

}  // namespace

std::vector<Fragment> parse_fragments(const std::string& reply) {
  json arr = parse_array_with_fallback(reply);
  std::vector<Fragment> out;
  for (const auto& e : arr) {
    if (!e.is_object())
      throw ParseError("fragment entry is not a JSON object");
    Fragment f;
    if (!e.contains("video fragment id"))
      throw ParseError("fragment entry lacks a fragment id");
    const auto& id = e.at("video fragment id");
    f.fragment_id = id.is_string() ? std::stoi(id.get<std::string>())
                                   : id.get<int>();
    f.description = e.value("video fragment description", std::string());
    if (e.contains("time")) f.time = e.at("time").get<double>();
    out.push_back(std::move(f));
  }
  bool consecutive = true;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (out[i].fragment_id != int(i) + 1) consecutive = false;
  if (!consecutive)
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i].fragment_id = int(i) + 1;
  return out;
}

TemplateSet default_templates() {
  TemplateSet t;
  t.rough = R"(The following is a story enclosed in three single quotes '''{story}''' I would like to request your assistance in writing a script for a vlog based on this story. Provide the script in JSON format (do not answer anything else) with the following keys: video fragment id, video fragment description.)";
  t.detailed = R"(I want to make a vlog, the following is the original story enclosed in three single quotes '''{story}''' and this is my vlog production script in the following three single quotes '''{script}''', please help me analyze and rewrite a video script, split each description into several short descriptions and as more as possible. Provide me the answer in JSON format (do not answer anything else) with the following keys: video fragment id, video fragment description.)";
  t.completed = R"(The following is a story enclosed in three single quotes '''{story}''', this is my video production script in the following three single quotes '''{script}'''. However, there may be some plots in the story missing, please check and complete it for me. Provide me the answer in JSON format (do not answer anything else) with the following keys: video fragment id, video fragment description.)";
  t.scheduled = R"(The following is a story enclosed in three single quotes '''{story}''', this is my video production script in the following three single quotes '''{script}'''. Now that you know that 16-frame videos have a length of 2 seconds, please help me plan how much time it will take for each video clip. Provide me the answer in JSON format (do not answer anything else) with the following keys: video fragment id, time.)";
  t.actors = R"(The following is my video production script enclosed in three single quotes '''{script}'''. Please summarize the list of actors that appear across the whole script. Provide me the answer in JSON format (do not answer anything else) as an array with the following keys: actor id, description.)";
  t.protagonists = R"(The following is my video production script enclosed in three single quotes '''{script}''' and this is the list of actors in the following three single quotes '''{actors}'''. For every video fragment, decide which actor is the protagonist of the scene, or null when no listed actor appears. Provide me the answer in JSON format (do not answer anything else) as an object mapping each video fragment id to the chosen identifier or null.)";
  return t;
}

TemplateSet load_templates(const std::string& dir) {
  TemplateSet t;
  t.rough = read_file(dir + "/rough.txt");
  t.detailed = read_file(dir + "/detailed.txt");
  t.completed = read_file(dir + "/completed.txt");
  t.scheduled = read_file(dir + "/scheduled.txt");
  t.actors = read_file(dir + "/actors.txt");
  t.protagonists = read_file(dir + "/protagonists.txt");
  return t;
}

Script refine_script(const BackendDescriptor& backend, const Story& story,
                     const Script* prev, ScriptStage stage,
                     const TemplateSet& templates,
                     const PlannerLimits& limits) {
  validate(story);
  if (stage == ScriptStage::Rough) {
    if (prev) throw StageOrderError("Rough: no prior script expected");
  } else {
    if (!prev || int(prev->stage) != int(stage) - 1)
      throw StageOrderError(std::string(stage_name(stage)) +
                            ": previous script must be at stage " +
                            stage_name(ScriptStage(int(stage) - 1)));
  }

  std::string tpl;
  switch (stage) {
    case ScriptStage::Rough: tpl = templates.rough; break;
    case ScriptStage::Detailed: tpl = templates.detailed; break;
    case ScriptStage::Completed: tpl = templates.completed; break;
    case ScriptStage::Scheduled: tpl = templates.scheduled; break;
  }
  DirectorRequest req;
  req.user_message =
      fill(tpl, {{"{story}", story.text},
                 {"{script}", prev ? fragments_json(*prev) : std::string()}});

  std::vector<Fragment> fragments;
  try {
    fragments = parse_fragments(director_call(req, backend));
  } catch (const ParseError& e) {
    throw ParseError(std::string(stage_name(stage)) + ": " + e.what());
  } catch (const TransportError& e) {
    throw TransportError(std::string(stage_name(stage)) + ": " + e.what());
  } catch (const EmptyReply& e) {
    throw EmptyReply(std::string(stage_name(stage)) + ": " + e.what());
  }
  if (fragments.empty())
    throw ParseError(std::string(stage_name(stage)) + ": empty script");

  Script out;
  out.stage = stage;
  if (stage == ScriptStage::Scheduled) {
    // Descriptions carry over from the completed script; the reply only
    // allocates time per fragment id.
    std::map<int, double> times;
    for (const Fragment& f : fragments)
      if (f.time) times[f.fragment_id] = *f.time;
    for (const Scene& sc : prev->scenes) {
      Scene s = sc;
      auto it = times.find(s.fragment_id);
      double t = it != times.end() ? it->second : limits.min_scene_s;
      if (it == times.end())
        out.warnings.push_back("fragment " + std::to_string(s.fragment_id) +
                               ": no time allocated, using minimum");
      if (t < limits.min_scene_s || t > limits.max_scene_s) {
        out.warnings.push_back("fragment " + std::to_string(s.fragment_id) +
                               ": time " + std::to_string(t) + " clamped");
        t = std::min(std::max(t, limits.min_scene_s), limits.max_scene_s);
      }
      s.duration_seconds = t;
      out.scenes.push_back(std::move(s));
    }
  } else {
    for (const Fragment& f : fragments)
      out.scenes.push_back(Scene{f.fragment_id, f.description, std::nullopt});
  }
  return out;
}

Script plan_script(const BackendDescriptor& backend, const Story& story,
                   const TemplateSet& templates, const PlannerLimits& limits) {
  Script rough = refine_script(backend, story, nullptr, ScriptStage::Rough,
                               templates, limits);
  Script detailed = refine_script(backend, story, &rough,
                                  ScriptStage::Detailed, templates, limits);
  Script completed = refine_script(backend, story, &detailed,
                                   ScriptStage::Completed, templates, limits);
  return refine_script(backend, story, &completed, ScriptStage::Scheduled,
                       templates, limits);
}

std::vector<ActorSpec> summarize_actors(const BackendDescriptor& backend,
                                        const Script& script,
                                        const TemplateSet& templates) {
  if (int(script.stage) < int(ScriptStage::Completed))
    throw StageOrderError("summarize_actors: script must be Completed first");
  DirectorRequest req;
  req.user_message =
      fill(templates.actors, {{"{script}", fragments_json(script)}});
  std::string reply = director_call(req, backend);
  json arr = parse_array_with_fallback(reply);
  std::vector<ActorSpec> out;
  for (const auto& e : arr) {
    if (!e.is_object() || !e.contains("actor id"))
      throw ParseError("actor entry lacks an actor id");
    ActorSpec a;
    a.actor_id = e.at("actor id").get<std::string>();
    a.description = e.value("description", std::string());
    if (a.actor_id.empty()) continue;
    if (a.description.empty()) a.description = a.actor_id;
    bool dup = false;
    for (const ActorSpec& seen : out)
      if (seen.actor_id == a.actor_id) dup = true;
    if (!dup) out.push_back(std::move(a));
  }
  return out;
}

ActorImageSet design_actor_images(const BackendDescriptor& image_backend,
                                  const std::vector<ActorSpec>& actors,
                                  Index h, Index w) {
  ActorImageSet set;
  for (const ActorSpec& a : actors) {
    if (a.description.empty())
      throw DomainError("actor " + a.actor_id + " has an empty description");
    set[a.actor_id] = generate_actor_image(a.description, image_backend, h, w);
  }
  return set;
}

ProtagonistDoc assign_protagonists(const BackendDescriptor& backend,
                                   const Script& script,
                                   const std::vector<ActorSpec>& actors,
                                   const TemplateSet& templates) {
  if (script.stage != ScriptStage::Scheduled)
    throw StageOrderError("assign_protagonists: script must be Scheduled");
  ProtagonistDoc doc;
  if (actors.empty()) {
    for (const Scene& sc : script.scenes)
      doc.assignments[sc.fragment_id] = std::nullopt;
    return doc;
  }
  DirectorRequest req;
  req.user_message =
      fill(templates.protagonists,
           {{"{script}", fragments_json(script)},
            {"{actors}", serialize_actors(actors)}});
  std::string reply = director_call(req, backend);
  json obj;
  try {
    obj = json::parse(reply);
  } catch (const json::exception& e) {
    throw ParseError(std::string("protagonist reply: ") + e.what());
  }
  if (!obj.is_object()) throw ParseError("protagonist reply is not an object");
  for (const Scene& sc : script.scenes) {
    std::string key = std::to_string(sc.fragment_id);
    std::optional<std::string> who;
    if (obj.contains(key) && !obj.at(key).is_null()) {
      std::string id = obj.at(key).get<std::string>();
      bool known = false;
      for (const ActorSpec& a : actors)
        if (a.actor_id == id) known = true;
      if (known)
        who = id;
      else
        doc.warnings.push_back("fragment " + key + ": unknown actor '" + id +
                               "' coerced to none");
    }
    doc.assignments[sc.fragment_id] = who;
  }
  return doc;
}

Index seconds_to_frames(double duration, double fps) {
  if (duration < 0.0) throw DomainError("seconds_to_frames: negative duration");
  if (fps <= 0.0) throw DomainError("seconds_to_frames: fps must be positive");
  return Index(std::ceil(duration * fps - 1e-9));
}

std::string serialize_script(const Script& script) {
  return fragments_json(script);
}

Script deserialize_script(const std::string& text) {
  Script s;
  bool all_timed = true;
  for (const Fragment& f : parse_fragments(text)) {
    s.scenes.push_back(Scene{f.fragment_id, f.description, f.time});
    if (!f.time) all_timed = false;
  }
  if (s.scenes.empty()) throw ParseError("script file has no scenes");
  s.stage = all_timed ? ScriptStage::Scheduled : ScriptStage::Completed;
  return s;
}

std::string serialize_actors(const std::vector<ActorSpec>& actors) {
  json arr = json::array();
  for (const ActorSpec& a : actors)
    arr.push_back({{"actor id", a.actor_id}, {"description", a.description}});
  return arr.dump();
}

std::vector<ActorSpec> deserialize_actors(const std::string& text) {
  json arr;
  try {
    arr = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("actor file: ") + e.what());
  }
  std::vector<ActorSpec> out;
  for (const auto& e : arr)
    out.push_back(ActorSpec{e.at("actor id").get<std::string>(),
                            e.value("description", std::string())});
  return out;
}

std::string serialize_protagonists(const ProtagonistDoc& doc) {
  json obj = json::object();
  for (const auto& [id, who] : doc.assignments)
    obj[std::to_string(id)] = who ? json(*who) : json(nullptr);
  return obj.dump();
}

ProtagonistDoc deserialize_protagonists(const std::string& text) {
  json obj;
  try {
    obj = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("protagonist file: ") + e.what());
  }
  ProtagonistDoc doc;
  for (const auto& [key, value] : obj.items())
    doc.assignments[std::stoi(key)] =
        value.is_null() ? std::nullopt
                        : std::optional<std::string>(value.get<std::string>());
  return doc;
}

}  // namespace vlogger
