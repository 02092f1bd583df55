#include "vlogger/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace vlogger {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void spit(const std::string& path, const std::string& content) {
  fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << content;
  if (!out) throw IoError("write failed for " + path);
}

BackendDescriptor parse_backend(const json& j, BackendKind kind,
                                std::uint64_t default_seed) {
  BackendDescriptor b;
  b.kind = kind;
  b.seed = default_seed;
  if (j.is_object()) {
    std::string mode = j.value("mode", "mock");
    if (mode == "mock")
      b.mode = BackendMode::mock;
    else if (mode == "remote")
      b.mode = BackendMode::remote;
    else
      throw ConfigError("backend mode must be mock or remote, got " + mode);
    b.endpoint = j.value("endpoint", std::string());
    if (j.contains("seed")) b.seed = j.at("seed").get<std::uint64_t>();
  }
  validate(b);
  return b;
}

TemplateSet templates_of(const PipelineConfig& cfg) {
  return cfg.templates_dir.empty() ? default_templates()
                                   : load_templates(cfg.templates_dir);
}

std::string scene_dir(const PipelineConfig& cfg, int fragment_id) {
  std::ostringstream os;
  os << cfg.out_dir << "/scenes/scene_" << std::setfill('0') << std::setw(3)
     << fragment_id;
  return os.str();
}

std::string audio_path(const PipelineConfig& cfg, int fragment_id) {
  std::ostringstream os;
  os << cfg.out_dir << "/audio/scene_" << std::setfill('0') << std::setw(3)
     << fragment_id << ".wav";
  return os.str();
}

std::vector<std::string> sorted_frames(const std::string& dir) {
  std::vector<std::string> files;
  if (!fs::is_directory(dir)) throw IoError("missing frames dir " + dir);
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".ppm") files.push_back(e.path().string());
  std::sort(files.begin(), files.end());
  return files;
}

Script read_script(const PipelineConfig& cfg) {
  return deserialize_script(slurp(cfg.out_dir + "/script.json"));
}

}  // namespace

PipelineConfig load_pipeline_config(const std::string& path) {
  json j;
  try {
    j = json::parse(slurp(path));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse: ") + e.what());
  }
  PipelineConfig cfg;
  cfg.story_text = j.value("story", std::string());
  cfg.story_path = j.value("story_path", std::string());
  cfg.checkpoint_path = j.value("checkpoint", std::string());
  cfg.templates_dir = j.value("templates_dir", std::string());
  cfg.k = j.value("k", Index(1));
  cfg.guidance_scale = j.value("guidance_scale", 7.5);
  cfg.sampler_steps = j.value("sampler_steps", Index(10));
  cfg.actor_h = j.value("actor_h", Index(64));
  cfg.actor_w = j.value("actor_w", Index(64));
  cfg.workers = j.value("workers", Index(1));
  cfg.out_dir = j.value("out_dir", std::string("out"));
  cfg.seed = j.value("seed", std::uint64_t(0));

  json backends = j.value("backends", json::object());
  auto pick = [&](const char* name, BackendKind kind) {
    return parse_backend(backends.value(name, json()), kind,
                         sub_seed(cfg.seed, name));
  };
  cfg.director = pick("director", BackendKind::director);
  cfg.image_gen = pick("image_gen", BackendKind::image_gen);
  cfg.tts = pick("tts", BackendKind::tts);
  cfg.text_embedder = pick("text_embedder", BackendKind::text_embedder);
  cfg.image_embedder = pick("image_embedder", BackendKind::image_embedder);

  if (j.contains("train")) {
    const json& t = j.at("train");
    cfg.train.learning_rate = t.value("learning_rate", 1e-4);
    cfg.train.weight_decay = t.value("weight_decay", 0.0);
    cfg.train.batch_size = t.value("batch_size", Index(1));
    cfg.train.steps = t.value("steps", Index(0));
    cfg.train.prompt_drop_prob = t.value("prompt_drop_prob", 0.1);
    cfg.train.image_ratio = t.value("image_ratio", 0.0);
    cfg.train.seed = t.value("seed", cfg.seed);
    cfg.train.schedule_steps = t.value("schedule_steps", Index(1000));
    cfg.train.schedule_kind = t.value("schedule_kind", std::string(
                                  "scaled_linear")) == "linear"
                                  ? ScheduleKind::linear
                                  : ScheduleKind::scaled_linear;
    cfg.train.selector.alpha = t.value("alpha", 0.6);
    cfg.train.selector.max_preserved = t.value("max_preserved", Index(6));
    cfg.train.net.width = t.value("width", Index(64));
    cfg.train.net.heads = t.value("heads", Index(2));
    cfg.train.net.levels = t.value("levels", Index(2));
    cfg.train.geometry.clip_len = t.value("clip_len", Index(16));
    cfg.train.geometry.pixel_h = t.value("pixel_h", Index(8));
    cfg.train.geometry.pixel_w = t.value("pixel_w", Index(8));
    cfg.train.geometry.ae_factor = t.value("ae_factor", Index(1));
    cfg.train.checkpoint_every = t.value("checkpoint_every", Index(500));
    cfg.train.checkpoint_path = cfg.checkpoint_path;
    cfg.train.metrics_csv = t.value("metrics_csv", std::string());
    if (t.contains("freeze_prefixes"))
      cfg.train.freeze_prefixes =
          t.at("freeze_prefixes").get<std::vector<std::string>>();
  }
  return cfg;
}

std::string story_of(const PipelineConfig& cfg) {
  if (!cfg.story_text.empty()) return cfg.story_text;
  if (cfg.story_path.empty())
    throw ConfigError("config needs either story or story_path");
  return slurp(cfg.story_path);
}

void write_ppm(const std::string& path, const Tensor& frame) {
  if (frame.rank() != 3 || frame.shape[0] != 3)
    throw ShapeError("write_ppm: frame must be [3,H,W]");
  Index h = frame.shape[1], w = frame.shape[2];
  std::ostringstream os;
  os << "P6\n" << w << " " << h << "\n255\n";
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x)
      for (Index c = 0; c < 3; ++c) {
        double v = std::min(1.0, std::max(0.0, frame.data[(c * h + y) * w + x]));
        os.put(char(std::lround(v * 255.0)));
      }
  spit(path, os.str());
}

Tensor read_ppm(const std::string& path) {
  std::string raw = slurp(path);
  std::istringstream in(raw);
  std::string magic;
  Index w = 0, h = 0;
  int maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P6" || w <= 0 || h <= 0 || maxval != 255)
    throw IoError("read_ppm: unsupported file " + path);
  in.get();  // single whitespace after header
  Tensor frame({3, h, w});
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x)
      for (Index c = 0; c < 3; ++c) {
        int ch = in.get();
        if (ch < 0) throw IoError("read_ppm: truncated file " + path);
        frame.data[(c * h + y) * w + x] = double(ch) / 255.0;
      }
  return frame;
}

void stage_plan(const PipelineConfig& cfg) {
  Story story{story_of(cfg)};
  Script script = plan_script(cfg.director, story, templates_of(cfg));
  spit(cfg.out_dir + "/script.json", serialize_script(script));
}

void stage_actors(const PipelineConfig& cfg) {
  Script script = read_script(cfg);
  TemplateSet tpl = templates_of(cfg);
  std::vector<ActorSpec> actors = summarize_actors(cfg.director, script, tpl);
  ActorImageSet images =
      design_actor_images(cfg.image_gen, actors, cfg.actor_h, cfg.actor_w);
  ProtagonistDoc doc = assign_protagonists(cfg.director, script, actors, tpl);
  spit(cfg.out_dir + "/actors.json", serialize_actors(actors));
  spit(cfg.out_dir + "/protagonists.json", serialize_protagonists(doc));
  for (const auto& [id, frame] : images)
    write_ppm(cfg.out_dir + "/actors/" + id + ".ppm", frame);
}

void stage_shoot(const PipelineConfig& cfg) {
  if (cfg.checkpoint_path.empty() || !fs::exists(cfg.checkpoint_path))
    throw ConfigError("shoot: checkpoint not found: " + cfg.checkpoint_path);
  Script script = read_script(cfg);
  ProtagonistDoc doc =
      deserialize_protagonists(slurp(cfg.out_dir + "/protagonists.json"));

  Checkpoint ckpt = Checkpoint::load(cfg.checkpoint_path);
  DenoiserNet net(ckpt.net, 0);
  restore_params(ckpt, net);
  LatentCoder coder = restore_coder(ckpt);
  DiffusionSchedule sched =
      make_schedule(ckpt.schedule_steps, ckpt.schedule_kind);

  ShootConfig shoot_cfg;
  shoot_cfg.k = cfg.k;
  shoot_cfg.sampler_steps = cfg.sampler_steps;
  shoot_cfg.guidance_scale = cfg.guidance_scale;

  auto shoot_one = [&](const Scene& scene) {
    Embedding text = embed_text(scene.description, cfg.text_embedder);
    Embedding actor;
    bool has_actor = false;
    auto it = doc.assignments.find(scene.fragment_id);
    if (it != doc.assignments.end() && it->second) {
      std::string path = cfg.out_dir + "/actors/" + *it->second + ".ppm";
      if (fs::exists(path)) {
        actor = embed_image(read_ppm(path), cfg.image_embedder);
        has_actor = true;
      }
    }
    Rng rng = make_rng(
        sub_seed(cfg.seed, "shoot-scene-" + std::to_string(scene.fragment_id)));
    Snippet snip = shoot_scene(net, sched, coder, ckpt.geometry, scene, text,
                               has_actor ? &actor : nullptr, shoot_cfg, rng);
    Index f = snip.frames.shape[0];
    Index per = snip.frames.size() / f;
    std::string dir = scene_dir(cfg, scene.fragment_id);
    fs::create_directories(dir);
    for (Index i = 0; i < f; ++i) {
      Tensor frame({snip.frames.shape[1], snip.frames.shape[2],
                    snip.frames.shape[3]});
      frame.data = snip.frames.data.segment(i * per, per);
      std::ostringstream name;
      name << dir << "/frame_" << std::setfill('0') << std::setw(5) << i
           << ".ppm";
      write_ppm(name.str(), frame);
    }
  };

  Index workers = std::max<Index>(1, cfg.workers);
  if (workers == 1 || script.scenes.size() < 2) {
    for (const Scene& scene : script.scenes) shoot_one(scene);
  } else {
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    for (Index t = 0; t < std::min<Index>(workers, Index(script.scenes.size()));
         ++t)
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < script.scenes.size();
             i = next.fetch_add(1))
          shoot_one(script.scenes[i]);
      });
    for (auto& th : pool) th.join();
  }
}

void stage_voice(const PipelineConfig& cfg) {
  Script script = read_script(cfg);
  for (const Scene& scene : script.scenes) {
    Index frames = Index(sorted_frames(scene_dir(cfg, scene.fragment_id)).size());
    if (frames == 0)
      throw IoError("voice: no frames for scene " +
                    std::to_string(scene.fragment_id));
    AudioTrack audio = synth_speech(cfg.tts, scene.description);
    audio = fit_audio(audio, double(frames) / kFps);
    fs::create_directories(cfg.out_dir + "/audio");
    write_wav(audio_path(cfg, scene.fragment_id), audio);
  }
}

VlogManifest stage_assemble(const PipelineConfig& cfg) {
  Script script = read_script(cfg);
  std::vector<SceneVideo> videos;
  for (const Scene& scene : script.scenes) {
    std::vector<std::string> files = sorted_frames(scene_dir(cfg, scene.fragment_id));
    if (files.empty())
      throw IoError("assemble: no frames for scene " +
                    std::to_string(scene.fragment_id));
    Tensor first = read_ppm(files.front());
    Tensor frames({Index(files.size()), 3, first.shape[1], first.shape[2]});
    Index per = first.size();
    for (std::size_t i = 0; i < files.size(); ++i) {
      Tensor fr = read_ppm(files[i]);
      check_same_shape(fr, first, "assemble frames");
      frames.data.segment(Index(i) * per, per) = fr.data;
    }
    Snippet snip{std::move(frames), scene.fragment_id};
    AudioTrack audio = read_wav(audio_path(cfg, scene.fragment_id));
    videos.push_back(mux(snip, audio));
  }
  VlogManifest manifest = assemble(videos);
  for (ManifestScene& s : manifest.scenes) {
    s.frames_dir = scene_dir(cfg, s.fragment_id);
    s.audio_file = audio_path(cfg, s.fragment_id);
  }
  spit(cfg.out_dir + "/vlog_manifest.json", serialize_manifest(manifest));
  spit(cfg.out_dir + "/digest.txt", output_digest(cfg.out_dir));
  return manifest;
}

void stage_train(const PipelineConfig& cfg) {
  if (cfg.train.steps < 0) throw ConfigError("train: negative step count");
  ToyDatasetSpec spec;
  spec.frames = cfg.train.geometry.clip_len;
  spec.h = cfg.train.geometry.pixel_h;
  spec.w = cfg.train.geometry.pixel_w;
  std::vector<ToySample> dataset = make_toy_dataset(spec, cfg.train.seed);
  LatentCoder coder = cfg.train.geometry.ae_factor <= 1
                          ? LatentCoder::identity()
                          : LatentCoder::linear_patch(cfg.train.geometry.ae_factor);
  if (coder.kind() == LatentCoder::Kind::linear_patch) {
    std::vector<Tensor> blocks;
    for (const ToySample& s : dataset) blocks.push_back(s.frames);
    coder.fit(blocks);
  }
  train(cfg.train, dataset, coder, cfg.text_embedder, cfg.image_embedder,
        /*resume=*/true);
}

void stage_eval(const PipelineConfig& cfg) {
  Script script = read_script(cfg);
  json reports = json::array();
  double acc_text = 0.0;
  Index counted = 0;
  std::vector<Tensor> all_frame_embs;
  for (const Scene& scene : script.scenes) {
    std::vector<std::string> files = sorted_frames(scene_dir(cfg, scene.fragment_id));
    if (files.empty()) continue;
    Embedding tokens = embed_text(scene.description, cfg.text_embedder);
    Tensor text({1, kEmbedDim});
    text.mat() = tokens.mat(tokens.shape[0], kEmbedDim).colwise().mean();
    Tensor frame_embs({Index(files.size()), kEmbedDim});
    for (std::size_t i = 0; i < files.size(); ++i) {
      Embedding e = embed_image(read_ppm(files[i]), cfg.image_embedder);
      frame_embs.mat().row(Index(i)) = e.mat(1, kEmbedDim).row(0);
    }
    acc_text += cosine_text_video(text, frame_embs);
    ++counted;
    all_frame_embs.push_back(frame_embs);
  }
  if (counted == 0) throw IoError("eval: no shot scenes under " + cfg.out_dir);
  reports.push_back(json::parse(metric_report(
      "cosine_text_video", acc_text / double(counted), counted,
      "mock_hash_64", cfg.seed)));

  if (all_frame_embs.size() >= 2) {
    Index rows_a = all_frame_embs.front().shape[0];
    Index rows_b = 0;
    for (std::size_t i = 1; i < all_frame_embs.size(); ++i)
      rows_b += all_frame_embs[i].shape[0];
    if (rows_a >= 2 && rows_b >= 2) {
      Tensor rest({rows_b, kEmbedDim});
      Index at = 0;
      for (std::size_t i = 1; i < all_frame_embs.size(); ++i) {
        rest.data.segment(at, all_frame_embs[i].size()) =
            all_frame_embs[i].data;
        at += all_frame_embs[i].size();
      }
      double fd = frechet_distance(fit_features(all_frame_embs.front()),
                                   fit_features(rest));
      reports.push_back(json::parse(metric_report(
          "frechet_scene_split", fd, rows_a + rows_b, "mock_hash_64",
          cfg.seed)));
    }
  }
  spit(cfg.out_dir + "/metrics.json", reports.dump(2));
}

VlogManifest run_pipeline(const PipelineConfig& cfg) {
  stage_plan(cfg);
  stage_actors(cfg);
  stage_shoot(cfg);
  stage_voice(cfg);
  return stage_assemble(cfg);
}

std::string output_digest(const std::string& out_dir) {
  std::vector<std::string> files;
  std::string manifest = out_dir + "/vlog_manifest.json";
  if (fs::exists(manifest)) files.push_back(manifest);
  for (const char* sub : {"/scenes", "/audio"}) {
    std::string dir = out_dir + sub;
    if (!fs::is_directory(dir)) continue;
    for (const auto& e : fs::recursive_directory_iterator(dir))
      if (e.is_regular_file()) files.push_back(e.path().string());
  }
  std::sort(files.begin(), files.end());
  std::uint64_t h = 0;
  for (const std::string& f : files) {
    h = hash_str(f, h);
    std::string bytes = slurp(f);
    h = hash_bytes(bytes.data(), bytes.size(), h);
  }
  std::ostringstream os;
  os << std::hex << std::setfill('0') << std::setw(16) << h;
  return os.str();
}

}  // namespace vlogger
