#include "vlogger/voicing.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace vlogger {

using nlohmann::json;

void validate(const AudioTrack& a) {
  if (a.sample_rate <= 0) throw DomainError("audio: sample_rate must be > 0");
  for (double s : a.samples)
    if (!std::isfinite(s)) throw NonFiniteError("audio: non-finite sample");
}

AudioTrack synth_speech(const BackendDescriptor& tts_backend,
                        const std::string& text) {
  if (text.find_first_not_of(" \t\n\r") == std::string::npos)
    throw DomainError("synth_speech: empty text");
  AudioTrack a;
  a.samples = tts_call(text, tts_backend, &a.sample_rate);
  validate(a);
  return a;
}

AudioTrack fit_audio(const AudioTrack& audio, double target_seconds) {
  if (target_seconds <= 0.0)
    throw DomainError("fit_audio: target must be positive");
  validate(audio);
  AudioTrack out = audio;
  auto target = std::size_t(std::llround(target_seconds * audio.sample_rate));
  out.samples.resize(target, 0.0);
  return out;
}

SceneVideo mux(const Snippet& snippet, const AudioTrack& audio) {
  if (snippet.frames.rank() != 4)
    throw ShapeError("mux: snippet frames must be rank-4");
  double video_s = double(snippet.frames.shape[0]) / kFps;
  if (std::abs(audio.seconds() - video_s) > 1.0 / audio.sample_rate + 1e-9)
    throw DomainError("mux: audio not fitted to snippet duration");
  SceneVideo v;
  v.frames = snippet.frames;
  v.audio = audio;
  v.fragment_id = snippet.scene_ref;
  return v;
}

VlogManifest assemble(const std::vector<SceneVideo>& scene_videos) {
  VlogManifest m;
  int prev_id = 0;
  for (const SceneVideo& v : scene_videos) {
    if (v.fragment_id <= prev_id)
      throw OrderError("assemble: fragment ids must be strictly ascending");
    prev_id = v.fragment_id;
    ManifestScene s;
    s.fragment_id = v.fragment_id;
    s.duration_s = v.duration_s();
    m.total_duration_s += s.duration_s;
    m.scenes.push_back(std::move(s));
  }
  return m;
}

void write_wav(const std::string& path, const AudioTrack& audio) {
  validate(audio);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("write_wav: cannot open " + path);
  std::uint32_t data_bytes = std::uint32_t(audio.samples.size() * 2);
  std::uint32_t rate = std::uint32_t(audio.sample_rate);
  std::uint32_t byte_rate = rate * 2;
  auto u32 = [&](std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), 4);
  };
  auto u16 = [&](std::uint16_t v) {
    out.write(reinterpret_cast<const char*>(&v), 2);
  };
  out.write("RIFF", 4);
  u32(36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  u32(16);
  u16(1);  // PCM
  u16(1);  // mono
  u32(rate);
  u32(byte_rate);
  u16(2);   // block align
  u16(16);  // bits per sample
  out.write("data", 4);
  u32(data_bytes);
  for (double s : audio.samples) {
    double c = std::min(1.0, std::max(-1.0, s));
    auto v = std::int16_t(std::lround(c * 32767.0));
    out.write(reinterpret_cast<const char*>(&v), 2);
  }
  if (!out) throw IoError("write_wav: write failed for " + path);
}

AudioTrack read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_wav: cannot open " + path);
  char riff[4], wave[4];
  std::uint32_t riff_size = 0;
  in.read(riff, 4);
  in.read(reinterpret_cast<char*>(&riff_size), 4);
  in.read(wave, 4);
  if (!in || std::memcmp(riff, "RIFF", 4) || std::memcmp(wave, "WAVE", 4))
    throw IoError("read_wav: not a RIFF/WAVE file: " + path);
  AudioTrack a;
  while (in) {
    char id[4];
    std::uint32_t size = 0;
    in.read(id, 4);
    in.read(reinterpret_cast<char*>(&size), 4);
    if (!in) break;
    if (!std::memcmp(id, "fmt ", 4)) {
      std::uint16_t fmt = 0, channels = 0, block = 0, bits = 0;
      std::uint32_t rate = 0, byte_rate = 0;
      in.read(reinterpret_cast<char*>(&fmt), 2);
      in.read(reinterpret_cast<char*>(&channels), 2);
      in.read(reinterpret_cast<char*>(&rate), 4);
      in.read(reinterpret_cast<char*>(&byte_rate), 4);
      in.read(reinterpret_cast<char*>(&block), 2);
      in.read(reinterpret_cast<char*>(&bits), 2);
      if (fmt != 1 || channels != 1 || bits != 16)
        throw IoError("read_wav: only 16-bit mono PCM supported");
      a.sample_rate = int(rate);
      in.ignore(std::streamsize(size) - 16);
    } else if (!std::memcmp(id, "data", 4)) {
      a.samples.resize(size / 2);
      for (auto& s : a.samples) {
        std::int16_t v = 0;
        in.read(reinterpret_cast<char*>(&v), 2);
        s = double(v) / 32767.0;
      }
      break;
    } else {
      in.ignore(std::streamsize(size));
    }
  }
  if (a.sample_rate <= 0) throw IoError("read_wav: missing fmt chunk");
  return a;
}

std::string serialize_manifest(const VlogManifest& m) {
  json scenes = json::array();
  for (const ManifestScene& s : m.scenes)
    scenes.push_back({{"fragment_id", s.fragment_id},
                      {"frames_dir", s.frames_dir},
                      {"audio_file", s.audio_file},
                      {"duration_s", s.duration_s}});
  json j = {{"scenes", scenes},
            {"fps", m.fps},
            {"total_duration_s", m.total_duration_s}};
  return j.dump(2);
}

VlogManifest deserialize_manifest(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("manifest: ") + e.what());
  }
  VlogManifest m;
  m.fps = j.at("fps").get<double>();
  m.total_duration_s = j.at("total_duration_s").get<double>();
  for (const auto& e : j.at("scenes")) {
    ManifestScene s;
    s.fragment_id = e.at("fragment_id").get<int>();
    s.frames_dir = e.value("frames_dir", std::string());
    s.audio_file = e.value("audio_file", std::string());
    s.duration_s = e.at("duration_s").get<double>();
    m.scenes.push_back(std::move(s));
  }
  return m;
}

}  // namespace vlogger
