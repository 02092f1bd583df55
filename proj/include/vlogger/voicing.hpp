#pragma once

#include "vlogger/backends.hpp"
#include "vlogger/shooting.hpp"

namespace vlogger {

struct AudioTrack {
  std::vector<double> samples;  // in [-1,1]
  int sample_rate = 16000;
  double seconds() const {
    return double(samples.size()) / double(sample_rate);
  }
};

void validate(const AudioTrack& a);

struct SceneVideo {
  Tensor frames;  // [F,3,H,W]
  AudioTrack audio;
  int fragment_id = 0;
  double duration_s() const { return double(frames.shape[0]) / kFps; }
};

struct ManifestScene {
  int fragment_id = 0;
  std::string frames_dir;
  std::string audio_file;
  double duration_s = 0.0;
};

struct VlogManifest {
  std::vector<ManifestScene> scenes;
  double fps = kFps;
  double total_duration_s = 0.0;
};

AudioTrack synth_speech(const BackendDescriptor& tts_backend,
                        const std::string& text);

// Pad trailing silence or truncate so duration hits target to within one
// sample.
AudioTrack fit_audio(const AudioTrack& audio, double target_seconds);

// Precondition: audio already fitted to the snippet duration.
SceneVideo mux(const Snippet& snippet, const AudioTrack& audio);

// Scenes must arrive in ascending fragment order (script order).
VlogManifest assemble(const std::vector<SceneVideo>& scene_videos);

// 16-bit mono waveform files.
void write_wav(const std::string& path, const AudioTrack& audio);
AudioTrack read_wav(const std::string& path);

std::string serialize_manifest(const VlogManifest& m);
VlogManifest deserialize_manifest(const std::string& text);

}  // namespace vlogger
