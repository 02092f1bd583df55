#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "vlogger/voicing.hpp"

using namespace vlogger;

namespace {

BackendDescriptor mock_tts(std::uint64_t seed = 1) {
  BackendDescriptor b;
  b.kind = BackendKind::tts;
  b.seed = seed;
  return b;
}

Snippet snippet_of(Index frames, int fragment_id) {
  Snippet s;
  s.frames = Tensor::full({frames, 3, 2, 2}, 0.5);
  s.scene_ref = fragment_id;
  return s;
}

}  // namespace

TEST_CASE("synth_speech: 0.06 s per character at 16 kHz") {
  AudioTrack a = synth_speech(mock_tts(), "ten chars!");
  CHECK(a.sample_rate == 16000);
  CHECK(a.samples.size() == 9600);
  CHECK(a.seconds() == doctest::Approx(0.6));
  for (double s : a.samples) {
    CHECK(s >= -1.0);
    CHECK(s <= 1.0);
  }

  AudioTrack b = synth_speech(mock_tts(), "ten chars!");
  CHECK(a.samples == b.samples);

  CHECK_THROWS_AS(synth_speech(mock_tts(), "  \n "), DomainError);
}

TEST_CASE("fit_audio pads or truncates to the target") {
  AudioTrack one_s;
  one_s.sample_rate = 16000;
  one_s.samples.assign(16000, 0.25);

  AudioTrack padded = fit_audio(one_s, 2.0);
  CHECK(padded.samples.size() == 32000);
  CHECK(padded.samples[15999] == 0.25);
  CHECK(padded.samples[16000] == 0.0);  // trailing silence

  AudioTrack three_s = one_s;
  three_s.samples.assign(48000, 0.25);
  CHECK(fit_audio(three_s, 2.0).samples.size() == 32000);

  AudioTrack exact = fit_audio(one_s, 1.0);
  CHECK(exact.samples == one_s.samples);

  CHECK_THROWS_AS(fit_audio(one_s, 0.0), DomainError);
}

TEST_CASE("mux requires fitted audio and keeps the fragment id") {
  Snippet snip = snippet_of(16, 3);  // 2 s at fps 8
  AudioTrack audio;
  audio.sample_rate = 16000;
  audio.samples.assign(32000, 0.1);

  SceneVideo v = mux(snip, audio);
  CHECK(v.fragment_id == 3);
  CHECK(v.duration_s() == doctest::Approx(2.0));
  CHECK(std::abs(v.audio.seconds() - v.duration_s()) <=
        1.0 / audio.sample_rate + 1e-12);

  AudioTrack wrong = audio;
  wrong.samples.resize(24000);
  CHECK_THROWS_AS(mux(snip, wrong), DomainError);
}

TEST_CASE("assemble sums durations in script order") {
  std::vector<SceneVideo> videos;
  for (int id = 1; id <= 5; ++id) {
    AudioTrack a;
    a.sample_rate = 16000;
    a.samples.assign(32000, 0.0);
    videos.push_back(mux(snippet_of(16, id), a));
  }
  VlogManifest m = assemble(videos);
  CHECK(m.scenes.size() == 5);
  CHECK(m.total_duration_s == doctest::Approx(10.0));

  VlogManifest one = assemble({videos[0]});
  CHECK(one.scenes.size() == 1);
  CHECK(one.total_duration_s == doctest::Approx(2.0));

  std::swap(videos[1], videos[3]);
  CHECK_THROWS_AS(assemble(videos), OrderError);
}

TEST_CASE("wav files round-trip within quantization") {
  AudioTrack a = synth_speech(mock_tts(3), "hello scene");
  std::string path =
      (std::filesystem::temp_directory_path() / "vlogger_test.wav").string();
  write_wav(path, a);
  AudioTrack back = read_wav(path);
  std::remove(path.c_str());

  CHECK(back.sample_rate == a.sample_rate);
  REQUIRE(back.samples.size() == a.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i)
    CHECK(std::abs(back.samples[i] - a.samples[i]) <= 1.0 / 32767.0);
}

TEST_CASE("manifest JSON round-trips") {
  VlogManifest m;
  m.total_duration_s = 12.5;
  m.scenes = {{1, "scenes/scene_001", "audio/scene_001.wav", 5.0},
              {2, "scenes/scene_002", "audio/scene_002.wav", 7.5}};
  VlogManifest back = deserialize_manifest(serialize_manifest(m));
  CHECK(back.fps == m.fps);
  CHECK(back.total_duration_s == m.total_duration_s);
  REQUIRE(back.scenes.size() == 2);
  CHECK(back.scenes[1].frames_dir == "scenes/scene_002");
  CHECK(back.scenes[1].duration_s == 7.5);

  CHECK_THROWS_AS(deserialize_manifest("nope"), ParseError);
}
