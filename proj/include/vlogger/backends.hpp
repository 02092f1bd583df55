#pragma once

#include <string>

#include "vlogger/denoiser.hpp"

namespace vlogger {

constexpr Index kEmbedDim = 64;

enum class BackendKind { director, image_gen, tts, text_embedder, image_embedder };
enum class BackendMode { mock, remote };

struct BackendDescriptor {
  BackendKind kind = BackendKind::director;
  BackendMode mode = BackendMode::mock;
  std::string endpoint;          // required when remote
  std::uint64_t seed = 0;        // mock determinism
};

struct DirectorRequest {
  std::string system_preamble;
  std::string user_message;
  int max_retries = 2;
  double timeout_s = 10.0;
};

void validate(const BackendDescriptor& b);

// Chat-style call. Mock mode is a seeded template engine that emits the
// fragment JSON formats; remote mode POSTs {"preamble","message"} and reads
// {"text"}, retrying up to max_retries on transport failure.
std::string director_call(const DirectorRequest& req,
                          const BackendDescriptor& backend);

// [tokens x 64] rows; empty text maps to the all-zero null embedding.
Embedding embed_text(const std::string& text, const BackendDescriptor& backend);

// frame: [3,H,W] in [0,1]; the all-zero frame maps to the null embedding.
Embedding embed_image(const Tensor& frame, const BackendDescriptor& backend);

// Actor reference image for a description, [3,H,W] in [0,1].
Tensor generate_actor_image(const std::string& description,
                            const BackendDescriptor& backend, Index h, Index w);

// Raw TTS: mono samples at the given rate. Mock synthesizes seeded tones at
// 0.06 s per character, 16 kHz.
std::vector<double> tts_call(const std::string& text,
                             const BackendDescriptor& backend,
                             int* sample_rate_out);

}  // namespace vlogger
