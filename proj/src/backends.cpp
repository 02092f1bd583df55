#include "vlogger/backends.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

namespace vlogger {

using nlohmann::json;

void validate(const BackendDescriptor& b) {
  if (b.mode == BackendMode::remote && b.endpoint.empty())
    throw ConfigError("remote backend requires an endpoint");
}

namespace {

// ---------- remote transport ----------

struct ParsedUrl {
  std::string host_port;  // scheme://host:port for httplib
  std::string path;
};

ParsedUrl parse_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos)
    throw ConfigError("backend endpoint must be an http(s) URL: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl p;
  if (path_start == std::string::npos) {
    p.host_port = url;
    p.path = "/";
  } else {
    p.host_port = url.substr(0, path_start);
    p.path = url.substr(path_start);
  }
  return p;
}

json remote_post(const BackendDescriptor& backend, const json& body,
                 int max_retries, double timeout_s) {
  ParsedUrl url = parse_url(backend.endpoint);
  httplib::Client client(url.host_port);
  int sec = std::max(1, int(timeout_s));
  client.set_connection_timeout(sec, 0);
  client.set_read_timeout(sec, 0);
  client.set_write_timeout(sec, 0);
  if (const char* token = std::getenv("VLOG_BACKEND_TOKEN"))
    client.set_default_headers(
        {{"Authorization", std::string("Bearer ") + token}});

  std::string payload = body.dump();
  std::string last_error;
  for (int attempt = 0; attempt <= max_retries; ++attempt) {
    auto res = client.Post(url.path, payload, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "server status " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200)
      throw TransportError("backend replied with status " +
                           std::to_string(res->status));
    try {
      return json::parse(res->body);
    } catch (const json::exception& e) {
      throw TransportError(std::string("malformed backend reply: ") + e.what());
    }
  }
  throw TransportError("all retries exhausted calling " + backend.endpoint +
                       ": " + last_error);
}

// ---------- mock director ----------

std::vector<std::string> triple_quoted_blocks(const std::string& text) {
  std::vector<std::string> blocks;
  std::size_t pos = 0;
  while (true) {
    auto open = text.find("'''", pos);
    if (open == std::string::npos) break;
    auto close = text.find("'''", open + 3);
    if (close == std::string::npos) break;
    blocks.push_back(text.substr(open + 3, close - open - 3));
    pos = close + 3;
  }
  return blocks;
}

std::vector<std::string> split_sentences(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    cur.push_back(c);
    if (c == '.' || c == '!' || c == '?') {
      std::string trimmed = cur;
      auto b = trimmed.find_first_not_of(" \t\n\r");
      auto e = trimmed.find_last_not_of(" \t\n\r");
      if (b != std::string::npos) out.push_back(trimmed.substr(b, e - b + 1));
      cur.clear();
    }
  }
  auto b = cur.find_first_not_of(" \t\n\r");
  if (b != std::string::npos)
    out.push_back(cur.substr(b, cur.find_last_not_of(" \t\n\r") - b + 1));
  return out;
}

std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

std::string strip_punct(const std::string& w) {
  std::size_t b = 0, e = w.size();
  while (b < e && !std::isalnum(static_cast<unsigned char>(w[b]))) ++b;
  while (e > b && !std::isalnum(static_cast<unsigned char>(w[e - 1]))) --e;
  return w.substr(b, e - b);
}

std::string to_lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return char(std::tolower(c)); });
  return s;
}

const char* kShotStyles[] = {" Wide shot.", " Close-up shot.", " Medium shot.",
                             " Tracking shot."};

json parse_script_block(const std::string& block);

json mock_rough(const std::string& story, std::uint64_t seed) {
  json out = json::array();
  int id = 1;
  for (const std::string& sentence : split_sentences(story)) {
    std::string desc = sentence;
    desc += kShotStyles[hash_str(sentence, splitmix64(seed) ^ id) % 4];
    out.push_back({{"video fragment id", id},
                   {"video fragment description", desc}});
    ++id;
  }
  if (out.empty())
    out.push_back({{"video fragment id", 1},
                   {"video fragment description", story}});
  return out;
}

json mock_detailed(const json& script, std::uint64_t /*seed*/) {
  json out = json::array();
  int id = 1;
  for (const auto& frag : script) {
    std::string desc = frag.at("video fragment description").get<std::string>();
    auto words = split_words(desc);
    if (words.size() > 8) {
      std::size_t mid = words.size() / 2;
      std::string a, b;
      for (std::size_t i = 0; i < mid; ++i) a += (i ? " " : "") + words[i];
      for (std::size_t i = mid; i < words.size(); ++i)
        b += (i > mid ? " " : "") + words[i];
      if (a.back() != '.') a += '.';
      out.push_back({{"video fragment id", id++},
                     {"video fragment description", a}});
      out.push_back({{"video fragment id", id++},
                     {"video fragment description", b}});
    } else {
      out.push_back({{"video fragment id", id++},
                     {"video fragment description", desc}});
    }
  }
  return out;
}

json mock_scheduled(const json& script, std::uint64_t seed) {
  json out = json::array();
  for (const auto& frag : script) {
    int id = frag.at("video fragment id").get<int>();
    std::string desc =
        frag.value("video fragment description", std::string());
    // Durations from the 5..10 s range used by the planning examples.
    int t = 5 + int(hash_str(desc, splitmix64(seed) ^ std::uint64_t(id)) % 6);
    out.push_back({{"video fragment id", id}, {"time", t}});
  }
  return out;
}

json mock_actors(const json& script) {
  std::vector<std::pair<std::string, std::string>> actors;  // id, description
  for (const auto& frag : script) {
    std::string desc =
        frag.value("video fragment description", std::string());
    auto words = split_words(desc);
    for (std::size_t i = 0; i < words.size(); ++i) {
      std::string w = strip_punct(words[i]);
      if (w.size() < 2) continue;
      bool capitalized = std::isupper(static_cast<unsigned char>(w[0])) &&
                         std::islower(static_cast<unsigned char>(w[1]));
      if (!capitalized) continue;
      bool after_named = i > 0 && to_lower(strip_punct(words[i - 1])) == "named";
      bool sentence_interior =
          i > 0 && !words[i - 1].empty() &&
          words[i - 1].back() != '.' && words[i - 1].back() != '!' &&
          words[i - 1].back() != '?';
      if (!(after_named || sentence_interior)) continue;
      std::string id = to_lower(w);
      bool known = false;
      for (auto& [aid, ad] : actors)
        if (aid == id) known = true;
      if (!known) actors.emplace_back(id, desc);
    }
  }
  json out = json::array();
  for (auto& [id, desc] : actors)
    out.push_back({{"actor id", id}, {"description", desc}});
  return out;
}

json mock_protagonists(const json& script, const json& actors) {
  json out = json::object();
  for (const auto& frag : script) {
    int id = frag.at("video fragment id").get<int>();
    std::string desc =
        to_lower(frag.value("video fragment description", std::string()));
    json who = nullptr;
    for (const auto& actor : actors) {
      std::string aid = actor.at("actor id").get<std::string>();
      if (desc.find(to_lower(aid)) != std::string::npos) {
        who = aid;
        break;
      }
    }
    out[std::to_string(id)] = who;
  }
  return out;
}

json parse_script_block(const std::string& block) {
  try {
    return json::parse(block);
  } catch (const json::exception&) {
    auto open = block.find('[');
    auto close = block.rfind(']');
    if (open == std::string::npos || close == std::string::npos ||
        close <= open)
      throw ParseError("mock director: cannot parse script block");
    return json::parse(block.substr(open, close - open + 1));
  }
}

std::string mock_director_reply(const DirectorRequest& req,
                                std::uint64_t seed) {
  const std::string& msg = req.user_message;
  auto blocks = triple_quoted_blocks(msg);
  auto has = [&](const char* marker) {
    return msg.find(marker) != std::string::npos;
  };

  if (has("protagonist")) {
    if (blocks.size() < 2)
      throw ParseError("mock director: protagonist needs script and actors");
    return mock_protagonists(parse_script_block(blocks[0]),
                             parse_script_block(blocks[1]))
        .dump();
  }
  if (has("actor id")) {
    if (blocks.empty()) throw ParseError("mock director: no script block");
    return mock_actors(parse_script_block(blocks[0])).dump();
  }
  if (has("16-frame")) {
    if (blocks.size() < 2)
      throw ParseError("mock director: scheduling needs story and script");
    return mock_scheduled(parse_script_block(blocks[1]), seed).dump();
  }
  if (has("split each description")) {
    if (blocks.size() < 2)
      throw ParseError("mock director: detailing needs story and script");
    return mock_detailed(parse_script_block(blocks[1]), seed).dump();
  }
  if (has("check and complete")) {
    if (blocks.size() < 2)
      throw ParseError("mock director: completion needs story and script");
    return parse_script_block(blocks[1]).dump();
  }
  std::string story = blocks.empty() ? msg : blocks[0];
  return mock_rough(story, seed).dump();
}

// ---------- mock embedders ----------

Embedding rows_from_hashes(const std::vector<std::uint64_t>& hashes) {
  Embedding e({Index(hashes.size()), kEmbedDim});
  for (std::size_t r = 0; r < hashes.size(); ++r)
    for (Index j = 0; j < kEmbedDim; ++j) {
      std::uint64_t h = splitmix64(hashes[r] ^ (0x9e37ULL * std::uint64_t(j)));
      // uniform in [-1, 1]
      e.at2(Index(r), j) = double(h >> 11) / double(1ULL << 53) * 2.0 - 1.0;
    }
  return e;
}

}  // namespace

std::string director_call(const DirectorRequest& req,
                          const BackendDescriptor& backend) {
  if (backend.kind != BackendKind::director)
    throw ConfigError("director_call: wrong backend kind");
  if (req.max_retries < 0 || req.timeout_s <= 0.0)
    throw ConfigError("director_call: bad retry/timeout settings");
  validate(backend);
  std::string reply;
  if (backend.mode == BackendMode::mock) {
    reply = mock_director_reply(req, backend.seed);
  } else {
    json body = {{"preamble", req.system_preamble},
                 {"message", req.user_message}};
    json r = remote_post(backend, body, req.max_retries, req.timeout_s);
    reply = r.value("text", std::string());
  }
  if (reply.find_first_not_of(" \t\n\r") == std::string::npos)
    throw EmptyReply("director returned a blank reply");
  return reply;
}

Embedding embed_text(const std::string& text,
                     const BackendDescriptor& backend) {
  if (backend.kind != BackendKind::text_embedder)
    throw ConfigError("embed_text: wrong backend kind");
  validate(backend);
  if (backend.mode == BackendMode::remote) {
    json r = remote_post(backend, {{"message", text}}, 2, 10.0);
    const auto& vals = r.at("values");
    Index rows = Index(vals.size());
    if (rows == 0) return null_embedding(kEmbedDim);
    if (Index(vals[0].size()) != kEmbedDim)
      throw DimMismatch("embed_text: remote dim != 64");
    Embedding e({rows, kEmbedDim});
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < kEmbedDim; ++j) e.at2(i, j) = vals[i][j];
    return e;
  }
  std::istringstream is(text);
  std::vector<std::uint64_t> hashes;
  std::string tok;
  while (is >> tok) hashes.push_back(hash_str(tok, splitmix64(backend.seed)));
  if (hashes.empty()) return null_embedding(kEmbedDim);
  return rows_from_hashes(hashes);
}

Embedding embed_image(const Tensor& frame, const BackendDescriptor& backend) {
  if (backend.kind != BackendKind::image_embedder)
    throw ConfigError("embed_image: wrong backend kind");
  validate(backend);
  if (frame.rank() != 3)
    throw ShapeError("embed_image: frame must be rank-3 [3,H,W]");
  if (frame.max_abs() == 0.0) return null_embedding(kEmbedDim);
  if (backend.mode == BackendMode::remote)
    throw ConfigError("embed_image: remote image embedding not wired");
  std::uint64_t h = hash_bytes(frame.data.data(),
                               sizeof(double) * std::size_t(frame.size()),
                               splitmix64(backend.seed));
  return rows_from_hashes({h});
}

Tensor generate_actor_image(const std::string& description,
                            const BackendDescriptor& backend, Index h,
                            Index w) {
  if (backend.kind != BackendKind::image_gen)
    throw ConfigError("generate_actor_image: wrong backend kind");
  validate(backend);
  if (backend.mode == BackendMode::remote)
    throw ConfigError("generate_actor_image: remote image gen not wired");
  std::uint64_t hd = hash_str(description, splitmix64(backend.seed));
  // Background and subject colors derived from the description hash.
  double bg[3], fg[3];
  for (int c = 0; c < 3; ++c) {
    bg[c] = 0.1 + 0.2 * (double(splitmix64(hd + c) >> 40) / double(1 << 24));
    fg[c] = 0.4 + 0.6 * (double(splitmix64(hd + 16 + c) >> 40) / double(1 << 24));
  }
  Tensor img({3, h, w});
  double cy = double(h) / 2, cx = double(w) / 2;
  double r = std::min(h, w) / 3.0;
  for (Index c = 0; c < 3; ++c)
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x) {
        double d = std::hypot(double(y) - cy, double(x) - cx);
        img.data[(c * h + y) * w + x] = d <= r ? fg[c] : bg[c];
      }
  return img;
}

std::vector<double> tts_call(const std::string& text,
                             const BackendDescriptor& backend,
                             int* sample_rate_out) {
  if (backend.kind != BackendKind::tts)
    throw ConfigError("tts_call: wrong backend kind");
  validate(backend);
  if (backend.mode == BackendMode::remote) {
    json r = remote_post(backend, {{"message", text}}, 2, 10.0);
    if (sample_rate_out) *sample_rate_out = r.at("sample_rate").get<int>();
    return r.at("samples").get<std::vector<double>>();
  }
  constexpr int kRate = 16000;
  constexpr double kSecondsPerChar = 0.06;
  if (sample_rate_out) *sample_rate_out = kRate;
  const Index per_char = Index(kSecondsPerChar * kRate);
  std::vector<double> samples;
  samples.reserve(std::size_t(per_char) * text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    std::uint64_t h = splitmix64(splitmix64(backend.seed) ^
                                 (std::uint64_t(std::uint8_t(text[i])) << 8) ^
                                 std::uint64_t(i));
    double freq = 220.0 + double(h % 660);
    for (Index s = 0; s < per_char; ++s) {
      double u = double(s) / double(per_char);
      double env = std::sin(M_PI * u);  // fade in/out per character
      samples.push_back(0.3 * env *
                        std::sin(2.0 * M_PI * freq * double(s) / kRate));
    }
  }
  return samples;
}

}  // namespace vlogger
