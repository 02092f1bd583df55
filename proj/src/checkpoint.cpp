#include "vlogger/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace vlogger {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'V', 'L', 'O', 'G', 'C', 'K', 'P', 'T'};

json shape_to_json(const Shape& s) {
  json a = json::array();
  for (Index d : s) a.push_back(d);
  return a;
}

Shape shape_from_json(const json& a) {
  Shape s;
  for (const auto& d : a) s.push_back(d.get<Index>());
  return s;
}

}  // namespace

void Checkpoint::save(const std::string& path) const {
  json header;
  header["version"] = version;
  header["step"] = step;
  header["net"] = {{"width", net.width},       {"heads", net.heads},
                   {"levels", net.levels},     {"cond_dim", net.cond_dim},
                   {"time_dim", net.time_dim}};
  header["geometry"] = {{"clip_len", geometry.clip_len},
                        {"pixel_h", geometry.pixel_h},
                        {"pixel_w", geometry.pixel_w},
                        {"ae_factor", geometry.ae_factor}};
  header["schedule"] = {
      {"steps", schedule_steps},
      {"kind", schedule_kind == ScheduleKind::linear ? "linear"
                                                     : "scaled_linear"}};
  header["selector"] = {{"alpha", selector.alpha},
                        {"m", selector.max_preserved}};
  json idx = json::array();
  for (const auto& [name, t] : arrays)
    idx.push_back({{"name", name}, {"shape", shape_to_json(t.shape)}});
  header["arrays"] = idx;

  std::string hs = header.dump();
  std::filesystem::path parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("checkpoint save: cannot open " + path);
  out.write(kMagic, 8);
  std::uint32_t ver = version;
  out.write(reinterpret_cast<const char*>(&ver), sizeof ver);
  std::uint64_t hlen = hs.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof hlen);
  out.write(hs.data(), std::streamsize(hs.size()));
  for (const auto& [name, t] : arrays)
    out.write(reinterpret_cast<const char*>(t.data.data()),
              std::streamsize(sizeof(double) * std::size_t(t.size())));
  if (!out) throw IoError("checkpoint save: write failed for " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint load: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw IoError("checkpoint load: bad magic in " + path);
  std::uint32_t ver = 0;
  in.read(reinterpret_cast<char*>(&ver), sizeof ver);
  if (ver != 1) throw IoError("checkpoint load: unsupported version");
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof hlen);
  std::string hs(hlen, '\0');
  in.read(hs.data(), std::streamsize(hlen));
  json header = json::parse(hs);

  Checkpoint c;
  c.version = ver;
  c.step = header.at("step").get<std::int64_t>();
  const auto& n = header.at("net");
  c.net.width = n.at("width");
  c.net.heads = n.at("heads");
  c.net.levels = n.at("levels");
  c.net.cond_dim = n.at("cond_dim");
  c.net.time_dim = n.at("time_dim");
  const auto& g = header.at("geometry");
  c.geometry.clip_len = g.at("clip_len");
  c.geometry.pixel_h = g.at("pixel_h");
  c.geometry.pixel_w = g.at("pixel_w");
  c.geometry.ae_factor = g.at("ae_factor");
  c.schedule_steps = header.at("schedule").at("steps");
  c.schedule_kind = header.at("schedule").at("kind") == "linear"
                        ? ScheduleKind::linear
                        : ScheduleKind::scaled_linear;
  c.selector.alpha = header.at("selector").at("alpha");
  c.selector.max_preserved = header.at("selector").at("m");

  for (const auto& e : header.at("arrays")) {
    Tensor t(shape_from_json(e.at("shape")));
    in.read(reinterpret_cast<char*>(t.data.data()),
            std::streamsize(sizeof(double) * std::size_t(t.size())));
    c.arrays.emplace_back(e.at("name").get<std::string>(), std::move(t));
  }
  if (!in) throw IoError("checkpoint load: truncated file " + path);
  return c;
}

Checkpoint make_checkpoint(const DenoiserNet& net, const ModelGeometry& geom,
                           const DiffusionSchedule& sched,
                           const ModeSelector& selector,
                           const LatentCoder& coder, std::int64_t step,
                           const AdamW* opt) {
  Checkpoint c;
  c.step = step;
  c.net = net.config();
  c.geometry = geom;
  c.schedule_steps = sched.steps;
  c.schedule_kind = sched.kind;
  c.selector = selector;
  for (const auto& p : net.params().params())
    c.arrays.emplace_back(p.name, p.var.value());
  if (coder.kind() == LatentCoder::Kind::linear_patch && coder.fitted()) {
    c.arrays.emplace_back("coder.enc_w", coder.enc_w);
    c.arrays.emplace_back("coder.dec_w", coder.dec_w);
    c.arrays.emplace_back("coder.mean", coder.mean);
  } else if (coder.kind() == LatentCoder::Kind::affine) {
    Tensor aff({2});
    aff.data[0] = coder.affine_scale();
    aff.data[1] = coder.affine_shift();
    c.arrays.emplace_back("coder.affine", aff);
  }
  if (opt) {
    auto* o = const_cast<AdamW*>(opt);
    const auto& params = net.params().params();
    for (std::size_t i = 0; i < params.size(); ++i) {
      c.arrays.emplace_back("opt.m." + params[i].name, o->first_moments()[i]);
      c.arrays.emplace_back("opt.v." + params[i].name, o->second_moments()[i]);
    }
    Tensor t({1});
    t.data[0] = double(o->steps_taken());
    c.arrays.emplace_back("opt.steps", std::move(t));
  }
  return c;
}

void restore_params(const Checkpoint& ckpt, DenoiserNet& net) {
  for (auto& p : net.params().params()) {
    const Tensor* t = ckpt.find(p.name);
    if (!t) throw IoError("checkpoint: missing parameter " + p.name);
    if (t->shape != p.var.value().shape)
      throw ShapeError("checkpoint: shape mismatch for " + p.name);
    p.var.value() = *t;
  }
}

void restore_optimizer(const Checkpoint& ckpt, AdamW& opt,
                       const ParamStore& store) {
  const auto& params = store.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor* m = ckpt.find("opt.m." + params[i].name);
    const Tensor* v = ckpt.find("opt.v." + params[i].name);
    if (!m || !v) throw IoError("checkpoint: missing optimizer state");
    opt.first_moments()[i] = *m;
    opt.second_moments()[i] = *v;
  }
  const Tensor* s = ckpt.find("opt.steps");
  if (s) opt.set_steps_taken(std::int64_t(s->data[0]));
}

LatentCoder restore_coder(const Checkpoint& ckpt) {
  if (const Tensor* aff = ckpt.find("coder.affine"))
    return LatentCoder::affine(aff->data[0], aff->data[1]);
  if (ckpt.geometry.ae_factor <= 1) return LatentCoder::identity();
  LatentCoder c = LatentCoder::linear_patch(ckpt.geometry.ae_factor);
  const Tensor* enc = ckpt.find("coder.enc_w");
  const Tensor* dec = ckpt.find("coder.dec_w");
  const Tensor* mu = ckpt.find("coder.mean");
  if (!enc || !dec || !mu)
    throw IoError("checkpoint: missing autoencoder arrays");
  c.enc_w = *enc;
  c.dec_w = *dec;
  c.mean = *mu;
  return c;
}

}  // namespace vlogger
