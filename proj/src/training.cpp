#include "vlogger/training.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace vlogger {

namespace {

const char* kColors[3] = {"red", "green", "blue"};
const double kPalette[3][3] = {{0.9, 0.15, 0.1}, {0.1, 0.8, 0.2},
                               {0.15, 0.2, 0.9}};
const char* kShapes[2] = {"square", "circle"};
const char* kMotions[2] = {"moves right", "bounces"};

void draw_shape(Tensor& frame, int shape, const double* color, double cy,
                double cx, double radius) {
  Index h = frame.shape[1], w = frame.shape[2];
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      bool inside =
          shape == 0
              ? std::abs(y - cy) <= radius && std::abs(x - cx) <= radius
              : std::hypot(y - cy, x - cx) <= radius;
      if (!inside) continue;
      for (Index c = 0; c < 3; ++c) frame.data[(c * h + y) * w + x] = color[c];
    }
}

}  // namespace

std::vector<ToySample> make_toy_dataset(const ToyDatasetSpec& spec,
                                        std::uint64_t seed) {
  if (spec.n_samples < 1 || spec.frames < 1 || spec.h < 4 || spec.w < 4)
    throw DomainError("make_toy_dataset: degenerate spec");
  std::vector<ToySample> out;
  for (Index i = 0; i < spec.n_samples; ++i) {
    Rng rng = make_rng(sub_seed(seed, "sample-" + std::to_string(i)));
    int color = int(rng() % 3);
    int shape = int(rng() % 2);
    int motion = int(rng() % 2);
    double radius = double(std::min(spec.h, spec.w)) / 5.0;
    double cy = double(spec.h) / 2.0;
    double cx0 = radius + double(rng() % 2);
    double speed = 0.5 + 0.25 * double(rng() % 3);

    ToySample s;
    s.frames = Tensor::full({spec.frames, 3, spec.h, spec.w}, 0.1);
    for (Index f = 0; f < spec.frames; ++f) {
      double cx;
      if (motion == 0) {
        cx = cx0 + speed * double(f);
        cx = std::fmod(cx, double(spec.w));
      } else {
        double span = double(spec.w) - 2.0 * radius;
        double u = std::fmod(speed * double(f), 2.0 * span);
        cx = radius + (u <= span ? u : 2.0 * span - u);
      }
      Tensor frame({3, spec.h, spec.w});
      frame.data = s.frames.data.segment(f * 3 * spec.h * spec.w,
                                         3 * spec.h * spec.w);
      draw_shape(frame, shape, kPalette[color], cy, cx, radius);
      s.frames.data.segment(f * 3 * spec.h * spec.w, 3 * spec.h * spec.w) =
          frame.data;
    }
    s.caption = std::string("a ") + kColors[color] + " " + kShapes[shape] +
                " " + kMotions[motion];
    s.actor_frame = Tensor::full({3, spec.h, spec.w}, 0.1);
    draw_shape(s.actor_frame, shape, kPalette[color], cy, double(spec.w) / 2.0,
               radius);
    out.push_back(std::move(s));
  }
  return out;
}

TrainExample prepare_example(const ToySample& sample, const LatentCoder& coder,
                             const BackendDescriptor& text_backend,
                             const BackendDescriptor& image_backend, Rng& rng,
                             bool as_image) {
  TrainExample ex;
  Index f = sample.frames.shape[0];
  if (as_image) {
    // A single still drawn uniformly from the clip.
    Index pick = Index(rng() % std::uint64_t(f));
    Index per = sample.frames.size() / f;
    Tensor still({1, sample.frames.shape[1], sample.frames.shape[2],
                  sample.frames.shape[3]});
    still.data = sample.frames.data.segment(pick * per, per);
    ex.x0 = coder.encode(still);
    ex.is_image = true;
  } else {
    ex.x0 = coder.encode(sample.frames);
  }
  ex.text = embed_text(sample.caption, text_backend);
  // Actor reference: a uniformly random frame of the clip.
  Index pick = Index(rng() % std::uint64_t(f));
  Index h = sample.frames.shape[2], w = sample.frames.shape[3];
  Tensor ref({3, h, w});
  ref.data = sample.frames.data.segment(pick * 3 * h * w, 3 * h * w);
  ex.actor = embed_image(ref, image_backend);
  return ex;
}

double training_step(DenoiserNet& net, const std::vector<TrainExample>& batch,
                     const ModeSelector& selector,
                     const DiffusionSchedule& sched, const TrainConfig& cfg,
                     AdamW& opt, Rng& rng, StepStats* stats) {
  if (batch.empty()) throw DomainError("training_step: empty batch");
  Index f0 = batch.front().x0.shape[0];
  for (const TrainExample& ex : batch)
    if (ex.x0.shape[0] != f0)
      throw ShapeError("training_step: batch not homogeneous in F");

  net.params().zero_grads();
  std::uniform_int_distribution<Index> tdist(0, sched.steps - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  ag::Var total;
  for (const TrainExample& ex : batch) {
    Index k = ex.is_image ? 0 : sample_k(selector, rng);
    if (k > ex.x0.shape[0]) k = ex.x0.shape[0];
    MaskedContext ctx = build_masked_context(ex.x0, k);
    Index t = tdist(rng);
    Tensor noise = Tensor::randn(ex.x0.shape, rng);
    LatentClip x_noisy = q_sample(ex.x0, t, noise, sched);
    Tensor x_in = assemble_denoiser_input(x_noisy, ctx);

    bool drop = unit(rng) < cfg.prompt_drop_prob;
    ConditioningBundle cond;
    cond.text = drop ? null_embedding(net.config().cond_dim) : ex.text;
    if (!drop && ex.actor.size() > 0 && !is_null_embedding(ex.actor))
      cond.actor = ex.actor;

    ag::Var pred = net.forward(ag::Var::constant(x_in), t, sched, cond);
    ag::Var loss = ag::mse(pred, noise);
    total = total.valid() ? ag::add(total, loss) : loss;
    if (stats) {
      stats->k_drawn.push_back(k);
      if (drop) ++stats->dropped;
    }
  }
  total = ag::scale(total, 1.0 / double(batch.size()));
  double loss_value = total.value().data[0];
  if (!std::isfinite(loss_value))
    throw NonFiniteError("training_step: loss is not finite");
  ag::backward(total);
  opt.step(net.params());
  return loss_value;
}

Checkpoint train(const TrainConfig& cfg, const std::vector<ToySample>& dataset,
                 const LatentCoder& coder,
                 const BackendDescriptor& text_backend,
                 const BackendDescriptor& image_backend, bool resume) {
  if (cfg.learning_rate <= 0.0) throw ConfigError("train: learning_rate <= 0");
  if (cfg.prompt_drop_prob < 0.0 || cfg.prompt_drop_prob > 1.0)
    throw ConfigError("train: prompt_drop_prob outside [0,1]");
  if (dataset.empty()) throw ConfigError("train: empty dataset");

  DenoiserNet net(cfg.net, sub_seed(cfg.seed, "init"));
  DiffusionSchedule sched = make_schedule(cfg.schedule_steps,
                                          cfg.schedule_kind);
  AdamWConfig ocfg;
  ocfg.lr = cfg.learning_rate;
  ocfg.weight_decay = cfg.weight_decay;
  ocfg.freeze_prefixes = cfg.freeze_prefixes;
  AdamW opt(ocfg, net.params());

  std::int64_t start = 0;
  if (resume && !cfg.checkpoint_path.empty() &&
      std::filesystem::exists(cfg.checkpoint_path)) {
    Checkpoint ckpt = Checkpoint::load(cfg.checkpoint_path);
    restore_params(ckpt, net);
    restore_optimizer(ckpt, opt, net.params());
    start = ckpt.step;
  }

  std::ofstream csv;
  if (!cfg.metrics_csv.empty()) {
    bool fresh = !std::filesystem::exists(cfg.metrics_csv) || start == 0;
    csv.open(cfg.metrics_csv, fresh ? std::ios::trunc : std::ios::app);
    if (fresh) csv << "step,loss,k_hist,wall_time_s\n";
  }
  auto t0 = std::chrono::steady_clock::now();

  for (std::int64_t step = start; step < cfg.steps; ++step) {
    // Per-step derived RNG makes resumed runs bit-identical.
    Rng rng = make_rng(sub_seed(cfg.seed, "step-" + std::to_string(step)));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    bool image_step = unit(rng) < cfg.image_ratio;

    std::vector<TrainExample> batch;
    for (Index b = 0; b < cfg.batch_size; ++b) {
      const ToySample& s = dataset[rng() % dataset.size()];
      batch.push_back(prepare_example(s, coder, text_backend, image_backend,
                                      rng, image_step));
    }

    StepStats stats;
    double loss;
    try {
      loss = training_step(net, batch, cfg.selector, sched, cfg, opt, rng,
                           &stats);
    } catch (const NonFiniteError& e) {
      throw NonFiniteError("step " + std::to_string(step) + ": " + e.what());
    }

    if (csv.is_open()) {
      std::ostringstream khist;
      for (std::size_t i = 0; i < stats.k_drawn.size(); ++i)
        khist << (i ? ";" : "") << stats.k_drawn[i];
      double wall = std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
      csv << (step + 1) << ',' << loss << ',' << khist.str() << ',' << wall
          << '\n';
    }
    if (!cfg.checkpoint_path.empty() && cfg.checkpoint_every > 0 &&
        (step + 1) % cfg.checkpoint_every == 0 && step + 1 < cfg.steps)
      make_checkpoint(net, cfg.geometry, sched, cfg.selector, coder, step + 1,
                      &opt)
          .save(cfg.checkpoint_path);
  }

  Checkpoint final_ckpt = make_checkpoint(net, cfg.geometry, sched,
                                          cfg.selector, coder, cfg.steps,
                                          &opt);
  if (!cfg.checkpoint_path.empty()) final_ckpt.save(cfg.checkpoint_path);
  return final_ckpt;
}

}  // namespace vlogger
