#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include "vlogger/training.hpp"

using namespace vlogger;

namespace {

BackendDescriptor text_backend() {
  BackendDescriptor b;
  b.kind = BackendKind::text_embedder;
  b.seed = 1;
  return b;
}

BackendDescriptor image_backend() {
  BackendDescriptor b;
  b.kind = BackendKind::image_embedder;
  b.seed = 2;
  return b;
}

TrainConfig tiny_train_config() {
  TrainConfig cfg;
  cfg.net.width = 8;
  cfg.net.heads = 2;
  cfg.net.levels = 1;
  cfg.net.cond_dim = kEmbedDim;
  cfg.net.time_dim = 8;
  cfg.geometry.clip_len = 4;
  cfg.geometry.pixel_h = 4;
  cfg.geometry.pixel_w = 4;
  cfg.geometry.ae_factor = 1;
  cfg.schedule_steps = 40;
  cfg.learning_rate = 1e-3;
  cfg.seed = 11;
  return cfg;
}

std::vector<ToySample> tiny_dataset(Index n) {
  ToyDatasetSpec spec;
  spec.n_samples = n;
  spec.frames = 4;
  spec.h = 4;
  spec.w = 4;
  return make_toy_dataset(spec, 33);
}

}  // namespace

TEST_CASE("toy dataset is deterministic and self-describing") {
  ToyDatasetSpec spec;
  spec.n_samples = 6;
  spec.frames = 8;
  spec.h = 8;
  spec.w = 8;
  auto d1 = make_toy_dataset(spec, 123);
  auto d2 = make_toy_dataset(spec, 123);
  REQUIRE(d1.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(d1[i].caption == d2[i].caption);
    CHECK((d1[i].frames.data == d2[i].frames.data).all());
    CHECK(d1[i].frames.shape == Shape{8, 3, 8, 8});
    CHECK(d1[i].actor_frame.shape == Shape{3, 8, 8});
    CHECK(d1[i].frames.data.minCoeff() >= 0.0);
    CHECK(d1[i].frames.data.maxCoeff() <= 1.0);

    // caption names a color, a shape, and a motion
    bool color = d1[i].caption.find("red") != std::string::npos ||
                 d1[i].caption.find("green") != std::string::npos ||
                 d1[i].caption.find("blue") != std::string::npos;
    bool shape = d1[i].caption.find("square") != std::string::npos ||
                 d1[i].caption.find("circle") != std::string::npos;
    CHECK(color);
    CHECK(shape);
  }
  // a different seed reshuffles at least one clip
  auto d3 = make_toy_dataset(spec, 124);
  bool any_diff = false;
  for (std::size_t i = 0; i < 6; ++i)
    if ((d1[i].frames.data != d3[i].frames.data).any()) any_diff = true;
  CHECK(any_diff);

  ToyDatasetSpec one = spec;
  one.n_samples = 1;
  CHECK(make_toy_dataset(one, 5).size() == 1);

  // the caption's color actually appears in the pixels
  for (const ToySample& s : d1) {
    double maxr = 0, maxg = 0, maxb = 0;
    Index plane = 64;
    for (Index i = 0; i < plane; ++i) {
      maxr = std::max(maxr, s.frames.data[i]);
      maxg = std::max(maxg, s.frames.data[plane + i]);
      maxb = std::max(maxb, s.frames.data[2 * plane + i]);
    }
    if (s.caption.find("red") != std::string::npos) CHECK(maxr > 0.8);
    if (s.caption.find("green") != std::string::npos) CHECK(maxg > 0.7);
    if (s.caption.find("blue") != std::string::npos) CHECK(maxb > 0.8);
  }
}

TEST_CASE("untrained loss sits near the unit noise variance") {
  TrainConfig cfg = tiny_train_config();
  DenoiserNet net(cfg.net, 1);
  DiffusionSchedule sched = make_schedule(cfg.schedule_steps);
  AdamWConfig ocfg;
  ocfg.lr = 0.0;
  AdamW opt(ocfg, net.params());

  auto dataset = tiny_dataset(2);
  LatentCoder coder = LatentCoder::identity();
  Rng rng = make_rng(3);

  double acc = 0.0;
  int n = 20;
  for (int i = 0; i < n; ++i) {
    std::vector<TrainExample> batch = {prepare_example(
        dataset[i % 2], coder, text_backend(), image_backend(), rng)};
    acc += training_step(net, batch, cfg.selector, sched, cfg, opt, rng);
  }
  double mean_loss = acc / n;
  CHECK(mean_loss > 0.7);
  CHECK(mean_loss < 1.3);
}

TEST_CASE("200 steps of single-sample overfitting halve the loss") {
  TrainConfig cfg = tiny_train_config();
  cfg.prompt_drop_prob = 0.0;
  DenoiserNet net(cfg.net, 4);
  DiffusionSchedule sched = make_schedule(cfg.schedule_steps);
  AdamWConfig ocfg;
  ocfg.lr = cfg.learning_rate;
  AdamW opt(ocfg, net.params());

  auto dataset = tiny_dataset(1);
  LatentCoder coder = LatentCoder::identity();
  Rng erng = make_rng(9);
  TrainExample ex = prepare_example(dataset[0], coder, text_backend(),
                                    image_backend(), erng);

  Rng rng = make_rng(10);
  double first = 0.0, window = 0.0;
  for (int step = 0; step < 200; ++step) {
    double loss =
        training_step(net, {ex}, cfg.selector, sched, cfg, opt, rng);
    CHECK(std::isfinite(loss));
    if (step < 10) first += loss / 10.0;
    if (step >= 190) window += loss / 10.0;
  }
  CHECK(window <= 0.5 * first);
}

TEST_CASE("prompt-drop frequency and mode mixing match their targets") {
  TrainConfig cfg = tiny_train_config();
  cfg.geometry.clip_len = 1;
  DenoiserNet net(cfg.net, 5);
  DiffusionSchedule sched = make_schedule(cfg.schedule_steps);
  AdamWConfig ocfg;
  ocfg.lr = 0.0;
  AdamW opt(ocfg, net.params());

  // mode mixing: 1e4 selector draws against the closed-form pmf
  {
    Rng rng = make_rng(21);
    auto p = pmf(cfg.selector);
    std::vector<double> freq(p.size(), 0.0);
    const int n = 10000;
    for (int i = 0; i < n; ++i)
      freq[std::size_t(sample_k(cfg.selector, rng))] += 1.0 / n;
    double tv = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k)
      tv += 0.5 * std::abs(freq[k] - p[k]);
    CHECK(tv <= 0.02);
  }

  // prompt-drop honesty: 1e4 image samples through real training steps
  {
    auto dataset = tiny_dataset(1);
    LatentCoder coder = LatentCoder::identity();
    Rng erng = make_rng(31);
    TrainExample ex = prepare_example(dataset[0], coder, text_backend(),
                                      image_backend(), erng, /*as_image=*/true);
    std::vector<TrainExample> batch(50, ex);
    Rng rng = make_rng(41);
    StepStats stats;
    for (int step = 0; step < 200; ++step)
      training_step(net, batch, cfg.selector, sched, cfg, opt, rng, &stats);
    double frac = double(stats.dropped) / double(stats.k_drawn.size());
    CHECK(stats.k_drawn.size() == 10000);
    CHECK(frac >= 0.08);
    CHECK(frac <= 0.12);
    // image samples always run in generation mode
    for (Index k : stats.k_drawn) CHECK(k == 0);
  }
}

TEST_CASE("a poisoned parameter aborts the step with NonFiniteError") {
  TrainConfig cfg = tiny_train_config();
  DenoiserNet net(cfg.net, 6);
  net.params().params()[0].var.value().data[0] =
      std::numeric_limits<double>::quiet_NaN();
  DiffusionSchedule sched = make_schedule(cfg.schedule_steps);
  AdamWConfig ocfg;
  AdamW opt(ocfg, net.params());
  auto dataset = tiny_dataset(1);
  Rng erng = make_rng(1);
  TrainExample ex = prepare_example(dataset[0], LatentCoder::identity(),
                                    text_backend(), image_backend(), erng);
  Rng rng = make_rng(2);
  CHECK_THROWS_AS(
      training_step(net, {ex}, cfg.selector, sched, cfg, opt, rng),
      NonFiniteError);
}

TEST_CASE("train with zero steps returns the initialization") {
  TrainConfig cfg = tiny_train_config();
  cfg.steps = 0;
  auto dataset = tiny_dataset(1);
  Checkpoint ckpt = train(cfg, dataset, LatentCoder::identity(),
                          text_backend(), image_backend());
  DenoiserNet fresh(cfg.net, sub_seed(cfg.seed, "init"));
  for (const auto& p : fresh.params().params()) {
    const Tensor* saved = ckpt.find(p.name);
    REQUIRE(saved != nullptr);
    CHECK((saved->data == p.var.value().data).all());
  }
}

TEST_CASE("resumed training reproduces the uninterrupted trajectory") {
  namespace fs = std::filesystem;
  std::string dir =
      (fs::temp_directory_path() / "vlogger_resume_test").string();
  fs::create_directories(dir);

  TrainConfig cfg = tiny_train_config();
  cfg.batch_size = 1;
  auto dataset = tiny_dataset(2);
  LatentCoder coder = LatentCoder::identity();

  cfg.steps = 6;
  Checkpoint straight =
      train(cfg, dataset, coder, text_backend(), image_backend());

  TrainConfig half = cfg;
  half.steps = 3;
  half.checkpoint_path = dir + "/resume.ckpt";
  train(half, dataset, coder, text_backend(), image_backend());
  half.steps = 6;
  Checkpoint resumed = train(half, dataset, coder, text_backend(),
                             image_backend(), /*resume=*/true);

  REQUIRE(straight.arrays.size() == resumed.arrays.size());
  for (const auto& [name, t] : straight.arrays) {
    const Tensor* other = resumed.find(name);
    REQUIRE(other != nullptr);
    CHECK((t.data == other->data).all());
  }
  fs::remove_all(dir);
}

TEST_CASE("metrics CSV logs one row per step") {
  namespace fs = std::filesystem;
  std::string csv =
      (fs::temp_directory_path() / "vlogger_metrics_test.csv").string();
  TrainConfig cfg = tiny_train_config();
  cfg.steps = 3;
  cfg.metrics_csv = csv;
  train(cfg, tiny_dataset(1), LatentCoder::identity(), text_backend(),
        image_backend());
  std::ifstream in(csv);
  REQUIRE(in.good());
  std::string line;
  int rows = 0;
  std::getline(in, line);
  CHECK(line.rfind("step,loss", 0) == 0);
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 3);
  std::remove(csv.c_str());
}
