#include <doctest.h>

#include "vlogger/masking.hpp"
#include "vlogger/mode_select.hpp"
#include "vlogger/schedule.hpp"

using namespace vlogger;

TEST_CASE("make_schedule invariants") {
  DiffusionSchedule s = make_schedule(1000, ScheduleKind::scaled_linear);
  CHECK(s.betas.size() == 1000);
  CHECK(s.alphas_cumprod[0] > 0.99);
  for (Index t = 0; t < 1000; ++t) {
    CHECK(s.betas[t] > 0.0);
    CHECK(s.betas[t] < 1.0);
    if (t > 0) {
      CHECK(s.betas[t] > s.betas[t - 1]);
      CHECK(s.alphas_cumprod[t] < s.alphas_cumprod[t - 1]);
    }
  }
  // cumulative product identity, checked against a direct rebuild
  double acc = 1.0;
  for (Index t = 0; t < 1000; ++t) {
    acc *= 1.0 - s.betas[t];
    CHECK(s.alphas_cumprod[t] == doctest::Approx(acc).epsilon(1e-12));
  }

  DiffusionSchedule lin = make_schedule(2, ScheduleKind::linear);
  CHECK(lin.betas.size() == 2);
  CHECK(lin.alphas_cumprod[1] < lin.alphas_cumprod[0]);

  CHECK_THROWS_AS(make_schedule(1), DomainError);
}

TEST_CASE("q_sample follows the closed form") {
  DiffusionSchedule s = make_schedule(1000);
  Tensor x0 = Tensor::full({2, 4, 2, 2}, 1.0);
  Tensor zero_noise = Tensor::zeros({2, 4, 2, 2});

  // near t=0 the sample is essentially x0
  LatentClip near = q_sample(x0, 0, zero_noise, s);
  CHECK(near.data[0] == doctest::Approx(1.0).epsilon(1e-3));

  // zero noise scales by sqrt(abar) exactly
  Index t = 500;
  LatentClip scaled = q_sample(x0, t, zero_noise, s);
  double expect = std::sqrt(s.alphas_cumprod[t]);
  for (Index i = 0; i < scaled.size(); ++i)
    CHECK(scaled.data[i] == doctest::Approx(expect).epsilon(1e-15));

  // abar = 0.25 with unit x0 and unit noise: 0.5 + sqrt(0.75)
  DiffusionSchedule fixed;
  fixed.steps = 2;
  fixed.betas.setConstant(2, 0.5);
  fixed.alphas_cumprod.resize(2);
  fixed.alphas_cumprod << 0.5, 0.25;
  Tensor ones = Tensor::full({1, 4, 2, 2}, 1.0);
  LatentClip mixed = q_sample(ones, 1, ones, fixed);
  for (Index i = 0; i < mixed.size(); ++i)
    CHECK(mixed.data[i] ==
          doctest::Approx(0.5 + std::sqrt(0.75)).epsilon(1e-15));

  CHECK_THROWS_AS(q_sample(x0, 1000, zero_noise, s), DomainError);
  CHECK_THROWS_AS(q_sample(x0, 5, Tensor::zeros({1, 4, 2, 2}), s), ShapeError);
}

TEST_CASE("pmf matches the closed form at the training constants") {
  std::vector<double> p = pmf(ModeSelector{0.6, 6});
  const double expected[] = {0.4,     0.24,     0.144,   0.0864,
                             0.05184, 0.031104, 0.046656};
  REQUIRE(p.size() == 7);
  for (int k = 0; k < 7; ++k)
    CHECK(p[std::size_t(k)] == doctest::Approx(expected[k]).epsilon(1e-12));
  double sum = 0.0;
  for (double v : p) sum += v;
  CHECK(std::abs(sum - 1.0) <= 1e-12);
}

TEST_CASE("pmf degenerate and telescoping cases") {
  std::vector<double> p0 = pmf(ModeSelector{0.3, 0});
  REQUIRE(p0.size() == 1);
  CHECK(p0[0] == 1.0);

  Rng rng = make_rng(99);
  std::uniform_real_distribution<double> unit(0.01, 0.99);
  for (int trial = 0; trial < 200; ++trial) {
    ModeSelector sel{unit(rng), int(rng() % 12)};
    auto p = pmf(sel);
    double sum = 0.0;
    for (double v : p) {
      CHECK(v >= 0.0);
      sum += v;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }

  CHECK_THROWS_AS(pmf(ModeSelector{1.0, 3}), DomainError);
  CHECK_THROWS_AS(pmf(ModeSelector{0.5, -1}), DomainError);
}

TEST_CASE("sample_k reproduces the pmf empirically") {
  ModeSelector sel{0.6, 6};
  auto p = pmf(sel);
  Rng rng = make_rng(1234);
  const int n = 100000;
  std::vector<int> counts(7, 0);
  for (int i = 0; i < n; ++i) {
    int k = sample_k(sel, rng);
    REQUIRE(k >= 0);
    REQUIRE(k <= 6);
    ++counts[std::size_t(k)];
  }
  for (int k = 0; k <= 6; ++k)
    CHECK(std::abs(double(counts[std::size_t(k)]) / n - p[std::size_t(k)]) <=
          0.01);

  // degenerate selector
  ModeSelector zero{0.6, 0};
  for (int i = 0; i < 50; ++i) CHECK(sample_k(zero, rng) == 0);

  // fixed seed gives a reproducible sequence
  Rng a = make_rng(5), b = make_rng(5);
  for (int i = 0; i < 100; ++i) CHECK(sample_k(sel, a) == sample_k(sel, b));
}

TEST_CASE("build_masked_context preserves exactly the first k frames") {
  Rng rng = make_rng(7);
  LatentClip x = Tensor::randn({16, 4, 3, 3}, rng);

  MaskedContext gen = build_masked_context(x, 0);
  CHECK(gen.x_k.max_abs() == 0.0);
  CHECK(gen.mask.abs().maxCoeff() == 0.0);

  MaskedContext full = build_masked_context(x, 16);
  CHECK((full.x_k.data == x.data).all());
  CHECK(full.mask.minCoeff() == 1.0);

  MaskedContext mid = build_masked_context(x, 3);
  Index per = x.size() / 16;
  for (Index f = 0; f < 16; ++f) {
    CHECK(mid.mask[f] == (f < 3 ? 1.0 : 0.0));
    for (Index i = 0; i < per; ++i) {
      double want = f < 3 ? x.data[f * per + i] : 0.0;
      CHECK(mid.x_k.data[f * per + i] == want);
    }
  }

  CHECK_THROWS_AS(build_masked_context(x, -1), DomainError);
  CHECK_THROWS_AS(build_masked_context(x, 17), DomainError);
}

TEST_CASE("masking is idempotent: x_k masked again is x_k") {
  Rng rng = make_rng(8);
  LatentClip x = Tensor::randn({9, 4, 2, 2}, rng);
  for (Index k : {Index(0), Index(4), Index(9)}) {
    MaskedContext ctx = build_masked_context(x, k);
    MaskedContext twice = build_masked_context(ctx.x_k, k);
    CHECK((twice.x_k.data == ctx.x_k.data).all());
  }
}

TEST_CASE("assemble_denoiser_input: 9-channel layout and exact round trip") {
  Rng rng = make_rng(21);
  LatentClip clean = Tensor::randn({5, 4, 3, 3}, rng);
  LatentClip noise = Tensor::randn({5, 4, 3, 3}, rng);
  MaskedContext ctx = build_masked_context(clean, 2);

  Tensor x_in = assemble_denoiser_input(noise, ctx);
  CHECK(x_in.shape == Shape{5, 9, 3, 3});

  CHECK((slice_noise(x_in).data == noise.data).all());
  CHECK((slice_context(x_in).data == ctx.x_k.data).all());
  Eigen::ArrayXd mask = slice_mask(x_in);
  for (Index f = 0; f < 5; ++f) CHECK(mask[f] == ctx.mask[f]);

  // generation mode leaves the context channels all zero
  MaskedContext gen = build_masked_context(clean, 0);
  Tensor gen_in = assemble_denoiser_input(noise, gen);
  CHECK(slice_context(gen_in).max_abs() == 0.0);
  CHECK(slice_mask(gen_in).abs().maxCoeff() == 0.0);

  LatentClip wrong = Tensor::zeros({4, 4, 3, 3});
  CHECK_THROWS_AS(assemble_denoiser_input(wrong, ctx), ShapeError);
}
