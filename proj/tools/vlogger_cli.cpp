// Command-line surface: stage commands over one config file.
#include <iostream>

#include <CLI11.hpp>

#include "vlogger/pipeline.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitBackend = 3;
constexpr int kExitNumerical = 4;

struct CliOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<vlogger::Index> k;
  std::optional<double> guidance;
  std::optional<vlogger::Index> steps;
  std::optional<vlogger::Index> workers;
  std::optional<std::string> out;
};

vlogger::PipelineConfig resolve(const CliOptions& opt) {
  vlogger::PipelineConfig cfg = vlogger::load_pipeline_config(opt.config_path);
  if (opt.seed) {
    cfg.seed = *opt.seed;
    cfg.train.seed = *opt.seed;
  }
  if (opt.k) cfg.k = *opt.k;
  if (opt.guidance) cfg.guidance_scale = *opt.guidance;
  if (opt.steps) {
    cfg.sampler_steps = *opt.steps;
    cfg.train.steps = *opt.steps;
  }
  if (opt.workers) cfg.workers = *opt.workers;
  if (opt.out) cfg.out_dir = *opt.out;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vlogger: plan, shoot, voice, and assemble story vlogs"};
  app.require_subcommand(1);

  CliOptions opt;
  app.add_option("--config", opt.config_path, "pipeline config JSON")
      ->required();
  app.add_option("--seed", opt.seed, "override the global seed");
  app.add_option("--k", opt.k, "context overlap for prediction mode");
  app.add_option("--guidance", opt.guidance, "classifier-free guidance scale");
  app.add_option("--steps", opt.steps, "sampler steps (train: step count)");
  app.add_option("--workers", opt.workers, "parallel scenes during shoot");
  app.add_option("--out", opt.out, "output directory override");

  auto* cmd_plan = app.add_subcommand("plan", "write script.json");
  auto* cmd_actors = app.add_subcommand("actors", "actors + protagonists");
  auto* cmd_shoot = app.add_subcommand("shoot", "sample scene frames");
  auto* cmd_voice = app.add_subcommand("voice", "synthesize narration");
  auto* cmd_assemble = app.add_subcommand("assemble", "write the manifest");
  auto* cmd_train = app.add_subcommand("train", "train the toy model");
  auto* cmd_eval = app.add_subcommand("eval", "metrics over shot scenes");
  auto* cmd_run = app.add_subcommand("run", "full pipeline");
  // let `vlogger train --config x` work as well as `vlogger --config x train`
  for (CLI::App* sub : app.get_subcommands([](const CLI::App*) { return true; }))
    sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    vlogger::PipelineConfig cfg = resolve(opt);
    if (cmd_plan->parsed()) vlogger::stage_plan(cfg);
    if (cmd_actors->parsed()) vlogger::stage_actors(cfg);
    if (cmd_shoot->parsed()) vlogger::stage_shoot(cfg);
    if (cmd_voice->parsed()) vlogger::stage_voice(cfg);
    if (cmd_assemble->parsed()) {
      vlogger::VlogManifest m = vlogger::stage_assemble(cfg);
      std::cout << "scenes: " << m.scenes.size()
                << " total_duration_s: " << m.total_duration_s << "\n";
    }
    if (cmd_train->parsed()) vlogger::stage_train(cfg);
    if (cmd_eval->parsed()) vlogger::stage_eval(cfg);
    if (cmd_run->parsed()) {
      vlogger::VlogManifest m = vlogger::run_pipeline(cfg);
      std::cout << "scenes: " << m.scenes.size()
                << " total_duration_s: " << m.total_duration_s
                << " digest: " << vlogger::output_digest(cfg.out_dir) << "\n";
    }
  } catch (const vlogger::TransportError& e) {
    std::cerr << "backend error: " << e.what() << "\n";
    return kExitBackend;
  } catch (const vlogger::EmptyReply& e) {
    std::cerr << "backend error: " << e.what() << "\n";
    return kExitBackend;
  } catch (const vlogger::NonFiniteError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const vlogger::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  return 0;
}
