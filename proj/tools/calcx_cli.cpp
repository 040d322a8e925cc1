// calcx: synthetic chest-patch calcification pipeline driver.
//
// Every invocation resolves a config (defaults, then file, then environment,
// then flags), derives the content-addressed run directory from it, and runs
// one stage or the whole chain inside that directory.
#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>

#include "CLI11.hpp"
#include "calcx.h"

namespace {

struct ConfigDeleter {
  void operator()(cx_config* c) const { cx_config_free(c); }
};
using ConfigPtr = std::unique_ptr<cx_config, ConfigDeleter>;

struct StringDeleter {
  void operator()(char* s) const { cx_string_free(s); }
};
using StringPtr = std::unique_ptr<char, StringDeleter>;

int fail(const std::string& what) {
  std::fprintf(stderr, "error: %s: %s\n", what.c_str(), cx_last_error());
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"synthetic chest-patch calcification pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", cx_version());

  std::string config_path, out_dir, engine, replay_id;
  std::uint64_t seed = 0;
  bool debug_stages = false;

  auto* opt_config =
      app.add_option("--config", config_path, "config file with [section] key = value lines");
  auto* opt_seed = app.add_option("--seed", seed, "override the run seed");
  auto* opt_out = app.add_option("--out", out_dir, "override the output root directory");
  auto* opt_engine =
      app.add_option("--engine", engine, "inpainting engine: trained | classical");
  auto* opt_debug = app.add_flag("--debug-stages", debug_stages,
                                 "store per-stage strips while extracting");

  const char* stage_names[] = {"phantom-gen", "train-inpaint", "extract",
                               "augment",     "train-fusion",  "eval"};
  const char* stage_help[] = {
      "render the synthetic dataset with ground truth",
      "train the inpainting network on lesion-free patches",
      "produce refined nodule patches (inpaint, subtract, denoise, threshold)",
      "expand the calcified training split with recorded transforms",
      "train the dual-branch fusion classifier",
      "score the validation split and emit metrics, ROC tables and plots",
  };
  CLI::App* stage_cmds[6];
  for (int i = 0; i < 6; ++i) stage_cmds[i] = app.add_subcommand(stage_names[i], stage_help[i]);

  auto* cmd_run_all = app.add_subcommand("run-all", "run every stage in order");
  auto* cmd_replay =
      app.add_subcommand("replay", "re-apply a stored augmentation record and verify bytes");
  cmd_replay->add_option("--id", replay_id, "augmented row id, e.g. calc_00012_aug2")
      ->required();

  CLI11_PARSE(app, argc, argv);

  ConfigPtr cfg(config_path.empty() ? cx_config_default()
                                    : cx_config_load(config_path.c_str()));
  if (!cfg) return fail("config");
  if (opt_seed->count() && cx_config_set_seed(cfg.get(), seed) != CX_OK)
    return fail("config");
  if (opt_out->count() && cx_config_set_out(cfg.get(), out_dir.c_str()) != CX_OK)
    return fail("config");
  if (opt_engine->count() && cx_config_set_engine(cfg.get(), engine.c_str()) != CX_OK)
    return fail("config");
  if (opt_debug->count() && cx_config_set_debug_stages(cfg.get(), 1) != CX_OK)
    return fail("config");
  if (cx_config_validate(cfg.get()) != CX_OK) return fail("config");

  const StringPtr run_id(cx_config_run_id(cfg.get()));
  const StringPtr run_dir(cx_config_run_dir(cfg.get()));
  if (!run_id || !run_dir) return fail("config");
  std::printf("run %s\ndir %s\n", run_id.get(), run_dir.get());

  if (cmd_run_all->parsed()) {
    if (cx_run_all(cfg.get()) != CX_OK) return fail("run-all");
    std::printf("ok: run-all\n");
    return 0;
  }
  if (cmd_replay->parsed()) {
    int matches = 0;
    if (cx_replay(cfg.get(), replay_id.c_str(), &matches) != CX_OK) return fail("replay");
    if (!matches) {
      std::fprintf(stderr, "replay %s: stored bytes differ\n", replay_id.c_str());
      return 1;
    }
    std::printf("replay %s: byte-identical\n", replay_id.c_str());
    return 0;
  }
  for (int i = 0; i < 6; ++i) {
    if (!stage_cmds[i]->parsed()) continue;
    if (cx_run_stage(cfg.get(), stage_names[i]) != CX_OK)
      return fail(std::string("stage ") + stage_names[i]);
    std::printf("ok: %s\n", stage_names[i]);
    return 0;
  }
  return 0;
}
