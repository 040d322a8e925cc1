#pragma once

#include <filesystem>
#include <string>

#include "calcx/config.hpp"
#include "calcx/manifest.hpp"

namespace calcx {

// Content-addressed run directory layout: every stage writes only beneath
// <out>/<run-id>/, so runs with different configs never collide.
struct RunPaths {
  std::filesystem::path run_dir;
  std::filesystem::path dataset;
  std::filesystem::path inpaint;
  std::filesystem::path extract;
  std::filesystem::path augment;
  std::filesystem::path fusion;
  std::filesystem::path eval;
  std::filesystem::path replay;
};

// Creates the run directory and stores the resolved config snapshot.
RunPaths prepare_run(const RunConfig& cfg);

// Dataset consumed by the downstream stages: the run's own generated one, or
// an external directory named by run.data.
std::filesystem::path dataset_dir(const RunConfig& cfg, const RunPaths& paths);

Manifest stage_dataset(const RunConfig& cfg, const RunPaths& paths);
void stage_train_inpaint(const RunConfig& cfg, const RunPaths& paths);
Manifest stage_extract(const RunConfig& cfg, const RunPaths& paths);
Manifest stage_augment(const RunConfig& cfg, const RunPaths& paths);
// Returns a warning line (also printed to stderr) when training proceeds on
// imbalanced, unaugmented data; empty otherwise.
std::string stage_train_fusion(const RunConfig& cfg, const RunPaths& paths);
void stage_eval(const RunConfig& cfg, const RunPaths& paths);

// All stages in order; train-inpaint is skipped for the classical engine and
// augment is skipped when the factor is zero.
RunPaths run_all(const RunConfig& cfg);

struct ReplayResult {
  std::string id;
  bool matches = false;              // replayed bytes equal the stored ones
  std::filesystem::path out_dir;     // where the replayed images were written
};

// Re-applies a stored augmentation record to its source pair and verifies the
// stored outputs byte for byte.
ReplayResult replay_augmented(const RunConfig& cfg, const std::string& id);

}  // namespace calcx
