#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "calcx/augment.hpp"
#include "calcx/fusion.hpp"
#include "calcx/inpaint.hpp"
#include "calcx/phantom.hpp"

namespace calcx {

// One run's resolved settings. Defaults are desk-scale: small enough to run
// end to end on one CPU core in minutes while preserving every pipeline
// property worth testing.
struct RunConfig {
  // [run]
  std::uint64_t seed = 1;
  std::string data;    // optional existing dataset dir; empty = generate
  std::string out = "out";
  std::string engine = "trained";  // trained | classical
  bool debug_stages = false;

  // [dataset]
  DatasetCounts counts{60, 30, 120};
  PhantomRanges ranges;

  // [inpaint]
  InpaintTrainConfig inpaint;

  // [fusion]
  FusionConfig fusion;

  // [augment]
  int augment_factor = 4;
  TransformRanges augment;

  RunConfig();
};

// Line-oriented `key = value` file with [section] headers and # comments.
// Unknown sections or keys, unparsable values, and invariant violations are
// all rejected with the offending field path.
RunConfig load_run_config(const std::filesystem::path& file);
RunConfig parse_run_config(const std::string& text, const std::string& origin);

// CALCX_<SECTION>__<KEY> environment variables override file values.
void apply_env_overrides(RunConfig& cfg);

void validate_run_config(const RunConfig& cfg);

// Resolved key = value text, stable ordering, every value round-trips
// through parse_run_config to an identical config.
std::string config_snapshot(const RunConfig& cfg);

// Content address of a run: digest of the resolved snapshot and the library
// version, truncated to 12 hex digits.
std::string run_id(const RunConfig& cfg);

}  // namespace calcx
