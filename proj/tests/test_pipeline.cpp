#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "calcx/checkpoint.hpp"
#include "calcx/config.hpp"
#include "calcx/error.hpp"
#include "calcx/inpaint.hpp"
#include "calcx/manifest.hpp"
#include "calcx/phantom.hpp"
#include "calcx/pipeline.hpp"
#include "calcx/rng.hpp"
#include "calcx/util.hpp"
#include "doctest.h"

using namespace calcx;

namespace {

std::filesystem::path temp_dir(const char* name) {
  const std::filesystem::path p = std::filesystem::temp_directory_path() / "calcx_tests" / name;
  std::filesystem::create_directories(p);
  return p;
}

std::filesystem::path fresh_dir(const char* name) {
  const std::filesystem::path p = std::filesystem::temp_directory_path() / "calcx_tests" / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// Seconds-scale end-to-end settings: tiny corpus, small patches, two epochs.
RunConfig micro_config(const std::filesystem::path& out, std::uint64_t seed = 7) {
  RunConfig cfg;
  cfg.seed = seed;
  cfg.out = out.string();
  cfg.engine = "classical";
  cfg.counts = {6, 4, 6};
  cfg.ranges.patch_size = 32;
  cfg.ranges.radius_min = 4.0;
  cfg.ranges.radius_max = 6.0;
  cfg.ranges.center_jitter = 1.0;
  cfg.ranges.val_fraction = 0.25;
  cfg.inpaint.input_size = 32;
  cfg.fusion.input_size = 32;
  cfg.fusion.channels = {4, 8};
  cfg.fusion.epochs = 2;
  cfg.fusion.batch = 4;
  cfg.fusion.lr = 1e-3;
  cfg.augment_factor = 2;
  cfg.augment.translate_max = 3.0;
  cfg.augment.angle_max = 10.0;
  return cfg;
}

template <class E, class F>
std::string expect_error(F&& f) {
  try {
    f();
    FAIL("expected an exception");
  } catch (const E& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("run-all lays out the full artifact tree") {
  const auto out = fresh_dir("pipeline_all");
  const RunConfig cfg = micro_config(out);
  const RunPaths paths = run_all(cfg);

  CHECK(paths.run_dir == out / run_id(cfg));
  CHECK(read_bytes(paths.run_dir / "config.snapshot") == config_snapshot(cfg));

  CHECK(std::filesystem::exists(paths.dataset / "manifest.jsonl"));
  CHECK(std::filesystem::exists(paths.extract / "manifest.jsonl"));
  CHECK(std::filesystem::exists(paths.augment / "manifest.jsonl"));
  CHECK(std::filesystem::exists(paths.fusion / "checkpoint.bin"));
  CHECK(std::filesystem::exists(paths.fusion / "train_log.csv"));

  // The classical engine never trains an inpainter.
  CHECK(!std::filesystem::exists(paths.inpaint / "checkpoint.bin"));

  // Eval emits the fused artifact set plus prefixed per-branch copies and the
  // overlaid comparison.
  for (const char* name :
       {"scores.csv", "metrics.csv", "roc.csv", "confusion.csv", "roc.png", "raw_metrics.csv",
        "raw_roc.csv", "raw_confusion.csv", "raw_roc.png", "refined_metrics.csv",
        "refined_roc.csv", "refined_confusion.csv", "refined_roc.png", "roc_comparison.csv",
        "roc_comparison.png"}) {
    CAPTURE(name);
    CHECK(std::filesystem::exists(paths.eval / name));
  }

  // The augment stage expanded every calcified training row.
  const Manifest aug = Manifest::load(paths.augment / "manifest.jsonl");
  const Manifest data = Manifest::load(paths.dataset / "manifest.jsonl");
  const std::size_t train_calc = data.select("calcified", "train").size();
  CHECK(aug.rows.size() == data.rows.size() + 2 * train_calc);

  SUBCASE("stored augmentations replay byte for byte") {
    const ManifestRow* row = nullptr;
    for (const auto& r : aug.rows)
      if (r.transform.has_value()) {
        row = &r;
        break;
      }
    REQUIRE(row != nullptr);
    const ReplayResult res = replay_augmented(cfg, row->id);
    CHECK(res.id == row->id);
    CHECK(res.matches);
    CHECK(std::filesystem::exists(res.out_dir / "image.png"));

    CHECK(expect_error<ValueError>([&] { replay_augmented(cfg, "no_such_row"); })
              .find("no row") != std::string::npos);
    // Passthrough rows carry no transform record to replay.
    CHECK(expect_error<ValueError>([&] {
            replay_augmented(cfg, aug.rows.front().id);
          }).find("transform record") != std::string::npos);
  }
}

TEST_CASE("identical configs in different roots produce identical reports") {
  const auto out_a = fresh_dir("pipeline_rep_a");
  const auto out_b = fresh_dir("pipeline_rep_b");
  RunConfig a = micro_config(out_a, 19);
  RunConfig b = micro_config(out_b, 19);

  const RunPaths pa = run_all(a);
  const RunPaths pb = run_all(b);

  CHECK(read_bytes(pa.dataset / "manifest.jsonl") == read_bytes(pb.dataset / "manifest.jsonl"));
  CHECK(read_bytes(pa.eval / "scores.csv") == read_bytes(pb.eval / "scores.csv"));
  CHECK(read_bytes(pa.eval / "metrics.csv") == read_bytes(pb.eval / "metrics.csv"));
  CHECK(read_bytes(pa.eval / "roc.csv") == read_bytes(pb.eval / "roc.csv"));

  // A different seed changes the dataset.
  RunConfig c = micro_config(fresh_dir("pipeline_rep_c"), 20);
  const RunPaths pc = run_all(c);
  CHECK(read_bytes(pa.dataset / "manifest.jsonl") != read_bytes(pc.dataset / "manifest.jsonl"));
}

TEST_CASE("an existing dataset directory substitutes for generation") {
  const auto data_root = fresh_dir("pipeline_data_src");
  RunConfig gen = micro_config(fresh_dir("pipeline_data_gen"), 23);
  build_dataset(gen.counts, gen.ranges, 555, data_root);

  RunConfig cfg = micro_config(fresh_dir("pipeline_data_out"), 23);
  cfg.data = data_root.string();
  const RunPaths paths = run_all(cfg);
  CHECK(dataset_dir(cfg, paths) == data_root);
  CHECK(!std::filesystem::exists(paths.dataset / "manifest.jsonl"));
  CHECK(std::filesystem::exists(paths.extract / "manifest.jsonl"));
  CHECK(std::filesystem::exists(paths.eval / "metrics.csv"));
}

TEST_CASE("missing upstream artifacts name the producing command") {
  const auto out = fresh_dir("pipeline_missing");
  RunConfig cfg = micro_config(out);
  const RunPaths paths = prepare_run(cfg);

  CHECK(expect_error<IoError>([&] { stage_extract(cfg, paths); })
            .find("produce it with the phantom-gen command") != std::string::npos);
  CHECK(expect_error<IoError>([&] { stage_augment(cfg, paths); })
            .find("produce it with the extract command") != std::string::npos);
  CHECK(expect_error<IoError>([&] { stage_train_fusion(cfg, paths); })
            .find("produce it with the extract command") != std::string::npos);
  CHECK(expect_error<IoError>([&] { stage_eval(cfg, paths); })
            .find("produce it with the train-fusion command") != std::string::npos);
  CHECK(expect_error<IoError>([&] { replay_augmented(cfg, "x_aug0"); })
            .find("produce it with the augment command") != std::string::npos);

  // The trained engine additionally needs an inpainter checkpoint.
  stage_dataset(cfg, paths);
  cfg.engine = "trained";
  const std::string msg = expect_error<IoError>([&] { stage_extract(cfg, paths); });
  CHECK(msg.find("train-inpaint command") != std::string::npos);
  CHECK(msg.find("--engine classical") != std::string::npos);
}

TEST_CASE("run-all failures carry the stage name") {
  const auto out = fresh_dir("pipeline_stagename");
  RunConfig cfg = micro_config(out);
  cfg.data = (out / "nowhere").string();  // skips generation, breaks extract
  const std::string msg = expect_error<IoError>([&] { run_all(cfg); });
  CHECK(msg.find("stage extract: ") == 0);
  CHECK(msg.find("phantom-gen") != std::string::npos);
}

TEST_CASE("a stale inpainter checkpoint is rejected until retrained") {
  const auto out = fresh_dir("pipeline_stale");
  RunConfig cfg = micro_config(out, 11);
  cfg.engine = "trained";
  cfg.inpaint.arch.enc_channels = {4, 8};
  cfg.inpaint.arch.enc_strides = {1, 2};
  cfg.inpaint.disc_channels = {4, 8};
  cfg.inpaint.iterations = 4;
  cfg.inpaint.batch = 2;

  const RunPaths paths = prepare_run(cfg);
  stage_dataset(cfg, paths);
  const Manifest data = Manifest::load(paths.dataset / "manifest.jsonl");

  InpaintTrainConfig tc = cfg.inpaint;
  tc.seed = 99;
  const InpaintTrainResult trained = train_inpainter(data, tc);
  ensure_dir(paths.inpaint);

  // Digest mismatch: the checkpoint belongs to some other dataset.
  inpaint_checkpoint(trained, tc, "0000dead").save(paths.inpaint / "checkpoint.bin");
  const std::string msg = expect_error<IoError>([&] { stage_extract(cfg, paths); });
  CHECK(msg.find("different dataset") != std::string::npos);
  CHECK(msg.find("train-inpaint") != std::string::npos);

  // Matching digest: extraction proceeds with the trained engine.
  inpaint_checkpoint(trained, tc, sha256_file(paths.dataset / "manifest.jsonl"))
      .save(paths.inpaint / "checkpoint.bin");
  const Manifest extracted = stage_extract(cfg, paths);
  CHECK(extracted.rows.size() == data.rows.size());
  CHECK(std::filesystem::exists(paths.extract / "manifest.jsonl"));
}

TEST_CASE("unaugmented imbalanced training warns and names the fix") {
  const auto out = fresh_dir("pipeline_warn");
  RunConfig cfg = micro_config(out, 13);
  cfg.counts = {2, 2, 8};
  cfg.augment_factor = 0;

  const RunPaths paths = prepare_run(cfg);
  stage_dataset(cfg, paths);
  stage_extract(cfg, paths);
  const std::string warning = stage_train_fusion(cfg, paths);
  CHECK(warning.find("class imbalance") != std::string::npos);
  CHECK(warning.find("6:1") != std::string::npos);
  CHECK(warning.find("augment command") != std::string::npos);

  // Balanced data trains silently.
  const auto out2 = fresh_dir("pipeline_nowarn");
  RunConfig quiet = micro_config(out2, 13);
  quiet.augment_factor = 0;
  const RunPaths qp = prepare_run(quiet);
  stage_dataset(quiet, qp);
  stage_extract(quiet, qp);
  CHECK(stage_train_fusion(quiet, qp).empty());
}
}
