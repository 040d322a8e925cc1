#include "calcx/pipeline.hpp"

#include <iostream>
#include <utility>

#include "calcx/augment.hpp"
#include "calcx/checkpoint.hpp"
#include "calcx/error.hpp"
#include "calcx/extract.hpp"
#include "calcx/fusion.hpp"
#include "calcx/image_io.hpp"
#include "calcx/inpaint.hpp"
#include "calcx/metrics.hpp"
#include "calcx/phantom.hpp"
#include "calcx/rng.hpp"
#include "calcx/util.hpp"

namespace calcx {

namespace {

// Stage seed streams, fanned out from the run seed.
constexpr std::uint64_t kDatasetStream = 40;
constexpr std::uint64_t kInpaintStream = 41;
constexpr std::uint64_t kFusionStream = 42;
constexpr std::uint64_t kAugmentStream = 43;

Manifest load_stage_manifest(const std::filesystem::path& dir, const char* producer) {
  const std::filesystem::path file = dir / "manifest.jsonl";
  if (!std::filesystem::exists(file))
    throw IoError("no manifest at " + file.string() + "; produce it with the " +
                  std::string(producer) + " command");
  return Manifest::load(file);
}

// The manifest fusion training and evaluation read: augmented when present,
// otherwise the extraction output.
Manifest load_fusion_input(const RunPaths& paths, bool* augmented = nullptr) {
  if (std::filesystem::exists(paths.augment / "manifest.jsonl")) {
    if (augmented) *augmented = true;
    return Manifest::load(paths.augment / "manifest.jsonl");
  }
  if (augmented) *augmented = false;
  return load_stage_manifest(paths.extract, "extract");
}

std::string manifest_digest(const std::filesystem::path& dir) {
  return sha256_file(dir / "manifest.jsonl");
}

// Rethrows stage failures with the producing command's name prefixed,
// preserving the error category.
template <class F>
void named_stage(const char* name, F&& f) {
  const auto tag = [&](const std::exception& e) {
    return "stage " + std::string(name) + ": " + e.what();
  };
  try {
    f();
  } catch (const ShapeError& e) {
    throw ShapeError(tag(e));
  } catch (const ValueError& e) {
    throw ValueError(tag(e));
  } catch (const IoError& e) {
    throw IoError(tag(e));
  } catch (const NumericError& e) {
    throw NumericError(tag(e));
  }
}

}  // namespace

RunPaths prepare_run(const RunConfig& cfg) {
  validate_run_config(cfg);
  RunPaths p;
  p.run_dir = std::filesystem::path(cfg.out) / run_id(cfg);
  p.dataset = p.run_dir / "dataset";
  p.inpaint = p.run_dir / "inpaint";
  p.extract = p.run_dir / "extract";
  p.augment = p.run_dir / "augment";
  p.fusion = p.run_dir / "fusion";
  p.eval = p.run_dir / "eval";
  p.replay = p.run_dir / "replay";
  ensure_dir(p.run_dir);
  write_text_file(p.run_dir / "config.snapshot", config_snapshot(cfg));
  return p;
}

std::filesystem::path dataset_dir(const RunConfig& cfg, const RunPaths& paths) {
  return cfg.data.empty() ? paths.dataset : std::filesystem::path(cfg.data);
}

Manifest stage_dataset(const RunConfig& cfg, const RunPaths& paths) {
  return build_dataset(cfg.counts, cfg.ranges, derive_seed(cfg.seed, kDatasetStream),
                       paths.dataset);
}

void stage_train_inpaint(const RunConfig& cfg, const RunPaths& paths) {
  const std::filesystem::path data = dataset_dir(cfg, paths);
  const Manifest manifest = load_stage_manifest(data, "phantom-gen");
  InpaintTrainConfig tc = cfg.inpaint;
  tc.seed = derive_seed(cfg.seed, kInpaintStream);
  ensure_dir(paths.inpaint);
  const InpaintTrainResult result =
      train_inpainter(manifest, tc, paths.inpaint / "train_log.csv");
  Checkpoint ck = inpaint_checkpoint(result, tc, manifest_digest(data));
  ck.save(paths.inpaint / "checkpoint.bin");
}

Manifest stage_extract(const RunConfig& cfg, const RunPaths& paths) {
  const std::filesystem::path data = dataset_dir(cfg, paths);
  const Manifest manifest = load_stage_manifest(data, "phantom-gen");

  HoleFiller fill;
  if (cfg.engine == "classical") {
    fill = classical_filler();
  } else {
    const std::filesystem::path ck_file = paths.inpaint / "checkpoint.bin";
    if (!std::filesystem::exists(ck_file))
      throw IoError("no inpainter checkpoint at " + ck_file.string() +
                    "; produce it with the train-inpaint command or pick --engine classical");
    const Checkpoint ck = Checkpoint::load(ck_file);
    if (ck.manifest_digest != manifest_digest(data))
      throw IoError("inpainter checkpoint was trained on a different dataset; re-run the "
                    "train-inpaint command");
    fill = trained_filler(load_inpainter(ck).first);
  }

  BatchExtractReport report;
  Manifest out = batch_extract(manifest, fill, paths.extract, cfg.inpaint.mask_fraction,
                               cfg.debug_stages, &report);
  if (report.failed())
    throw NumericError("extraction failed on " + std::to_string(report.failures.size()) +
                       " of " + std::to_string(report.total) + " patches");
  return out;
}

Manifest stage_augment(const RunConfig& cfg, const RunPaths& paths) {
  const Manifest manifest = load_stage_manifest(paths.extract, "extract");
  return augment_calcified(manifest, cfg.augment_factor,
                           derive_seed(cfg.seed, kAugmentStream), paths.augment,
                           cfg.augment, "train");
}

std::string stage_train_fusion(const RunConfig& cfg, const RunPaths& paths) {
  bool augmented = false;
  const Manifest manifest = load_fusion_input(paths, &augmented);

  std::string warning;
  const double ratio = imbalance_ratio(manifest, "train");
  if (!augmented && ratio > 1.5) {
    warning = "warning: training on unaugmented data with class imbalance " +
              format_number(ratio) +
              ":1; the augment command expands the minority class to rebalance";
    std::cerr << warning << "\n";
  }

  FusionConfig fc = cfg.fusion;
  fc.seed = derive_seed(cfg.seed, kFusionStream);
  ensure_dir(paths.fusion);
  FusionTrainResult result = train_fusion(manifest, fc, paths.fusion / "train_log.csv");
  const std::filesystem::path src =
      augmented ? paths.augment / "manifest.jsonl" : paths.extract / "manifest.jsonl";
  Checkpoint ck = fusion_checkpoint(result.model, fc.seed, sha256_file(src));
  ck.save(paths.fusion / "checkpoint.bin");
  return warning;
}

void stage_eval(const RunConfig& cfg, const RunPaths& paths) {
  const std::filesystem::path ck_file = paths.fusion / "checkpoint.bin";
  if (!std::filesystem::exists(ck_file))
    throw IoError("no fusion checkpoint at " + ck_file.string() +
                  "; produce it with the train-fusion command");
  const FusionModel model = load_fusion(Checkpoint::load(ck_file));
  const Manifest manifest = load_fusion_input(paths);

  const std::vector<ScoredSample> scored = score_manifest(model, manifest, "val");
  if (scored.empty()) throw ValueError("eval: no labelled val rows to score");

  std::vector<std::pair<double, int>> fused, raw, refined;
  std::vector<std::vector<std::string>> score_rows;
  for (const ScoredSample& s : scored) {
    fused.emplace_back(s.p_fused, s.label);
    raw.emplace_back(s.p_raw, s.label);
    refined.emplace_back(s.p_refined, s.label);
    score_rows.push_back({s.id, std::to_string(s.label), format_number(s.p_raw),
                          format_number(s.p_refined), format_number(s.p_fused)});
  }
  ensure_dir(paths.eval);
  write_csv(paths.eval / "scores.csv", "scores-v1",
            {"id", "label", "p_raw", "p_refined", "p_fused"}, score_rows);

  const EvalReport rep_fused = evaluate(fused);
  const EvalReport rep_raw = evaluate(raw);
  const EvalReport rep_refined = evaluate(refined);
  emit_report(rep_fused, paths.eval);  // headline artifact set, fused model
  emit_report(rep_raw, paths.eval, "raw");
  emit_report(rep_refined, paths.eval, "refined");
  emit_comparison({{"fused", &rep_fused}, {"raw", &rep_raw}, {"refined", &rep_refined}},
                  paths.eval);
}

RunPaths run_all(const RunConfig& cfg) {
  const RunPaths paths = prepare_run(cfg);
  if (cfg.data.empty())
    named_stage("phantom-gen", [&] { stage_dataset(cfg, paths); });
  if (cfg.engine == "trained")
    named_stage("train-inpaint", [&] { stage_train_inpaint(cfg, paths); });
  named_stage("extract", [&] { stage_extract(cfg, paths); });
  if (cfg.augment_factor > 0)
    named_stage("augment", [&] { stage_augment(cfg, paths); });
  named_stage("train-fusion", [&] { stage_train_fusion(cfg, paths); });
  named_stage("eval", [&] { stage_eval(cfg, paths); });
  return paths;
}

ReplayResult replay_augmented(const RunConfig& cfg, const std::string& id) {
  const RunPaths paths = prepare_run(cfg);
  const Manifest manifest = load_stage_manifest(paths.augment, "augment");
  const ManifestRow* row = manifest.find(id);
  if (!row) throw ValueError("replay: no row '" + id + "' in the augment manifest");
  if (!row->transform)
    throw ValueError("replay: row '" + id + "' carries no transform record");

  const std::size_t cut = id.rfind("_aug");
  if (cut == std::string::npos)
    throw ValueError("replay: id '" + id + "' does not name an augmented copy");
  const std::string base_id = id.substr(0, cut);
  const ManifestRow* base = manifest.find(base_id);
  if (!base)
    throw ValueError("replay: source row '" + base_id + "' missing from the manifest");

  ReplayResult result;
  result.id = id;
  result.out_dir = paths.replay / id;
  ensure_dir(result.out_dir);

  const TransformRecord& t = *row->transform;
  bool all_equal = true;
  const auto replay_one = [&](const std::string& src_rel, const std::string& stored_rel,
                              const std::string& name, bool is_mask) {
    const std::filesystem::path out = result.out_dir / name;
    if (is_mask) {
      const Mask m = mask_from_image(load_image(manifest.resolve(src_rel)));
      save_png(mask_to_image(apply_transform_mask(m, t)), out, 8);
    } else {
      save_png(apply_transform(load_image(manifest.resolve(src_rel)), t), out, 16);
    }
    if (sha256_file(out) != sha256_file(manifest.resolve(stored_rel))) all_equal = false;
  };
  replay_one(base->image, row->image, "image.png", false);
  if (!base->refined.empty() && !row->refined.empty())
    replay_one(base->refined, row->refined, "refined.png", false);
  if (!base->mask.empty() && !row->mask.empty())
    replay_one(base->mask, row->mask, "mask.png", true);

  result.matches = all_equal;
  return result;
}

}  // namespace calcx
