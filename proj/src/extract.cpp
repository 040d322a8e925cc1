#include "calcx/extract.hpp"

#include <memory>
#include <utility>

#include <json.hpp>

#include "calcx/error.hpp"
#include "calcx/image_io.hpp"
#include "calcx/util.hpp"

namespace calcx {

namespace {

// Rethrows stage failures with the stage name prefixed, preserving the type.
template <typename F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ShapeError& e) {
    throw ShapeError(std::string(name) + " stage: " + e.what());
  } catch (const ValueError& e) {
    throw ValueError(std::string(name) + " stage: " + e.what());
  } catch (const IoError& e) {
    throw IoError(std::string(name) + " stage: " + e.what());
  } catch (const NumericError& e) {
    throw NumericError(std::string(name) + " stage: " + e.what());
  }
}

Image zero_hole(const Image& img, const Mask& hole) {
  Image out = img;
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x)
      if (hole.at(x, y)) out.at(x, y) = 0.f;
  return out;
}

}  // namespace

HoleFiller classical_filler() {
  return [](const Image& masked, const Mask& hole) { return classical_inpaint(masked, hole); };
}

HoleFiller trained_filler(InpaintGenerator gen) {
  auto shared = std::make_shared<InpaintGenerator>(std::move(gen));
  return [shared](const Image& masked, const Mask&) { return shared->predict(masked); };
}

ExtractionResult extract_refined(const Image& raw, const HoleFiller& fill,
                                 double mask_fraction) {
  ExtractionResult res;
  const Mask hole = stage("mask", [&] {
    return centered_hole(raw.width(), raw.height(), mask_fraction);
  });
  res.inpainted = stage("inpaint", [&] {
    const Image filled = fill(zero_hole(raw, hole), hole);
    return compose_inpaint(raw, filled, hole);
  });
  res.difference = stage("subtract", [&] { return subtract(raw, res.inpainted); });
  res.denoised = stage("denoise", [&] { return gaussian5x5(res.difference); });
  stage("threshold", [&] {
    OtsuResult otsu = otsu_binarize(res.denoised, 256);
    res.region_mask = std::move(otsu.mask);
    res.threshold = otsu.threshold;
    return 0;
  });
  res.refined = stage("intersect", [&] { return intersect(res.difference, res.region_mask); });
  return res;
}

namespace {

Image stage_strip(const Image& raw, const ExtractionResult& r) {
  const Image mask_img = mask_to_image(r.region_mask);
  const Image* panels[6] = {&raw,         &r.inpainted,   &r.difference,
                            &r.denoised,  &mask_img,      &r.refined};
  const int gap = 2;
  const int w = raw.width(), h = raw.height();
  Image strip(6 * w + 5 * gap, h, 1.0f);
  for (int p = 0; p < 6; ++p) {
    const int x0 = p * (w + gap);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) strip.at(x0 + x, y) = panels[p]->at(x, y);
  }
  return strip;
}

}  // namespace

Manifest batch_extract(const Manifest& manifest, const HoleFiller& fill,
                       const std::filesystem::path& out_dir, double mask_fraction,
                       bool debug_stages, BatchExtractReport* report) {
  ensure_dir(out_dir / "refined");
  if (debug_stages) ensure_dir(out_dir / "debug");

  BatchExtractReport local;
  BatchExtractReport& rep = report ? *report : local;
  rep.total = manifest.rows.size();
  rep.failures.clear();

  Manifest out;
  out.root = out_dir;
  for (const ManifestRow& row : manifest.rows) {
    try {
      const Image raw = load_image(manifest.resolve(row.image));
      const ExtractionResult res = extract_refined(raw, fill, mask_fraction);
      const std::string refined_rel = "refined/" + row.id + ".png";
      save_png(res.refined, out_dir / refined_rel, 16);
      if (debug_stages)
        save_png(stage_strip(raw, res), out_dir / "debug" / (row.id + "_stages.png"), 8);

      ManifestRow nrow = row;
      nrow.image = rebase_path(manifest.root, row.image, out_dir);
      if (!row.mask.empty()) nrow.mask = rebase_path(manifest.root, row.mask, out_dir);
      if (!row.clean.empty()) nrow.clean = rebase_path(manifest.root, row.clean, out_dir);
      nrow.refined = refined_rel;
      out.rows.push_back(std::move(nrow));
    } catch (const std::exception& e) {
      rep.failures.push_back({row.id, e.what()});
    }
  }

  nlohmann::json summary;
  summary["total"] = rep.total;
  summary["succeeded"] = rep.total - rep.failures.size();
  summary["failed"] = rep.failures.size();
  summary["status"] = rep.failed() ? "failed" : "ok";
  nlohmann::json fails = nlohmann::json::array();
  for (const ExtractFailure& f : rep.failures)
    fails.push_back({{"id", f.id}, {"reason", f.reason}});
  summary["failures"] = fails;
  write_text_file(out_dir / "extract_summary.json", summary.dump(2) + "\n");

  out.save(out_dir / "manifest.jsonl");
  return out;
}

}  // namespace calcx
