#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "calcx/image.hpp"
#include "calcx/inpaint.hpp"
#include "calcx/manifest.hpp"

namespace calcx {

// Every intermediate of the refinement chain, retained for inspection:
// inpainted reconstruction, positive difference, denoised difference, the
// thresholded region mask, and the final refined image.
struct ExtractionResult {
  Image inpainted;
  Image difference;
  Image denoised;
  Mask region_mask;
  Image refined;
  double threshold = 0.0;
};

// Fills the hole of a hole-zeroed patch and returns a full image. The caller
// composes the result, so pixels outside the hole never leak through.
using HoleFiller = std::function<Image(const Image& masked, const Mask& hole)>;

HoleFiller classical_filler();
HoleFiller trained_filler(InpaintGenerator gen);

// Runs the refinement chain on a nodule-centered patch: centered square hole
// of the given area fraction, inpaint, subtract, 5x5 Gaussian, Otsu on the
// denoised image, then intersect the difference with the Otsu mask. Stage
// failures are rethrown with the stage name prefixed.
ExtractionResult extract_refined(const Image& raw, const HoleFiller& fill,
                                 double mask_fraction = 0.20);

struct ExtractFailure {
  std::string id;
  std::string reason;
};

struct BatchExtractReport {
  std::size_t total = 0;
  std::vector<ExtractFailure> failures;
  // A batch with more than 10% per-sample failures is considered failed.
  bool failed() const { return failures.size() * 10 > total; }
};

// Extracts every manifest row that carries an image, writing refined patches
// under <out_dir>/refined/ (and stage strips under <out_dir>/debug/ when
// debug_stages is set). Per-sample failures are recorded and the batch
// continues; surviving rows are returned with refined paths filled in and a
// summary is written to <out_dir>/extract_summary.json.
Manifest batch_extract(const Manifest& manifest, const HoleFiller& fill,
                       const std::filesystem::path& out_dir, double mask_fraction,
                       bool debug_stages, BatchExtractReport* report = nullptr);

}  // namespace calcx
