#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>

#include "calcx/image.hpp"
#include "calcx/manifest.hpp"

namespace calcx {

enum class CalcPattern { none, diffuse, central, laminar, popcorn };

std::string to_string(CalcPattern p);
CalcPattern calc_pattern_from_string(const std::string& s);

struct NoduleSpec {
  double cx = 0.0;
  double cy = 0.0;
  double radius = 0.0;     // >= 2, disc fully inside the patch
  double contrast = 0.0;   // added intensity at the disc core
  CalcPattern pattern = CalcPattern::none;
  double calc_boost = 0.0;  // extra intensity of the calcification motif
};

struct PhantomSpec {
  std::uint64_t seed = 0;
  int patch_size = 64;  // >= 32
  int rib_count = 4;
  double rib_contrast = 0.12;
  bool spine_present = true;
  double noise_sigma = 0.02;
  std::optional<NoduleSpec> nodule;
};

struct GroundTruth {
  Mask nodule_mask;    // support of the rendered nodule contribution
  std::string label;   // normal|calcified|non_calcified
  Image clean_patch;   // same scene and noise realization, nodule omitted
};

// Deterministic chest-patch renderer: smooth background, oriented rib bands,
// an off-center spine column, an optional soft-edged nodule disc with a
// calcification motif, then additive Gaussian noise and clamping. The clean
// patch shares the scene and the noise realization, so patch and clean
// differ only inside the nodule mask.
std::pair<Image, GroundTruth> render(const PhantomSpec& spec);

// Brightness-signature oracles on the residue patch - clean. A calcified
// patch must satisfy its own pattern's signature; a non-calcified patch must
// fail the diffuse signature.
bool diffuse_signature(const Image& patch, const Image& clean, const NoduleGeometry& n);
bool pattern_signature_holds(const Image& patch, const Image& clean, const NoduleGeometry& n);

struct PhantomRanges {
  int patch_size = 64;
  int rib_count_min = 3, rib_count_max = 5;
  double rib_contrast_min = 0.08, rib_contrast_max = 0.15;
  double spine_prob = 0.7;
  double noise_sigma = 0.02;
  double radius_min = 6.0, radius_max = 11.0;
  double contrast_min = 0.12, contrast_max = 0.20;
  double boost_min = 0.12, boost_max = 0.24;
  double center_jitter = 2.0;  // nodule center jitter around the patch center
  double val_fraction = 0.2;
};

struct DatasetCounts {
  int n_normal = 0;
  int n_calcified = 0;
  int n_noncalcified = 0;
};

// Renders the requested patches under <out_root>/{images,masks,clean}/,
// writes manifest.jsonl with a deterministic per-class train/val split, and
// returns the manifest. Fully reproducible for a fixed seed.
Manifest build_dataset(const DatasetCounts& counts, const PhantomRanges& ranges,
                       std::uint64_t seed, const std::filesystem::path& out_root);

}  // namespace calcx
