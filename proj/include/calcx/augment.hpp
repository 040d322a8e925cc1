#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "calcx/image.hpp"
#include "calcx/manifest.hpp"
#include "calcx/rng.hpp"

namespace calcx {

// Sampling bounds for random transforms. Defaults are the full supported
// ranges; configs may narrow them (e.g. smaller translations for small
// patches) but never widen them.
struct TransformRanges {
  double translate_max = 32.0;  // dx, dy in [-translate_max, translate_max]
  double hflip_prob = 0.5;
  double angle_max = 18.0;  // degrees
  double aspect_min = 0.75, aspect_max = 1.25;
  double scale_min = 0.75, scale_max = 1.25;
};

void validate_ranges(const TransformRanges& r);

// Uniform draw inside each range. Draw order: dx, dy, hflip, angle, aspect,
// scale. The record's seed field is provenance only; apply_transform never
// reads it.
TransformRecord sample_transform(Rng& rng, const TransformRanges& r = {});

// Same, but the translation signs are forced into quadrant q (0..3:
// (+,+), (-,+), (-,-), (+,-)), so a factor-4 expansion shifts each source
// once toward every corner.
TransformRecord sample_transform_quadrant(Rng& rng, int quadrant,
                                          const TransformRanges& r = {});

// Applies translation, horizontal flip, rotation and aspect change as one
// inverse-mapped bilinear warp around the image center (edge replication for
// samples falling outside), then models resolution loss by resizing to
// scale x size and back. Square images only. Deterministic in the record.
Image apply_transform(const Image& img, const TransformRecord& t);

// Same warp on a mask: transformed as an image, re-binarized at 0.5.
Mask apply_transform_mask(const Mask& m, const TransformRecord& t);

// Emits `factor` transformed copies of every calcified pair in the given
// split (both images of a pair share one record; the record is stored in the
// new row). Originals pass through with paths rebased onto out_dir. Calcified
// rows without a refined image are skipped with a log line.
Manifest augment_calcified(const Manifest& manifest, int factor, std::uint64_t seed,
                           const std::filesystem::path& out_dir,
                           const TransformRanges& ranges = {},
                           const std::string& split = "train");

}  // namespace calcx
