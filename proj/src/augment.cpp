#include "calcx/augment.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "calcx/error.hpp"
#include "calcx/image_io.hpp"
#include "calcx/util.hpp"

namespace calcx {

namespace {

constexpr double kDegToRad = 3.14159265358979323846 / 180.0;

float sample_clamped(const Image& img, double sx, double sy) {
  const int wlim = img.width() - 1, hlim = img.height() - 1;
  sx = std::clamp(sx, 0.0, static_cast<double>(wlim));
  sy = std::clamp(sy, 0.0, static_cast<double>(hlim));
  const int x0 = static_cast<int>(sx), y0 = static_cast<int>(sy);
  const int x1 = std::min(x0 + 1, wlim), y1 = std::min(y0 + 1, hlim);
  const double fx = sx - x0, fy = sy - y0;
  const double top = (1.0 - fx) * img.at(x0, y0) + fx * img.at(x1, y0);
  const double bot = (1.0 - fx) * img.at(x0, y1) + fx * img.at(x1, y1);
  return static_cast<float>((1.0 - fy) * top + fy * bot);
}

}  // namespace

void validate_ranges(const TransformRanges& r) {
  if (r.translate_max < 0.0) throw ValueError("transform ranges: translate_max must be >= 0");
  if (r.hflip_prob < 0.0 || r.hflip_prob > 1.0)
    throw ValueError("transform ranges: hflip_prob must lie in [0, 1]");
  if (r.angle_max < 0.0) throw ValueError("transform ranges: angle_max must be >= 0");
  if (r.aspect_min <= 0.0 || r.aspect_max < r.aspect_min)
    throw ValueError("transform ranges: invalid aspect range");
  if (r.scale_min <= 0.0 || r.scale_max < r.scale_min)
    throw ValueError("transform ranges: invalid scale range");
}

TransformRecord sample_transform(Rng& rng, const TransformRanges& r) {
  validate_ranges(r);
  TransformRecord t;
  t.dx = rng.uniform(-r.translate_max, r.translate_max);
  t.dy = rng.uniform(-r.translate_max, r.translate_max);
  t.hflip = rng.bernoulli(r.hflip_prob);
  t.angle_deg = rng.uniform(-r.angle_max, r.angle_max);
  t.aspect = rng.uniform(r.aspect_min, r.aspect_max);
  t.scale = rng.uniform(r.scale_min, r.scale_max);
  return t;
}

TransformRecord sample_transform_quadrant(Rng& rng, int quadrant, const TransformRanges& r) {
  validate_ranges(r);
  if (quadrant < 0 || quadrant > 3)
    throw ValueError("sample_transform_quadrant: quadrant must be 0..3");
  const double sx = (quadrant == 1 || quadrant == 2) ? -1.0 : 1.0;
  const double sy = (quadrant == 2 || quadrant == 3) ? -1.0 : 1.0;
  TransformRecord t;
  t.dx = sx * rng.uniform(0.0, r.translate_max);
  t.dy = sy * rng.uniform(0.0, r.translate_max);
  t.hflip = rng.bernoulli(r.hflip_prob);
  t.angle_deg = rng.uniform(-r.angle_max, r.angle_max);
  t.aspect = rng.uniform(r.aspect_min, r.aspect_max);
  t.scale = rng.uniform(r.scale_min, r.scale_max);
  return t;
}

Image apply_transform(const Image& img, const TransformRecord& t) {
  if (img.width() != img.height())
    throw ShapeError("apply_transform: image must be square");
  if (img.width() < 1) throw ShapeError("apply_transform: empty image");
  const int n = img.width();
  const double c = 0.5 * (n - 1);

  // Forward map: p -> C + L(p + t - C) with L = Aspect * Rotation * Flip.
  // Output pixels sample the input at the inverse map.
  const double f = t.hflip ? -1.0 : 1.0;
  const double th = t.angle_deg * kDegToRad;
  const double cs = std::cos(th), sn = std::sin(th);
  const double a = t.aspect;
  const double l00 = a * cs * f, l01 = -a * sn;
  const double l10 = sn * f / a, l11 = cs / a;
  const double det = l00 * l11 - l01 * l10;
  if (std::abs(det) < 1e-12) throw ValueError("apply_transform: degenerate transform");
  const double i00 = l11 / det, i01 = -l01 / det;
  const double i10 = -l10 / det, i11 = l00 / det;

  Image geo(n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double qx = x - c, qy = y - c;
      const double sx = i00 * qx + i01 * qy + c - t.dx;
      const double sy = i10 * qx + i11 * qy + c - t.dy;
      geo.at(x, y) = sample_clamped(img, sx, sy);
    }

  if (t.scale == 1.0) return geo;
  const int small = std::max(1, static_cast<int>(std::llround(n * t.scale)));
  return resize_to(resize_to(geo, small, small), n, n);
}

Mask apply_transform_mask(const Mask& m, const TransformRecord& t) {
  Image img(m.width(), m.height());
  for (std::size_t i = 0; i < m.size(); ++i) img.data()[i] = m.bits()[i] ? 1.f : 0.f;
  const Image warped = apply_transform(img, t);
  Mask out(m.width(), m.height());
  for (std::size_t i = 0; i < out.size(); ++i) out.bits()[i] = warped.data()[i] > 0.5f ? 1 : 0;
  return out;
}

Manifest augment_calcified(const Manifest& manifest, int factor, std::uint64_t seed,
                           const std::filesystem::path& out_dir,
                           const TransformRanges& ranges, const std::string& split) {
  if (factor < 1) throw ValueError("augment: factor must be >= 1");
  validate_ranges(ranges);
  ensure_dir(out_dir / "images");
  ensure_dir(out_dir / "masks");
  ensure_dir(out_dir / "refined");

  Manifest out;
  out.root = out_dir;
  for (std::size_t ri = 0; ri < manifest.rows.size(); ++ri) {
    const ManifestRow& row = manifest.rows[ri];

    ManifestRow passthrough = row;
    passthrough.image = rebase_path(manifest.root, row.image, out_dir);
    if (!row.mask.empty()) passthrough.mask = rebase_path(manifest.root, row.mask, out_dir);
    if (!row.clean.empty()) passthrough.clean = rebase_path(manifest.root, row.clean, out_dir);
    if (!row.refined.empty())
      passthrough.refined = rebase_path(manifest.root, row.refined, out_dir);
    out.rows.push_back(std::move(passthrough));

    if (row.label != "calcified" || row.split != split) continue;
    if (row.refined.empty()) {
      std::cerr << "augment: skipping " << row.id << " (no refined image)\n";
      continue;
    }

    const Image raw = load_image(manifest.resolve(row.image));
    const Image refined = load_image(manifest.resolve(row.refined));
    const bool has_mask = !row.mask.empty();
    Mask mask;
    if (has_mask) mask = mask_from_image(load_image(manifest.resolve(row.mask)));

    for (int k = 0; k < factor; ++k) {
      const std::uint64_t rec_seed =
          derive_seed(derive_seed(seed, static_cast<std::uint64_t>(ri)),
                      static_cast<std::uint64_t>(k));
      Rng rng(rec_seed);
      TransformRecord rec = sample_transform_quadrant(rng, k % 4, ranges);
      rec.seed = rec_seed;

      const std::string id = row.id + "_aug" + std::to_string(k);
      const std::string image_rel = "images/" + id + ".png";
      const std::string refined_rel = "refined/" + id + ".png";
      save_png(apply_transform(raw, rec), out_dir / image_rel, 16);
      save_png(apply_transform(refined, rec), out_dir / refined_rel, 16);

      ManifestRow nrow;
      nrow.id = id;
      nrow.split = row.split;
      nrow.label = row.label;
      nrow.image = image_rel;
      nrow.refined = refined_rel;
      nrow.seed = rec_seed;
      nrow.transform = rec;
      if (has_mask) {
        const std::string mask_rel = "masks/" + id + ".png";
        save_png(mask_to_image(apply_transform_mask(mask, rec)), out_dir / mask_rel, 8);
        nrow.mask = mask_rel;
      }
      out.rows.push_back(std::move(nrow));
    }
  }

  out.save(out_dir / "manifest.jsonl");
  return out;
}

}  // namespace calcx
