#include "calcx/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <vector>

#include "calcx/error.hpp"
#include "calcx/image_io.hpp"
#include "calcx/rng.hpp"
#include "calcx/util.hpp"

namespace calcx {

namespace {

constexpr double kPi = 3.14159265358979323846;

double sq(double v) { return v * v; }

// cos^2 falloff over [0, halfwidth), zero beyond.
double band(double dist, double halfwidth) {
  if (dist >= halfwidth) return 0.0;
  const double c = std::cos(0.5 * kPi * dist / halfwidth);
  return c * c;
}

struct Blob {
  double x, y, radius;
};

void validate(const PhantomSpec& spec) {
  if (spec.patch_size < 32) throw ValueError("phantom: patch_size must be >= 32");
  if (spec.rib_count < 0) throw ValueError("phantom: rib_count must be >= 0");
  if (spec.rib_contrast < 0.0 || spec.rib_contrast > 1.0)
    throw ValueError("phantom: rib_contrast must lie in [0, 1]");
  if (spec.noise_sigma < 0.0) throw ValueError("phantom: noise_sigma must be >= 0");
  if (!spec.nodule) return;
  const NoduleSpec& n = *spec.nodule;
  if (n.radius < 2.0) throw ValueError("phantom: nodule radius must be >= 2");
  if (n.contrast <= 0.0) throw ValueError("phantom: nodule contrast must be > 0");
  const double lim = static_cast<double>(spec.patch_size - 1);
  if (n.cx - n.radius < 0.0 || n.cx + n.radius > lim || n.cy - n.radius < 0.0 ||
      n.cy + n.radius > lim)
    throw ValueError("phantom: nodule disc must lie fully inside the patch");
  if (n.pattern != CalcPattern::none && n.calc_boost <= 0.0)
    throw ValueError("phantom: calcified patterns need calc_boost > 0");
}

}  // namespace

std::string to_string(CalcPattern p) {
  switch (p) {
    case CalcPattern::none: return "none";
    case CalcPattern::diffuse: return "diffuse";
    case CalcPattern::central: return "central";
    case CalcPattern::laminar: return "laminar";
    case CalcPattern::popcorn: return "popcorn";
  }
  throw ValueError("phantom: unknown pattern value");
}

CalcPattern calc_pattern_from_string(const std::string& s) {
  if (s == "none") return CalcPattern::none;
  if (s == "diffuse") return CalcPattern::diffuse;
  if (s == "central") return CalcPattern::central;
  if (s == "laminar") return CalcPattern::laminar;
  if (s == "popcorn") return CalcPattern::popcorn;
  throw ValueError("phantom: unknown pattern name '" + s + "'");
}

std::pair<Image, GroundTruth> render(const PhantomSpec& spec) {
  validate(spec);
  const int size = spec.patch_size;
  const double w = static_cast<double>(size);

  // Three independent streams so toggling the nodule never shifts the scene
  // or the noise realization.
  Rng scene_rng(derive_seed(spec.seed, 0));
  Rng noise_rng(derive_seed(spec.seed, 1));
  Rng pattern_rng(derive_seed(spec.seed, 2));

  std::vector<double> scene(static_cast<std::size_t>(size) * size, 0.0);

  const double base = scene_rng.uniform(0.20, 0.32);
  const double grad_x = scene_rng.uniform(-0.06, 0.06);
  const double grad_y = scene_rng.uniform(-0.06, 0.06);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      scene[static_cast<std::size_t>(y) * size + x] =
          base + grad_x * (x / (w - 1.0) - 0.5) + grad_y * (y / (w - 1.0) - 0.5);

  for (int i = 0; i < spec.rib_count; ++i) {
    const double jitter = scene_rng.uniform(-0.25, 0.25);
    const double cy = (i + 0.5 + jitter) * w / spec.rib_count;
    const double angle = scene_rng.uniform(-0.30, 0.30);
    const double halfwidth = scene_rng.uniform(0.035, 0.065) * w;
    const double amp = spec.rib_contrast * scene_rng.uniform(0.7, 1.0);
    const double slope = std::tan(angle);
    const double cos_a = std::cos(angle);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double line_y = cy + slope * (x - 0.5 * (w - 1.0));
        scene[static_cast<std::size_t>(y) * size + x] +=
            amp * band(std::abs(y - line_y) * cos_a, halfwidth);
      }
  }

  // Spine parameters are always drawn so the stream stays aligned whether or
  // not the column is rendered. It sits off-center, clear of the nodule.
  const bool spine_right = scene_rng.bernoulli(0.5);
  const double spine_offset = scene_rng.uniform(0.28, 0.42) * w;
  const double spine_halfwidth = scene_rng.uniform(0.04, 0.07) * w;
  const double spine_amp = scene_rng.uniform(0.10, 0.18);
  if (spec.spine_present) {
    const double xs = 0.5 * w + (spine_right ? spine_offset : -spine_offset);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        scene[static_cast<std::size_t>(y) * size + x] +=
            spine_amp * band(std::abs(x - xs), spine_halfwidth);
  }

  std::vector<double> noise(scene.size());
  for (double& v : noise) v = noise_rng.normal(0.0, spec.noise_sigma);

  std::vector<double> contrib(scene.size(), 0.0);
  std::string label = "normal";
  if (spec.nodule) {
    const NoduleSpec& n = *spec.nodule;
    label = n.pattern == CalcPattern::none ? "non_calcified" : "calcified";

    std::vector<Blob> blobs;
    if (n.pattern == CalcPattern::popcorn) {
      const int count = 3 + static_cast<int>(pattern_rng.below(3));
      for (int i = 0; i < count; ++i) {
        const double phi = pattern_rng.uniform(0.0, 2.0 * kPi);
        const double dist = pattern_rng.uniform(0.15, 0.55) * n.radius;
        const double rb = pattern_rng.uniform(0.22, 0.30) * n.radius;
        blobs.push_back({n.cx + dist * std::cos(phi), n.cy + dist * std::sin(phi), rb});
      }
    }
    const double ring_radius = 0.65 * n.radius;
    const double ring_halfwidth = std::max(1.2, 0.12 * n.radius);
    const double core_radius = n.radius / 3.0;

    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double r = std::sqrt(sq(x - n.cx) + sq(y - n.cy));
        if (r >= n.radius) continue;
        // Soft disc: full contrast out to radius-2, then a linear 2px edge.
        const double fall = r <= n.radius - 2.0 ? 1.0 : (n.radius - r) / 2.0;
        double v = n.contrast * fall;
        switch (n.pattern) {
          case CalcPattern::none: break;
          case CalcPattern::diffuse:
            v += n.calc_boost * fall;
            break;
          case CalcPattern::central: {
            const double g =
                r <= core_radius ? 1.0 : std::max(0.0, (core_radius + 1.5 - r) / 1.5);
            v += n.calc_boost * g;
            break;
          }
          case CalcPattern::laminar:
            v += n.calc_boost * band(std::abs(r - ring_radius), ring_halfwidth);
            break;
          case CalcPattern::popcorn: {
            double best = 0.0;
            for (const Blob& b : blobs) {
              const double d = std::sqrt(sq(x - b.x) + sq(y - b.y));
              const double f = d <= b.radius - 1.0 ? 1.0 : std::max(0.0, b.radius - d);
              best = std::max(best, f);
            }
            v += n.calc_boost * best;
            break;
          }
        }
        contrib[static_cast<std::size_t>(y) * size + x] = v;
      }
  }

  Image patch(size, size);
  Image clean(size, size);
  Mask mask(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * size + x;
      const double bg = std::clamp(scene[i] + noise[i], 0.0, 1.0);
      const double fg = std::clamp(scene[i] + contrib[i] + noise[i], 0.0, 1.0);
      clean.at(x, y) = static_cast<float>(bg);
      patch.at(x, y) = static_cast<float>(fg);
      mask.at(x, y) = contrib[i] > 0.0 ? 1 : 0;
    }

  GroundTruth gt{std::move(mask), std::move(label), std::move(clean)};
  return {std::move(patch), std::move(gt)};
}

namespace {

// Mean of patch-minus-clean over pixels whose distance to the nodule center
// lies in [r_lo, r_hi]. Returns false through `ok` when the region is empty.
double residue_mean(const Image& patch, const Image& clean, const NoduleGeometry& n,
                    double r_lo, double r_hi, bool* ok) {
  double sum = 0.0;
  long count = 0;
  for (int y = 0; y < patch.height(); ++y)
    for (int x = 0; x < patch.width(); ++x) {
      const double r = std::sqrt(sq(x - n.cx) + sq(y - n.cy));
      if (r < r_lo || r > r_hi) continue;
      sum += static_cast<double>(patch.at(x, y)) - clean.at(x, y);
      ++count;
    }
  *ok = count > 0;
  return count > 0 ? sum / count : 0.0;
}

double residue_max(const Image& patch, const Image& clean, const NoduleGeometry& n,
                   double r_hi) {
  double best = 0.0;
  for (int y = 0; y < patch.height(); ++y)
    for (int x = 0; x < patch.width(); ++x) {
      const double r = std::sqrt(sq(x - n.cx) + sq(y - n.cy));
      if (r > r_hi) continue;
      best = std::max(best, static_cast<double>(patch.at(x, y)) - clean.at(x, y));
    }
  return best;
}

}  // namespace

bool diffuse_signature(const Image& patch, const Image& clean, const NoduleGeometry& n) {
  bool ok = false;
  const double core = residue_mean(patch, clean, n, 0.0, n.radius - 2.0, &ok);
  return ok && core > n.contrast + 0.05;
}

bool pattern_signature_holds(const Image& patch, const Image& clean,
                             const NoduleGeometry& n) {
  const CalcPattern pattern = calc_pattern_from_string(n.pattern);
  bool a = false, b = false;
  switch (pattern) {
    case CalcPattern::none:
      return false;
    case CalcPattern::diffuse:
      return diffuse_signature(patch, clean, n);
    case CalcPattern::central: {
      const double core = residue_mean(patch, clean, n, 0.0, n.radius / 3.0, &a);
      const double ring =
          residue_mean(patch, clean, n, n.radius / 3.0 + 2.0, n.radius - 1.0, &b);
      return a && b && core > ring + 0.04;
    }
    case CalcPattern::laminar: {
      const double hw = 0.7 * std::max(1.2, 0.12 * n.radius);
      const double ring = residue_mean(patch, clean, n, 0.65 * n.radius - hw,
                                       0.65 * n.radius + hw, &a);
      const double core = residue_mean(patch, clean, n, 0.0, 0.4 * n.radius, &b);
      return a && b && ring > core + 0.04;
    }
    case CalcPattern::popcorn:
      return residue_max(patch, clean, n, n.radius - 1.0) >
             n.contrast + 0.3 * n.calc_boost;
  }
  return false;
}

namespace {

NoduleGeometry to_geometry(const NoduleSpec& n) {
  NoduleGeometry g;
  g.cx = n.cx;
  g.cy = n.cy;
  g.radius = n.radius;
  g.contrast = n.contrast;
  g.calc_boost = n.calc_boost;
  g.pattern = to_string(n.pattern);
  return g;
}

void validate_ranges(const PhantomRanges& r) {
  if (r.patch_size < 32) throw ValueError("dataset: patch_size must be >= 32");
  if (r.radius_min < 2.0 || r.radius_max < r.radius_min)
    throw ValueError("dataset: invalid nodule radius range");
  if (r.contrast_min <= 0.0 || r.contrast_max < r.contrast_min)
    throw ValueError("dataset: invalid nodule contrast range");
  if (r.boost_min <= 0.0 || r.boost_max < r.boost_min)
    throw ValueError("dataset: invalid calcification boost range");
  if (r.val_fraction < 0.0 || r.val_fraction > 1.0)
    throw ValueError("dataset: val_fraction must lie in [0, 1]");
  if (r.center_jitter < 0.0) throw ValueError("dataset: center_jitter must be >= 0");
  const double max_extent = 0.5 * r.patch_size + r.center_jitter + r.radius_max;
  if (max_extent > r.patch_size - 1)
    throw ValueError("dataset: radius_max plus center_jitter exceeds the patch");
}

}  // namespace

Manifest build_dataset(const DatasetCounts& counts, const PhantomRanges& ranges,
                       std::uint64_t seed, const std::filesystem::path& out_root) {
  if (counts.n_normal < 0 || counts.n_calcified < 0 || counts.n_noncalcified < 0)
    throw ValueError("dataset: sample counts must be >= 0");
  validate_ranges(ranges);

  ensure_dir(out_root / "images");
  ensure_dir(out_root / "masks");
  ensure_dir(out_root / "clean");

  const CalcPattern patterns[4] = {CalcPattern::diffuse, CalcPattern::central,
                                   CalcPattern::laminar, CalcPattern::popcorn};
  Manifest manifest;
  manifest.root = out_root;

  const int total = counts.n_normal + counts.n_calcified + counts.n_noncalcified;
  for (int i = 0; i < total; ++i) {
    const std::uint64_t sample_seed = derive_seed(seed, static_cast<std::uint64_t>(i) + 1);
    Rng draw(derive_seed(sample_seed, 3));

    PhantomSpec spec;
    spec.seed = sample_seed;
    spec.patch_size = ranges.patch_size;
    spec.rib_count = draw.range_int(ranges.rib_count_min, ranges.rib_count_max);
    spec.rib_contrast = draw.uniform(ranges.rib_contrast_min, ranges.rib_contrast_max);
    spec.spine_present = draw.bernoulli(ranges.spine_prob);
    spec.noise_sigma = ranges.noise_sigma;

    std::string cls;
    int cls_index = 0;
    if (i < counts.n_normal) {
      cls = "normal";
      cls_index = i;
    } else if (i < counts.n_normal + counts.n_calcified) {
      cls = "calcified";
      cls_index = i - counts.n_normal;
    } else {
      cls = "non_calcified";
      cls_index = i - counts.n_normal - counts.n_calcified;
    }

    if (cls != "normal") {
      NoduleSpec n;
      const double half = 0.5 * ranges.patch_size;
      n.cx = half + draw.uniform(-ranges.center_jitter, ranges.center_jitter);
      n.cy = half + draw.uniform(-ranges.center_jitter, ranges.center_jitter);
      n.radius = draw.uniform(ranges.radius_min, ranges.radius_max);
      n.contrast = draw.uniform(ranges.contrast_min, ranges.contrast_max);
      if (cls == "calcified") {
        n.pattern = patterns[cls_index % 4];
        n.calc_boost = draw.uniform(ranges.boost_min, ranges.boost_max);
      }
      spec.nodule = n;
    }

    auto [patch, gt] = render(spec);

    char id[32];
    const char* stem = cls == "normal" ? "normal" : (cls == "calcified" ? "calc" : "noncalc");
    std::snprintf(id, sizeof id, "%s_%05d", stem, cls_index);

    const std::string image_rel = std::string("images/") + id + ".png";
    const std::string mask_rel = std::string("masks/") + id + ".png";
    const std::string clean_rel = std::string("clean/") + id + ".png";
    save_png(patch, out_root / image_rel, 16);
    save_png(mask_to_image(gt.nodule_mask), out_root / mask_rel, 8);
    save_png(gt.clean_patch, out_root / clean_rel, 16);

    ManifestRow row;
    row.id = id;
    row.split = "train";  // reassigned below
    row.label = gt.label;
    row.image = image_rel;
    row.mask = mask_rel;
    row.clean = clean_rel;
    row.seed = sample_seed;
    if (spec.nodule) row.nodule = to_geometry(*spec.nodule);
    manifest.rows.push_back(std::move(row));
  }

  // Stratified split: shuffle each class independently, first val_fraction
  // of the shuffled order goes to val.
  const std::string classes[3] = {"normal", "calcified", "non_calcified"};
  for (int c = 0; c < 3; ++c) {
    std::vector<std::size_t> idx;
    for (std::size_t j = 0; j < manifest.rows.size(); ++j)
      if (manifest.rows[j].label == classes[c]) idx.push_back(j);
    Rng shuffle_rng(derive_seed(seed, 9000 + static_cast<std::uint64_t>(c)));
    for (std::size_t j = idx.size(); j > 1; --j)
      std::swap(idx[j - 1], idx[shuffle_rng.below(j)]);
    const auto n_val = static_cast<std::size_t>(
        std::llround(ranges.val_fraction * static_cast<double>(idx.size())));
    for (std::size_t j = 0; j < idx.size(); ++j)
      manifest.rows[idx[j]].split = j < n_val ? "val" : "train";
  }

  manifest.save(out_root / "manifest.jsonl");
  return manifest;
}

}  // namespace calcx
