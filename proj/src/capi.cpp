#include "calcx.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "calcx/config.hpp"
#include "calcx/error.hpp"
#include "calcx/extract.hpp"
#include "calcx/image.hpp"
#include "calcx/image_io.hpp"
#include "calcx/inpaint.hpp"
#include "calcx/metrics.hpp"
#include "calcx/phantom.hpp"
#include "calcx/pipeline.hpp"
#include "calcx/util.hpp"

struct cx_image {
  calcx::Image img;
};
struct cx_mask {
  calcx::Mask mask;
};
struct cx_config {
  calcx::RunConfig cfg;
};

namespace {

thread_local std::string g_last_error;

cx_status classify(const std::exception& e) {
  if (dynamic_cast<const calcx::ShapeError*>(&e)) return CX_ERR_SHAPE;
  if (dynamic_cast<const calcx::ValueError*>(&e)) return CX_ERR_VALUE;
  if (dynamic_cast<const calcx::IoError*>(&e)) return CX_ERR_IO;
  if (dynamic_cast<const calcx::NumericError*>(&e)) return CX_ERR_NUMERIC;
  return CX_ERR_UNKNOWN;
}

// Runs fn, translating exceptions into status codes + the thread-local
// message. fn returns the success status (usually CX_OK).
template <class Fn>
cx_status guarded(Fn&& fn) {
  try {
    g_last_error.clear();
    return fn();
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return classify(e);
  } catch (...) {
    g_last_error = "unknown error";
    return CX_ERR_UNKNOWN;
  }
}

// Pointer-returning variant: NULL on failure.
template <class Fn>
auto guarded_ptr(Fn&& fn) -> decltype(fn()) {
  try {
    g_last_error.clear();
    return fn();
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return nullptr;
  } catch (...) {
    g_last_error = "unknown error";
    return nullptr;
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

cx_status require(bool ok, const char* what) {
  if (ok) return CX_OK;
  g_last_error = what;
  return CX_ERR_VALUE;
}

}  // namespace

extern "C" {

const char* cx_version(void) { return calcx::kVersion; }

const char* cx_last_error(void) { return g_last_error.c_str(); }

void cx_string_free(char* s) { std::free(s); }

/* ---- images and masks ------------------------------------------------- */

cx_image* cx_image_create(int width, int height, float fill) {
  return guarded_ptr([&]() -> cx_image* { return new cx_image{calcx::Image(width, height, fill)}; });
}

cx_image* cx_image_load(const char* path) {
  return guarded_ptr([&]() -> cx_image* {
    if (!path) throw calcx::ValueError("cx_image_load: path is NULL");
    return new cx_image{calcx::load_image(path)};
  });
}

cx_status cx_image_save(const cx_image* img, const char* path, int bit_depth) {
  return guarded([&]() -> cx_status {
    if (!img || !path) throw calcx::ValueError("cx_image_save: NULL argument");
    calcx::save_png(img->img, path, bit_depth);
    return CX_OK;
  });
}

int cx_image_width(const cx_image* img) { return img ? img->img.width() : 0; }
int cx_image_height(const cx_image* img) { return img ? img->img.height() : 0; }

cx_status cx_image_pixels(const cx_image* img, float* out) {
  if (require(img && out, "cx_image_pixels: NULL argument") != CX_OK) return CX_ERR_VALUE;
  std::memcpy(out, img->img.data().data(),
              sizeof(float) * static_cast<size_t>(img->img.width()) * img->img.height());
  return CX_OK;
}

cx_status cx_image_set_pixel(cx_image* img, int x, int y, float value) {
  return guarded([&]() -> cx_status {
    if (!img) throw calcx::ValueError("cx_image_set_pixel: NULL image");
    if (x < 0 || x >= img->img.width() || y < 0 || y >= img->img.height())
      throw calcx::ShapeError("cx_image_set_pixel: pixel outside the image");
    img->img.at(x, y) = value;
    return CX_OK;
  });
}

void cx_image_free(cx_image* img) { delete img; }

int cx_mask_width(const cx_mask* mask) { return mask ? mask->mask.width() : 0; }
int cx_mask_height(const cx_mask* mask) { return mask ? mask->mask.height() : 0; }

size_t cx_mask_count(const cx_mask* mask) { return mask ? mask->mask.count() : 0; }

int cx_mask_get(const cx_mask* mask, int x, int y) {
  if (!mask || x < 0 || x >= mask->mask.width() || y < 0 || y >= mask->mask.height())
    return 0;
  return mask->mask.at(x, y) ? 1 : 0;
}

void cx_mask_free(cx_mask* mask) { delete mask; }

cx_image* cx_subtract(const cx_image* a, const cx_image* b) {
  return guarded_ptr([&]() -> cx_image* {
    if (!a || !b) throw calcx::ValueError("cx_subtract: NULL argument");
    return new cx_image{calcx::subtract(a->img, b->img)};
  });
}

cx_image* cx_gaussian5x5(const cx_image* img) {
  return guarded_ptr([&]() -> cx_image* {
    if (!img) throw calcx::ValueError("cx_gaussian5x5: NULL argument");
    return new cx_image{calcx::gaussian5x5(img->img)};
  });
}

cx_mask* cx_otsu_binarize(const cx_image* img, int levels, double* threshold_out) {
  return guarded_ptr([&]() -> cx_mask* {
    if (!img) throw calcx::ValueError("cx_otsu_binarize: NULL argument");
    calcx::OtsuResult r = calcx::otsu_binarize(img->img, levels);
    if (threshold_out) *threshold_out = r.threshold;
    return new cx_mask{std::move(r.mask)};
  });
}

cx_image* cx_intersect(const cx_image* img, const cx_mask* mask) {
  return guarded_ptr([&]() -> cx_image* {
    if (!img || !mask) throw calcx::ValueError("cx_intersect: NULL argument");
    return new cx_image{calcx::intersect(img->img, mask->mask)};
  });
}

cx_image* cx_resize(const cx_image* img, int out_width, int out_height) {
  return guarded_ptr([&]() -> cx_image* {
    if (!img) throw calcx::ValueError("cx_resize: NULL argument");
    return new cx_image{calcx::resize_to(img->img, out_width, out_height)};
  });
}

/* ---- phantoms ---------------------------------------------------------- */

cx_status cx_phantom_render(uint64_t seed, int patch_size, int with_nodule,
                            const char* pattern, cx_image** patch_out,
                            cx_image** clean_out, cx_mask** mask_out) {
  return guarded([&]() -> cx_status {
    calcx::PhantomSpec spec;
    spec.seed = seed;
    spec.patch_size = patch_size;
    if (with_nodule) {
      calcx::NoduleSpec n;
      n.cx = patch_size / 2.0;
      n.cy = patch_size / 2.0;
      n.radius = patch_size / 8.0;
      n.contrast = 0.16;
      n.pattern = calcx::calc_pattern_from_string(pattern ? pattern : "none");
      n.calc_boost = n.pattern == calcx::CalcPattern::none ? 0.0 : 0.18;
      spec.nodule = n;
    }
    auto [patch, truth] = calcx::render(spec);
    if (patch_out) *patch_out = new cx_image{std::move(patch)};
    if (clean_out) *clean_out = new cx_image{std::move(truth.clean_patch)};
    if (mask_out) *mask_out = new cx_mask{std::move(truth.nodule_mask)};
    return CX_OK;
  });
}

/* ---- inpainting and extraction ------------------------------------------ */

cx_image* cx_classical_inpaint(const cx_image* img, const cx_mask* hole) {
  return guarded_ptr([&]() -> cx_image* {
    if (!img || !hole) throw calcx::ValueError("cx_classical_inpaint: NULL argument");
    return new cx_image{calcx::classical_inpaint(img->img, hole->mask)};
  });
}

cx_status cx_extract_refined(const cx_image* raw, double mask_fraction,
                             cx_image** refined_out, cx_mask** region_out) {
  return guarded([&]() -> cx_status {
    if (!raw) throw calcx::ValueError("cx_extract_refined: NULL image");
    calcx::ExtractionResult r =
        calcx::extract_refined(raw->img, calcx::classical_filler(), mask_fraction);
    if (refined_out) *refined_out = new cx_image{std::move(r.refined)};
    if (region_out) *region_out = new cx_mask{std::move(r.region_mask)};
    return CX_OK;
  });
}

/* ---- evaluation --------------------------------------------------------- */

cx_status cx_evaluate(const double* scores, const int* labels, size_t n,
                      double* accuracy_out, double* auc_out) {
  return guarded([&]() -> cx_status {
    if (!scores || !labels) throw calcx::ValueError("cx_evaluate: NULL argument");
    std::vector<std::pair<double, int>> pairs;
    pairs.reserve(n);
    for (size_t i = 0; i < n; ++i) pairs.emplace_back(scores[i], labels[i]);
    const calcx::EvalReport rep = calcx::evaluate(pairs);
    if (accuracy_out) *accuracy_out = rep.accuracy;
    if (auc_out) *auc_out = rep.auc;
    return CX_OK;
  });
}

/* ---- configs and pipeline runs ------------------------------------------ */

cx_config* cx_config_default(void) {
  return guarded_ptr([&]() -> cx_config* { return new cx_config{calcx::RunConfig()}; });
}

cx_config* cx_config_load(const char* path) {
  return guarded_ptr([&]() -> cx_config* {
    if (!path) throw calcx::ValueError("cx_config_load: path is NULL");
    return new cx_config{calcx::load_run_config(path)};
  });
}

cx_status cx_config_set_seed(cx_config* cfg, uint64_t seed) {
  if (require(cfg != nullptr, "cx_config_set_seed: NULL config") != CX_OK)
    return CX_ERR_VALUE;
  cfg->cfg.seed = seed;
  return CX_OK;
}

cx_status cx_config_set_out(cx_config* cfg, const char* out_dir) {
  if (require(cfg && out_dir, "cx_config_set_out: NULL argument") != CX_OK)
    return CX_ERR_VALUE;
  cfg->cfg.out = out_dir;
  return CX_OK;
}

cx_status cx_config_set_engine(cx_config* cfg, const char* engine) {
  if (require(cfg && engine, "cx_config_set_engine: NULL argument") != CX_OK)
    return CX_ERR_VALUE;
  cfg->cfg.engine = engine;
  return CX_OK;
}

cx_status cx_config_set_debug_stages(cx_config* cfg, int enabled) {
  if (require(cfg != nullptr, "cx_config_set_debug_stages: NULL config") != CX_OK)
    return CX_ERR_VALUE;
  cfg->cfg.debug_stages = enabled != 0;
  return CX_OK;
}

cx_status cx_config_validate(const cx_config* cfg) {
  return guarded([&]() -> cx_status {
    if (!cfg) throw calcx::ValueError("cx_config_validate: NULL config");
    calcx::validate_run_config(cfg->cfg);
    return CX_OK;
  });
}

char* cx_config_snapshot(const cx_config* cfg) {
  return guarded_ptr([&]() -> char* {
    if (!cfg) throw calcx::ValueError("cx_config_snapshot: NULL config");
    return dup_string(calcx::config_snapshot(cfg->cfg));
  });
}

char* cx_config_run_id(const cx_config* cfg) {
  return guarded_ptr([&]() -> char* {
    if (!cfg) throw calcx::ValueError("cx_config_run_id: NULL config");
    return dup_string(calcx::run_id(cfg->cfg));
  });
}

char* cx_config_run_dir(const cx_config* cfg) {
  return guarded_ptr([&]() -> char* {
    if (!cfg) throw calcx::ValueError("cx_config_run_dir: NULL config");
    return dup_string(
        (std::filesystem::path(cfg->cfg.out) / calcx::run_id(cfg->cfg)).string());
  });
}

void cx_config_free(cx_config* cfg) { delete cfg; }

cx_status cx_run_stage(const cx_config* cfg, const char* stage) {
  return guarded([&]() -> cx_status {
    if (!cfg || !stage) throw calcx::ValueError("cx_run_stage: NULL argument");
    const calcx::RunConfig& rc = cfg->cfg;
    const calcx::RunPaths paths = calcx::prepare_run(rc);
    const std::string name = stage;
    if (name == "phantom-gen")
      calcx::stage_dataset(rc, paths);
    else if (name == "train-inpaint")
      calcx::stage_train_inpaint(rc, paths);
    else if (name == "extract")
      calcx::stage_extract(rc, paths);
    else if (name == "augment")
      calcx::stage_augment(rc, paths);
    else if (name == "train-fusion")
      calcx::stage_train_fusion(rc, paths);
    else if (name == "eval")
      calcx::stage_eval(rc, paths);
    else
      throw calcx::ValueError("unknown stage '" + name + "'");
    return CX_OK;
  });
}

cx_status cx_run_all(const cx_config* cfg) {
  return guarded([&]() -> cx_status {
    if (!cfg) throw calcx::ValueError("cx_run_all: NULL config");
    calcx::run_all(cfg->cfg);
    return CX_OK;
  });
}

cx_status cx_replay(const cx_config* cfg, const char* id, int* matches_out) {
  return guarded([&]() -> cx_status {
    if (!cfg || !id) throw calcx::ValueError("cx_replay: NULL argument");
    const calcx::ReplayResult r = calcx::replay_augmented(cfg->cfg, id);
    if (matches_out) *matches_out = r.matches ? 1 : 0;
    return CX_OK;
  });
}

} /* extern "C" */
