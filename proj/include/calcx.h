/* Public C interface of libcalcx.
 *
 * Conventions:
 *   - Functions returning cx_status return CX_OK (0) on success; on failure
 *     they return a category code and cx_last_error() carries the message.
 *   - Functions returning pointers return NULL on failure (same message
 *     channel). Returned objects are owned by the caller and released with
 *     the matching *_free function; strings with cx_string_free.
 *   - The error message buffer is thread-local and valid until the next
 *     libcalcx call on that thread.
 */
#ifndef CALCX_H
#define CALCX_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cx_status {
  CX_OK = 0,
  CX_ERR_VALUE = 1,   /* invalid argument or config value */
  CX_ERR_SHAPE = 2,   /* dimension mismatch */
  CX_ERR_IO = 3,      /* file missing, unreadable, or malformed */
  CX_ERR_NUMERIC = 4, /* NaN loss, divergence, degenerate batch */
  CX_ERR_UNKNOWN = 5
} cx_status;

const char* cx_version(void);
const char* cx_last_error(void);
void cx_string_free(char* s);

/* ---- images and masks ------------------------------------------------- */

typedef struct cx_image cx_image;
typedef struct cx_mask cx_mask;

cx_image* cx_image_create(int width, int height, float fill);
cx_image* cx_image_load(const char* path);
cx_status cx_image_save(const cx_image* img, const char* path, int bit_depth);
int cx_image_width(const cx_image* img);
int cx_image_height(const cx_image* img);
/* Copies row-major pixels into out (width*height floats). */
cx_status cx_image_pixels(const cx_image* img, float* out);
cx_status cx_image_set_pixel(cx_image* img, int x, int y, float value);
void cx_image_free(cx_image* img);

int cx_mask_width(const cx_mask* mask);
int cx_mask_height(const cx_mask* mask);
size_t cx_mask_count(const cx_mask* mask); /* number of set pixels */
int cx_mask_get(const cx_mask* mask, int x, int y);
void cx_mask_free(cx_mask* mask);

cx_image* cx_subtract(const cx_image* a, const cx_image* b);
cx_image* cx_gaussian5x5(const cx_image* img);
cx_mask* cx_otsu_binarize(const cx_image* img, int levels, double* threshold_out);
cx_image* cx_intersect(const cx_image* img, const cx_mask* mask);
cx_image* cx_resize(const cx_image* img, int out_width, int out_height);

/* ---- phantoms ---------------------------------------------------------- */

/* Renders one synthetic chest patch. pattern is one of
 * none|diffuse|central|laminar|popcorn ("none" gives a plain nodule when
 * with_nodule, or a normal patch when !with_nodule). Any out pointer may be
 * NULL when that output is not needed. */
cx_status cx_phantom_render(uint64_t seed, int patch_size, int with_nodule,
                            const char* pattern, cx_image** patch_out,
                            cx_image** clean_out, cx_mask** mask_out);

/* ---- inpainting and extraction (classical engine) ---------------------- */

cx_image* cx_classical_inpaint(const cx_image* img, const cx_mask* hole);

/* Refinement chain on a nodule-centered patch with the classical engine:
 * centered hole, inpaint, subtract, denoise, threshold, intersect. */
cx_status cx_extract_refined(const cx_image* raw, double mask_fraction,
                             cx_image** refined_out, cx_mask** region_out);

/* ---- evaluation --------------------------------------------------------- */

/* scores in [0,1], labels 0/1. Any out pointer may be NULL. AUC is NaN when
 * only one class is present. */
cx_status cx_evaluate(const double* scores, const int* labels, size_t n,
                      double* accuracy_out, double* auc_out);

/* ---- configs and pipeline runs ------------------------------------------ */

typedef struct cx_config cx_config;

cx_config* cx_config_default(void);
cx_config* cx_config_load(const char* path); /* file + env overrides, validated */
cx_status cx_config_set_seed(cx_config* cfg, uint64_t seed);
cx_status cx_config_set_out(cx_config* cfg, const char* out_dir);
cx_status cx_config_set_engine(cx_config* cfg, const char* engine);
cx_status cx_config_set_debug_stages(cx_config* cfg, int enabled);
cx_status cx_config_validate(const cx_config* cfg);
char* cx_config_snapshot(const cx_config* cfg);
char* cx_config_run_id(const cx_config* cfg);
char* cx_config_run_dir(const cx_config* cfg); /* <out>/<run-id> */
void cx_config_free(cx_config* cfg);

/* stage is one of: phantom-gen | train-inpaint | extract | augment |
 * train-fusion | eval. */
cx_status cx_run_stage(const cx_config* cfg, const char* stage);
cx_status cx_run_all(const cx_config* cfg);

/* Replays the stored augmentation record of an augmented row id and compares
 * against the stored bytes; *matches_out becomes 1 on byte equality. */
cx_status cx_replay(const cx_config* cfg, const char* id, int* matches_out);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* CALCX_H */
