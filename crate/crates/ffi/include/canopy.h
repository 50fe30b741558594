#ifndef CANOPY_H
#define CANOPY_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdint.h>

#define CANOPY_OK 0

// A required pointer argument was NULL.
#define CANOPY_ERR_NULL 1

// Invalid argument or configuration.
#define CANOPY_ERR_CONFIG 2

#define CANOPY_ERR_IO 3

// Numerical or geometric degeneracy.
#define CANOPY_ERR_NUMERICAL 4

// Internal failure; the library caught a panic.
#define CANOPY_ERR_INTERNAL 5

#define CANOPY_CHANNEL_VISIBLE 0

#define CANOPY_CHANNEL_THERMAL 1

#define CANOPY_CHANNEL_FUSED 2

#define CANOPY_CHANNEL_WEIGHT 3

// Grayscale image handle.
typedef struct CanopyImage CanopyImage;

// Scene description handle.
typedef struct CanopyScene CanopyScene;

// Growable list of posed views, all of one channel.
typedef struct CanopyViewSet CanopyViewSet;

// Pinhole camera: intrinsics plus world-to-camera pose `X_c = R X_w + t`.
typedef struct CanopyCamera {
  double fx;
  double fy;
  double cx;
  double cy;
  uint32_t width;
  uint32_t height;
  // Row-major 3x3 rotation.
  double rotation[9];
  double translation[3];
} CanopyCamera;

typedef struct CanopyFusionConfig {
  uint32_t depth;
  uint32_t patch_size;
  uint32_t stride;
  uint32_t atoms_per_dim;
  uint32_t max_atoms;
  double tol;
} CanopyFusionConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *canopy_version(void);

// Message for the last failed call on this thread; empty after a success.
// Valid until the next call into the library from the same thread.
const char *canopy_last_error_message(void);

// Image of `width x height` zeros.
//
// # Safety
// `out` must be a valid pointer to write a handle to.
int32_t canopy_image_new(uint32_t width,
                         uint32_t height,
                         int32_t channel_code,
                         struct CanopyImage **out);

// Image copied from `width * height` row-major values.
//
// # Safety
// `data` must point to `width * height` readable doubles.
int32_t canopy_image_from_data(uint32_t width,
                               uint32_t height,
                               int32_t channel_code,
                               const double *data,
                               struct CanopyImage **out);

// Read a PNG or PGM file; the channel is guessed from the file name suffix.
//
// # Safety
// `path` must be a NUL-terminated string.
int32_t canopy_image_read(const char *path, struct CanopyImage **out);

// Write as PNG or PGM by extension, clamping to `[0, 1]`.
//
// # Safety
// `img` must be a live handle and `path` a NUL-terminated string.
int32_t canopy_image_write(const struct CanopyImage *img, const char *path);

// # Safety
// `img` must be a live handle; out-pointers may be NULL to skip a field.
int32_t canopy_image_info(const struct CanopyImage *img,
                          uint32_t *width,
                          uint32_t *height,
                          int32_t *channel_code);

// Row-major pixel values, valid while the handle lives; NULL for a NULL handle.
//
// # Safety
// `img` must be NULL or a live handle.
const double *canopy_image_data(const struct CanopyImage *img);

// # Safety
// `img` must be NULL or a handle not yet freed.
void canopy_image_free(struct CanopyImage *img);

// Generate a scene. `params_json` is a JSON object of scene parameters
// (missing keys take defaults); NULL means all defaults.
//
// # Safety
// `params_json` must be NULL or NUL-terminated.
int32_t canopy_scene_generate(const char *params_json, uint64_t seed, struct CanopyScene **out);

// # Safety
// `path` must be NUL-terminated.
int32_t canopy_scene_load(const char *path, struct CanopyScene **out);

// # Safety
// `scene` must be a live handle and `path` NUL-terminated.
int32_t canopy_scene_save(const struct CanopyScene *scene, const char *path);

// Render one view of `scene` in the visible or thermal channel.
//
// # Safety
// `scene` must be a live handle and `cam` a valid pointer.
int32_t canopy_scene_render(const struct CanopyScene *scene,
                            const struct CanopyCamera *cam,
                            int32_t channel_code,
                            uint64_t noise_seed,
                            struct CanopyImage **out);

// # Safety
// `scene` must be NULL or a handle not yet freed.
void canopy_scene_free(struct CanopyScene *scene);

// # Safety
// `out` must be a valid pointer.
int32_t canopy_viewset_new(struct CanopyViewSet **out);

// Append a copy of `img` taken by `cam`.
//
// # Safety
// All pointers must be valid; `views` and `img` live handles.
int32_t canopy_viewset_push(struct CanopyViewSet *views,
                            const struct CanopyCamera *cam,
                            const struct CanopyImage *img);

// # Safety
// `views` must be NULL or a handle not yet freed.
void canopy_viewset_free(struct CanopyViewSet *views);

// Integral image on the horizontal plane `z = plane_height`, seen from
// `reference`. `coverage_out` may be NULL; otherwise it receives the
// per-pixel count of contributing views.
//
// # Safety
// `views` must be a live handle, `reference` and `out` valid pointers.
int32_t canopy_integrate(const struct CanopyViewSet *views,
                         double plane_height,
                         const struct CanopyCamera *reference,
                         struct CanopyImage **out,
                         struct CanopyImage **coverage_out);

// Visibility of `target` against `background` (boxes as x_min, y_min, x_max, y_max).
//
// # Safety
// `img` must be a live handle; `target` and `background` must each point to 4 doubles.
int32_t canopy_visibility_score(const struct CanopyImage *img,
                                const double *target,
                                const double *background,
                                double *out);

// Fill `cfg` with the default fusion settings.
//
// # Safety
// `cfg` must be a valid pointer.
int32_t canopy_fusion_config_default(struct CanopyFusionConfig *cfg);

// Fuse a visible and a thermal image of equal size. `cfg` may be NULL for defaults.
//
// # Safety
// `visible` and `thermal` must be live handles; `cfg` NULL or valid.
int32_t canopy_fuse(const struct CanopyImage *visible,
                    const struct CanopyImage *thermal,
                    const struct CanopyFusionConfig *cfg,
                    struct CanopyImage **out);

// Intersection over union of two boxes.
//
// # Safety
// `a` and `b` must reference 4 doubles; `out` must be valid.
int32_t canopy_iou(const double *a, const double *b, double *out);

// mAP of a detections file against a ground-truth file (both JSON).
// `top_k == 0` averages over every class with ground truth.
//
// # Safety
// Paths must be NUL-terminated; `map_out` must be valid.
int32_t canopy_evaluate_files(const char *detections_path,
                              const char *ground_truth_path,
                              double iou_threshold,
                              uint32_t top_k,
                              double *map_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CANOPY_H */
