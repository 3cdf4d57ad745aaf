#ifndef BRANCHKIT_H
#define BRANCHKIT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BkStatus {
  BK_STATUS_OK = 0,
  BK_STATUS_NULL_POINTER = 1,
  BK_STATUS_INVALID_INPUT = 2,
  BK_STATUS_NUMERICAL = 3,
  BK_STATUS_PANIC = 4,
} BkStatus;

typedef enum BkAction {
  BK_ACTION_KEEP = 0,
  BK_ACTION_REMOVE = 1,
  BK_ACTION_SHORTEN = 2,
} BkAction;

// Swept-tube branch model handle.
typedef struct BkBranch BkBranch;

// Point cloud handle.
typedef struct BkCloud BkCloud;

// Completion result handle.
typedef struct BkCompletion BkCompletion;

// Skeleton handle.
typedef struct BkSkeleton BkSkeleton;

typedef struct BkTraits {
  uint32_t branch_id;
  double diameter_mm;
  double angle_deg;
  double length_cm;
  double attachment_height_m;
} BkTraits;

typedef struct BkCompletionConfig {
  size_t output_count;
  size_t steps;
  double step_size;
  double lambda_skeleton;
  double lambda_variance;
  size_t variance_activation_step;
  size_t slice_count;
  size_t repulsion_k;
  // Repulsion bandwidth in meters; zero or negative selects the default.
  double repulsion_h;
  uint64_t seed;
} BkCompletionConfig;

typedef struct BkDecision {
  uint32_t branch_id;
  enum BkAction action;
  // Target length for `Shorten`, otherwise zero.
  double to_length_cm;
  // Removal order starting at 1; zero when the branch is not removed.
  uint32_t order;
} BkDecision;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or NULL after a success.
// The pointer stays valid until the next call into this library on the same thread.
const char *bk_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *bk_version(void);

// Creates a cloud from `n` packed `x, y, z` triples.
enum BkStatus bk_cloud_new(const double *xyz, size_t n, struct BkCloud **out_cloud);

void bk_cloud_free(struct BkCloud *cloud);

// Number of points, or 0 for NULL.
size_t bk_cloud_len(const struct BkCloud *cloud);

// Copies up to `capacity` points as packed triples into `xyz` and stores the
// number copied in `written`.
enum BkStatus bk_cloud_copy_points(const struct BkCloud *cloud,
                                   double *xyz,
                                   size_t capacity,
                                   size_t *written);

// Reads a `.ply` (binary little endian) or `.xyz` cloud.
enum BkStatus bk_cloud_read(const char *file, struct BkCloud **out_cloud);

// Writes a cloud; the format follows the file extension.
enum BkStatus bk_cloud_write(const struct BkCloud *cloud, const char *file);

// Branch through `n` spline knots with taper `r(s) = max(min_radius, base_radius + s tan(taper_angle_deg))`.
enum BkStatus bk_branch_new(const double *knots,
                            size_t n,
                            double base_radius,
                            double taper_angle_deg,
                            double min_radius,
                            uint32_t id,
                            struct BkBranch **out_branch);

void bk_branch_free(struct BkBranch *branch);

// Centerline arc length in meters, or NaN for NULL.
double bk_branch_length(const struct BkBranch *branch);

// Area-uniform sample of the full tube surface.
enum BkStatus bk_branch_sample_complete(const struct BkBranch *branch,
                                        size_t count,
                                        uint64_t seed,
                                        struct BkCloud **out_cloud);

// Points visible from `viewpoint` (three doubles), resampled to `count`.
enum BkStatus bk_branch_render_partial(const struct BkBranch *branch,
                                       const double *viewpoint,
                                       size_t count,
                                       uint64_t seed,
                                       struct BkCloud **out_cloud);

// Ground-truth traits of a branch measured on its analytic surface.
enum BkStatus bk_branch_truth(const struct BkBranch *branch,
                              const double *trunk_axis,
                              double height_m,
                              struct BkTraits *out_traits);

// Estimates a skeleton from a single-branch cloud.
enum BkStatus bk_skeleton_estimate(const struct BkCloud *cloud,
                                   size_t slice_count,
                                   struct BkSkeleton **out_skeleton);

void bk_skeleton_free(struct BkSkeleton *skeleton);

// Number of skeletal spheres, or 0 for NULL.
size_t bk_skeleton_len(const struct BkSkeleton *skeleton);

// Copies up to `capacity` spheres as packed `x, y, z, r` quadruples.
enum BkStatus bk_skeleton_copy_spheres(const struct BkSkeleton *skeleton,
                                       double *xyzr,
                                       size_t capacity,
                                       size_t *written);

struct BkCompletionConfig bk_completion_config_default(void);

// Completes a partial single-branch cloud. `base_hint` (three doubles) may be
// NULL; when given, the estimated skeleton starts at the end nearest it.
enum BkStatus bk_complete(const struct BkCloud *partial,
                          const struct BkCompletionConfig *config,
                          const double *base_hint,
                          struct BkCompletion **out_result);

void bk_completion_free(struct BkCompletion *result);

// New cloud handle holding the refined points.
enum BkStatus bk_completion_cloud(const struct BkCompletion *result, struct BkCloud **out_cloud);

// New skeleton handle holding the estimated skeleton.
enum BkStatus bk_completion_skeleton(const struct BkCompletion *result,
                                     struct BkSkeleton **out_skeleton);

// Number of recorded optimization steps, or 0 for NULL.
size_t bk_completion_trace_len(const struct BkCompletion *result);

// Total loss after step `step`.
enum BkStatus bk_completion_trace_total(const struct BkCompletion *result,
                                        size_t step,
                                        double *out_total);

// Symmetric Chamfer distance; `squared` selects squared distances instead of plain ones.
enum BkStatus bk_chamfer(const struct BkCloud *a,
                         const struct BkCloud *b,
                         bool squared,
                         double *out_value);

// Variance of point-to-centerline distances against a skeleton's polyline.
enum BkStatus bk_variance_loss(const struct BkCloud *cloud,
                               const struct BkSkeleton *skeleton,
                               double *out_value);

// Measures diameter, angle and length of a single-branch cloud along `skeleton`.
enum BkStatus bk_characterize(const struct BkCloud *cloud,
                              const struct BkSkeleton *skeleton,
                              const double *trunk_axis,
                              double height_m,
                              uint32_t branch_id,
                              struct BkTraits *out_traits);

// Plans pruning for `n` branches. `decisions` must hold `n` entries and is
// filled in input order.
enum BkStatus bk_plan_pruning(const struct BkTraits *traits,
                              size_t n,
                              double diameter_cutoff_cm,
                              double length_cutoff_cm,
                              struct BkDecision *decisions);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BRANCHKIT_H */
