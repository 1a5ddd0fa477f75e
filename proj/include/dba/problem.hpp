#pragma once

#include <optional>
#include <vector>

#include "dba/geometry.hpp"

namespace dba {

/// One 2D measurement: point `point_id` as seen by camera `cam_id`.
struct Observation {
  int cam_id = 0;
  int point_id = 0;
  ImagePoint z = ImagePoint::Zero();
};

/// Index structure of the observations: S(j) per camera and its transpose.
/// Both sides are sorted ascending; rebuildable bit-identically from the
/// observation list.
struct Visibility {
  std::vector<std::vector<int>> points_in_camera;    ///< S(j), sorted.
  std::vector<std::vector<int>> cameras_seeing_point;  ///< transpose, sorted.
};

/// Throws IndexOutOfRange / DuplicateObservation on bad indices and
/// ValidationError when a camera or point has no observation at all.
Visibility build_visibility(const std::vector<Observation>& observations,
                            int num_cameras, int num_points);

/// A full assignment of the unknowns: 6 pose parameters per camera (focal
/// rides along but is fixed) and 3 coordinates per point.
struct ParamState {
  std::vector<CameraParams> cameras;
  std::vector<ScenePoint> points;
};

/// A bundle-adjustment instance. Immutable after construction; `cameras` and
/// `points` hold the nominal parameter record (ground truth for generated
/// scenes, the file's values for parsed ones).
struct Problem {
  std::vector<CameraParams> cameras;
  std::vector<ScenePoint> points;
  std::vector<Observation> observations;
  Visibility visibility;

  int num_cameras() const { return static_cast<int>(cameras.size()); }
  int num_points() const { return static_cast<int>(points.size()); }
  int num_observations() const { return static_cast<int>(observations.size()); }

  ParamState nominal_state() const { return {cameras, points}; }

  /// Validates invariants (finite values, f > 0, index structure, coverage)
  /// and builds the visibility structure.
  static Problem create(std::vector<CameraParams> cameras, std::vector<ScenePoint> points,
                        std::vector<Observation> observations);
};

/// Mean over observations of ||z - project(x, y)||, pixels.
double mean_reprojection_error(const Problem& problem, const ParamState& state,
                               const ProjectionGuard& guard = {});

/// Non-throwing variant; empty when any projection is undefined.
std::optional<double> try_mean_reprojection_error(const Problem& problem,
                                                  const ParamState& state,
                                                  const ProjectionGuard& guard = {});

/// Root-mean-square alternative to the mean norm.
double rms_reprojection_error(const Problem& problem, const ParamState& state,
                              const ProjectionGuard& guard = {});

/// Sum over observations of ||z - project(x, y)||^2.
double total_squared_error(const Problem& problem, const ParamState& state,
                           const ProjectionGuard& guard = {});

std::optional<double> try_total_squared_error(const Problem& problem, const ParamState& state,
                                              const ProjectionGuard& guard = {});

struct MseResult {
  double camera_mse = 0.0;  ///< Over all 6m pose entries; angle differences wrapped.
  double point_mse = 0.0;   ///< Over all 3n coordinates.
};

/// Raw entry-wise MSE against the reference, no gauge alignment. Angle
/// differences are wrapped into (-pi, pi] before squaring.
MseResult parameter_mse(const ParamState& state, const ParamState& reference);

/// Optional similarity-gauge pre-alignment (off by default everywhere):
/// fits s, Q, b over the point sets and maps `state` onto the reference
/// frame, leaving all projections unchanged.
ParamState align_similarity(const ParamState& state, const ParamState& reference);

}  // namespace dba
