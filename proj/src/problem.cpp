#include "dba/problem.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "dba/errors.hpp"

namespace dba {

Visibility build_visibility(const std::vector<Observation>& observations, int num_cameras,
                            int num_points) {
  if (observations.empty()) {
    throw ValidationError("observation list is empty; every camera and point needs coverage");
  }
  for (const Observation& obs : observations) {
    if (obs.cam_id < 0 || obs.cam_id >= num_cameras) {
      throw IndexOutOfRange("camera index " + std::to_string(obs.cam_id) + " outside [0, " +
                            std::to_string(num_cameras) + ")");
    }
    if (obs.point_id < 0 || obs.point_id >= num_points) {
      throw IndexOutOfRange("point index " + std::to_string(obs.point_id) + " outside [0, " +
                            std::to_string(num_points) + ")");
    }
  }

  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(observations.size());
  for (const Observation& obs : observations) {
    pairs.emplace_back(obs.cam_id, obs.point_id);
  }
  std::sort(pairs.begin(), pairs.end());
  const auto dup = std::adjacent_find(pairs.begin(), pairs.end());
  if (dup != pairs.end()) {
    throw DuplicateObservation("duplicate observation of point " +
                               std::to_string(dup->second) + " by camera " +
                               std::to_string(dup->first));
  }

  Visibility vis;
  vis.points_in_camera.resize(num_cameras);
  vis.cameras_seeing_point.resize(num_points);
  for (const auto& [cam, pt] : pairs) {  // sorted, so each list comes out sorted
    vis.points_in_camera[cam].push_back(pt);
  }
  for (int cam = 0; cam < num_cameras; ++cam) {
    for (int pt : vis.points_in_camera[cam]) {
      vis.cameras_seeing_point[pt].push_back(cam);
    }
  }

  for (int cam = 0; cam < num_cameras; ++cam) {
    if (vis.points_in_camera[cam].empty()) {
      throw ValidationError("camera " + std::to_string(cam) + " observes no point");
    }
  }
  for (int pt = 0; pt < num_points; ++pt) {
    if (vis.cameras_seeing_point[pt].empty()) {
      throw ValidationError("point " + std::to_string(pt) + " is observed by no camera");
    }
  }
  return vis;
}

Problem Problem::create(std::vector<CameraParams> cameras, std::vector<ScenePoint> points,
                        std::vector<Observation> observations) {
  for (std::size_t j = 0; j < cameras.size(); ++j) {
    const CameraParams& c = cameras[j];
    if (!(c.f > 0.0)) {
      throw ValidationError("camera " + std::to_string(j) + " has non-positive focal length");
    }
    if (!std::isfinite(c.alpha) || !std::isfinite(c.beta) || !std::isfinite(c.gamma) ||
        !c.t.allFinite()) {
      throw ValidationError("camera " + std::to_string(j) + " has non-finite parameters");
    }
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!points[i].allFinite()) {
      throw ValidationError("point " + std::to_string(i) + " has non-finite coordinates");
    }
  }
  for (const Observation& obs : observations) {
    if (!obs.z.allFinite()) {
      throw ValidationError("observation has non-finite image coordinates");
    }
  }

  Problem p;
  p.visibility = build_visibility(observations, static_cast<int>(cameras.size()),
                                  static_cast<int>(points.size()));
  p.cameras = std::move(cameras);
  p.points = std::move(points);
  p.observations = std::move(observations);
  return p;
}

namespace {

void check_sizes(const Problem& problem, const ParamState& state) {
  if (static_cast<int>(state.cameras.size()) != problem.num_cameras() ||
      static_cast<int>(state.points.size()) != problem.num_points()) {
    throw SizeMismatch("state sizes do not match the problem");
  }
}

// Fixed-order accumulation over observations; norm_power 1 for the mean norm,
// 2 for squared-error sums.
std::optional<double> accumulate_residual_norms(const Problem& problem, const ParamState& state,
                                                const ProjectionGuard& guard, int norm_power) {
  check_sizes(problem, state);
  double sum = 0.0;
  for (const Observation& obs : problem.observations) {
    const auto r = try_residual(obs.z, state.points[obs.point_id], state.cameras[obs.cam_id], guard);
    if (!r) {
      return std::nullopt;
    }
    sum += norm_power == 1 ? r->norm() : r->squaredNorm();
  }
  return sum;
}

double wrap_angle(double a) {
  // Into (-pi, pi]; remainder returns [-pi, pi] with -pi only for exact ties.
  const double w = std::remainder(a, 2.0 * std::numbers::pi);
  return w <= -std::numbers::pi ? w + 2.0 * std::numbers::pi : w;
}

}  // namespace

std::optional<double> try_mean_reprojection_error(const Problem& problem, const ParamState& state,
                                                  const ProjectionGuard& guard) {
  const auto sum = accumulate_residual_norms(problem, state, guard, 1);
  if (!sum) {
    return std::nullopt;
  }
  return *sum / problem.num_observations();
}

double mean_reprojection_error(const Problem& problem, const ParamState& state,
                               const ProjectionGuard& guard) {
  check_sizes(problem, state);
  double sum = 0.0;
  for (const Observation& obs : problem.observations) {
    const auto r = try_residual(obs.z, state.points[obs.point_id], state.cameras[obs.cam_id], guard);
    if (!r) {
      const Vec3 w = rotation_from_euler(state.cameras[obs.cam_id].alpha,
                                         state.cameras[obs.cam_id].beta,
                                         state.cameras[obs.cam_id].gamma) *
                         state.points[obs.point_id] +
                     state.cameras[obs.cam_id].t;
      throw DepthBelowGuard(w.z(), guard.eps_depth, obs.point_id, obs.cam_id);
    }
    sum += r->norm();
  }
  return sum / problem.num_observations();
}

double rms_reprojection_error(const Problem& problem, const ParamState& state,
                              const ProjectionGuard& guard) {
  return std::sqrt(total_squared_error(problem, state, guard) / problem.num_observations());
}

std::optional<double> try_total_squared_error(const Problem& problem, const ParamState& state,
                                              const ProjectionGuard& guard) {
  return accumulate_residual_norms(problem, state, guard, 2);
}

double total_squared_error(const Problem& problem, const ParamState& state,
                           const ProjectionGuard& guard) {
  if (auto total = try_total_squared_error(problem, state, guard)) {
    return *total;
  }
  mean_reprojection_error(problem, state, guard);  // throws with the offending indices
  return 0.0;
}

MseResult parameter_mse(const ParamState& state, const ParamState& reference) {
  if (state.cameras.size() != reference.cameras.size() ||
      state.points.size() != reference.points.size()) {
    throw SizeMismatch("state and reference sizes differ");
  }
  MseResult out;
  for (std::size_t j = 0; j < state.cameras.size(); ++j) {
    const CameraParams& a = state.cameras[j];
    const CameraParams& b = reference.cameras[j];
    const double da = wrap_angle(a.alpha - b.alpha);
    const double db = wrap_angle(a.beta - b.beta);
    const double dg = wrap_angle(a.gamma - b.gamma);
    out.camera_mse += da * da + db * db + dg * dg + (a.t - b.t).squaredNorm();
  }
  for (std::size_t i = 0; i < state.points.size(); ++i) {
    out.point_mse += (state.points[i] - reference.points[i]).squaredNorm();
  }
  if (!state.cameras.empty()) {
    out.camera_mse /= 6.0 * state.cameras.size();
  }
  if (!state.points.empty()) {
    out.point_mse /= 3.0 * state.points.size();
  }
  return out;
}

ParamState align_similarity(const ParamState& state, const ParamState& reference) {
  if (state.points.size() != reference.points.size() || state.points.size() < 3) {
    throw SizeMismatch("similarity alignment needs matching point sets of size >= 3");
  }
  const int n = static_cast<int>(state.points.size());
  Eigen::MatrixXd src(3, n), dst(3, n);
  for (int i = 0; i < n; ++i) {
    src.col(i) = state.points[i];
    dst.col(i) = reference.points[i];
  }
  const Eigen::Matrix4d T = Eigen::umeyama(src, dst, true);
  const Mat3 sQ = T.topLeftCorner<3, 3>();
  const double s = std::cbrt(sQ.determinant());
  const Mat3 Q = sQ / s;
  const Vec3 b = T.topRightCorner<3, 1>();

  // x' = s*Q*x + b keeps every projection fixed when the cameras transform as
  // R' = R*Q^T, t' = s*t - R*Q^T*b (perspective division absorbs the scale).
  ParamState out = state;
  for (int i = 0; i < n; ++i) {
    out.points[i] = sQ * state.points[i] + b;
  }
  for (std::size_t j = 0; j < state.cameras.size(); ++j) {
    const CameraParams& c = state.cameras[j];
    const Mat3 R = rotation_from_euler(c.alpha, c.beta, c.gamma);
    const Mat3 R_new = R * Q.transpose();
    const Vec3 angles = euler_from_rotation(R_new);
    out.cameras[j].alpha = angles[0];
    out.cameras[j].beta = angles[1];
    out.cameras[j].gamma = angles[2];
    out.cameras[j].t = s * c.t - R_new * b;
  }
  return out;
}

}  // namespace dba
