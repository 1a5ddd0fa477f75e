#include "dba/scene_gen.hpp"

#include <Eigen/Geometry>
#include <cmath>
#include <numbers>

#include "dba/errors.hpp"
#include "dba/rng.hpp"

namespace dba {

namespace {

constexpr int kPointRetryCap = 100;

void validate(const SceneConfig& c) {
  if (c.n_cameras < 1 || c.n_points < 1) {
    throw ValidationError("scene needs at least one camera and one point");
  }
  if (c.visibility_window < 2) {
    throw ValidationError("visibility window must be >= 2 so every point is triangulable");
  }
  if (c.visibility_window > c.n_cameras) {
    throw ValidationError("visibility window exceeds the number of cameras");
  }
  if (!(c.orbit_radius > 0.0) || !(c.altitude > 0.0)) {
    throw ValidationError("orbit radius and altitude must be positive");
  }
  if (!(c.focal > 0.0)) {
    throw ValidationError("focal length must be positive");
  }
  if (!(c.point_region.min.array() <= c.point_region.max.array()).all()) {
    throw ValidationError("point region box is inverted");
  }
  if (c.jitter_trans < 0.0 || c.jitter_rot < 0.0) {
    throw ValidationError("jitter sigmas must be nonnegative");
  }
}

// World->camera rotation whose optical axis points from `center` to `target`.
// Camera x spans the world horizontal; degenerate only for a straight-down
// orbit of radius 0, which validate() excludes.
Mat3 look_at(const Vec3& center, const Vec3& target) {
  const Vec3 forward = (target - center).normalized();
  Vec3 up = Vec3::UnitZ();
  if (std::abs(forward.dot(up)) > 1.0 - 1e-9) {
    up = Vec3::UnitY();
  }
  const Vec3 xc = up.cross(forward).normalized();
  const Vec3 yc = forward.cross(xc);
  Mat3 R;
  R.row(0) = xc.transpose();
  R.row(1) = yc.transpose();
  R.row(2) = forward.transpose();
  return R;
}

}  // namespace

GeneratedScene generate_scene(const SceneConfig& config) {
  validate(config);
  Rng rng(config.rng_seed);

  const int m = config.n_cameras;
  const int n = config.n_points;
  const int w = config.visibility_window;
  const Vec3 aim = config.point_region.center();

  // Cameras first: equally spaced orbit angle, jittered center, aim, then
  // jittered orientation. Draw order per camera: 3 center normals, 3 angle
  // normals.
  std::vector<CameraParams> cameras(m);
  for (int j = 0; j < m; ++j) {
    const double theta = 2.0 * std::numbers::pi * j / m;
    Vec3 center(config.orbit_radius * std::cos(theta), config.orbit_radius * std::sin(theta),
                config.altitude);
    for (int k = 0; k < 3; ++k) {
      center[k] += rng.normal(0.0, config.jitter_trans);
    }
    const Vec3 angles = euler_from_rotation(look_at(center, aim));
    CameraParams cam;
    cam.alpha = angles[0] + rng.normal(0.0, config.jitter_rot);
    cam.beta = angles[1] + rng.normal(0.0, config.jitter_rot);
    cam.gamma = angles[2] + rng.normal(0.0, config.jitter_rot);
    cam.f = config.focal;
    cam.t = -rotation_from_euler(cam.alpha, cam.beta, cam.gamma) * center;
    cameras[j] = cam;
  }

  // Points: uniform in the region with a wrapped window of w consecutive
  // frames. Draw order per attempt: 3 coordinate uniforms, 1 window start.
  // A draw whose projection fails in any window frame is discarded whole.
  const ProjectionGuard guard;
  std::vector<ScenePoint> points(n);
  std::vector<Observation> observations;
  observations.reserve(static_cast<std::size_t>(n) * w);
  for (int i = 0; i < n; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < kPointRetryCap && !placed; ++attempt) {
      Vec3 p;
      for (int k = 0; k < 3; ++k) {
        p[k] = rng.uniform(config.point_region.min[k], config.point_region.max[k]);
      }
      const int start = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(m)));
      std::vector<Observation> window;
      window.reserve(w);
      bool ok = true;
      for (int s = 0; s < w && ok; ++s) {
        const int j = (start + s) % m;
        if (auto z = try_project(p, cameras[j], guard)) {
          window.push_back({j, i, *z});
        } else {
          ok = false;
        }
      }
      if (ok) {
        points[i] = p;
        observations.insert(observations.end(), window.begin(), window.end());
        placed = true;
      }
    }
    if (!placed) {
      throw ProjectionFailed("point " + std::to_string(i) + " fell behind a camera " +
                             std::to_string(kPointRetryCap) + " times");
    }
  }

  GeneratedScene scene;
  scene.problem = Problem::create(cameras, points, std::move(observations));
  scene.ground_truth = {std::move(cameras), std::move(points)};
  return scene;
}

ParamState perturb(const ParamState& state, const InitPerturbation& pert) {
  if (pert.sigma_cam < 0.0 || pert.sigma_point < 0.0) {
    throw ValidationError("perturbation sigmas must be nonnegative");
  }
  Rng rng(pert.rng_seed);
  ParamState out = state;
  for (CameraParams& cam : out.cameras) {
    cam.alpha += rng.normal(0.0, pert.sigma_cam);
    cam.beta += rng.normal(0.0, pert.sigma_cam);
    cam.gamma += rng.normal(0.0, pert.sigma_cam);
    for (int k = 0; k < 3; ++k) {
      cam.t[k] += rng.normal(0.0, pert.sigma_cam);
    }
  }
  for (ScenePoint& p : out.points) {
    for (int k = 0; k < 3; ++k) {
      p[k] += rng.normal(0.0, pert.sigma_point);
    }
  }
  return out;
}

}  // namespace dba
