#pragma once

#include <cstdint>

#include "dba/problem.hpp"

namespace dba {

/// Axis-aligned box for scene-point placement.
struct Box3 {
  Vec3 min = Vec3(-250.0, -250.0, -50.0);
  Vec3 max = Vec3(250.0, 250.0, 50.0);

  Vec3 center() const { return 0.5 * (min + max); }
};

/// Orbiting-camera scenario: cameras equally spaced on a circle at fixed
/// altitude, aimed at the point-region centroid, with Gaussian pose jitter;
/// points uniform in the region, each visible in a window of consecutive
/// frames (wrapping around the orbit). Observations are exact projections.
struct SceneConfig {
  int n_cameras = 5;
  int n_points = 10;
  double orbit_radius = 1000.0;  ///< meters
  double altitude = 1500.0;      ///< meters
  Box3 point_region;
  double jitter_trans = 10.0;   ///< std of camera-center jitter, meters
  double jitter_rot = 0.01;     ///< std of Euler-angle jitter, radians
  int visibility_window = 5;    ///< w consecutive frames per point, 2 <= w <= n_cameras
  double focal = 200.0;         ///< pixels
  std::uint64_t rng_seed = 0;
};

/// Additive Gaussian noise for initial estimates; focal lengths untouched.
struct InitPerturbation {
  double sigma_cam = 0.0;    ///< std on every angle and translation coordinate
  double sigma_point = 0.0;  ///< std on every point coordinate
  std::uint64_t rng_seed = 0;
};

struct GeneratedScene {
  Problem problem;
  ParamState ground_truth;
};

GeneratedScene generate_scene(const SceneConfig& config);

ParamState perturb(const ParamState& state, const InitPerturbation& pert);

}  // namespace dba
