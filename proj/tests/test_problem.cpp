#include "dba/problem.hpp"

#include <algorithm>
#include <doctest.h>
#include <numbers>

#include "dba/errors.hpp"
#include "dba/rng.hpp"
#include "dba/scene_gen.hpp"
#include "test_util.hpp"

using namespace dba;

TEST_SUITE("problem") {

TEST_CASE("build_visibility: direct construction") {
  const std::vector<Observation> obs = {
      {0, 0, ImagePoint(0, 0)}, {0, 1, ImagePoint(0, 0)}, {1, 1, ImagePoint(0, 0)}};
  const Visibility vis = build_visibility(obs, 2, 2);
  CHECK(vis.points_in_camera[0] == std::vector<int>{0, 1});
  CHECK(vis.points_in_camera[1] == std::vector<int>{1});
  CHECK(vis.cameras_seeing_point[0] == std::vector<int>{0});
  CHECK(vis.cameras_seeing_point[1] == std::vector<int>{0, 1});
}

TEST_CASE("build_visibility: degenerate and invalid inputs") {
  CHECK_THROWS_AS(build_visibility({}, 1, 1), ValidationError);
  CHECK_THROWS_AS(build_visibility({{0, 0, {}}, {0, 0, {}}}, 1, 1), DuplicateObservation);
  CHECK_THROWS_AS(build_visibility({{2, 0, {}}}, 2, 1), IndexOutOfRange);
  CHECK_THROWS_AS(build_visibility({{0, 5, {}}}, 1, 3), IndexOutOfRange);
  // camera 1 observes nothing
  CHECK_THROWS_AS(build_visibility({{0, 0, {}}}, 2, 1), ValidationError);
  // point 1 unobserved
  CHECK_THROWS_AS(build_visibility({{0, 0, {}}}, 1, 2), ValidationError);
}

TEST_CASE("build_visibility: transpose of transpose is the original") {
  Rng rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    const int m = 2 + static_cast<int>(rng.uniform_int(6));
    const int n = 2 + static_cast<int>(rng.uniform_int(10));
    // random sparse pattern covering all cameras and points
    std::vector<Observation> obs;
    for (int j = 0; j < m; ++j) {
      obs.push_back({j, static_cast<int>(rng.uniform_int(n)), ImagePoint(0, 0)});
    }
    for (int i = 0; i < n; ++i) {
      obs.push_back({static_cast<int>(rng.uniform_int(m)), i, ImagePoint(0, 0)});
    }
    std::sort(obs.begin(), obs.end(), [](const Observation& a, const Observation& b) {
      return std::pair(a.cam_id, a.point_id) < std::pair(b.cam_id, b.point_id);
    });
    obs.erase(std::unique(obs.begin(), obs.end(),
                          [](const Observation& a, const Observation& b) {
                            return a.cam_id == b.cam_id && a.point_id == b.point_id;
                          }),
              obs.end());

    const Visibility vis = build_visibility(obs, m, n);
    // rebuild S(j) from the transpose and compare
    std::vector<std::vector<int>> rebuilt(m);
    for (int i = 0; i < n; ++i) {
      for (int j : vis.cameras_seeing_point[i]) {
        rebuilt[j].push_back(i);
      }
    }
    for (auto& v : rebuilt) {
      std::sort(v.begin(), v.end());
    }
    CHECK(rebuilt == vis.points_in_camera);
  }
}

TEST_CASE("mean_reprojection_error: zero on exact data, norm on a single residual") {
  const GeneratedScene scene = generate_scene(test::standard_scene_config(7));
  CHECK(mean_reprojection_error(scene.problem, scene.ground_truth) <= 1e-12);

  // one camera, two points; shift one observation by (3, 4)
  CameraParams cam;
  cam.t = Vec3(0, 0, 10);
  std::vector<ScenePoint> pts = {Vec3(0, 0, 1), Vec3(1, 1, 1)};
  std::vector<Observation> obs = {{0, 0, project(pts[0], cam)}, {0, 1, project(pts[1], cam)}};
  obs[0].z += Vec2(3, 4);
  const Problem p = Problem::create({cam}, pts, obs);
  CHECK(mean_reprojection_error(p, p.nominal_state()) == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(rms_reprojection_error(p, p.nominal_state()) ==
        doctest::Approx(std::sqrt(12.5)).epsilon(1e-12));
}

TEST_CASE("mean_reprojection_error: recomputation and order independence") {
  Rng rng(42);
  const GeneratedScene scene = generate_scene(test::standard_scene_config(8));
  const ParamState state = perturb(scene.ground_truth, {0.01, 0.05, 99});

  double direct = 0.0;
  for (const Observation& obs : scene.problem.observations) {
    direct += (obs.z - project(state.points[obs.point_id], state.cameras[obs.cam_id])).norm();
  }
  direct /= scene.problem.num_observations();
  CHECK(mean_reprojection_error(scene.problem, state) == doctest::Approx(direct).epsilon(1e-12));

  // shuffle observations: same metric
  std::vector<Observation> shuffled = scene.problem.observations;
  for (std::size_t k = shuffled.size(); k > 1; --k) {
    std::swap(shuffled[k - 1], shuffled[rng.uniform_int(k)]);
  }
  const Problem reordered =
      Problem::create(scene.problem.cameras, scene.problem.points, shuffled);
  CHECK(mean_reprojection_error(reordered, state) ==
        doctest::Approx(mean_reprojection_error(scene.problem, state)).epsilon(1e-12));
}

TEST_CASE("mean_reprojection_error: reports the offending observation") {
  CameraParams cam;
  cam.t = Vec3(0, 0, 2);
  std::vector<ScenePoint> pts = {Vec3(0, 0, 1)};
  const Problem p = Problem::create({cam}, pts, {{0, 0, project(pts[0], cam)}});
  ParamState bad = p.nominal_state();
  bad.points[0] = Vec3(0, 0, -5);
  try {
    mean_reprojection_error(p, bad);
    FAIL("expected DepthBelowGuard");
  } catch (const DepthBelowGuard& e) {
    CHECK(e.point_id == 0);
    CHECK(e.cam_id == 0);
  }
}

TEST_CASE("parameter_mse: identity, arithmetic, recomputation") {
  const GeneratedScene scene = generate_scene(test::standard_scene_config(9));
  const MseResult zero = parameter_mse(scene.ground_truth, scene.ground_truth);
  CHECK(zero.camera_mse == 0.0);
  CHECK(zero.point_mse == 0.0);

  ParamState offset = scene.ground_truth;
  offset.points[3] += Vec3(1, 0, 0);  // 10 points -> 30 coordinates
  const MseResult one = parameter_mse(offset, scene.ground_truth);
  CHECK(one.point_mse == doctest::Approx(1.0 / 30.0).epsilon(1e-15));
  CHECK(one.camera_mse == 0.0);

  Rng rng(43);
  ParamState noisy = perturb(scene.ground_truth, {0.1, 0.3, 44});
  const MseResult mse = parameter_mse(noisy, scene.ground_truth);
  double cam_direct = 0.0, pt_direct = 0.0;
  for (int j = 0; j < scene.problem.num_cameras(); ++j) {
    const Vec6 d = noisy.cameras[j].pose() - scene.ground_truth.cameras[j].pose();
    cam_direct += d.squaredNorm();  // no wrap needed: perturbations are small
  }
  for (int i = 0; i < scene.problem.num_points(); ++i) {
    pt_direct += (noisy.points[i] - scene.ground_truth.points[i]).squaredNorm();
  }
  CHECK(mse.camera_mse ==
        doctest::Approx(cam_direct / (6.0 * scene.problem.num_cameras())).epsilon(1e-12));
  CHECK(mse.point_mse ==
        doctest::Approx(pt_direct / (3.0 * scene.problem.num_points())).epsilon(1e-12));
}

TEST_CASE("parameter_mse: angle differences wrap") {
  ParamState a, b;
  CameraParams cam;
  a.cameras = {cam};
  cam.alpha = 2.0 * std::numbers::pi;  // same orientation, unwrapped storage
  b.cameras = {cam};
  a.points = b.points = {Vec3::Zero()};
  CHECK(parameter_mse(a, b).camera_mse < 1e-24);
}

TEST_CASE("parameter_mse: size mismatch") {
  ParamState a, b;
  a.cameras.resize(2);
  a.points.resize(3, Vec3::Zero());
  b.cameras.resize(2);
  b.points.resize(4, Vec3::Zero());
  CHECK_THROWS_AS(parameter_mse(a, b), SizeMismatch);
}

TEST_CASE("align_similarity undoes a known gauge transform") {
  const GeneratedScene scene = generate_scene(test::standard_scene_config(10));
  // apply a similarity to the ground truth
  const double s = 1.7;
  const Mat3 Q = rotation_from_euler(0.3, -0.2, 0.5);
  const Vec3 b(40, -25, 10);
  ParamState moved = scene.ground_truth;
  for (ScenePoint& p : moved.points) {
    p = s * Q * p + b;
  }
  for (CameraParams& cam : moved.cameras) {
    const Mat3 R = rotation_from_euler(cam.alpha, cam.beta, cam.gamma);
    const Mat3 Rn = R * Q.transpose();
    const Vec3 angles = euler_from_rotation(Rn);
    cam.alpha = angles[0];
    cam.beta = angles[1];
    cam.gamma = angles[2];
    cam.t = s * cam.t - Rn * b;
  }
  // the transform preserves reprojection
  CHECK(mean_reprojection_error(scene.problem, moved) < 1e-6);

  const ParamState aligned = align_similarity(moved, scene.ground_truth);
  const MseResult mse = parameter_mse(aligned, scene.ground_truth);
  CHECK(mse.point_mse < 1e-12);
  CHECK(mse.camera_mse < 1e-12);
}

}  // TEST_SUITE
