#include "dba/admm_solver.hpp"

#include <algorithm>
#include <doctest.h>
#include <set>

#include "dba/errors.hpp"
#include "dba/local_opt.hpp"
#include "dba/scene_gen.hpp"
#include "test_util.hpp"

using namespace dba;

namespace {

// Two cameras both seeing one point from above; the smallest problem with a
// shared consensus variable.
Problem two_camera_problem() {
  CameraParams a;
  a.t = Vec3(0, 0, 5);
  CameraParams b;
  b.t = Vec3(0.5, -0.5, 6);
  const std::vector<ScenePoint> pts = {Vec3(0.1, -0.2, 1.0)};
  return Problem::create({a, b}, pts,
                         {{0, 0, project(pts[0], a)}, {1, 0, project(pts[0], b)}});
}

}  // namespace

TEST_SUITE("admm_solver") {

TEST_CASE("partition: one observation per block when sizes are 1") {
  const GeneratedScene scene = generate_scene(test::standard_scene_config(81));
  const auto blocks = partition(scene.problem, {1, 1});
  CHECK(blocks.size() == static_cast<std::size_t>(scene.problem.num_observations()));
  for (const LocalBlock& block : blocks) {
    CHECK(block.point_ids.size() == 1);
    CHECK(block.cam_ids.size() == 1);
    CHECK(block.obs_ids.size() == 1);
  }
}

TEST_CASE("partition: full sizes give a single centralized block") {
  const GeneratedScene scene = generate_scene(test::standard_scene_config(82));
  const auto blocks =
      partition(scene.problem, {scene.problem.num_points(), scene.problem.num_cameras()});
  REQUIRE(blocks.size() == 1);
  CHECK(blocks[0].obs_ids.size() == static_cast<std::size_t>(scene.problem.num_observations()));
}

TEST_CASE("partition: every observation lands in exactly one block, limits respected") {
  SceneConfig config = test::standard_scene_config(83);
  config.n_cameras = 9;
  config.n_points = 40;
  config.visibility_window = 4;
  const GeneratedScene scene = generate_scene(config);
  for (const BlockConfig bc : {BlockConfig{3, 2}, BlockConfig{8, 1}, BlockConfig{1, 5}}) {
    const auto blocks = partition(scene.problem, bc);
    std::set<int> seen;
    for (const LocalBlock& block : blocks) {
      CHECK(static_cast<int>(block.point_ids.size()) <= bc.points_per_block);
      CHECK(static_cast<int>(block.cam_ids.size()) <= bc.cameras_per_block);
      for (std::size_t o = 0; o < block.obs_ids.size(); ++o) {
        CHECK(seen.insert(block.obs_ids[o]).second);  // no duplicates across blocks
        const Observation& obs = scene.problem.observations[block.obs_ids[o]];
        CHECK(block.point_ids[block.obs_point_local[o]] == obs.point_id);
        CHECK(block.cam_ids[block.obs_cam_local[o]] == obs.cam_id);
      }
    }
    CHECK(seen.size() == static_cast<std::size_t>(scene.problem.num_observations()));
  }
}

TEST_CASE("fixed point: exact state survives a full iteration unchanged") {
  const GeneratedScene scene = generate_scene(test::standard_scene_config(84));
  AdmmSolver solver(scene.problem, scene.ground_truth, AdmmOptions{});
  const AdmmState before = solver.state();
  solver.iterate();
  const AdmmState& after = solver.state();
  for (std::size_t b = 0; b < solver.blocks().size(); ++b) {
    for (std::size_t q = 0; q < before.local_points[b].size(); ++q) {
      CHECK((after.local_points[b][q] - before.local_points[b][q]).cwiseAbs().maxCoeff() <=
            1e-12);
      CHECK(after.dual_r[b][q].cwiseAbs().maxCoeff() <= 1e-12);
    }
    for (std::size_t q = 0; q < before.local_cameras[b].size(); ++q) {
      CHECK((after.local_cameras[b][q] - before.local_cameras[b][q]).cwiseAbs().maxCoeff() <=
            1e-12);
      CHECK(after.dual_s[b][q].cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
  for (int i = 0; i < scene.problem.num_points(); ++i) {
    CHECK((after.consensus.points[i] - before.consensus.points[i]).cwiseAbs().maxCoeff() <=
          1e-12);
  }
  for (int j = 0; j < scene.problem.num_cameras(); ++j) {
    CHECK((after.consensus.cameras[j].pose() - before.consensus.cameras[j].pose())
              .cwiseAbs()
              .maxCoeff() <= 1e-12);
  }
}

TEST_CASE("local_update: a huge rho pins the copies to consensus") {
  const Problem problem = two_camera_problem();
  AdmmOptions opts;
  opts.rho_x = 1e12;
  opts.rho_y = 1e12;
  AdmmSolver solver(problem, problem.nominal_state(), opts);
  AdmmState& state = solver.mutable_state();
  state.local_points[0][0] += Vec3(0.05, -0.02, 0.03);
  state.local_cameras[0][0] += (Vec6() << 0.01, -0.01, 0.02, 0.1, -0.1, 0.05).finished();
  solver.local_update(0);
  CHECK((state.local_points[0][0] - state.consensus.points[0]).norm() < 1e-6);
  CHECK((state.local_cameras[0][0] - state.consensus.cameras[0].pose()).norm() < 1e-6);
}

TEST_CASE("local_update: gauss-newton result matches an l-bfgs solve of the same subproblem") {
  const GeneratedScene scene = generate_scene(test::standard_scene_config(85));
  AdmmOptions opts;
  opts.inner.max_iters = 60;  // solve essentially to convergence on both routes
  AdmmSolver solver(scene.problem, perturb(scene.ground_truth, {0.05, 0.3, 86}), opts);
  solver.iterate();
  solver.iterate();  // build up nonzero duals

  const int b = 7;
  const LocalBlock& block = solver.blocks()[b];
  REQUIRE(block.obs_ids.size() == 1);
  const AdmmState before = solver.state();

  solver.local_update(b);
  const double gn_objective = solver.block_objective(b);

  // independent route: L-BFGS on the same augmented objective
  const Observation& obs = scene.problem.observations[block.obs_ids[0]];
  const Vec3 x_bar = before.consensus.points[obs.point_id];
  const Vec6 y_bar = before.consensus.cameras[obs.cam_id].pose();
  const double focal = before.consensus.cameras[obs.cam_id].f;
  const Vec3 r_dual = before.dual_r[b][0];
  const Vec6 s_dual = before.dual_s[b][0];

  const auto value = [&](const Eigen::VectorXd& v) -> std::optional<double> {
    CameraParams cam;
    cam.set_pose(v.tail<6>());
    cam.f = focal;
    const auto r = try_residual(obs.z, v.head<3>(), cam);
    if (!r) {
      return std::nullopt;
    }
    const Vec3 dx = v.head<3>() - x_bar;
    const Vec6 dy = v.tail<6>() - y_bar;
    return r->squaredNorm() + r_dual.dot(dx) + s_dual.dot(dy) +
           0.5 * opts.rho_x * dx.squaredNorm() + 0.5 * opts.rho_y * dy.squaredNorm();
  };
  const auto grad = [&](const Eigen::VectorXd& v) -> std::optional<Eigen::VectorXd> {
    CameraParams cam;
    cam.set_pose(v.tail<6>());
    cam.f = focal;
    const auto exp = try_project_with_jacobians(v.head<3>(), cam);
    if (!exp) {
      return std::nullopt;
    }
    const Vec2 r = obs.z - exp->z;
    Eigen::VectorXd g(9);
    g.head<3>() = -2.0 * exp->J_point.transpose() * r + r_dual +
                  opts.rho_x * (v.head<3>() - x_bar);
    g.tail<6>() = -2.0 * exp->J_camera.transpose() * r + s_dual +
                  opts.rho_y * (v.tail<6>() - y_bar);
    return g;
  };

  Eigen::VectorXd v0(9);
  v0.head<3>() = before.local_points[b][0];
  v0.tail<6>() = before.local_cameras[b][0];
  InnerOptions inner;
  inner.max_iters = 400;
  inner.grad_tol = 1e-10;
  const InnerResult lb = lbfgs(value, grad, v0, inner);

  CHECK(std::abs(gn_objective - lb.objective) < 1e-6);
}

TEST_CASE("local_update: never increases the block objective") {
  const GeneratedScene scene = generate_scene(test::standard_scene_config(87));
  AdmmSolver solver(scene.problem, perturb(scene.ground_truth, {0.1, 0.5, 88}), AdmmOptions{});
  solver.iterate();
  for (std::size_t b = 0; b < solver.blocks().size(); ++b) {
    const double before = solver.block_objective(static_cast<int>(b));
    solver.local_update(static_cast<int>(b));
    const double after = solver.block_objective(static_cast<int>(b));
    CHECK(after <= before + 1e-12 * std::abs(before));
  }
}

TEST_CASE("consensus_update: plain mean and dual-offset mean") {
  const Problem problem = two_camera_problem();
  AdmmOptions opts;
  opts.rho_x = 2.0;
  AdmmSolver solver(problem, problem.nominal_state(), opts);
  AdmmState& state = solver.mutable_state();
  REQUIRE(solver.blocks().size() == 2);

  state.local_points[0][0] = Vec3(1, 1, 1);
  state.local_points[1][0] = Vec3(3, 3, 3);
  solver.consensus_update();
  CHECK(state.consensus.points[0] == Vec3(2, 2, 2));

  state.dual_r[0][0] = Vec3(2, 2, 2);
  state.dual_r[1][0] = Vec3(-2, -2, -2);
  solver.consensus_update();  // terms (1,1,1)+(1,1,1) and (3,3,3)-(1,1,1)
  CHECK(state.consensus.points[0] == Vec3(2, 2, 2));
}

TEST_CASE("consensus_update: matches direct recomputation on random states") {
  const GeneratedScene scene = generate_scene(test::standard_scene_config(89));
  AdmmOptions opts;
  opts.rho_x = 1.7;
  opts.rho_y = 0.3;
  AdmmSolver solver(scene.problem, scene.ground_truth, opts);
  AdmmState& state = solver.mutable_state();
  Rng rng(90);
  for (auto& blockpts : state.local_points) {
    for (auto& p : blockpts) {
      p += Vec3(rng.normal(), rng.normal(), rng.normal());
    }
  }
  for (auto& duals : state.dual_r) {
    for (auto& r : duals) {
      r = Vec3(rng.normal(), rng.normal(), rng.normal());
    }
  }
  solver.consensus_update();

  for (int i = 0; i < scene.problem.num_points(); ++i) {
    Vec3 mean = Vec3::Zero();
    int count = 0;
    for (std::size_t b = 0; b < solver.blocks().size(); ++b) {
      const LocalBlock& block = solver.blocks()[b];
      for (std::size_t q = 0; q < block.point_ids.size(); ++q) {
        if (block.point_ids[q] == i) {
          mean += state.local_points[b][q] + state.dual_r[b][q] / opts.rho_x;
          ++count;
        }
      }
    }
    mean /= count;
    CHECK((state.consensus.points[i] - mean).norm() < 1e-12 * (1.0 + mean.norm()));
  }
}

TEST_CASE("dual_update: scaled residual increment") {
  const Problem problem = two_camera_problem();
  AdmmOptions opts;
  opts.rho_x = 2.0;
  AdmmSolver solver(problem, problem.nominal_state(), opts);
  AdmmState& state = solver.mutable_state();
  state.local_points[0][0] = state.consensus.points[0] + Vec3(1, 0, -1);
  solver.dual_update();
  CHECK(state.dual_r[0][0] == Vec3(2, 0, -2));
  // block 1 copy untouched: dual stays zero
  CHECK(state.dual_r[1][0] == Vec3(0, 0, 0));
}

TEST_CASE("dual sums vanish after any consensus+dual round") {
  const GeneratedScene scene = generate_scene(test::standard_scene_config(91));
  AdmmSolver solver(scene.problem, scene.ground_truth, AdmmOptions{});
  AdmmState& state = solver.mutable_state();
  Rng rng(92);
  for (auto& blockpts : state.local_points) {
    for (auto& p : blockpts) {
      p += 5.0 * Vec3(rng.normal(), rng.normal(), rng.normal());
    }
  }
  for (auto& blockcams : state.local_cameras) {
    for (auto& y : blockcams) {
      for (int k = 0; k < 6; ++k) {
        y[k] += rng.normal();
      }
    }
  }
  for (auto& duals : state.dual_r) {
    for (auto& r : duals) {
      r = 10.0 * Vec3(rng.normal(), rng.normal(), rng.normal());
    }
  }
  for (auto& duals : state.dual_s) {
    for (auto& s : duals) {
      for (int k = 0; k < 6; ++k) {
        s[k] = 10.0 * rng.normal();
      }
    }
  }
  solver.consensus_update();
  solver.dual_update();

  double max_dual = 0.0;
  for (const auto& duals : state.dual_r) {
    for (const auto& r : duals) {
      max_dual = std::max(max_dual, r.norm());
    }
  }
  for (const auto& duals : state.dual_s) {
    for (const auto& s : duals) {
      max_dual = std::max(max_dual, s.norm());
    }
  }
  for (int i = 0; i < scene.problem.num_points(); ++i) {
    CHECK(solver.dual_sum_point(i).norm() <= 1e-9 * (1.0 + max_dual));
  }
  for (int j = 0; j < scene.problem.num_cameras(); ++j) {
    CHECK(solver.dual_sum_camera(j).norm() <= 1e-9 * (1.0 + max_dual));
  }
}

TEST_CASE("run_admm converges on the standard noiseless scene") {
  const GeneratedScene scene = generate_scene(test::standard_scene_config(93));
  const ParamState init = perturb(scene.ground_truth, {0.01, 0.01, 94});
  AdmmOptions opts;
  opts.stop_on_primal = true;
  opts.primal_tol = 1e-6;
  const AdmmResult result = run_admm(scene.problem, init, opts, {}, &scene.ground_truth);
  REQUIRE(!result.trace.empty());
  bool hit = false;
  for (const IterationRecord& rec : result.trace) {
    hit = hit || (rec.mean_reproj_err < 1e-3 &&
                  std::max(rec.max_primal_x, rec.max_primal_y) < 1e-4);
  }
  CHECK(hit);
  // MSE against truth improves on the init
  const MseResult init_mse = parameter_mse(init, scene.ground_truth);
  const MseResult final_mse = parameter_mse(result.state, scene.ground_truth);
  CHECK(final_mse.point_mse <= init_mse.point_mse);
  CHECK(final_mse.camera_mse <= init_mse.camera_mse);
}

TEST_CASE("single centralized block: duals stay zero, trace equals the prox iteration") {
  const GeneratedScene scene = generate_scene(test::standard_scene_config(95));
  const ParamState init = perturb(scene.ground_truth, {0.01, 0.01, 96});
  AdmmOptions opts;
  opts.max_iters = 5;
  const BlockConfig whole{scene.problem.num_points(), scene.problem.num_cameras()};

  AdmmSolver solver(scene.problem, init, opts, whole);
  REQUIRE(solver.blocks().size() == 1);
  for (int k = 0; k < opts.max_iters; ++k) {
    solver.iterate();
  }
  const AdmmState& state = solver.state();
  CHECK(state.dual_r[0][0].norm() == 0.0);
  CHECK(state.dual_s[0][0].norm() == 0.0);
  for (int i = 0; i < scene.problem.num_points(); ++i) {
    CHECK((state.consensus.points[i] - state.local_points[0][i]).norm() == 0.0);
  }

  // consensus trajectory equals repeated proximal Gauss-Newton steps
  AdmmSolver replay(scene.problem, init, opts, whole);
  for (int k = 0; k < opts.max_iters; ++k) {
    replay.local_update(0);
    replay.consensus_update();
    replay.dual_update();
  }
  for (int i = 0; i < scene.problem.num_points(); ++i) {
    CHECK((replay.state().consensus.points[i] - state.consensus.points[i]).norm() == 0.0);
  }
}

TEST_CASE("communication_cost: uniform window formula and the d=1 case") {
  SceneConfig config = test::standard_scene_config(97);
  config.visibility_window = 3;
  const GeneratedScene scene = generate_scene(config);
  // d = 3 cameras per point, n = 10 points -> 3*2*3*10 = 180
  CHECK(communication_cost(scene.problem, {1, 1}) == 180);

  CameraParams a;
  a.t = Vec3(0, 0, 5);
  CameraParams b;
  b.t = Vec3(1, 0, 5);
  const std::vector<ScenePoint> pts = {Vec3(0, 0, 1), Vec3(0.5, 0, 1)};
  const Problem isolated = Problem::create(
      {a, b}, pts, {{0, 0, project(pts[0], a)}, {1, 1, project(pts[1], b)}});
  CHECK(communication_cost(isolated, {1, 1}) == 0);
}

TEST_CASE("communication_cost equals a message-by-message simulation") {
  SceneConfig config;
  config.n_cameras = 9;
  config.n_points = 25;
  config.visibility_window = 4;
  config.rng_seed = 98;
  const GeneratedScene scene = generate_scene(config);
  for (const BlockConfig bc : {BlockConfig{1, 1}, BlockConfig{4, 2}, BlockConfig{3, 1}}) {
    const auto blocks = partition(scene.problem, bc);
    // owners: processor = lowest camera of the block; replay every directed
    // transfer between distinct owners of each consensus variable
    std::int64_t messages = 0;
    auto count = [&](const std::vector<std::set<int>>& owners, int dim) {
      for (const auto& procs : owners) {
        for (int from : procs) {
          for (int to : procs) {
            if (from != to) {
              messages += dim;
            }
          }
        }
      }
    };
    std::vector<std::set<int>> point_owners(scene.problem.num_points());
    std::vector<std::set<int>> camera_owners(scene.problem.num_cameras());
    for (const LocalBlock& block : blocks) {
      for (int i : block.point_ids) {
        point_owners[i].insert(block.cam_ids.front());
      }
      for (int j : block.cam_ids) {
        camera_owners[j].insert(block.cam_ids.front());
      }
    }
    count(point_owners, 3);
    count(camera_owners, 6);
    CHECK(communication_cost(scene.problem, bc) == messages);
  }
}

TEST_CASE("ops counter is exactly linear in the observation count") {
  SceneConfig small = test::standard_scene_config(99);
  SceneConfig big = small;
  big.n_points = 20;  // doubles l at fixed window
  AdmmOptions opts;
  const AdmmSolver a(generate_scene(small).problem, generate_scene(small).ground_truth, opts);
  const AdmmSolver b(generate_scene(big).problem, generate_scene(big).ground_truth, opts);
  CHECK(a.ops_per_iteration() * 2 == b.ops_per_iteration());
}

TEST_CASE("results are identical for any worker count") {
  const GeneratedScene scene = generate_scene(test::standard_scene_config(100));
  const ParamState init = perturb(scene.ground_truth, {0.05, 0.2, 101});
  AdmmOptions opts;
  opts.max_iters = 40;
  ParamState reference_result;
  for (const int workers : {1, 2, 8}) {
    opts.workers = workers;
    const AdmmResult result = run_admm(scene.problem, init, opts);
    if (workers == 1) {
      reference_result = result.state;
      continue;
    }
    double max_diff = 0.0;
    for (int i = 0; i < scene.problem.num_points(); ++i) {
      max_diff = std::max(max_diff,
                          (result.state.points[i] - reference_result.points[i]).cwiseAbs().maxCoeff());
    }
    for (int j = 0; j < scene.problem.num_cameras(); ++j) {
      max_diff = std::max(max_diff, (result.state.cameras[j].pose() -
                                     reference_result.cameras[j].pose())
                                        .cwiseAbs()
                                        .maxCoeff());
    }
    CHECK(max_diff <= 1e-12);
  }
}

TEST_CASE("stationarity: objective gradient at consensus shrinks with the primal residual") {
  const GeneratedScene scene = generate_scene(test::standard_scene_config(102));
  const ParamState init = perturb(scene.ground_truth, {0.01, 0.01, 103});
  AdmmOptions opts;
  opts.stop_on_primal = true;
  opts.primal_tol = 1e-6;
  AdmmSolver solver(scene.problem, init, opts);
  const AdmmResult result = solver.run();
  const double primal =
      std::max(solver.max_primal_residual_points(), solver.max_primal_residual_cameras());
  REQUIRE(primal < 1e-6);

  // gradient of the plain BA objective at the consensus point
  Eigen::VectorXd g_pt = Eigen::VectorXd::Zero(3 * scene.problem.num_points());
  Eigen::VectorXd g_cam = Eigen::VectorXd::Zero(6 * scene.problem.num_cameras());
  for (const Observation& obs : scene.problem.observations) {
    const auto exp = try_project_with_jacobians(result.state.points[obs.point_id],
                                                result.state.cameras[obs.cam_id]);
    REQUIRE(exp.has_value());
    const Vec2 r = obs.z - exp->z;
    g_pt.segment<3>(3 * obs.point_id) -= 2.0 * exp->J_point.transpose() * r;
    g_cam.segment<6>(6 * obs.cam_id) -= 2.0 * exp->J_camera.transpose() * r;
  }
  const double grad_inf = std::max(g_pt.cwiseAbs().maxCoeff(), g_cam.cwiseAbs().maxCoeff());
  CHECK(grad_inf <= 1e5 * primal + 1e-6);
}

TEST_CASE("invalid options are rejected") {
  const GeneratedScene scene = generate_scene(test::standard_scene_config(104));
  AdmmOptions opts;
  opts.rho_x = 0.0;
  CHECK_THROWS_AS(AdmmSolver(scene.problem, scene.ground_truth, opts), ValidationError);
  opts = AdmmOptions{};
  opts.workers = 0;
  CHECK_THROWS_AS(AdmmSolver(scene.problem, scene.ground_truth, opts), ValidationError);
  CHECK_THROWS_AS(partition(scene.problem, {0, 1}), ValidationError);
  ParamState short_state = scene.ground_truth;
  short_state.points.pop_back();
  CHECK_THROWS_AS(AdmmSolver(scene.problem, short_state, AdmmOptions{}), SizeMismatch);
}

}  // TEST_SUITE
