#include "dba/admm_solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <mutex>
#include <unordered_set>

#include "dba/errors.hpp"

namespace dba {

std::vector<LocalBlock> partition(const Problem& problem, const BlockConfig& config) {
  if (config.points_per_block < 1 || config.cameras_per_block < 1) {
    throw ValidationError("block sizes must be >= 1");
  }

  std::vector<int> order(problem.num_observations());
  for (int k = 0; k < problem.num_observations(); ++k) {
    order[k] = k;
  }
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const Observation& oa = problem.observations[a];
    const Observation& ob = problem.observations[b];
    return std::pair(oa.cam_id, oa.point_id) < std::pair(ob.cam_id, ob.point_id);
  });

  std::vector<LocalBlock> blocks;
  std::unordered_set<int> pts, cams;
  std::vector<int> pending;

  auto flush = [&] {
    if (pending.empty()) {
      return;
    }
    LocalBlock block;
    block.point_ids.assign(pts.begin(), pts.end());
    block.cam_ids.assign(cams.begin(), cams.end());
    std::sort(block.point_ids.begin(), block.point_ids.end());
    std::sort(block.cam_ids.begin(), block.cam_ids.end());
    block.obs_ids = pending;
    for (int k : pending) {
      const Observation& obs = problem.observations[k];
      block.obs_point_local.push_back(static_cast<int>(
          std::lower_bound(block.point_ids.begin(), block.point_ids.end(), obs.point_id) -
          block.point_ids.begin()));
      block.obs_cam_local.push_back(static_cast<int>(
          std::lower_bound(block.cam_ids.begin(), block.cam_ids.end(), obs.cam_id) -
          block.cam_ids.begin()));
    }
    blocks.push_back(std::move(block));
    pts.clear();
    cams.clear();
    pending.clear();
  };

  for (int k : order) {
    const Observation& obs = problem.observations[k];
    const int new_pt = pts.count(obs.point_id) ? 0 : 1;
    const int new_cam = cams.count(obs.cam_id) ? 0 : 1;
    if (static_cast<int>(pts.size()) + new_pt > config.points_per_block ||
        static_cast<int>(cams.size()) + new_cam > config.cameras_per_block) {
      flush();
    }
    pts.insert(obs.point_id);
    cams.insert(obs.cam_id);
    pending.push_back(k);
  }
  flush();
  return blocks;
}

std::int64_t communication_cost(const Problem& problem, const BlockConfig& config) {
  const std::vector<LocalBlock> blocks = partition(problem, config);
  std::vector<std::vector<int>> point_procs(problem.num_points());
  std::vector<std::vector<int>> camera_procs(problem.num_cameras());
  for (const LocalBlock& block : blocks) {
    const int proc = block.cam_ids.front();
    for (int i : block.point_ids) {
      point_procs[i].push_back(proc);
    }
    for (int j : block.cam_ids) {
      camera_procs[j].push_back(proc);
    }
  }
  auto distinct = [](std::vector<int>& v) {
    std::sort(v.begin(), v.end());
    return static_cast<std::int64_t>(std::unique(v.begin(), v.end()) - v.begin());
  };
  std::int64_t total = 0;
  for (auto& procs : point_procs) {
    const std::int64_t o = distinct(procs);
    total += 3 * o * (o - 1);
  }
  for (auto& procs : camera_procs) {
    const std::int64_t o = distinct(procs);
    total += 6 * o * (o - 1);
  }
  return total;
}

AdmmSolver::AdmmSolver(const Problem& problem, ParamState init, AdmmOptions opts,
                       BlockConfig block_config)
    : problem_(problem), opts_(opts) {
  if (!(opts_.rho_x > 0.0) || !(opts_.rho_y > 0.0)) {
    throw ValidationError("penalty parameters must be positive");
  }
  if (opts_.workers < 1) {
    throw ValidationError("worker count must be >= 1");
  }
  if (static_cast<int>(init.cameras.size()) != problem.num_cameras() ||
      static_cast<int>(init.points.size()) != problem.num_points()) {
    throw SizeMismatch("init state sizes do not match the problem");
  }
  mean_reprojection_error(problem, init, opts_.guard);  // init must be feasible

  blocks_ = partition(problem, block_config);
  comm_floats_ = communication_cost(problem, block_config);

  state_.consensus = std::move(init);
  state_.local_points.resize(blocks_.size());
  state_.local_cameras.resize(blocks_.size());
  state_.dual_r.resize(blocks_.size());
  state_.dual_s.resize(blocks_.size());
  point_copies_.resize(problem.num_points());
  camera_copies_.resize(problem.num_cameras());
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const LocalBlock& block = blocks_[b];
    for (std::size_t q = 0; q < block.point_ids.size(); ++q) {
      state_.local_points[b].push_back(state_.consensus.points[block.point_ids[q]]);
      state_.dual_r[b].push_back(Vec3::Zero());
      point_copies_[block.point_ids[q]].push_back({static_cast<int>(b), static_cast<int>(q)});
    }
    for (std::size_t q = 0; q < block.cam_ids.size(); ++q) {
      state_.local_cameras[b].push_back(state_.consensus.cameras[block.cam_ids[q]].pose());
      state_.dual_s[b].push_back(Vec6::Zero());
      camera_copies_[block.cam_ids[q]].push_back({static_cast<int>(b), static_cast<int>(q)});
    }
  }
  pool_ = std::make_unique<WorkerPool>(opts_.workers);
}

void AdmmSolver::local_update(int block_index) {
  const LocalBlock& block = blocks_[block_index];
  const int np = static_cast<int>(block.point_ids.size());
  const int nc = static_cast<int>(block.cam_ids.size());
  const int nobs = static_cast<int>(block.obs_ids.size());
  const int dim = 3 * np + 6 * nc;
  const int cam_base = 3 * np;

  // Completed-square proximal targets absorb the linear dual terms.
  std::vector<Vec3> point_target(np);
  for (int q = 0; q < np; ++q) {
    point_target[q] = state_.consensus.points[block.point_ids[q]] -
                      state_.dual_r[block_index][q] / opts_.rho_x;
  }
  std::vector<Vec6> cam_target(nc);
  std::vector<double> focal(nc);
  for (int q = 0; q < nc; ++q) {
    cam_target[q] = state_.consensus.cameras[block.cam_ids[q]].pose() -
                    state_.dual_s[block_index][q] / opts_.rho_y;
    focal[q] = state_.consensus.cameras[block.cam_ids[q]].f;
  }

  Eigen::VectorXd v0(dim);
  for (int q = 0; q < np; ++q) {
    v0.segment<3>(3 * q) = state_.local_points[block_index][q];
  }
  for (int q = 0; q < nc; ++q) {
    v0.segment<6>(cam_base + 6 * q) = state_.local_cameras[block_index][q];
  }

  auto camera_at = [&](const Eigen::VectorXd& v, int q) {
    CameraParams cam;
    cam.set_pose(v.segment<6>(cam_base + 6 * q));
    cam.f = focal[q];
    return cam;
  };

  InnerResult result;
  if (!opts_.misfit_loss.is_huber()) {
    const double wx = std::sqrt(0.5 * opts_.rho_x);
    const double wy = std::sqrt(0.5 * opts_.rho_y);
    const int rows = 2 * nobs + dim;

    ResidualFn residual_fn = [&](const Eigen::VectorXd& v) -> std::optional<Eigen::VectorXd> {
      Eigen::VectorXd r(rows);
      for (int o = 0; o < nobs; ++o) {
        const Observation& obs = problem_.observations[block.obs_ids[o]];
        const auto proj = try_project(v.segment<3>(3 * block.obs_point_local[o]),
                                      camera_at(v, block.obs_cam_local[o]), opts_.guard);
        if (!proj) {
          return std::nullopt;
        }
        r.segment<2>(2 * o) = obs.z - *proj;
      }
      for (int q = 0; q < np; ++q) {
        r.segment<3>(2 * nobs + 3 * q) = wx * (v.segment<3>(3 * q) - point_target[q]);
      }
      for (int q = 0; q < nc; ++q) {
        r.segment<6>(2 * nobs + cam_base + 6 * q) =
            wy * (v.segment<6>(cam_base + 6 * q) - cam_target[q]);
      }
      return r;
    };

    JacobianFn jacobian_fn = [&](const Eigen::VectorXd& v) -> std::optional<Eigen::MatrixXd> {
      Eigen::MatrixXd J = Eigen::MatrixXd::Zero(rows, dim);
      for (int o = 0; o < nobs; ++o) {
        const auto exp = try_project_with_jacobians(v.segment<3>(3 * block.obs_point_local[o]),
                                                    camera_at(v, block.obs_cam_local[o]),
                                                    opts_.guard);
        if (!exp) {
          return std::nullopt;
        }
        J.block<2, 3>(2 * o, 3 * block.obs_point_local[o]) = -exp->J_point;
        J.block<2, 6>(2 * o, cam_base + 6 * block.obs_cam_local[o]) = -exp->J_camera;
      }
      for (int q = 0; q < np; ++q) {
        J.block<3, 3>(2 * nobs + 3 * q, 3 * q) = wx * Mat3::Identity();
      }
      for (int q = 0; q < nc; ++q) {
        J.block<6, 6>(2 * nobs + cam_base + 6 * q, cam_base + 6 * q) =
            wy * Eigen::Matrix<double, 6, 6>::Identity();
      }
      return J;
    };

    result = gauss_newton(residual_fn, jacobian_fn, std::move(v0), opts_.inner);
  } else {
    ValueFn value_fn = [&](const Eigen::VectorXd& v) -> std::optional<double> {
      double total = 0.0;
      for (int o = 0; o < nobs; ++o) {
        const Observation& obs = problem_.observations[block.obs_ids[o]];
        const auto r = try_residual(obs.z, v.segment<3>(3 * block.obs_point_local[o]),
                                    camera_at(v, block.obs_cam_local[o]), opts_.guard);
        if (!r) {
          return std::nullopt;
        }
        total += loss_value(opts_.misfit_loss, *r);
      }
      for (int q = 0; q < np; ++q) {
        const Vec3 d = v.segment<3>(3 * q) - state_.consensus.points[block.point_ids[q]];
        total += state_.dual_r[block_index][q].dot(d) + 0.5 * opts_.rho_x * d.squaredNorm();
      }
      for (int q = 0; q < nc; ++q) {
        const Vec6 d =
            v.segment<6>(cam_base + 6 * q) - state_.consensus.cameras[block.cam_ids[q]].pose();
        total += state_.dual_s[block_index][q].dot(d) + 0.5 * opts_.rho_y * d.squaredNorm();
      }
      return total;
    };

    GradFn grad_fn = [&](const Eigen::VectorXd& v) -> std::optional<Eigen::VectorXd> {
      Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);
      for (int o = 0; o < nobs; ++o) {
        const Observation& obs = problem_.observations[block.obs_ids[o]];
        const auto exp = try_project_with_jacobians(v.segment<3>(3 * block.obs_point_local[o]),
                                                    camera_at(v, block.obs_cam_local[o]),
                                                    opts_.guard);
        if (!exp) {
          return std::nullopt;
        }
        const Vec2 lg = loss_gradient(opts_.misfit_loss, Vec2(obs.z - exp->z));
        g.segment<3>(3 * block.obs_point_local[o]) -= exp->J_point.transpose() * lg;
        g.segment<6>(cam_base + 6 * block.obs_cam_local[o]) -= exp->J_camera.transpose() * lg;
      }
      for (int q = 0; q < np; ++q) {
        const Vec3 d = v.segment<3>(3 * q) - state_.consensus.points[block.point_ids[q]];
        g.segment<3>(3 * q) += state_.dual_r[block_index][q] + opts_.rho_x * d;
      }
      for (int q = 0; q < nc; ++q) {
        const Vec6 d =
            v.segment<6>(cam_base + 6 * q) - state_.consensus.cameras[block.cam_ids[q]].pose();
        g.segment<6>(cam_base + 6 * q) += state_.dual_s[block_index][q] + opts_.rho_y * d;
      }
      return g;
    };

    result = lbfgs(value_fn, grad_fn, std::move(v0), opts_.inner);
  }

  for (int q = 0; q < np; ++q) {
    state_.local_points[block_index][q] = result.x.segment<3>(3 * q);
  }
  for (int q = 0; q < nc; ++q) {
    state_.local_cameras[block_index][q] = result.x.segment<6>(cam_base + 6 * q);
  }
}

void AdmmSolver::local_update_all() {
  std::exception_ptr error;
  int error_block = -1;
  std::mutex error_mutex;
  pool_->run(static_cast<int>(blocks_.size()), [&](int b) {
    try {
      local_update(b);
    } catch (...) {
      std::lock_guard lock(error_mutex);
      if (!error) {
        error = std::current_exception();
        error_block = b;
      }
    }
  });
  if (error) {
    try {
      std::rethrow_exception(error);
    } catch (const DepthBelowGuard&) {
      throw;  // already carries the offending indices
    } catch (const Error& e) {
      throw Error("local block " + std::to_string(error_block) + ": " + e.what());
    }
  }
}

void AdmmSolver::consensus_update() {
  // Anchor + mean-of-differences: exact when all copies and duals agree, and
  // a faithful mean in general. Accumulation order is the fixed block order,
  // independent of the worker count.
  const double inv_rho_x = 1.0 / opts_.rho_x;
  const double inv_rho_y = 1.0 / opts_.rho_y;
  for (int i = 0; i < problem_.num_points(); ++i) {
    const auto& copies = point_copies_[i];
    const Vec3 anchor = state_.local_points[copies.front().first][copies.front().second];
    Vec3 acc = Vec3::Zero();
    for (const auto& [b, q] : copies) {
      acc += (state_.local_points[b][q] - anchor) + inv_rho_x * state_.dual_r[b][q];
    }
    state_.consensus.points[i] = anchor + acc / static_cast<double>(copies.size());
  }
  for (int j = 0; j < problem_.num_cameras(); ++j) {
    const auto& copies = camera_copies_[j];
    const Vec6 anchor = state_.local_cameras[copies.front().first][copies.front().second];
    Vec6 acc = Vec6::Zero();
    for (const auto& [b, q] : copies) {
      acc += (state_.local_cameras[b][q] - anchor) + inv_rho_y * state_.dual_s[b][q];
    }
    state_.consensus.cameras[j].set_pose(anchor + acc / static_cast<double>(copies.size()));
  }
}

void AdmmSolver::dual_update() {
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const LocalBlock& block = blocks_[b];
    for (std::size_t q = 0; q < block.point_ids.size(); ++q) {
      state_.dual_r[b][q] +=
          opts_.rho_x * (state_.local_points[b][q] - state_.consensus.points[block.point_ids[q]]);
    }
    for (std::size_t q = 0; q < block.cam_ids.size(); ++q) {
      state_.dual_s[b][q] +=
          opts_.rho_y *
          (state_.local_cameras[b][q] - state_.consensus.cameras[block.cam_ids[q]].pose());
    }
  }
}

double AdmmSolver::max_primal_residual_points() const {
  double worst = 0.0;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const LocalBlock& block = blocks_[b];
    for (std::size_t q = 0; q < block.point_ids.size(); ++q) {
      worst = std::max(
          worst,
          (state_.local_points[b][q] - state_.consensus.points[block.point_ids[q]]).norm());
    }
  }
  return worst;
}

double AdmmSolver::max_primal_residual_cameras() const {
  double worst = 0.0;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const LocalBlock& block = blocks_[b];
    for (std::size_t q = 0; q < block.cam_ids.size(); ++q) {
      worst = std::max(
          worst, (state_.local_cameras[b][q] - state_.consensus.cameras[block.cam_ids[q]].pose())
                     .norm());
    }
  }
  return worst;
}

Vec3 AdmmSolver::dual_sum_point(int point_id) const {
  Vec3 sum = Vec3::Zero();
  for (const auto& [b, q] : point_copies_[point_id]) {
    sum += state_.dual_r[b][q];
  }
  return sum;
}

Vec6 AdmmSolver::dual_sum_camera(int cam_id) const {
  Vec6 sum = Vec6::Zero();
  for (const auto& [b, q] : camera_copies_[cam_id]) {
    sum += state_.dual_s[b][q];
  }
  return sum;
}

double AdmmSolver::block_objective(int block_index) const {
  const LocalBlock& block = blocks_[block_index];
  double total = 0.0;
  for (std::size_t o = 0; o < block.obs_ids.size(); ++o) {
    const Observation& obs = problem_.observations[block.obs_ids[o]];
    CameraParams cam;
    cam.set_pose(state_.local_cameras[block_index][block.obs_cam_local[o]]);
    cam.f = state_.consensus.cameras[obs.cam_id].f;
    const auto r = try_residual(obs.z, state_.local_points[block_index][block.obs_point_local[o]],
                                cam, opts_.guard);
    if (!r) {
      return std::numeric_limits<double>::infinity();
    }
    total += loss_value(opts_.misfit_loss, *r);
  }
  for (std::size_t q = 0; q < block.point_ids.size(); ++q) {
    const Vec3 d = state_.local_points[block_index][q] - state_.consensus.points[block.point_ids[q]];
    total += state_.dual_r[block_index][q].dot(d) + 0.5 * opts_.rho_x * d.squaredNorm();
  }
  for (std::size_t q = 0; q < block.cam_ids.size(); ++q) {
    const Vec6 d = state_.local_cameras[block_index][q] -
                   state_.consensus.cameras[block.cam_ids[q]].pose();
    total += state_.dual_s[block_index][q].dot(d) + 0.5 * opts_.rho_y * d.squaredNorm();
  }
  return total;
}

std::int64_t AdmmSolver::ops_per_iteration() const {
  std::int64_t copies = 0;
  for (const LocalBlock& block : blocks_) {
    copies += static_cast<std::int64_t>(block.point_ids.size()) +
              static_cast<std::int64_t>(block.cam_ids.size());
  }
  return static_cast<std::int64_t>(blocks_.size()) + copies;
}

IterationRecord AdmmSolver::iterate(const ParamState* reference) {
  const auto t0 = std::chrono::steady_clock::now();
  local_update_all();
  consensus_update();
  dual_update();
  const double wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  ++state_.iteration;

  IterationRecord rec;
  rec.iter = state_.iteration;
  rec.mean_reproj_err = try_mean_reprojection_error(problem_, state_.consensus, opts_.guard)
                            .value_or(std::numeric_limits<double>::infinity());
  rec.max_primal_x = max_primal_residual_points();
  rec.max_primal_y = max_primal_residual_cameras();
  if (reference != nullptr) {
    const MseResult mse = parameter_mse(state_.consensus, *reference);
    rec.camera_mse = mse.camera_mse;
    rec.point_mse = mse.point_mse;
  }
  rec.wall_ms = wall_ms;
  rec.comm_floats = comm_floats_;
  return rec;
}

AdmmResult AdmmSolver::run(const ParamState* reference) {
  AdmmResult out;
  while (state_.iteration < opts_.max_iters) {
    const IterationRecord rec = iterate(reference);
    out.trace.push_back(rec);
    if (opts_.stop_on_primal && rec.max_primal_x < opts_.primal_tol &&
        rec.max_primal_y < opts_.primal_tol) {
      break;
    }
  }
  out.state = state_.consensus;
  return out;
}

AdmmResult run_admm(const Problem& problem, const ParamState& init, const AdmmOptions& opts,
                    const BlockConfig& block_config, const ParamState* reference) {
  AdmmSolver solver(problem, init, opts, block_config);
  return solver.run(reference);
}

}  // namespace dba
