#include "dba/lm_solver.hpp"

#include <Eigen/Cholesky>
#include <chrono>
#include <optional>

#include "dba/errors.hpp"

namespace dba {

namespace {

using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat63 = Eigen::Matrix<double, 6, 3>;

// Undamped normal-equation blocks of the BA system at one state. The point
// block is 3x3 block-diagonal; W couples camera j and point i per observation.
struct NormalEquations {
  std::vector<Mat6> U;                    // per camera
  std::vector<Mat3> V;                    // per point
  std::vector<Mat63> W;                   // per observation
  Eigen::VectorXd g_cam;                  // J^T r, camera part (6m)
  Eigen::VectorXd g_pt;                   // J^T r, point part (3n)
  std::vector<std::vector<std::pair<int, int>>> point_obs;  // per point: (cam, obs idx)
};

std::optional<NormalEquations> assemble(const Problem& problem, const ParamState& state,
                                        const ProjectionGuard& guard) {
  const int m = problem.num_cameras();
  const int n = problem.num_points();
  NormalEquations eq;
  eq.U.assign(m, Mat6::Zero());
  eq.V.assign(n, Mat3::Zero());
  eq.W.resize(problem.num_observations());
  eq.g_cam = Eigen::VectorXd::Zero(6 * m);
  eq.g_pt = Eigen::VectorXd::Zero(3 * n);
  eq.point_obs.resize(n);

  for (int k = 0; k < problem.num_observations(); ++k) {
    const Observation& obs = problem.observations[k];
    const auto exp = try_project_with_jacobians(state.points[obs.point_id],
                                                state.cameras[obs.cam_id], guard);
    if (!exp) {
      return std::nullopt;
    }
    const Vec2 r = obs.z - exp->z;
    const Mat26& A = exp->J_camera;
    const Mat23& B = exp->J_point;
    eq.U[obs.cam_id] += A.transpose() * A;
    eq.V[obs.point_id] += B.transpose() * B;
    eq.W[k] = A.transpose() * B;
    eq.g_cam.segment<6>(6 * obs.cam_id) += A.transpose() * r;
    eq.g_pt.segment<3>(3 * obs.point_id) += B.transpose() * r;
    eq.point_obs[obs.point_id].push_back({obs.cam_id, k});
  }
  return eq;
}

LmStep solve_step(const NormalEquations& eq, int m, int n, double lambda, bool use_schur) {
  // Marquardt damping on both diagonal blocks.
  std::vector<Mat6> U(m);
  for (int j = 0; j < m; ++j) {
    U[j] = eq.U[j];
    U[j].diagonal() += lambda * eq.U[j].diagonal();
  }
  std::vector<Mat3> V(n);
  for (int i = 0; i < n; ++i) {
    V[i] = eq.V[i];
    V[i].diagonal() += lambda * eq.V[i].diagonal();
  }

  LmStep step;
  if (use_schur) {
    std::vector<Mat3> Vinv(n);
    for (int i = 0; i < n; ++i) {
      Vinv[i] = V[i].ldlt().solve(Mat3::Identity());
    }
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(6 * m, 6 * m);
    for (int j = 0; j < m; ++j) {
      S.block<6, 6>(6 * j, 6 * j) = U[j];
    }
    Eigen::VectorXd rhs = eq.g_cam;
    for (int i = 0; i < n; ++i) {
      const auto& owners = eq.point_obs[i];
      const Vec3 vg = Vinv[i] * eq.g_pt.segment<3>(3 * i);
      for (const auto& [ja, ka] : owners) {
        rhs.segment<6>(6 * ja) -= eq.W[ka] * vg;
        const Mat63 WVinv = eq.W[ka] * Vinv[i];
        for (const auto& [jb, kb] : owners) {
          S.block<6, 6>(6 * ja, 6 * jb) -= WVinv * eq.W[kb].transpose();
        }
      }
    }
    step.delta_cameras = S.ldlt().solve(rhs);
    step.delta_points = Eigen::VectorXd(3 * n);
    for (int i = 0; i < n; ++i) {
      Vec3 acc = eq.g_pt.segment<3>(3 * i);
      for (const auto& [j, k] : eq.point_obs[i]) {
        acc -= eq.W[k].transpose() * step.delta_cameras.segment<6>(6 * j);
      }
      step.delta_points.segment<3>(3 * i) = Vinv[i] * acc;
    }
  } else {
    const int dim = 6 * m + 3 * n;
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(dim, dim);
    for (int j = 0; j < m; ++j) {
      H.block<6, 6>(6 * j, 6 * j) = U[j];
    }
    for (int i = 0; i < n; ++i) {
      H.block<3, 3>(6 * m + 3 * i, 6 * m + 3 * i) = V[i];
    }
    for (int i = 0; i < n; ++i) {
      for (const auto& [j, k] : eq.point_obs[i]) {
        H.block<6, 3>(6 * j, 6 * m + 3 * i) = eq.W[k];
        H.block<3, 6>(6 * m + 3 * i, 6 * j) = eq.W[k].transpose();
      }
    }
    Eigen::VectorXd g(dim);
    g << eq.g_cam, eq.g_pt;
    const Eigen::VectorXd delta = H.ldlt().solve(g);
    step.delta_cameras = delta.head(6 * m);
    step.delta_points = delta.tail(3 * n);
  }
  return step;
}

ParamState apply_step(const ParamState& state, const LmStep& step) {
  ParamState out = state;
  for (std::size_t j = 0; j < out.cameras.size(); ++j) {
    out.cameras[j].set_pose(out.cameras[j].pose() + step.delta_cameras.segment<6>(6 * j));
  }
  for (std::size_t i = 0; i < out.points.size(); ++i) {
    out.points[i] += step.delta_points.segment<3>(3 * i);
  }
  return out;
}

}  // namespace

LmStep lm_compute_step(const Problem& problem, const ParamState& state, double lambda,
                       bool use_schur, const ProjectionGuard& guard) {
  const auto eq = assemble(problem, state, guard);
  if (!eq) {
    mean_reprojection_error(problem, state, guard);  // throws with indices
    throw DepthBelowGuard(0.0, guard.eps_depth);     // unreachable
  }
  return solve_step(*eq, problem.num_cameras(), problem.num_points(), lambda, use_schur);
}

LmResult solve_lm(const Problem& problem, const ParamState& init, const LmOptions& opts,
                  const LossKind& loss, const ParamState* reference) {
  if (loss.type != LossKind::Type::kSquaredL2) {
    throw ValidationError("the LM baseline supports only the squared L2 loss");
  }
  const int m = problem.num_cameras();
  const int n = problem.num_points();

  LmResult out;
  out.state = init;
  double total = total_squared_error(problem, out.state, opts.guard);  // throws at init

  auto record = [&](int iter, double wall_ms) {
    IterationRecord rec;
    rec.iter = iter;
    rec.mean_reproj_err = mean_reprojection_error(problem, out.state, opts.guard);
    if (reference != nullptr) {
      const MseResult mse = parameter_mse(out.state, *reference);
      rec.camera_mse = mse.camera_mse;
      rec.point_mse = mse.point_mse;
    }
    rec.wall_ms = wall_ms;
    out.trace.push_back(rec);
  };
  record(0, 0.0);

  double lambda = opts.lambda_init;
  for (int iter = 1; iter <= opts.max_iters; ++iter) {
    if (total < opts.error_stop) {
      out.stop = LmStopReason::kErrorStop;
      return out;
    }
    const auto t0 = std::chrono::steady_clock::now();
    const auto eq = assemble(problem, out.state, opts.guard);
    if (!eq) {
      // Accepted states are always feasible, so this only triggers for an
      // infeasible init that slipped past the total_squared_error check.
      mean_reprojection_error(problem, out.state, opts.guard);
      throw DepthBelowGuard(0.0, opts.guard.eps_depth);  // unreachable
    }

    bool accepted = false;
    while (!accepted) {
      const LmStep step = solve_step(*eq, m, n, lambda, opts.use_schur);
      if (step.delta_cameras.allFinite() && step.delta_points.allFinite()) {
        const ParamState trial = apply_step(out.state, step);
        const auto trial_total = try_total_squared_error(problem, trial, opts.guard);
        if (trial_total && *trial_total < total) {
          out.state = trial;
          total = *trial_total;
          lambda = std::max(lambda / opts.lambda_down, 1e-12);
          ++out.accepted_steps;
          accepted = true;
          break;
        }
      }
      lambda *= opts.lambda_up;
      if (lambda > opts.lambda_max) {
        out.stop = LmStopReason::kLambdaMax;
        return out;
      }
    }
    const double wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    record(iter, wall_ms);
  }
  out.stop = total < opts.error_stop ? LmStopReason::kErrorStop : LmStopReason::kMaxIters;
  return out;
}

}  // namespace dba
