#pragma once

#include <Eigen/Core>

#include "dba/losses.hpp"
#include "dba/problem.hpp"
#include "dba/trace.hpp"

namespace dba {

/// Centralized Levenberg-Marquardt options. The error stop applies to the
/// total squared reprojection error; damping uses Marquardt scaling
/// (lambda * diag(J^T J)) so meters, radians and pixels are treated evenly.
struct LmOptions {
  int max_iters = 100;
  double error_stop = 1e-14;  ///< stop when total squared error drops below
  double lambda_init = 1e-3;
  double lambda_max = 1e16;   ///< stop when damping exceeds this
  double lambda_up = 10.0;
  double lambda_down = 10.0;
  bool use_schur = true;
  ProjectionGuard guard;
};

enum class LmStopReason {
  kErrorStop,   ///< total squared error below error_stop
  kLambdaMax,   ///< damping escalated past lambda_max
  kMaxIters,
};

struct LmResult {
  ParamState state;
  Trace trace;
  LmStopReason stop = LmStopReason::kMaxIters;
  int accepted_steps = 0;
};

/// One damped-normal-equations step at the given state. Exposed so the Schur
/// path can be checked against the plain dense solve.
struct LmStep {
  Eigen::VectorXd delta_cameras;  ///< 6m stacked pose updates
  Eigen::VectorXd delta_points;   ///< 3n stacked point updates
};

LmStep lm_compute_step(const Problem& problem, const ParamState& state, double lambda,
                       bool use_schur, const ProjectionGuard& guard = {});

/// Standard LM on the least-squares objective; `loss` must be SquaredL2 (the
/// baseline is least-squares only). Throws DepthBelowGuard if the initial
/// state has an undefined projection; during iteration such steps are simply
/// rejected.
LmResult solve_lm(const Problem& problem, const ParamState& init, const LmOptions& opts,
                  const LossKind& loss, const ParamState* reference = nullptr);

}  // namespace dba
