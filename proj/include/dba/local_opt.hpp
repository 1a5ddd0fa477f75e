#pragma once

#include <Eigen/Core>
#include <functional>
#include <optional>

namespace dba {

/// Budgets for the inner unconstrained solvers. The defaults are tuned for
/// inexact ADMM local solves; standalone callers raise max_iters.
struct InnerOptions {
  int max_iters = 10;
  double grad_tol = 1e-8;
  double step_tol = 1e-10;
  int lbfgs_memory = 8;
  double armijo_c = 1e-4;       ///< sufficient-decrease constant
  double backtrack = 0.5;       ///< line-search contraction
  int max_line_search = 40;
};

enum class InnerStatus {
  kGradConverged,
  kStepConverged,
  kMaxIters,
  kSingularSystem,    ///< normal equations unsolvable after damping escalation
  kLineSearchFailed,  ///< no acceptable step; best iterate returned
};

struct InnerResult {
  Eigen::VectorXd x;
  double objective = 0.0;
  InnerStatus status = InnerStatus::kMaxIters;
  int iters = 0;
};

/// Callbacks return empty when the trial point is outside the feasible
/// domain (e.g. a projection depth below guard); such trials are rejected.
using ResidualFn = std::function<std::optional<Eigen::VectorXd>(const Eigen::VectorXd&)>;
using JacobianFn = std::function<std::optional<Eigen::MatrixXd>(const Eigen::VectorXd&)>;
using ValueFn = std::function<std::optional<double>(const Eigen::VectorXd&)>;
using GradFn = std::function<std::optional<Eigen::VectorXd>(const Eigen::VectorXd&)>;

/// Gauss-Newton on ||r(x)||^2 with Levenberg damping escalation whenever the
/// plain step is unsolvable, infeasible, or fails to decrease the objective.
/// The returned objective never exceeds the starting one.
InnerResult gauss_newton(const ResidualFn& residual_fn, const JacobianFn& jacobian_fn,
                         Eigen::VectorXd x0, const InnerOptions& opts = {});

/// L-BFGS with Armijo backtracking; monotone nonincreasing objective.
InnerResult lbfgs(const ValueFn& value_fn, const GradFn& grad_fn, Eigen::VectorXd x0,
                  const InnerOptions& opts = {});

}  // namespace dba
