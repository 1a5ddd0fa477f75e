#include "dba/local_opt.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <deque>

#include "dba/errors.hpp"

namespace dba {

namespace {

constexpr double kDampingInit = 1e-4;
constexpr double kDampingMax = 1e12;

bool finite(const Eigen::VectorXd& v) { return v.allFinite(); }

}  // namespace

InnerResult gauss_newton(const ResidualFn& residual_fn, const JacobianFn& jacobian_fn,
                         Eigen::VectorXd x0, const InnerOptions& opts) {
  InnerResult out;
  out.x = std::move(x0);

  auto r_opt = residual_fn(out.x);
  if (!r_opt || !finite(*r_opt)) {
    throw ValidationError("gauss_newton: residual undefined at the starting point");
  }
  Eigen::VectorXd r = std::move(*r_opt);
  out.objective = r.squaredNorm();

  for (out.iters = 0; out.iters < opts.max_iters; ++out.iters) {
    const auto J_opt = jacobian_fn(out.x);
    if (!J_opt) {
      out.status = InnerStatus::kSingularSystem;
      return out;
    }
    const Eigen::MatrixXd& J = *J_opt;
    const Eigen::VectorXd g = 2.0 * J.transpose() * r;
    if (g.norm() <= opts.grad_tol) {
      out.status = InnerStatus::kGradConverged;
      return out;
    }

    const Eigen::MatrixXd H = J.transpose() * J;
    const Eigen::VectorXd rhs = -0.5 * g;  // = -J^T r
    const Eigen::VectorXd damp_scale = H.diagonal().cwiseMax(1e-12);

    double lambda = 0.0;
    bool accepted = false;
    while (!accepted) {
      Eigen::MatrixXd Hd = H;
      if (lambda > 0.0) {
        Hd.diagonal() += lambda * damp_scale;
      }
      const Eigen::VectorXd delta = Hd.ldlt().solve(rhs);
      if (finite(delta)) {
        const Eigen::VectorXd trial = out.x + delta;
        auto r_trial = residual_fn(trial);
        if (r_trial && finite(*r_trial) && r_trial->squaredNorm() <= out.objective) {
          out.x = trial;
          r = std::move(*r_trial);
          out.objective = r.squaredNorm();
          accepted = true;
          if (delta.norm() <= opts.step_tol * (1.0 + out.x.norm())) {
            out.status = InnerStatus::kStepConverged;
            ++out.iters;
            return out;
          }
          break;
        }
      }
      lambda = lambda == 0.0 ? kDampingInit : lambda * 10.0;
      if (lambda > kDampingMax) {
        out.status = finite(delta) ? InnerStatus::kLineSearchFailed : InnerStatus::kSingularSystem;
        return out;
      }
    }
  }
  out.status = InnerStatus::kMaxIters;
  return out;
}

InnerResult lbfgs(const ValueFn& value_fn, const GradFn& grad_fn, Eigen::VectorXd x0,
                  const InnerOptions& opts) {
  InnerResult out;
  out.x = std::move(x0);

  auto f_opt = value_fn(out.x);
  auto g_opt = grad_fn(out.x);
  if (!f_opt || !g_opt || !std::isfinite(*f_opt) || !finite(*g_opt)) {
    throw ValidationError("lbfgs: objective undefined at the starting point");
  }
  out.objective = *f_opt;
  Eigen::VectorXd g = std::move(*g_opt);

  struct Pair {
    Eigen::VectorXd s, y;
    double rho;
  };
  std::deque<Pair> history;
  double gamma = 1.0;  // initial Hessian scale

  for (out.iters = 0; out.iters < opts.max_iters; ++out.iters) {
    if (g.norm() <= opts.grad_tol) {
      out.status = InnerStatus::kGradConverged;
      return out;
    }

    // Two-loop recursion for d = -H*g.
    Eigen::VectorXd q = g;
    std::vector<double> alpha(history.size());
    for (int k = static_cast<int>(history.size()) - 1; k >= 0; --k) {
      alpha[k] = history[k].rho * history[k].s.dot(q);
      q -= alpha[k] * history[k].y;
    }
    q *= gamma;
    for (std::size_t k = 0; k < history.size(); ++k) {
      const double beta = history[k].rho * history[k].y.dot(q);
      q += (alpha[k] - beta) * history[k].s;
    }
    Eigen::VectorXd d = -q;
    double slope = g.dot(d);
    if (!(slope < 0.0)) {
      history.clear();
      d = -g;
      slope = -g.squaredNorm();
    }

    double step = 1.0;
    bool accepted = false;
    double f_trial = 0.0;
    Eigen::VectorXd x_trial;
    for (int ls = 0; ls < opts.max_line_search; ++ls) {
      x_trial = out.x + step * d;
      const auto f = value_fn(x_trial);
      if (f && std::isfinite(*f) && *f <= out.objective + opts.armijo_c * step * slope) {
        f_trial = *f;
        accepted = true;
        break;
      }
      step *= opts.backtrack;
    }
    if (!accepted) {
      out.status = InnerStatus::kLineSearchFailed;
      return out;
    }

    auto g_trial = grad_fn(x_trial);
    if (!g_trial || !finite(*g_trial)) {
      out.status = InnerStatus::kLineSearchFailed;
      return out;
    }

    const Eigen::VectorXd s = x_trial - out.x;
    Eigen::VectorXd y = *g_trial - g;
    // Powell damping against B0 = I/gamma keeps every pair positive-definite;
    // Armijo alone does not guarantee the curvature condition.
    const double sBs = s.squaredNorm() / gamma;
    double sy = s.dot(y);
    if (sy < 0.2 * sBs) {
      const double theta = 0.8 * sBs / (sBs - sy);
      y = theta * y + (1.0 - theta) / gamma * s;
      sy = s.dot(y);
    }
    if (sy > 1e-12 * s.norm() * y.norm()) {
      history.push_back({s, y, 1.0 / sy});
      gamma = sy / y.squaredNorm();
      if (static_cast<int>(history.size()) > opts.lbfgs_memory) {
        history.pop_front();
      }
    }

    out.x = std::move(x_trial);
    out.objective = f_trial;
    g = std::move(*g_trial);

    if (s.norm() <= opts.step_tol * (1.0 + out.x.norm())) {
      out.status = InnerStatus::kStepConverged;
      ++out.iters;
      return out;
    }
  }
  out.status = InnerStatus::kMaxIters;
  return out;
}

}  // namespace dba
