#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "dba/local_opt.hpp"
#include "dba/losses.hpp"
#include "dba/parallel.hpp"
#include "dba/problem.hpp"
#include "dba/trace.hpp"

namespace dba {

struct AdmmOptions {
  double rho_x = 1.0;  ///< consensus penalty for point copies
  double rho_y = 1.0;  ///< consensus penalty for camera copies
  int max_iters = 1600;
  double primal_tol = 1e-6;
  bool stop_on_primal = false;  ///< off: run the full budget (paper protocol)
  LossKind misfit_loss = LossKind::squared_l2();
  InnerOptions inner;
  ProjectionGuard guard;
  int workers = 1;
};

/// Block sizes for the generalized distribution: up to pi points and kappa
/// cameras per local solve. (1, 1) is the one-observation-per-processor case.
struct BlockConfig {
  int points_per_block = 1;
  int cameras_per_block = 1;
};

/// One local solve unit: a subset of points and cameras plus every
/// observation assigned to it (each observation lives in exactly one block).
struct LocalBlock {
  std::vector<int> point_ids;  ///< sorted, unique
  std::vector<int> cam_ids;    ///< sorted, unique
  std::vector<int> obs_ids;    ///< indices into Problem::observations
  std::vector<int> obs_point_local;  ///< per obs: position in point_ids
  std::vector<int> obs_cam_local;    ///< per obs: position in cam_ids
};

/// Deterministic greedy packing over the observation list sorted by
/// (camera, point): a block absorbs observations until another would exceed
/// the configured sizes.
std::vector<LocalBlock> partition(const Problem& problem, const BlockConfig& config);

/// Simulated consensus traffic per iteration, in floating-point values.
/// Processors are identified with cameras (a block belongs to its lowest
/// camera); a consensus variable held by o distinct processors costs
/// dim * o * (o-1) per iteration. With one observation per block this is
/// sum_i 3 (d_i - 1) d_i over points, and camera copies travel for free.
std::int64_t communication_cost(const Problem& problem, const BlockConfig& config);

/// Full solver state; exposed so tests can drive single phases and inspect
/// duals. Local copies and duals are indexed [block][block-local slot].
struct AdmmState {
  std::vector<std::vector<Vec3>> local_points;
  std::vector<std::vector<Vec6>> local_cameras;  ///< pose vectors
  std::vector<std::vector<Vec3>> dual_r;
  std::vector<std::vector<Vec6>> dual_s;
  ParamState consensus;
  int iteration = 0;
};

struct AdmmResult {
  ParamState state;
  Trace trace;
};

/// Consensus ADMM over local copies of both scene points and camera poses:
/// parallel local proximal solves, exact averaging consensus, scaled dual
/// ascent. Results are identical (bitwise) for any worker count.
class AdmmSolver {
 public:
  AdmmSolver(const Problem& problem, ParamState init, AdmmOptions opts,
             BlockConfig block_config = {});

  /// Local phase for one block: approximately minimizes the block's
  /// augmented objective over its point and camera copies. Never increases
  /// the block objective; infeasible trial steps are rejected.
  void local_update(int block_index);

  /// Local phase over all blocks (parallel across the worker pool).
  void local_update_all();

  /// Averaging step: every consensus variable becomes the mean of
  /// (copy + dual / rho) over its copies, accumulated in fixed block order.
  void consensus_update();

  /// duals += rho * (copy - consensus).
  void dual_update();

  /// One full round (local, consensus, dual) plus metrics.
  IterationRecord iterate(const ParamState* reference = nullptr);

  /// Rounds until max_iters or, when stop_on_primal is set, until both max
  /// primal residuals fall below primal_tol.
  AdmmResult run(const ParamState* reference = nullptr);

  const AdmmState& state() const { return state_; }

  /// Mutable access for tests and diagnostics that drive single phases on
  /// hand-built states.
  AdmmState& mutable_state() { return state_; }

  const std::vector<LocalBlock>& blocks() const { return blocks_; }

  double max_primal_residual_points() const;
  double max_primal_residual_cameras() const;

  /// Sum of duals over all copies of one variable; zero (to rounding) after
  /// every consensus+dual round.
  Vec3 dual_sum_point(int point_id) const;
  Vec6 dual_sum_camera(int cam_id) const;

  /// The block's augmented objective (misfit + linear dual terms + quadratic
  /// proximal terms) at the current copies; +inf when a projection is
  /// undefined.
  double block_objective(int block_index) const;

  /// Abstract work per round: local solves plus copy updates. Exactly
  /// linear in the observation count for the (1, 1) block configuration.
  std::int64_t ops_per_iteration() const;

  std::int64_t comm_floats_per_iteration() const { return comm_floats_; }

 private:
  const Problem& problem_;
  AdmmOptions opts_;
  std::vector<LocalBlock> blocks_;
  AdmmState state_;
  std::vector<std::vector<std::pair<int, int>>> point_copies_;   // per point: (block, slot)
  std::vector<std::vector<std::pair<int, int>>> camera_copies_;  // per camera: (block, slot)
  std::int64_t comm_floats_ = 0;
  std::unique_ptr<WorkerPool> pool_;
};

AdmmResult run_admm(const Problem& problem, const ParamState& init, const AdmmOptions& opts,
                    const BlockConfig& block_config = {}, const ParamState* reference = nullptr);

}  // namespace dba
