// Command-line front end: scene generation, solving, LM/ADMM comparison and
// the sweep/bench protocols. Exit codes: 0 success, 2 usage, 3 data error,
// 4 solver error.

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include "dba/admm_solver.hpp"
#include "dba/bal_io.hpp"
#include "dba/errors.hpp"
#include "dba/lm_solver.hpp"
#include "dba/metrics_csv.hpp"
#include "dba/run_config.hpp"
#include "dba/scene_gen.hpp"

namespace {

using namespace dba;

void add_scene_flags(CLI::App* cmd, SceneConfig* scene, std::vector<double>* region_min,
                     std::vector<double>* region_max) {
  cmd->add_option("--cameras", scene->n_cameras, "number of cameras");
  cmd->add_option("--points", scene->n_points, "number of scene points");
  cmd->add_option("--window", scene->visibility_window,
                  "consecutive frames observing each point");
  cmd->add_option("--orbit-radius", scene->orbit_radius, "camera orbit radius [m]");
  cmd->add_option("--altitude", scene->altitude, "camera altitude [m]");
  cmd->add_option("--focal", scene->focal, "focal length [px]");
  cmd->add_option("--jitter-trans", scene->jitter_trans, "camera-center jitter std [m]");
  cmd->add_option("--jitter-rot", scene->jitter_rot, "camera-angle jitter std [rad]");
  cmd->add_option("--region-min", *region_min, "point region lower corner x,y,z")
      ->delimiter(',')
      ->expected(3);
  cmd->add_option("--region-max", *region_max, "point region upper corner x,y,z")
      ->delimiter(',')
      ->expected(3);
}

void apply_region(const std::vector<double>& region_min, const std::vector<double>& region_max,
                  SceneConfig* scene) {
  if (region_min.size() == 3) {
    scene->point_region.min = Vec3(region_min[0], region_min[1], region_min[2]);
  }
  if (region_max.size() == 3) {
    scene->point_region.max = Vec3(region_max[0], region_max[1], region_max[2]);
  }
}

// Options shared by solve/compare/sweeps. Flags the user actually passed
// override the config file.
struct SolverFlags {
  std::string config_path;
  std::string solver = "admm";
  std::string loss = "l2";
  double rho = 1.0;
  double rho_x = 1.0;
  double rho_y = 1.0;
  double delta = 1.0;
  double primal_tol = 1e-6;
  bool stop_on_primal = false;
  int iters = 1600;
  int inner_iters = 10;
  int block_points = 1;
  int block_cameras = 1;
  int workers = 1;
  std::uint64_t seed = 0;
  double sigma_cam = -1.0;    // <0: keep config value
  double sigma_point = -1.0;

  CLI::Option* o_solver = nullptr;
  CLI::Option* o_loss = nullptr;
  CLI::Option* o_rho = nullptr;
  CLI::Option* o_rho_x = nullptr;
  CLI::Option* o_rho_y = nullptr;
  CLI::Option* o_delta = nullptr;
  CLI::Option* o_primal_tol = nullptr;
  CLI::Option* o_stop_on_primal = nullptr;
  CLI::Option* o_iters = nullptr;
  CLI::Option* o_inner_iters = nullptr;
  CLI::Option* o_block_points = nullptr;
  CLI::Option* o_block_cameras = nullptr;
  CLI::Option* o_workers = nullptr;
  CLI::Option* o_seed = nullptr;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON run config");
    o_solver = cmd->add_option("--solver", solver, "lm | admm");
    o_loss = cmd->add_option("--loss", loss, "misfit loss: l2 | huber");
    o_rho = cmd->add_option("--rho", rho, "sets both rho_x and rho_y");
    o_rho_x = cmd->add_option("--rho-x", rho_x, "point consensus penalty");
    o_rho_y = cmd->add_option("--rho-y", rho_y, "camera consensus penalty");
    o_delta = cmd->add_option("--delta", delta, "Huber threshold [px]");
    o_primal_tol = cmd->add_option("--primal-tol", primal_tol, "primal residual tolerance");
    o_stop_on_primal =
        cmd->add_flag("--stop-on-primal", stop_on_primal, "stop once primal residual converges");
    o_iters = cmd->add_option("--iters", iters, "ADMM iteration budget");
    o_inner_iters = cmd->add_option("--inner-iters", inner_iters, "local solve budget");
    o_block_points = cmd->add_option("--block-points", block_points, "points per local block");
    o_block_cameras = cmd->add_option("--block-cameras", block_cameras, "cameras per local block");
    o_workers = cmd->add_option("--workers", workers, "parallel workers for the local phase");
    o_seed = cmd->add_option("--seed", seed, "master seed");
    cmd->add_option("--sigma-cam", sigma_cam, "init noise std on camera parameters");
    cmd->add_option("--sigma-point", sigma_point, "init noise std on scene points");
  }

  RunConfig build() const {
    RunConfig config;
    if (!config_path.empty()) {
      config = load_run_config(config_path);
    }
    if (o_seed->count()) {
      config.seed = seed;
      config.scene.rng_seed = seed;
      config.perturbation.rng_seed = seed + 1;
    }
    if (o_solver->count()) {
      config.solver = solver;
      if (solver != "lm" && solver != "admm") {
        throw ValidationError("--solver must be 'lm' or 'admm'");
      }
    }
    double effective_delta = config.admm.misfit_loss.delta;
    if (o_delta->count()) {
      if (!(delta > 0.0)) {
        throw ValidationError("--delta must be > 0");
      }
      effective_delta = delta;
    }
    if (o_loss->count()) {
      if (loss == "l2") {
        config.admm.misfit_loss = LossKind::squared_l2();
      } else if (loss == "huber") {
        config.admm.misfit_loss = LossKind::huber(effective_delta);
      } else {
        throw ValidationError("--loss must be 'l2' or 'huber'");
      }
    }
    config.admm.misfit_loss.delta = effective_delta;  // also feeds the sweeps' Huber runs
    if (o_rho->count()) {
      config.admm.rho_x = rho;
      config.admm.rho_y = rho;
    }
    if (o_rho_x->count()) {
      config.admm.rho_x = rho_x;
    }
    if (o_rho_y->count()) {
      config.admm.rho_y = rho_y;
    }
    if (o_primal_tol->count()) {
      config.admm.primal_tol = primal_tol;
    }
    if (o_stop_on_primal->count()) {
      config.admm.stop_on_primal = stop_on_primal;
    }
    if (o_iters->count()) {
      config.admm.max_iters = iters;
    }
    if (o_inner_iters->count()) {
      config.admm.inner.max_iters = inner_iters;
    }
    if (o_block_points->count()) {
      config.block.points_per_block = block_points;
    }
    if (o_block_cameras->count()) {
      config.block.cameras_per_block = block_cameras;
    }
    if (o_workers->count()) {
      config.workers = workers;
      config.admm.workers = workers;
    }
    if (sigma_cam >= 0.0) {
      config.perturbation.sigma_cam = sigma_cam;
    }
    if (sigma_point >= 0.0) {
      config.perturbation.sigma_point = sigma_point;
    }
    return config;
  }
};

std::optional<ParamState> load_reference(const std::string& path) {
  if (path.empty()) {
    return std::nullopt;
  }
  return parse_problem(path).init;
}

int cmd_generate(const SceneConfig& scene, const std::vector<double>& region_min,
                 const std::vector<double>& region_max, double sigma_cam, double sigma_point,
                 const std::string& out_path, const std::string& gt_path) {
  SceneConfig config = scene;
  apply_region(region_min, region_max, &config);
  const GeneratedScene generated = generate_scene(config);

  ParamState init = generated.ground_truth;
  if (sigma_cam > 0.0 || sigma_point > 0.0) {
    init = perturb(init, {sigma_cam, sigma_point, config.rng_seed + 1});
  }
  serialize_problem(generated.problem, init, out_path);
  if (!gt_path.empty()) {
    serialize_problem(generated.problem, generated.ground_truth, gt_path);
  }
  std::cout << "generated " << generated.problem.num_cameras() << " cameras, "
            << generated.problem.num_points() << " points, "
            << generated.problem.num_observations() << " observations -> " << out_path << "\n";
  return 0;
}

struct SolveOutcome {
  ParamState state;
  Trace trace;
};

SolveOutcome run_solver(const RunConfig& config, const Problem& problem, const ParamState& init,
                        const ParamState* reference) {
  if (config.solver == "lm") {
    LmResult result = solve_lm(problem, init, config.lm, LossKind::squared_l2(), reference);
    return {std::move(result.state), std::move(result.trace)};
  }
  AdmmResult result = run_admm(problem, init, config.admm, config.block, reference);
  return {std::move(result.state), std::move(result.trace)};
}

int cmd_solve(const SolverFlags& flags, const std::string& problem_path,
              const std::string& reference_path, std::string out_solved,
              std::string out_metrics) {
  const RunConfig config = flags.build();
  if (out_solved.empty()) {
    out_solved = config.out_solved;
  }
  if (out_metrics.empty()) {
    out_metrics = config.out_metrics;
  }

  const ParsedProblem parsed = parse_problem(problem_path);
  ParamState init = parsed.init;
  if (config.perturbation.sigma_cam > 0.0 || config.perturbation.sigma_point > 0.0) {
    init = perturb(init, config.perturbation);
  }
  const auto reference = load_reference(reference_path);

  const SolveOutcome outcome =
      run_solver(config, parsed.problem, init, reference ? &*reference : nullptr);
  serialize_problem(parsed.problem, outcome.state, out_solved);
  write_metrics_csv(out_metrics, outcome.trace);

  std::cout << "solver=" << config.solver << " iters=" << outcome.trace.size()
            << " final_mean_reproj_err="
            << format_csv_double(mean_reprojection_error(parsed.problem, outcome.state))
            << "\n";
  return 0;
}

int cmd_compare(const SolverFlags& flags, const std::string& problem_path,
                const std::string& reference_path, std::string out_metrics,
                std::string out_summary) {
  RunConfig config = flags.build();
  if (out_metrics.empty()) {
    out_metrics = config.out_metrics;
  }
  if (out_summary.empty()) {
    out_summary = config.out_summary.empty() ? "summary.csv" : config.out_summary;
  }

  const ParsedProblem parsed = parse_problem(problem_path);
  ParamState init = parsed.init;
  if (config.perturbation.sigma_cam > 0.0 || config.perturbation.sigma_point > 0.0) {
    init = perturb(init, config.perturbation);
  }
  const auto reference = load_reference(reference_path);
  const ParamState* ref = reference ? &*reference : nullptr;

  config.solver = "lm";
  const SolveOutcome lm = run_solver(config, parsed.problem, init, ref);
  config.solver = "admm";
  const SolveOutcome admm = run_solver(config, parsed.problem, init, ref);

  std::ofstream csv(out_metrics, std::ios::binary | std::ios::trunc);
  if (!csv) {
    throw Error("cannot open '" + out_metrics + "' for writing");
  }
  csv << "solver," << kMetricsCsvHeader << "\n";
  auto emit = [&csv](const std::string& name, const Trace& trace) {
    for (const IterationRecord& rec : trace) {
      csv << name << "," << rec.iter << "," << format_csv_double(rec.mean_reproj_err) << ","
          << format_csv_double(rec.max_primal_x) << "," << format_csv_double(rec.max_primal_y)
          << "," << format_csv_double(rec.camera_mse) << "," << format_csv_double(rec.point_mse)
          << "," << format_csv_double(rec.wall_ms) << "," << rec.comm_floats << "\n";
    }
  };
  emit("lm", lm.trace);
  emit("admm", admm.trace);

  const double lm_err = mean_reprojection_error(parsed.problem, lm.state);
  const double admm_err = mean_reprojection_error(parsed.problem, admm.state);
  std::ofstream summary(out_summary, std::ios::binary | std::ios::trunc);
  if (!summary) {
    throw Error("cannot open '" + out_summary + "' for writing");
  }
  summary << "lm_final_err,admm_final_err,lm_iters,admm_iters\n"
          << format_csv_double(lm_err) << "," << format_csv_double(admm_err) << ","
          << lm.trace.size() << "," << admm.trace.size() << "\n";

  std::cout << "final_mean_reproj_err lm=" << format_csv_double(lm_err)
            << " admm=" << format_csv_double(admm_err) << "\n";
  return 0;
}

// Deterministic scene shape for a requested observation count.
SceneConfig bench_scene(std::int64_t observations, int window, std::uint64_t seed) {
  SceneConfig scene;
  scene.visibility_window = window;
  scene.n_points = static_cast<int>(std::max<std::int64_t>(1, observations / window));
  scene.n_cameras = static_cast<int>(
      std::clamp<std::int64_t>(observations / 100, window, 100));
  scene.rng_seed = seed;
  return scene;
}

int cmd_bench(const SolverFlags& flags, std::vector<std::int64_t> observations,
              std::vector<int> worker_counts, int iters, int window, const std::string& out_path) {
  RunConfig base = flags.build();
  std::ofstream csv(out_path, std::ios::binary | std::ios::trunc);
  if (!csv) {
    throw Error("cannot open '" + out_path + "' for writing");
  }
  csv << "l,workers,per_iter_ms,ops_per_iter,comm_floats\n";
  for (const std::int64_t l : observations) {
    const SceneConfig scene_cfg = bench_scene(l, window, base.seed);
    const GeneratedScene scene = generate_scene(scene_cfg);
    const ParamState init =
        perturb(scene.ground_truth, {0.01, 0.01, scene_cfg.rng_seed + 1});
    for (const int w : worker_counts) {
      AdmmOptions opts = base.admm;
      opts.max_iters = iters;
      opts.stop_on_primal = false;
      opts.workers = w;
      AdmmSolver solver(scene.problem, init, opts, base.block);
      const AdmmResult result = solver.run(nullptr);
      double total_ms = 0.0;
      for (const IterationRecord& rec : result.trace) {
        total_ms += rec.wall_ms;
      }
      const double per_iter = total_ms / std::max<std::size_t>(1, result.trace.size());
      csv << scene.problem.num_observations() << "," << w << "," << format_csv_double(per_iter)
          << "," << solver.ops_per_iteration() << "," << solver.comm_floats_per_iteration()
          << "\n";
      std::cout << "l=" << scene.problem.num_observations() << " workers=" << w
                << " per_iter_ms=" << format_csv_double(per_iter) << "\n";
    }
  }
  return 0;
}

int cmd_sweep_rho(const SolverFlags& flags, const SceneConfig& scene_template,
                  const std::vector<double>& region_min, const std::vector<double>& region_max,
                  std::vector<double> rhos, int seeds, const std::string& out_path) {
  RunConfig base = flags.build();
  SceneConfig scene_cfg = scene_template;
  apply_region(region_min, region_max, &scene_cfg);

  std::ofstream csv(out_path, std::ios::binary | std::ios::trunc);
  if (!csv) {
    throw Error("cannot open '" + out_path + "' for writing");
  }
  csv << "rho,seed,iters_to_primal_tol,final_err\n";
  for (const double rho : rhos) {
    double iter_sum = 0.0;
    for (int s = 0; s < seeds; ++s) {
      SceneConfig cfg = scene_cfg;
      cfg.rng_seed = base.seed + static_cast<std::uint64_t>(s);
      const GeneratedScene scene = generate_scene(cfg);
      const double sigma_cam =
          base.perturbation.sigma_cam > 0.0 ? base.perturbation.sigma_cam : 0.01;
      const double sigma_point =
          base.perturbation.sigma_point > 0.0 ? base.perturbation.sigma_point : 0.01;
      const ParamState init =
          perturb(scene.ground_truth, {sigma_cam, sigma_point, cfg.rng_seed + 1});

      AdmmOptions opts = base.admm;
      opts.rho_x = rho;
      opts.rho_y = rho;
      opts.stop_on_primal = true;
      const AdmmResult result = run_admm(scene.problem, init, opts, base.block);
      const double final_err = mean_reprojection_error(scene.problem, result.state);
      csv << format_csv_double(rho) << "," << cfg.rng_seed << "," << result.trace.size() << ","
          << format_csv_double(final_err) << "\n";
      iter_sum += static_cast<double>(result.trace.size());
    }
    std::cout << "rho=" << format_csv_double(rho)
              << " mean_iters_to_tol=" << format_csv_double(iter_sum / seeds) << "\n";
  }
  return 0;
}

int cmd_sweep_noise(const SolverFlags& flags, const SceneConfig& scene_template,
                    const std::vector<double>& region_min, const std::vector<double>& region_max,
                    std::vector<double> sigmas, double sigma_cam, int seeds,
                    const std::string& out_path) {
  RunConfig base = flags.build();
  SceneConfig scene_cfg = scene_template;
  apply_region(region_min, region_max, &scene_cfg);

  std::ofstream csv(out_path, std::ios::binary | std::ios::trunc);
  if (!csv) {
    throw Error("cannot open '" + out_path + "' for writing");
  }
  csv << "sigma_point,seed,loss,final_err\n";
  const double delta = base.admm.misfit_loss.delta;
  for (const double sigma : sigmas) {
    int huber_wins = 0;
    for (int s = 0; s < seeds; ++s) {
      SceneConfig cfg = scene_cfg;
      cfg.rng_seed = base.seed + static_cast<std::uint64_t>(s);
      const GeneratedScene scene = generate_scene(cfg);
      const ParamState init =
          perturb(scene.ground_truth, {sigma_cam, sigma, cfg.rng_seed + 1});

      double err_by_loss[2] = {0.0, 0.0};
      for (int which = 0; which < 2; ++which) {
        AdmmOptions opts = base.admm;
        opts.misfit_loss = which == 0 ? LossKind::squared_l2() : LossKind::huber(delta);
        opts.stop_on_primal = false;
        const AdmmResult result = run_admm(scene.problem, init, opts, base.block);
        err_by_loss[which] = mean_reprojection_error(scene.problem, result.state);
        csv << format_csv_double(sigma) << "," << cfg.rng_seed << ","
            << (which == 0 ? "l2" : "huber") << "," << format_csv_double(err_by_loss[which])
            << "\n";
      }
      if (err_by_loss[1] <= err_by_loss[0]) {
        ++huber_wins;
      }
    }
    std::cout << "sigma_point=" << format_csv_double(sigma) << " huber_wins=" << huber_wins << "/"
              << seeds << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"distributed bundle adjustment toolkit"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "generate a synthetic scene");
  SceneConfig gen_scene;
  std::vector<double> gen_region_min, gen_region_max;
  double gen_sigma_cam = 0.0, gen_sigma_point = 0.0;
  std::string gen_out = "problem.txt", gen_gt;
  add_scene_flags(gen, &gen_scene, &gen_region_min, &gen_region_max);
  gen->add_option("--seed", gen_scene.rng_seed, "scene seed");
  gen->add_option("--sigma-cam", gen_sigma_cam, "perturb the stored init: camera std");
  gen->add_option("--sigma-point", gen_sigma_point, "perturb the stored init: point std");
  gen->add_option("--out", gen_out, "problem file path");
  gen->add_option("--ground-truth", gen_gt, "ground-truth file path");

  // solve
  auto* solve = app.add_subcommand("solve", "solve a problem file");
  SolverFlags solve_flags;
  std::string solve_problem, solve_reference, solve_out, solve_metrics;
  solve->add_option("--problem", solve_problem, "problem file")->required();
  solve->add_option("--reference", solve_reference, "ground-truth file for MSE columns");
  solve->add_option("--out", solve_out, "solved problem file");
  solve->add_option("--metrics", solve_metrics, "per-iteration metrics CSV");
  solve_flags.add_to(solve);

  // compare
  auto* compare = app.add_subcommand("compare", "run LM and ADMM on the same input");
  SolverFlags compare_flags;
  std::string cmp_problem, cmp_reference, cmp_metrics, cmp_summary;
  compare->add_option("--problem", cmp_problem, "problem file")->required();
  compare->add_option("--reference", cmp_reference, "ground-truth file for MSE columns");
  compare->add_option("--metrics", cmp_metrics, "side-by-side metrics CSV");
  compare->add_option("--summary", cmp_summary, "one-row summary CSV");
  compare_flags.add_to(compare);

  // bench
  auto* bench = app.add_subcommand("bench", "runtime scaling over l and workers");
  SolverFlags bench_flags;
  std::vector<std::int64_t> bench_l{100, 300, 1000, 3000, 10000};
  std::vector<int> bench_workers{1, 2, 8};
  int bench_iters = 20, bench_window = 5;
  std::string bench_out = "bench.csv";
  bench->add_option("--observations", bench_l, "observation counts")->delimiter(',');
  bench->add_option("--worker-counts", bench_workers, "worker counts")->delimiter(',');
  bench->add_option("--bench-iters", bench_iters, "iterations per timing run");
  bench->add_option("--bench-window", bench_window, "visibility window for bench scenes");
  bench->add_option("--out", bench_out, "output CSV");
  bench_flags.add_to(bench);

  // sweep-rho
  auto* sweep_rho = app.add_subcommand("sweep-rho", "penalty parameter sweep");
  SolverFlags rho_flags;
  SceneConfig rho_scene;
  std::vector<double> rho_region_min, rho_region_max;
  std::vector<double> rho_values{0.1, 1.0, 10.0};
  int rho_seeds = 5;
  std::string rho_out = "rho.csv";
  add_scene_flags(sweep_rho, &rho_scene, &rho_region_min, &rho_region_max);
  sweep_rho->add_option("--rhos", rho_values, "rho values")->delimiter(',');
  sweep_rho->add_option("--seeds", rho_seeds, "seeds per rho");
  sweep_rho->add_option("--out", rho_out, "output CSV");
  rho_flags.add_to(sweep_rho);

  // sweep-noise
  auto* sweep_noise = app.add_subcommand("sweep-noise", "scene-point noise sweep, l2 vs huber");
  SolverFlags noise_flags;
  SceneConfig noise_scene;
  std::vector<double> noise_region_min, noise_region_max;
  std::vector<double> noise_sigmas{0.2, 0.7, 1.2, 1.7};
  double noise_sigma_cam = 0.1;
  int noise_seeds = 20;
  std::string noise_out = "noise.csv";
  add_scene_flags(sweep_noise, &noise_scene, &noise_region_min, &noise_region_max);
  sweep_noise->add_option("--sigmas", noise_sigmas, "scene-point noise stds")->delimiter(',');
  sweep_noise->add_option("--init-sigma-cam", noise_sigma_cam, "camera init noise std");
  sweep_noise->add_option("--seeds", noise_seeds, "seeds per sigma");
  sweep_noise->add_option("--out", noise_out, "output CSV");
  noise_flags.add_to(sweep_noise);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      return cmd_generate(gen_scene, gen_region_min, gen_region_max, gen_sigma_cam,
                          gen_sigma_point, gen_out, gen_gt);
    }
    if (solve->parsed()) {
      return cmd_solve(solve_flags, solve_problem, solve_reference, solve_out, solve_metrics);
    }
    if (compare->parsed()) {
      return cmd_compare(compare_flags, cmp_problem, cmp_reference, cmp_metrics, cmp_summary);
    }
    if (bench->parsed()) {
      return cmd_bench(bench_flags, bench_l, bench_workers, bench_iters, bench_window, bench_out);
    }
    if (sweep_rho->parsed()) {
      return cmd_sweep_rho(rho_flags, rho_scene, rho_region_min, rho_region_max, rho_values,
                           rho_seeds, rho_out);
    }
    if (sweep_noise->parsed()) {
      return cmd_sweep_noise(noise_flags, noise_scene, noise_region_min, noise_region_max,
                             noise_sigmas, noise_sigma_cam, noise_seeds, noise_out);
    }
  } catch (const ValidationError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
