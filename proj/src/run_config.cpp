#include "dba/run_config.hpp"

#include <fstream>
#include <initializer_list>
#include <json.hpp>
#include <set>
#include <sstream>

#include "dba/errors.hpp"

namespace dba {

namespace {

using nlohmann::json;

void require_object(const json& j, const std::string& where) {
  if (!j.is_object()) {
    throw ValidationError("config section '" + where + "' must be an object");
  }
}

void reject_unknown_keys(const json& j, const std::string& where,
                         std::initializer_list<const char*> allowed) {
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!ok.count(key)) {
      throw ValidationError("unknown key '" + key + "' in config section '" + where + "'");
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) {
    return;
  }
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError(std::string("config key '") + key + "' has the wrong type");
  }
}

Vec3 read_vec3(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3 || !j[0].is_number() || !j[1].is_number() ||
      !j[2].is_number()) {
    throw ValidationError("'" + where + "' must be an array of 3 numbers");
  }
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

void parse_scene(const json& j, SceneConfig& scene) {
  require_object(j, "scene");
  reject_unknown_keys(j, "scene",
                      {"cameras", "points", "window", "orbit_radius", "altitude", "point_region",
                       "jitter_trans", "jitter_rot", "focal", "seed"});
  read(j, "cameras", scene.n_cameras);
  read(j, "points", scene.n_points);
  read(j, "window", scene.visibility_window);
  read(j, "orbit_radius", scene.orbit_radius);
  read(j, "altitude", scene.altitude);
  read(j, "jitter_trans", scene.jitter_trans);
  read(j, "jitter_rot", scene.jitter_rot);
  read(j, "focal", scene.focal);
  read(j, "seed", scene.rng_seed);
  if (j.contains("point_region")) {
    const json& region = j.at("point_region");
    require_object(region, "scene.point_region");
    reject_unknown_keys(region, "scene.point_region", {"min", "max"});
    if (region.contains("min")) {
      scene.point_region.min = read_vec3(region.at("min"), "scene.point_region.min");
    }
    if (region.contains("max")) {
      scene.point_region.max = read_vec3(region.at("max"), "scene.point_region.max");
    }
  }
}

void parse_perturbation(const json& j, InitPerturbation& pert) {
  require_object(j, "perturbation");
  reject_unknown_keys(j, "perturbation", {"sigma_cam", "sigma_point", "seed"});
  read(j, "sigma_cam", pert.sigma_cam);
  read(j, "sigma_point", pert.sigma_point);
  read(j, "seed", pert.rng_seed);
}

void parse_admm(const json& j, AdmmOptions& admm, BlockConfig& block) {
  require_object(j, "admm");
  reject_unknown_keys(j, "admm",
                      {"rho_x", "rho_y", "loss", "delta", "block_points", "block_cameras",
                       "iters", "primal_tol", "stop_on_primal", "inner_iters"});
  read(j, "rho_x", admm.rho_x);
  read(j, "rho_y", admm.rho_y);
  read(j, "iters", admm.max_iters);
  read(j, "primal_tol", admm.primal_tol);
  read(j, "stop_on_primal", admm.stop_on_primal);
  read(j, "inner_iters", admm.inner.max_iters);
  read(j, "block_points", block.points_per_block);
  read(j, "block_cameras", block.cameras_per_block);
  double delta = admm.misfit_loss.delta;
  read(j, "delta", delta);
  if (j.contains("loss")) {
    const std::string loss = j.at("loss").get<std::string>();
    if (loss == "l2") {
      admm.misfit_loss = LossKind::squared_l2();
    } else if (loss == "huber") {
      admm.misfit_loss = LossKind::huber(delta);
    } else {
      throw ValidationError("config key 'loss' must be 'l2' or 'huber'");
    }
  } else {
    admm.misfit_loss.delta = delta;
  }
}

void parse_lm(const json& j, LmOptions& lm) {
  require_object(j, "lm");
  reject_unknown_keys(
      j, "lm",
      {"iters", "error_stop", "lambda_init", "lambda_max", "lambda_up", "lambda_down", "use_schur"});
  read(j, "iters", lm.max_iters);
  read(j, "error_stop", lm.error_stop);
  read(j, "lambda_init", lm.lambda_init);
  read(j, "lambda_max", lm.lambda_max);
  read(j, "lambda_up", lm.lambda_up);
  read(j, "lambda_down", lm.lambda_down);
  read(j, "use_schur", lm.use_schur);
}

void parse_output(const json& j, RunConfig& config) {
  require_object(j, "output");
  reject_unknown_keys(j, "output", {"solved", "metrics", "summary"});
  read(j, "solved", config.out_solved);
  read(j, "metrics", config.out_metrics);
  read(j, "summary", config.out_summary);
}

}  // namespace

RunConfig parse_run_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  require_object(j, "<top>");
  reject_unknown_keys(j, "<top>",
                      {"scene", "perturbation", "solver", "admm", "lm", "workers", "seed",
                       "output"});

  RunConfig config;
  read(j, "seed", config.seed);
  config.scene.rng_seed = config.seed;
  config.perturbation.rng_seed = config.seed + 1;

  if (j.contains("scene")) {
    parse_scene(j.at("scene"), config.scene);
  }
  if (j.contains("perturbation")) {
    parse_perturbation(j.at("perturbation"), config.perturbation);
  }
  if (j.contains("admm")) {
    parse_admm(j.at("admm"), config.admm, config.block);
  }
  if (j.contains("lm")) {
    parse_lm(j.at("lm"), config.lm);
  }
  if (j.contains("output")) {
    parse_output(j.at("output"), config);
  }
  read(j, "solver", config.solver);
  if (config.solver != "lm" && config.solver != "admm") {
    throw ValidationError("config key 'solver' must be 'lm' or 'admm'");
  }
  read(j, "workers", config.workers);
  if (config.workers < 1) {
    throw ValidationError("config key 'workers' must be >= 1");
  }
  config.admm.workers = config.workers;
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ValidationError("cannot open config '" + path.string() + "'");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config_text(buf.str());
}

}  // namespace dba
