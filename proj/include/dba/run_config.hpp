#pragma once

#include <filesystem>
#include <string>

#include "dba/admm_solver.hpp"
#include "dba/lm_solver.hpp"
#include "dba/scene_gen.hpp"

namespace dba {

/// Solver run description loaded from a JSON config file. Every key is
/// optional with the defaults below; unknown keys are rejected. The
/// top-level `seed` feeds the scene (seed) and the perturbation (seed + 1)
/// unless those sections pin their own.
struct RunConfig {
  SceneConfig scene;
  InitPerturbation perturbation;
  std::string solver = "admm";  ///< "lm" | "admm"
  AdmmOptions admm;
  BlockConfig block;
  LmOptions lm;
  int workers = 1;
  std::uint64_t seed = 0;
  std::string out_solved = "solved.txt";
  std::string out_metrics = "metrics.csv";
  std::string out_summary;  ///< empty: next to out_metrics when compare needs it
};

RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config_text(const std::string& text);

}  // namespace dba
