#pragma once

#include <filesystem>
#include <string>

#include "dba/problem.hpp"

namespace dba {

/// BAL-style plain-text problem interchange:
///
///   rotation euler            (optional; `euler` or `angle-axis`, default euler)
///   m n l
///   cam_id point_id u v       (l observation lines)
///   <9 values per camera>     (3 rotation, 3 translation, focal, k1, k2)
///   <3 values per point>
///
/// The two distortion slots must be exactly zero; the camera model here has
/// none, and silently dropping them would solve the wrong problem. Values are
/// written with 17 significant digits so binary64 round-trips bit-exactly.
struct ParsedProblem {
  Problem problem;
  ParamState init;  ///< the file's camera/point records
};

ParsedProblem parse_problem(const std::filesystem::path& path);
ParsedProblem parse_problem_text(const std::string& text);

void serialize_problem(const Problem& problem, const ParamState& state,
                       const std::filesystem::path& path);
std::string serialize_problem_text(const Problem& problem, const ParamState& state);

}  // namespace dba
