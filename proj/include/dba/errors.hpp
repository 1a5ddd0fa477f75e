#pragma once

#include <stdexcept>
#include <string>

namespace dba {

/// Base class for all toolkit errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Data errors: malformed files, invalid configurations, inconsistent sizes.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// File parsing failure; carries the 1-based line number when known.
class ParseError : public ValidationError {
 public:
  ParseError(const std::string& what, int line)
      : ValidationError(what + " (line " + std::to_string(line) + ")"), line(line) {}
  int line;
};

class DuplicateObservation : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class IndexOutOfRange : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class SizeMismatch : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// A point sits at or behind the camera plane (depth below the projection
/// guard). Carries the offending indices when raised from a problem-level
/// operation; -1 when raised from a bare geometric call.
class DepthBelowGuard : public Error {
 public:
  DepthBelowGuard(double depth, double eps_depth, int point_id = -1, int cam_id = -1)
      : Error("projection depth " + std::to_string(depth) + " below guard " +
              std::to_string(eps_depth) +
              (point_id >= 0 ? " at point " + std::to_string(point_id) + ", camera " +
                                   std::to_string(cam_id)
                             : std::string{})),
        depth(depth),
        point_id(point_id),
        cam_id(cam_id) {}
  double depth;
  int point_id;
  int cam_id;
};

/// A linear system stayed singular after damping escalation.
class SingularSystem : public Error {
 public:
  using Error::Error;
};

/// Scene generation exhausted its retry budget for a point.
class ProjectionFailed : public Error {
 public:
  using Error::Error;
};

}  // namespace dba
