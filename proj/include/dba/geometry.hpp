#pragma once

#include <Eigen/Core>
#include <optional>

#include "dba/errors.hpp"

namespace dba {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat23 = Eigen::Matrix<double, 2, 3>;
using Mat26 = Eigen::Matrix<double, 2, 6>;

using ScenePoint = Vec3;
using ImagePoint = Vec2;

/// 6-DoF camera pose plus a known (fixed) focal length.
///
/// The rotation is R = R3(gamma) * R2(beta) * R1(alpha) with R1/R2/R3
/// right-handed rotations about the x/y/z axes, counterclockwise positive.
/// Angles are stored unwrapped; every operation is 2*pi-periodic in each.
/// A world point x maps to camera coordinates w = R*x + t and pixel
/// coordinates (f*w1/w3, f*w2/w3).
struct CameraParams {
  double alpha = 0.0;  ///< Euler angle about axis 1 (x), radians.
  double beta = 0.0;   ///< Euler angle about axis 2 (y), radians.
  double gamma = 0.0;  ///< Euler angle about axis 3 (z), radians.
  Vec3 t = Vec3::Zero();  ///< Translation, meters.
  double f = 1.0;         ///< Focal length, pixels. Fixed, never optimized.

  /// The six optimized parameters in order (alpha, beta, gamma, t1, t2, t3).
  Vec6 pose() const {
    Vec6 p;
    p << alpha, beta, gamma, t.x(), t.y(), t.z();
    return p;
  }

  void set_pose(const Vec6& p) {
    alpha = p[0];
    beta = p[1];
    gamma = p[2];
    t = p.tail<3>();
  }
};

/// Minimum admissible depth w3 for a projection to be defined.
struct ProjectionGuard {
  double eps_depth = 1e-6;
};

/// R = R3(gamma) * R2(beta) * R1(alpha).
Mat3 rotation_from_euler(double alpha, double beta, double gamma);

/// Inverse of rotation_from_euler for beta in (-pi/2, pi/2); returns
/// (alpha, beta, gamma). R must be a rotation matrix.
Vec3 euler_from_rotation(const Mat3& R);

/// Rotation matrix together with its partials in each Euler angle.
struct EulerRotation {
  Mat3 R;
  Mat3 dR_dalpha;
  Mat3 dR_dbeta;
  Mat3 dR_dgamma;
};

EulerRotation rotation_with_derivatives(double alpha, double beta, double gamma);

/// Perspective projection z = (f*w1/w3, f*w2/w3), w = R*x + t.
/// Empty when w3 < guard.eps_depth.
std::optional<ImagePoint> try_project(const ScenePoint& x, const CameraParams& y,
                                      const ProjectionGuard& guard = {});

/// Throwing variant of try_project.
ImagePoint project(const ScenePoint& x, const CameraParams& y,
                   const ProjectionGuard& guard = {});

/// z - project(x, y).
std::optional<Vec2> try_residual(const ImagePoint& z, const ScenePoint& x,
                                 const CameraParams& y, const ProjectionGuard& guard = {});

Vec2 residual(const ImagePoint& z, const ScenePoint& x, const CameraParams& y,
              const ProjectionGuard& guard = {});

/// Partials of the projection with respect to the point coordinates (2x3)
/// and the camera pose (2x6, columns ordered alpha, beta, gamma, t1, t2, t3).
struct ProjectionJacobians {
  Mat23 point;
  Mat26 camera;
};

std::optional<ProjectionJacobians> try_projection_jacobians(
    const ScenePoint& x, const CameraParams& y, const ProjectionGuard& guard = {});

ProjectionJacobians projection_jacobians(const ScenePoint& x, const CameraParams& y,
                                         const ProjectionGuard& guard = {});

/// Projection and both Jacobians in one pass; the solvers' workhorse.
struct ProjectionExpansion {
  ImagePoint z;
  Mat23 J_point;
  Mat26 J_camera;
};

std::optional<ProjectionExpansion> try_project_with_jacobians(
    const ScenePoint& x, const CameraParams& y, const ProjectionGuard& guard = {});

}  // namespace dba
