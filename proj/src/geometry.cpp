#include "dba/geometry.hpp"

#include <cmath>

namespace dba {

namespace {

Mat3 rot_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << 1, 0, 0, 0, c, -s, 0, s, c;
  return m;
}

Mat3 rot_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << c, 0, s, 0, 1, 0, -s, 0, c;
  return m;
}

Mat3 rot_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << c, -s, 0, s, c, 0, 0, 0, 1;
  return m;
}

Mat3 drot_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << 0, 0, 0, 0, -s, -c, 0, c, -s;
  return m;
}

Mat3 drot_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << -s, 0, c, 0, 0, 0, -c, 0, -s;
  return m;
}

Mat3 drot_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << -s, -c, 0, c, -s, 0, 0, 0, 0;
  return m;
}

// d(projection)/dw at camera-frame point w, with focal f.
inline Mat23 perspective_jacobian(const Vec3& w, double f) {
  const double inv_z = 1.0 / w.z();
  Mat23 d;
  d << f * inv_z, 0, -f * w.x() * inv_z * inv_z,
       0, f * inv_z, -f * w.y() * inv_z * inv_z;
  return d;
}

}  // namespace

Mat3 rotation_from_euler(double alpha, double beta, double gamma) {
  return rot_z(gamma) * rot_y(beta) * rot_x(alpha);
}

Vec3 euler_from_rotation(const Mat3& R) {
  // R = Rz(g) Ry(b) Rx(a):
  //   R(1,0) = cb*sg, R(0,0) = cb*cg, R(2,0) = -sb, R(2,1) = sa*cb, R(2,2) = ca*cb.
  const double beta = std::asin(std::clamp(-R(2, 0), -1.0, 1.0));
  double alpha, gamma;
  if (std::abs(R(2, 0)) < 1.0 - 1e-12) {
    alpha = std::atan2(R(2, 1), R(2, 2));
    gamma = std::atan2(R(1, 0), R(0, 0));
  } else {
    // Gimbal lock: only alpha +/- gamma is determined; fix gamma = 0.
    alpha = std::atan2(-R(1, 2), R(1, 1));
    gamma = 0.0;
  }
  return {alpha, beta, gamma};
}

EulerRotation rotation_with_derivatives(double alpha, double beta, double gamma) {
  const Mat3 r1 = rot_x(alpha), r2 = rot_y(beta), r3 = rot_z(gamma);
  EulerRotation out;
  out.R = r3 * r2 * r1;
  out.dR_dalpha = r3 * r2 * drot_x(alpha);
  out.dR_dbeta = r3 * drot_y(beta) * r1;
  out.dR_dgamma = drot_z(gamma) * r2 * r1;
  return out;
}

std::optional<ImagePoint> try_project(const ScenePoint& x, const CameraParams& y,
                                      const ProjectionGuard& guard) {
  const Vec3 w = rotation_from_euler(y.alpha, y.beta, y.gamma) * x + y.t;
  if (!(w.z() >= guard.eps_depth)) {
    return std::nullopt;
  }
  return ImagePoint(y.f * w.x() / w.z(), y.f * w.y() / w.z());
}

ImagePoint project(const ScenePoint& x, const CameraParams& y, const ProjectionGuard& guard) {
  if (auto z = try_project(x, y, guard)) {
    return *z;
  }
  const Vec3 w = rotation_from_euler(y.alpha, y.beta, y.gamma) * x + y.t;
  throw DepthBelowGuard(w.z(), guard.eps_depth);
}

std::optional<Vec2> try_residual(const ImagePoint& z, const ScenePoint& x,
                                 const CameraParams& y, const ProjectionGuard& guard) {
  if (auto p = try_project(x, y, guard)) {
    return Vec2(z - *p);
  }
  return std::nullopt;
}

Vec2 residual(const ImagePoint& z, const ScenePoint& x, const CameraParams& y,
              const ProjectionGuard& guard) {
  return z - project(x, y, guard);
}

std::optional<ProjectionJacobians> try_projection_jacobians(const ScenePoint& x,
                                                            const CameraParams& y,
                                                            const ProjectionGuard& guard) {
  auto full = try_project_with_jacobians(x, y, guard);
  if (!full) {
    return std::nullopt;
  }
  return ProjectionJacobians{full->J_point, full->J_camera};
}

ProjectionJacobians projection_jacobians(const ScenePoint& x, const CameraParams& y,
                                         const ProjectionGuard& guard) {
  if (auto j = try_projection_jacobians(x, y, guard)) {
    return *j;
  }
  const Vec3 w = rotation_from_euler(y.alpha, y.beta, y.gamma) * x + y.t;
  throw DepthBelowGuard(w.z(), guard.eps_depth);
}

std::optional<ProjectionExpansion> try_project_with_jacobians(const ScenePoint& x,
                                                              const CameraParams& y,
                                                              const ProjectionGuard& guard) {
  const EulerRotation rot = rotation_with_derivatives(y.alpha, y.beta, y.gamma);
  const Vec3 w = rot.R * x + y.t;
  if (!(w.z() >= guard.eps_depth)) {
    return std::nullopt;
  }
  const Mat23 dproj = perspective_jacobian(w, y.f);

  ProjectionExpansion out;
  out.z = ImagePoint(y.f * w.x() / w.z(), y.f * w.y() / w.z());
  out.J_point = dproj * rot.R;
  out.J_camera.col(0) = dproj * (rot.dR_dalpha * x);
  out.J_camera.col(1) = dproj * (rot.dR_dbeta * x);
  out.J_camera.col(2) = dproj * (rot.dR_dgamma * x);
  out.J_camera.rightCols<3>() = dproj;
  return out;
}

}  // namespace dba
