#pragma once

#include "dba/errors.hpp"
#include "dba/geometry.hpp"

namespace dba {

/// Misfit penalty applied to a 2D reprojection residual.
///
/// SquaredL2 is the plain squared norm ||r||^2 (no 1/2 factor). Huber is
/// applied to the residual norm: a^2/2 for a <= delta, delta*(a - delta/2)
/// beyond. The two are distinct functions, not rescalings of each other.
struct LossKind {
  enum class Type { kSquaredL2, kHuber };

  Type type = Type::kSquaredL2;
  double delta = 1.0;  ///< Huber threshold, pixels. Ignored for SquaredL2.

  static LossKind squared_l2() { return {Type::kSquaredL2, 1.0}; }

  static LossKind huber(double delta) {
    if (!(delta > 0.0)) {
      throw ValidationError("Huber delta must be > 0");
    }
    return {Type::kHuber, delta};
  }

  bool is_huber() const { return type == Type::kHuber; }
};

double loss_value(const LossKind& kind, const Vec2& r);

/// Gradient of loss_value with respect to r; 0 at r = 0.
Vec2 loss_gradient(const LossKind& kind, const Vec2& r);

}  // namespace dba
