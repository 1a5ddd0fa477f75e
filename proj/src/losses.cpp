#include "dba/losses.hpp"

#include <cmath>

namespace dba {

double loss_value(const LossKind& kind, const Vec2& r) {
  switch (kind.type) {
    case LossKind::Type::kSquaredL2:
      return r.squaredNorm();
    case LossKind::Type::kHuber: {
      const double a = r.norm();
      if (a <= kind.delta) {
        return 0.5 * a * a;
      }
      return kind.delta * (a - 0.5 * kind.delta);
    }
  }
  return 0.0;
}

Vec2 loss_gradient(const LossKind& kind, const Vec2& r) {
  switch (kind.type) {
    case LossKind::Type::kSquaredL2:
      return 2.0 * r;
    case LossKind::Type::kHuber: {
      const double a = r.norm();
      if (a == 0.0) {
        return Vec2::Zero();
      }
      if (a <= kind.delta) {
        return r;
      }
      return (kind.delta / a) * r;
    }
  }
  return Vec2::Zero();
}

}  // namespace dba
