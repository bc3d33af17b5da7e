#pragma once

// Closed convex sets with exact Euclidean projection.

#include <saddlenet/common.hpp>

#include <limits>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace saddlenet {

class ConvexSet;

namespace sets {

struct FullSpace {
  int dim;
};
struct Box {
  Vector lower;
  Vector upper;
};
struct NonnegOrthant {
  int dim;
};
struct CenteredBall {
  int dim;
  double radius;
};
/// Nonnegative orthant intersected with the closed ball of given radius at 0.
struct OrthantBall {
  int dim;
  double radius;
};
struct Product {
  std::vector<ConvexSet> parts;
};

}  // namespace sets

/// Nonempty closed convex subset of R^dim.
class ConvexSet {
 public:
  using Variant = std::variant<sets::FullSpace, sets::Box, sets::NonnegOrthant, sets::CenteredBall,
                               sets::OrthantBall, sets::Product>;

  static ConvexSet full(int dim) {
    require(dim >= 0, "negative dimension");
    return ConvexSet(sets::FullSpace{dim});
  }
  static ConvexSet box(Vector lower, Vector upper) {
    require(lower.size() == upper.size(), "box bounds differ in dimension");
    require((lower.array() <= upper.array()).all(), "box needs lower <= upper");
    require(!lower.hasNaN() && !upper.hasNaN(), "box bounds are NaN");
    return ConvexSet(sets::Box{std::move(lower), std::move(upper)});
  }
  static ConvexSet box(int dim, double lower, double upper) {
    return box(Vector::Constant(dim, lower), Vector::Constant(dim, upper));
  }
  static ConvexSet orthant(int dim) {
    require(dim >= 0, "negative dimension");
    return ConvexSet(sets::NonnegOrthant{dim});
  }
  static ConvexSet ball(int dim, double radius) {
    require(dim >= 0, "negative dimension");
    require(radius > 0.0, "ball radius must be positive");
    return ConvexSet(sets::CenteredBall{dim, radius});
  }
  static ConvexSet orthant_ball(int dim, double radius) {
    require(dim >= 0, "negative dimension");
    require(radius > 0.0, "ball radius must be positive");
    return ConvexSet(sets::OrthantBall{dim, radius});
  }
  static ConvexSet product(std::vector<ConvexSet> parts) {
    return ConvexSet(sets::Product{std::move(parts)});
  }
  /// `copies` stacked copies of `part`.
  static ConvexSet power(const ConvexSet& part, int copies) {
    return product(std::vector<ConvexSet>(static_cast<std::size_t>(copies), part));
  }

  const Variant& variant() const { return v_; }

  int dim() const {
    return std::visit(
        [](const auto& s) -> int {
          using S = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<S, sets::Box>) {
            return static_cast<int>(s.lower.size());
          } else if constexpr (std::is_same_v<S, sets::Product>) {
            int d = 0;
            for (const auto& p : s.parts) d += p.dim();
            return d;
          } else {
            return s.dim;
          }
        },
        v_);
  }

  Vector project(const Vector& x) const {
    if (x.size() != dim())
      throw ValidationError("projection: dimension mismatch (set " + std::to_string(dim()) +
                            ", point " + std::to_string(x.size()) + ")");
    return std::visit(
        [&x](const auto& s) -> Vector {
          using S = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<S, sets::FullSpace>) {
            return x;
          } else if constexpr (std::is_same_v<S, sets::Box>) {
            return x.cwiseMax(s.lower).cwiseMin(s.upper);
          } else if constexpr (std::is_same_v<S, sets::NonnegOrthant>) {
            return x.cwiseMax(0.0);
          } else if constexpr (std::is_same_v<S, sets::CenteredBall>) {
            const double n = x.norm();
            return n > s.radius ? Vector(x * (s.radius / n)) : x;
          } else if constexpr (std::is_same_v<S, sets::OrthantBall>) {
            // Clip to the cone, then rescale radially; exact because the ball
            // is centered at the apex of the cone.
            Vector y = x.cwiseMax(0.0);
            const double n = y.norm();
            if (n > s.radius) y *= s.radius / n;
            return y;
          } else {
            Vector out(x.size());
            Eigen::Index off = 0;
            for (const auto& p : s.parts) {
              const int d = p.dim();
              out.segment(off, d) = p.project(x.segment(off, d));
              off += d;
            }
            return out;
          }
        },
        v_);
  }

  /// Distance from x to the set, ||P(x) - x||.
  double residual(const Vector& x) const { return (project(x) - x).norm(); }

  bool contains(const Vector& x, double tol = 1e-10) const { return residual(x) <= tol; }

  bool bounded() const { return std::isfinite(diameter()); }

  /// Euclidean diameter; +inf for unbounded sets.
  double diameter() const {
    constexpr double inf = std::numeric_limits<double>::infinity();
    return std::visit(
        [](const auto& s) -> double {
          using S = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<S, sets::FullSpace> || std::is_same_v<S, sets::NonnegOrthant>) {
            return s.dim == 0 ? 0.0 : inf;
          } else if constexpr (std::is_same_v<S, sets::Box>) {
            return (s.upper - s.lower).norm();
          } else if constexpr (std::is_same_v<S, sets::CenteredBall>) {
            return s.dim == 0 ? 0.0 : 2.0 * s.radius;
          } else if constexpr (std::is_same_v<S, sets::OrthantBall>) {
            if (s.dim == 0) return 0.0;
            return s.dim == 1 ? s.radius : std::sqrt(2.0) * s.radius;
          } else {
            double sq = 0.0;
            for (const auto& p : s.parts) {
              const double d = p.diameter();
              sq += d * d;
            }
            return std::sqrt(sq);
          }
        },
        v_);
  }

  /// A point of the set (used to seed inner solvers).
  Vector anchor() const { return project(Vector::Zero(dim())); }

  const sets::Box* as_box() const { return std::get_if<sets::Box>(&v_); }

 private:
  explicit ConvexSet(Variant v) : v_(std::move(v)) {}
  Variant v_;
};

}  // namespace saddlenet
