#pragma once

#include <saddlenet/common.hpp>

#include <bit>
#include <variant>

namespace saddlenet {

namespace schedules {
/// eta_t = 1/sqrt(2^m) on the epoch t = 2^m, ..., 2^{m+1}-1.
struct DoublingTrick {};
struct Constant {
  double eta;
};
/// eta_t = c / sqrt(t)
struct InvSqrt {
  double c;
};
/// eta_t = c / t
struct Harmonic {
  double c;
};
}  // namespace schedules

using Schedule =
    std::variant<schedules::DoublingTrick, schedules::Constant, schedules::InvSqrt, schedules::Harmonic>;

inline void validate(const Schedule& s) {
  std::visit(
      [](const auto& v) {
        using S = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<S, schedules::Constant>) {
          require(v.eta > 0.0 && std::isfinite(v.eta), "constant learning rate must be positive");
        } else if constexpr (!std::is_same_v<S, schedules::DoublingTrick>) {
          require(v.c > 0.0 && std::isfinite(v.c), "schedule scale must be positive");
        }
      },
      s);
}

/// Learning rate at step t >= 1.
inline double rate(const Schedule& s, long long t) {
  require(t >= 1, "learning rate index must be >= 1");
  return std::visit(
      [t](const auto& v) -> double {
        using S = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<S, schedules::DoublingTrick>) {
          const auto epoch_len = std::bit_floor(static_cast<unsigned long long>(t));
          return 1.0 / std::sqrt(static_cast<double>(epoch_len));
        } else if constexpr (std::is_same_v<S, schedules::Constant>) {
          return v.eta;
        } else if constexpr (std::is_same_v<S, schedules::InvSqrt>) {
          return v.c / std::sqrt(static_cast<double>(t));
        } else {
          return v.c / static_cast<double>(t);
        }
      },
      s);
}

inline std::string schedule_name(const Schedule& s) {
  return std::visit(
      [](const auto& v) -> std::string {
        using S = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<S, schedules::DoublingTrick>) return "doubling";
        else if constexpr (std::is_same_v<S, schedules::Constant>) return "constant";
        else if constexpr (std::is_same_v<S, schedules::InvSqrt>) return "inv_sqrt";
        else return "harmonic";
      },
      s);
}

}  // namespace saddlenet
