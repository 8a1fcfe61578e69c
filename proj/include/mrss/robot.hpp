#pragma once

#include <string>
#include <vector>

namespace mrss {

enum class RobotKind { Wheeled = 0, Quadcopter = 1 };

inline constexpr int kKindCount = 2;

inline const char* kind_name(RobotKind k) {
  return k == RobotKind::Wheeled ? "wheeled" : "quadcopter";
}

/// Team composition. Agents are ordered wheeled first, then quadcopters.
struct Roster {
  int wheeled = 1;
  int quadcopter = 1;

  int size() const { return wheeled + quadcopter; }
  RobotKind kind_of(int agent) const {
    return agent < wheeled ? RobotKind::Wheeled : RobotKind::Quadcopter;
  }
  int count(RobotKind k) const { return k == RobotKind::Wheeled ? wheeled : quadcopter; }
  std::vector<RobotKind> kinds() const {
    std::vector<RobotKind> out;
    for (int i = 0; i < size(); ++i) out.push_back(kind_of(i));
    return out;
  }
  bool operator==(const Roster&) const = default;
};

}  // namespace mrss
