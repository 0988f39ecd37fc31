#pragma once

#include <ostream>
#include <vector>

namespace posefront {

inline constexpr double kDefaultGateSteepness = 10.0;

// Pose thresholds (degrees of absolute yaw, strictly decreasing, inside (0, 90))
// and the sigmoid steepness shared by every block's gate.
struct GateConfig {
  std::vector<double> thresholds{60.0, 40.0, 20.0};
  double steepness = kDefaultGateSteepness;

  void validate() const;
};

// Threshold layout for a module with `block_count` blocks: 1 -> {45},
// 2 -> {55, 25}, 3 -> {60, 40, 20}. Each boundary between pose groups becomes
// the threshold of the block that crosses it.
GateConfig gate_config_for_blocks(int block_count, double steepness = kDefaultGateSteepness);

// Soft gate 1 / (1 + exp(-steepness * (|yaw| / threshold - 1))), in (0, 1).
// Throws DomainError when threshold_deg <= 0.
double soft_gate(double threshold_deg, double yaw_deg, double steepness = kDefaultGateSteepness);

struct GateCurve {
  std::vector<double> thresholds;
  struct Row {
    double yaw;
    std::vector<double> gammas;  // one per threshold, in configured order
  };
  std::vector<Row> rows;

  // CSV with header `yaw,g60,g40,g20` (one column per threshold).
  void write_csv(std::ostream& out) const;
};

// Samples yaw_min, yaw_min + step, ... up to yaw_max inclusive.
GateCurve gate_curve(const GateConfig& cfg, double yaw_min, double yaw_max, double step);

}  // namespace posefront
