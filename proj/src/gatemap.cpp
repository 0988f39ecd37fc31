#include "posefront/gatemap.hpp"

#include <cmath>
#include <string>

#include "posefront/errors.hpp"
#include "posefront/format.hpp"

namespace posefront {

void GateConfig::validate() const {
  if (thresholds.empty()) throw ValidationError("gate thresholds must not be empty");
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    const double t = thresholds[i];
    if (!(t > 0.0 && t < 90.0))
      throw ValidationError("gate threshold " + format_double(t) + " lies outside (0, 90)");
    if (i > 0 && !(t < thresholds[i - 1])) throw ValidationError("gate thresholds must be strictly decreasing");
  }
  if (!(steepness > 0.0) || !std::isfinite(steepness)) throw ValidationError("gate steepness must be positive");
}

GateConfig gate_config_for_blocks(int block_count, double steepness) {
  switch (block_count) {
    case 1:
      return {{45.0}, steepness};
    case 2:
      return {{55.0, 25.0}, steepness};
    case 3:
      return {{60.0, 40.0, 20.0}, steepness};
    default:
      throw ValidationError("block count must be 1, 2 or 3, got " + std::to_string(block_count));
  }
}

double soft_gate(double threshold_deg, double yaw_deg, double steepness) {
  if (!(threshold_deg > 0.0)) throw DomainError("gate threshold must be positive");
  const double ratio = std::abs(yaw_deg) / threshold_deg;
  return 1.0 / (1.0 + std::exp(-steepness * (ratio - 1.0)));
}

GateCurve gate_curve(const GateConfig& cfg, double yaw_min, double yaw_max, double step) {
  cfg.validate();
  if (!(yaw_min < yaw_max)) throw ValidationError("gate curve needs yaw_min < yaw_max");
  if (!(step > 0.0)) throw ValidationError("gate curve step must be positive");

  GateCurve curve;
  curve.thresholds = cfg.thresholds;
  // Index-based sampling keeps accumulated rounding out of the yaw column.
  const double tolerance = 1e-9 * step;
  for (std::size_t k = 0;; ++k) {
    const double yaw = yaw_min + static_cast<double>(k) * step;
    if (yaw > yaw_max + tolerance) break;
    GateCurve::Row row{yaw, {}};
    row.gammas.reserve(cfg.thresholds.size());
    for (double t : cfg.thresholds) row.gammas.push_back(soft_gate(t, yaw, cfg.steepness));
    curve.rows.push_back(std::move(row));
  }
  return curve;
}

void GateCurve::write_csv(std::ostream& out) const {
  out << "yaw";
  for (double t : thresholds) out << ",g" << format_double(t);
  out << '\n';
  for (const auto& row : rows) {
    write_double(out, row.yaw);
    for (double g : row.gammas) {
      out << ',';
      write_double(out, g);
    }
    out << '\n';
  }
}

}  // namespace posefront
