#include "posefront/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>

#include "posefront/errors.hpp"
#include "posefront/format.hpp"

namespace posefront {

namespace {

// Substream ids under the dataset seed.
constexpr std::uint64_t kManifoldStream = 1;
constexpr std::uint64_t kOcclusionStream = 2;
constexpr std::uint64_t kPrototypeStream = 3;
constexpr std::uint64_t kSampleStream = 4;

constexpr std::array<double, kPoseBinCount + 1> kBinBounds{0.0, 20.0, 40.0, 60.0, 90.0};

std::uint64_t identity_key(int identity) { return static_cast<std::uint64_t>(static_cast<std::int64_t>(identity)); }

}  // namespace

int pose_bin(double yaw_deg) {
  const double a = std::abs(yaw_deg);
  for (std::size_t i = 0; i < kPoseBinEdges.size(); ++i)
    if (a <= kPoseBinEdges[i]) return static_cast<int>(i);
  return kPoseBinCount - 1;
}

void SynthConfig::validate() const {
  if (num_identities < 2) throw ValidationError("num_identities must be at least 2");
  if (samples_per_identity < 1) throw ValidationError("samples_per_identity must be positive");
  if (dim_in < 2) throw ValidationError("dim_in must be at least 2");
  double sum = 0.0;
  for (double w : pose_distribution) {
    if (!(w >= 0.0)) throw ValidationError("pose_distribution weights must be nonnegative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw ValidationError("pose_distribution weights must sum to 1 (got " + format_double(sum) + ")");
  if (!(occlusion_fraction >= 0.0 && occlusion_fraction < 1.0))
    throw ValidationError("occlusion_fraction must lie in [0, 1)");
  if (!(deformation_strength > 0.0) || !std::isfinite(deformation_strength))
    throw ValidationError("deformation_strength must be positive");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw ValidationError("noise_sigma must be nonnegative");
}

PoseManifold::PoseManifold(const SynthConfig& cfg)
    : dim_(static_cast<std::size_t>(cfg.dim_in)),
      strength_(cfg.deformation_strength),
      occluded_count_(static_cast<std::size_t>(std::floor(cfg.occlusion_fraction * cfg.dim_in))),
      seed_(cfg.seed) {
  Rng rng = Rng(seed_).split(kManifoldStream);
  std::vector<std::size_t> perm(dim_);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = dim_; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  for (std::size_t k = 0; k + 1 < dim_; k += 2) planes_.emplace_back(perm[k], perm[k + 1]);
}

std::vector<std::size_t> PoseManifold::occluded_coordinates(int identity) const {
  Rng rng = Rng(seed_).split(kOcclusionStream).split(identity_key(identity));
  std::vector<std::size_t> perm(dim_);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = 0; i < occluded_count_; ++i) std::swap(perm[i], perm[i + rng.below(dim_ - i)]);
  perm.resize(occluded_count_);
  std::sort(perm.begin(), perm.end());
  return perm;
}

Tensor PoseManifold::transform(const Tensor& prototype, double yaw_deg, int identity) const {
  if (prototype.size() != dim_) throw DimensionError("prototype dimension does not match the manifold");
  const double a = std::abs(yaw_deg);
  if (!(a <= 90.0)) throw DomainError("yaw must lie in [-90, 90]");
  Tensor out = prototype;
  const double angle = strength_ * std::sin(std::numbers::pi * a / 180.0);
  if (angle != 0.0) {
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    for (const auto& [i, j] : planes_) {
      const double x = prototype[i];
      const double y = prototype[j];
      out[i] = c * x - s * y;
      out[j] = s * x + c * y;
    }
  }
  const double keep = 1.0 - a / 90.0;
  if (keep != 1.0)
    for (std::size_t k : occluded_coordinates(identity)) out[k] *= keep;
  return out;
}

Tensor identity_prototype(const SynthConfig& cfg, int identity) {
  Rng rng = Rng(cfg.seed).split(kPrototypeStream).split(identity_key(identity));
  Tensor p(static_cast<std::size_t>(cfg.dim_in));
  double norm = 0.0;
  while (norm == 0.0) {
    for (double& v : p.values()) v = rng.normal();
    norm = std::sqrt(squared_norm(p.values()));
  }
  for (double& v : p.values()) v /= norm;
  return p;
}

Dataset generate_dataset(const SynthConfig& cfg) {
  cfg.validate();
  const PoseManifold manifold(cfg);
  Dataset data;
  data.reserve(static_cast<std::size_t>(cfg.num_identities) * static_cast<std::size_t>(cfg.samples_per_identity));
  for (int id = 0; id < cfg.num_identities; ++id) {
    const Tensor prototype = identity_prototype(cfg, id);
    Rng rng = Rng(cfg.seed).split(kSampleStream).split(identity_key(id));
    for (int s = 0; s < cfg.samples_per_identity; ++s) {
      const double u = rng.uniform();
      std::size_t bin = 0;
      double cumulative = cfg.pose_distribution[0];
      while (bin + 1 < cfg.pose_distribution.size() && u >= cumulative) cumulative += cfg.pose_distribution[++bin];
      const double magnitude = rng.uniform(kBinBounds[bin], kBinBounds[bin + 1]);
      const double yaw = (rng() & 1U) ? -magnitude : magnitude;

      FaceSample sample{manifold.transform(prototype, yaw, id), yaw, id};
      if (cfg.noise_sigma > 0.0)
        for (double& v : sample.features.values()) v += cfg.noise_sigma * rng.normal();
      data.push_back(std::move(sample));
    }
  }
  return data;
}

std::pair<Dataset, Dataset> split_by_identity(const Dataset& data, int first_holdout_identity) {
  std::pair<Dataset, Dataset> out;
  for (const auto& s : data) (s.identity < first_holdout_identity ? out.first : out.second).push_back(s);
  return out;
}

FrontalTargetIndex::FrontalTargetIndex(const Dataset& data) {
  std::unordered_map<int, double> best_yaw;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double a = std::abs(data[i].yaw_deg);
    const int id = data[i].identity;
    auto [it, inserted] = entries_.try_emplace(id);
    if (a < kFrontalYawLimit) it->second.frontal.push_back(i);
    auto [best, fresh] = best_yaw.try_emplace(id, a);
    if (fresh) {
      it->second.fallback = i;
    } else if (a < best->second) {
      best->second = a;
      it->second.fallback = i;
    }
  }
}

std::size_t FrontalTargetIndex::assign(int identity, Rng& rng) const {
  const auto it = entries_.find(identity);
  if (it == entries_.end()) throw LookupError("identity " + std::to_string(identity) + " not present in dataset");
  const Entry& e = it->second;
  if (e.frontal.empty()) return e.fallback;
  return e.frontal[rng.below(e.frontal.size())];
}

std::size_t assign_frontal_target(const FaceSample& sample, const Dataset& data, Rng& rng) {
  return FrontalTargetIndex(data).assign(sample.identity, rng);
}

void write_dataset_csv(std::ostream& out, const Dataset& data) {
  const std::size_t dim = data.empty() ? 0 : data.front().features.size();
  out << "identity,yaw";
  for (std::size_t k = 0; k < dim; ++k) out << ",f" << k;
  out << '\n';
  for (const auto& s : data) {
    out << s.identity << ',';
    write_double(out, s.yaw_deg);
    for (double v : s.features.values()) {
      out << ',';
      write_double(out, v);
    }
    out << '\n';
  }
}

namespace {

double parse_double(const std::string& field, std::size_t line) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size())
    throw IoError("dataset line " + std::to_string(line) + ": cannot parse '" + field + "' as a number");
  return value;
}

}  // namespace

Dataset read_dataset_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("dataset is empty");
  if (line.rfind("identity,yaw", 0) != 0) throw IoError("dataset header must start with 'identity,yaw'");
  const auto columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  if (columns < 3) throw IoError("dataset has no feature columns");

  Dataset data;
  std::size_t line_no = 1;
  std::string field;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::vector<double> values;
    values.reserve(columns);
    while (std::getline(row, field, ',')) values.push_back(parse_double(field, line_no));
    if (values.size() != columns)
      throw IoError("dataset line " + std::to_string(line_no) + " has " + std::to_string(values.size()) +
                    " fields, expected " + std::to_string(columns));
    FaceSample s;
    s.identity = static_cast<int>(values[0]);
    s.yaw_deg = values[1];
    if (!(std::abs(s.yaw_deg) <= 90.0)) throw IoError("dataset line " + std::to_string(line_no) + ": yaw out of range");
    s.features = Tensor::from(std::vector<double>(values.begin() + 2, values.end()));
    require_finite(s.features.values(), "dataset features");
    data.push_back(std::move(s));
  }
  return data;
}

void write_synth_metadata(std::ostream& out, const SynthConfig& cfg) {
  out << "num_identities=" << cfg.num_identities << '\n'
      << "samples_per_identity=" << cfg.samples_per_identity << '\n'
      << "dim_in=" << cfg.dim_in << '\n'
      << "pose_distribution=";
  for (std::size_t i = 0; i < cfg.pose_distribution.size(); ++i)
    out << (i ? "," : "") << format_double(cfg.pose_distribution[i]);
  out << '\n'
      << "occlusion_fraction=" << format_double(cfg.occlusion_fraction) << '\n'
      << "deformation_strength=" << format_double(cfg.deformation_strength) << '\n'
      << "noise_sigma=" << format_double(cfg.noise_sigma) << '\n'
      << "seed=" << cfg.seed << '\n';
}

}  // namespace posefront
