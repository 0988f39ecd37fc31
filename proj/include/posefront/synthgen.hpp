#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <ostream>
#include <unordered_map>
#include <utility>
#include <vector>

#include "posefront/numcore.hpp"
#include "posefront/rng.hpp"

namespace posefront {

struct FaceSample {
  Tensor features;
  double yaw_deg = 0.0;
  int identity = 0;
};

using Dataset = std::vector<FaceSample>;

// Upper edges of the frontal, half-frontal and half-profile bins; everything
// above the last edge is profile. An edge value belongs to the lower bin.
inline constexpr std::array<double, 3> kPoseBinEdges{20.0, 40.0, 60.0};
inline constexpr int kPoseBinCount = 4;

// Bin index 0..3 of |yaw_deg|.
int pose_bin(double yaw_deg);

struct SynthConfig {
  int num_identities = 200;
  int samples_per_identity = 60;
  int dim_in = 64;
  // Probability of each pose bin, frontal first. Frontal-heavy by default.
  std::array<double, kPoseBinCount> pose_distribution{0.55, 0.25, 0.12, 0.08};
  double occlusion_fraction = 0.05;
  double deformation_strength = 0.7;  // radians of plane rotation at full profile
  double noise_sigma = 0.05;
  std::uint64_t seed = 1;

  void validate() const;
};

// The yaw-dependent deformation shared by every identity of a dataset: a rotation
// in floor(dim_in/2) fixed coordinate planes by deformation_strength * sin(pi|yaw|/180),
// followed by attenuation of a per-identity coordinate subset by (1 - |yaw|/90).
class PoseManifold {
 public:
  explicit PoseManifold(const SynthConfig& cfg);

  std::size_t dim() const { return dim_; }
  const std::vector<std::pair<std::size_t, std::size_t>>& planes() const { return planes_; }
  std::vector<std::size_t> occluded_coordinates(int identity) const;

  Tensor transform(const Tensor& prototype, double yaw_deg, int identity) const;

 private:
  std::size_t dim_;
  double strength_;
  std::size_t occluded_count_;
  std::uint64_t seed_;
  std::vector<std::pair<std::size_t, std::size_t>> planes_;
};

inline Tensor pose_transform(const PoseManifold& manifold, const Tensor& prototype, double yaw_deg, int identity) {
  return manifold.transform(prototype, yaw_deg, identity);
}

// Unit-norm prototype of an identity; a pure function of (cfg.seed, identity).
Tensor identity_prototype(const SynthConfig& cfg, int identity);

// Identity-major list of samples; a pure function of cfg.
Dataset generate_dataset(const SynthConfig& cfg);

// Splits on identity label: labels below `first_holdout_identity` go to the first set.
std::pair<Dataset, Dataset> split_by_identity(const Dataset& data, int first_holdout_identity);

// Per-identity lookup implementing the frontal ground-truth rule: a uniformly
// random same-identity sample with |yaw| < 10 degrees, or, when none exists, the
// same-identity sample with the smallest |yaw| (lowest index on ties).
class FrontalTargetIndex {
 public:
  static constexpr double kFrontalYawLimit = 10.0;

  explicit FrontalTargetIndex(const Dataset& data);

  std::size_t assign(int identity, Rng& rng) const;

 private:
  struct Entry {
    std::vector<std::size_t> frontal;
    std::size_t fallback = 0;
  };
  std::unordered_map<int, Entry> entries_;
};

// Index into `data` of the frontal target for `sample`. Throws LookupError if the
// identity is absent.
std::size_t assign_frontal_target(const FaceSample& sample, const Dataset& data, Rng& rng);

// `identity,yaw,f0,...` CSV, shortest round-trip decimals.
void write_dataset_csv(std::ostream& out, const Dataset& data);
Dataset read_dataset_csv(std::istream& in);
// key=value lines describing the generator configuration.
void write_synth_metadata(std::ostream& out, const SynthConfig& cfg);

}  // namespace posefront
