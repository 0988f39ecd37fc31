#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "posefront/errors.hpp"
#include "posefront/synthgen.hpp"

namespace posefront {
namespace {

SynthConfig small_config() {
  SynthConfig cfg;
  cfg.num_identities = 3;
  cfg.samples_per_identity = 5;
  return cfg;
}

double distance(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

FaceSample sample(int identity, double yaw) { return {Tensor::from({0.0, 0.0}), yaw, identity}; }

TEST(PoseBin, EdgesBelongToLowerBin) {
  EXPECT_EQ(pose_bin(0.0), 0);
  EXPECT_EQ(pose_bin(20.0), 0);
  EXPECT_EQ(pose_bin(20.5), 1);
  EXPECT_EQ(pose_bin(-40.0), 1);
  EXPECT_EQ(pose_bin(60.0), 2);
  EXPECT_EQ(pose_bin(-60.1), 3);
  EXPECT_EQ(pose_bin(90.0), 3);
}

TEST(Generate, CountsAndLabels) {
  const Dataset d = generate_dataset(small_config());
  ASSERT_EQ(d.size(), 15u);
  std::set<int> labels;
  for (const auto& s : d) {
    labels.insert(s.identity);
    EXPECT_EQ(s.features.size(), 64u);
    EXPECT_LE(std::abs(s.yaw_deg), 90.0);
  }
  EXPECT_EQ(labels, (std::set<int>{0, 1, 2}));
}

TEST(Generate, SameSeedSameDataset) {
  const Dataset a = generate_dataset(small_config());
  const Dataset b = generate_dataset(small_config());
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].features, b[i].features);
    EXPECT_EQ(a[i].yaw_deg, b[i].yaw_deg);
  }
  SynthConfig other = small_config();
  other.seed = 2;
  EXPECT_NE(generate_dataset(other)[0].features, a[0].features);
}

TEST(Generate, IdentitiesDoNotDependOnIdentityCount) {
  SynthConfig more = small_config();
  more.num_identities = 10;
  const Dataset a = generate_dataset(small_config());
  const Dataset b = generate_dataset(more);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].features, b[i].features);
}

TEST(Generate, BinHistogramFollowsMixture) {
  SynthConfig cfg;
  cfg.num_identities = 100;
  cfg.samples_per_identity = 100;
  cfg.noise_sigma = 0.0;
  const Dataset d = generate_dataset(cfg);
  std::array<int, kPoseBinCount> counts{};
  for (const auto& s : d) ++counts[static_cast<std::size_t>(pose_bin(s.yaw_deg))];
  for (std::size_t b = 0; b < kPoseBinCount; ++b)
    EXPECT_NEAR(counts[b] / 10000.0, cfg.pose_distribution[b], 0.02) << "bin " << b;
}

TEST(Generate, PrototypesAreUnitNorm) {
  const SynthConfig cfg = small_config();
  for (int id = 0; id < 3; ++id) EXPECT_NEAR(squared_norm(identity_prototype(cfg, id).values()), 1.0, 1e-12);
}

TEST(PoseTransform, FrontalIsIdentityAndProfileZeroesOccluded) {
  SynthConfig cfg;
  cfg.occlusion_fraction = 0.25;
  const PoseManifold m(cfg);
  const Tensor p = identity_prototype(cfg, 4);
  EXPECT_EQ(pose_transform(m, p, 0.0, 4), p);
  const Tensor side = pose_transform(m, p, 90.0, 4);
  const auto occluded = m.occluded_coordinates(4);
  EXPECT_EQ(occluded.size(), 16u);
  for (std::size_t c : occluded) EXPECT_EQ(side[c], 0.0);
}

TEST(PoseTransform, PlanesCoverEveryCoordinateOnce) {
  const PoseManifold m(SynthConfig{});
  EXPECT_EQ(m.planes().size(), 32u);
  std::set<std::size_t> seen;
  for (const auto& [a, b] : m.planes()) {
    seen.insert(a);
    seen.insert(b);
  }
  EXPECT_EQ(seen.size(), 64u);
}

TEST(PoseTransform, DistanceFromFrontalIsNondecreasingInYaw) {
  SynthConfig cfg;
  const PoseManifold m(cfg);
  for (int id = 0; id < 20; ++id) {
    const Tensor p = identity_prototype(cfg, id);
    double prev = 0.0;
    for (double yaw = 0.0; yaw <= 90.0; yaw += 5.0) {
      const double d = distance(pose_transform(m, p, -yaw, id), p);
      EXPECT_GE(d, prev - 1e-12) << "identity " << id << " yaw " << yaw;
      prev = d;
    }
  }
}

TEST(PoseTransform, OcclusionSubsetIsPerIdentity) {
  const PoseManifold m(SynthConfig{});
  EXPECT_EQ(m.occluded_coordinates(3), m.occluded_coordinates(3));
  EXPECT_NE(m.occluded_coordinates(3), m.occluded_coordinates(4));
}

TEST(FrontalTarget, PrefersNearFrontalSample) {
  const Dataset d{sample(0, 2.0), sample(0, 45.0)};
  Rng rng(1);
  EXPECT_EQ(assign_frontal_target(d[1], d, rng), 0u);
}

TEST(FrontalTarget, FallsBackToSmallestPose) {
  const Dataset d{sample(0, 60.0), sample(0, -30.0), sample(1, 5.0)};
  Rng rng(1);
  EXPECT_EQ(assign_frontal_target(d[0], d, rng), 1u);
}

TEST(FrontalTarget, TiesGoToLowestIndex) {
  const Dataset d{sample(0, 50.0), sample(0, 30.0), sample(0, -30.0)};
  Rng rng(1);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(assign_frontal_target(d[0], d, rng), 1u);
}

TEST(FrontalTarget, SingletonReturnsItself) {
  const Dataset d{sample(7, 3.0)};
  Rng rng(1);
  EXPECT_EQ(assign_frontal_target(d[0], d, rng), 0u);
}

TEST(FrontalTarget, UniformAmongFrontalSamples) {
  const Dataset d{sample(0, 1.0), sample(0, -9.0), sample(0, 70.0), sample(1, 0.0)};
  Rng rng(2);
  std::array<int, 2> hits{};
  for (int i = 0; i < 4000; ++i) {
    const std::size_t t = assign_frontal_target(d[2], d, rng);
    ASSERT_LT(t, 2u);
    ++hits[t];
  }
  EXPECT_NEAR(hits[0] / 4000.0, 0.5, 0.05);
}

TEST(FrontalTarget, NeverCrossesIdentities) {
  const Dataset d = generate_dataset(small_config());
  const FrontalTargetIndex index(d);
  Rng rng(3);
  for (const auto& s : d) EXPECT_EQ(d[index.assign(s.identity, rng)].identity, s.identity);
  EXPECT_THROW(index.assign(99, rng), LookupError);
}

TEST(Split, ByIdentityLabel) {
  const auto [a, b] = split_by_identity(generate_dataset(small_config()), 2);
  EXPECT_EQ(a.size(), 10u);
  EXPECT_EQ(b.size(), 5u);
  for (const auto& s : b) EXPECT_EQ(s.identity, 2);
}

TEST(Csv, RoundTripIsExact) {
  const Dataset d = generate_dataset(small_config());
  std::stringstream buf;
  write_dataset_csv(buf, d);
  EXPECT_EQ(buf.str().rfind("identity,yaw,f0,f1,", 0), 0u);
  const Dataset back = read_dataset_csv(buf);
  ASSERT_EQ(back.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_EQ(back[i].identity, d[i].identity);
    EXPECT_EQ(back[i].yaw_deg, d[i].yaw_deg);
    EXPECT_EQ(back[i].features, d[i].features);
  }
}

TEST(Csv, MalformedInputIsIoError) {
  std::istringstream bad_header("a,b,c\n");
  EXPECT_THROW(read_dataset_csv(bad_header), IoError);
  std::istringstream short_row("identity,yaw,f0,f1\n0,1,2\n");
  EXPECT_THROW(read_dataset_csv(short_row), IoError);
  std::istringstream bad_number("identity,yaw,f0\n0,1,x\n");
  EXPECT_THROW(read_dataset_csv(bad_number), IoError);
}

TEST(Config, Validation) {
  SynthConfig cfg;
  cfg.pose_distribution = {0.5, 0.5, 0.5, 0.5};
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = SynthConfig{};
  cfg.num_identities = 1;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = SynthConfig{};
  cfg.occlusion_fraction = 1.0;
  EXPECT_THROW(cfg.validate(), ValidationError);
  EXPECT_NO_THROW(SynthConfig{}.validate());
}

TEST(Metadata, RecordsSeed) {
  std::ostringstream out;
  SynthConfig cfg;
  cfg.seed = 123456789;
  write_synth_metadata(out, cfg);
  EXPECT_NE(out.str().find("seed=123456789\n"), std::string::npos);
}

}  // namespace
}  // namespace posefront
