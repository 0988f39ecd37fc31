#include <gtest/gtest.h>

#include <bit>
#include <cstring>

#include "posefront/checkpoint.hpp"
#include "posefront/errors.hpp"
#include "test_util.hpp"

namespace posefront {
namespace {

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.hidden_dim = 10;
  cfg.embedding_dim = 6;
  cfg.gate_thresholds = {50.0, 30.0};
  cfg.block_count = 2;
  return cfg;
}

Model perturbed_model() {
  Model m = build_model(7, 5, small_config());
  Rng rng(11);
  // Values with full mantissas so a lossy text round trip would show up.
  for (Param* p : m.all_params())
    for (double& v : p->value.values()) v += rng.normal() * 1e-3 + 1.0 / 3.0;
  return m;
}

TEST(Checkpoint, RoundTripIsBitwise) {
  const Model m = perturbed_model();
  Model copy = m;
  const std::string bytes = serialize_checkpoint(m);
  Model back = deserialize_checkpoint(bytes);
  const auto a = copy.all_params();
  const auto b = back.all_params();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a[i]->value.rows(), b[i]->value.rows());
    ASSERT_EQ(a[i]->value.cols(), b[i]->value.cols());
    for (std::size_t j = 0; j < a[i]->value.size(); ++j)
      ASSERT_EQ(std::bit_cast<std::uint64_t>(a[i]->value.values()[j]),
                std::bit_cast<std::uint64_t>(b[i]->value.values()[j]));
  }
  EXPECT_EQ(serialize_checkpoint(back), bytes);
  EXPECT_EQ(back.use_progressive, m.use_progressive);
}

TEST(Checkpoint, RestoredModelEmbedsIdentically) {
  const Model m = perturbed_model();
  const Model back = deserialize_checkpoint(serialize_checkpoint(m));
  Rng rng(2);
  for (double yaw : {0.0, 35.0, -70.0, 90.0}) {
    const Tensor x = testing::random_tensor(7, rng);
    const Tensor e1 = m.embed(x, yaw);
    const Tensor e2 = back.embed(x, yaw);
    for (std::size_t i = 0; i < e1.size(); ++i) EXPECT_EQ(e1.values()[i], e2.values()[i]);
  }
}

TEST(Checkpoint, HeaderStartsWithMagicAndVersion) {
  const std::string bytes = serialize_checkpoint(perturbed_model());
  ASSERT_GE(bytes.size(), 12u);
  EXPECT_EQ(bytes.substr(0, 8), std::string("PFCKPT\0\0", 8));
  std::uint32_t version = 0;
  for (int i = 3; i >= 0; --i) version = (version << 8) | static_cast<unsigned char>(bytes[8 + i]);
  EXPECT_EQ(version, kCheckpointVersion);
}

TEST(Checkpoint, RejectsCorruptInput) {
  const std::string good = serialize_checkpoint(perturbed_model());
  std::string bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(bad_magic), IoError);

  std::string bad_version = good;
  bad_version[8] = static_cast<char>(kCheckpointVersion + 1);
  EXPECT_THROW(deserialize_checkpoint(bad_version), IoError);

  EXPECT_THROW(deserialize_checkpoint(good.substr(0, good.size() - 1)), IoError);
  EXPECT_THROW(deserialize_checkpoint(good.substr(0, 20)), IoError);
  EXPECT_THROW(deserialize_checkpoint(good + "x"), IoError);
  EXPECT_THROW(deserialize_checkpoint(""), IoError);

  // dim_in sits right after the header; changing it breaks the first tensor shape.
  std::string bad_shape = good;
  bad_shape[12] = static_cast<char>(bad_shape[12] + 1);
  EXPECT_THROW(deserialize_checkpoint(bad_shape), IoError);
}

TEST(Checkpoint, FileRoundTripAndMissingFile) {
  testing::TempDir dir("ckpt");
  const Model m = perturbed_model();
  save_checkpoint(dir.path() / "m.bin", m);
  EXPECT_FALSE(std::filesystem::exists(dir.path() / "m.bin.tmp"));
  const Model back = load_checkpoint(dir.path() / "m.bin");
  EXPECT_EQ(serialize_checkpoint(back), serialize_checkpoint(m));
  EXPECT_THROW(load_checkpoint(dir.path() / "absent.bin"), IoError);
}

}  // namespace
}  // namespace posefront
