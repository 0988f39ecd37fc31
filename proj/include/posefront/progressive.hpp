#pragma once

#include <cstddef>
#include <vector>

#include "posefront/gatemap.hpp"
#include "posefront/numcore.hpp"

namespace posefront {

// Residual map R(f) = W2 relu(W1 f + b1) + b2 on D-dimensional embeddings.
struct ResidualBlock {
  AffineLayer inner;
  AffineLayer outer;
  double threshold_deg = 0.0;

  ResidualBlock() = default;
  ResidualBlock(std::size_t dim, double threshold, Rng& rng);

  std::size_t dim() const { return inner.in_dim(); }
  std::size_t parameter_count() const { return inner.parameter_count() + outer.parameter_count(); }
};

struct BlockCache {
  double gamma = 0.0;
  bool valid = false;
  AffineLayer::Cache inner;
  Tensor pre_activation;
  AffineLayer::Cache outer;
};

// f_prev + gamma * R(f_prev). gamma == 0 returns f_prev unchanged.
Tensor block_forward(const ResidualBlock& block, const Tensor& f_prev, double gamma, BlockCache* cache = nullptr);
// Accumulates parameter gradients and returns dL/df_prev.
Tensor block_backward(ResidualBlock& block, const BlockCache& cache, const Tensor& upstream);

enum class GateMode { kSoft, kFixedOne };

struct FrontalizeCache {
  std::vector<BlockCache> blocks;
};

// Stack of gated residual blocks, applied profile-side first (descending thresholds).
class ProgressiveModule {
 public:
  ProgressiveModule() = default;
  ProgressiveModule(std::size_t dim, GateConfig gate, Rng& rng, GateMode mode = GateMode::kSoft);
  ProgressiveModule(std::size_t dim, GateConfig gate, std::vector<ResidualBlock> blocks, GateMode mode);

  std::size_t dim() const { return dim_; }
  const GateConfig& gate_config() const { return gate_; }
  GateMode gate_mode() const { return mode_; }
  void set_gate_mode(GateMode mode) { mode_ = mode; }

  std::vector<ResidualBlock>& blocks() { return blocks_; }
  const std::vector<ResidualBlock>& blocks() const { return blocks_; }

  // Gate coefficient of every block for the given yaw (1.0 everywhere in fixed mode).
  std::vector<double> gammas(double yaw_deg) const;

  Tensor frontalize(const Tensor& embedding, double yaw_deg, FrontalizeCache* cache = nullptr) const;
  Tensor frontalize_backward(const FrontalizeCache& cache, const Tensor& upstream);

  std::size_t parameter_count() const;
  std::vector<Param*> params();

  // Smallest |pre-activation| seen in a cached forward pass (for kink-aware gradient checks).
  static double min_abs_pre_activation(const FrontalizeCache& cache);

 private:
  std::size_t dim_ = 0;
  GateConfig gate_;
  GateMode mode_ = GateMode::kSoft;
  std::vector<ResidualBlock> blocks_;
};

// Exact scalar count for `block_count` blocks of width `dim`: block_count * 2 * (dim^2 + dim).
std::size_t progressive_parameter_count(std::size_t dim, std::size_t block_count);

}  // namespace posefront
