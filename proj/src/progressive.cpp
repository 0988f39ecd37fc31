#include "posefront/progressive.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "posefront/errors.hpp"

namespace posefront {

ResidualBlock::ResidualBlock(std::size_t dim, double threshold, Rng& rng)
    : inner(dim, dim, rng), outer(dim, dim, rng), threshold_deg(threshold) {}

Tensor block_forward(const ResidualBlock& block, const Tensor& f_prev, double gamma, BlockCache* cache) {
  if (f_prev.rank() != 1 || f_prev.size() != block.dim())
    throw DimensionError("block input has length " + std::to_string(f_prev.size()) + ", expected " +
                         std::to_string(block.dim()));
  if (cache != nullptr) {
    *cache = BlockCache{};
    cache->gamma = gamma;
    cache->valid = true;
  }
  if (gamma == 0.0) return f_prev;

  Tensor hidden = block.inner.forward(f_prev, cache ? &cache->inner : nullptr);
  if (cache != nullptr) cache->pre_activation = hidden;
  Tensor residual = block.outer.forward(relu_forward(hidden), cache ? &cache->outer : nullptr);

  Tensor out = f_prev;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += gamma * residual[i];
  return out;
}

Tensor block_backward(ResidualBlock& block, const BlockCache& cache, const Tensor& upstream) {
  if (!cache.valid) throw StateError("block backward called without a cached forward pass");
  if (cache.gamma == 0.0) return upstream;

  Tensor scaled = upstream;
  for (double& v : scaled.values()) v *= cache.gamma;
  Tensor d_hidden = relu_backward(cache.pre_activation, block.outer.backward(cache.outer, scaled));
  Tensor downstream = block.inner.backward(cache.inner, d_hidden);
  for (std::size_t i = 0; i < downstream.size(); ++i) downstream[i] += upstream[i];
  return downstream;
}

ProgressiveModule::ProgressiveModule(std::size_t dim, GateConfig gate, Rng& rng, GateMode mode)
    : dim_(dim), gate_(std::move(gate)), mode_(mode) {
  gate_.validate();
  if (dim == 0) throw DimensionError("embedding dimension must be positive");
  blocks_.reserve(gate_.thresholds.size());
  for (double t : gate_.thresholds) blocks_.emplace_back(dim, t, rng);
}

ProgressiveModule::ProgressiveModule(std::size_t dim, GateConfig gate, std::vector<ResidualBlock> blocks,
                                     GateMode mode)
    : dim_(dim), gate_(std::move(gate)), mode_(mode), blocks_(std::move(blocks)) {
  gate_.validate();
  if (blocks_.size() != gate_.thresholds.size())
    throw DimensionError("block count does not match the number of gate thresholds");
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    if (blocks_[i].dim() != dim_ || blocks_[i].outer.out_dim() != dim_)
      throw DimensionError("residual block " + std::to_string(i) + " is not " + std::to_string(dim_) + "-wide");
    blocks_[i].threshold_deg = gate_.thresholds[i];
  }
}

std::vector<double> ProgressiveModule::gammas(double yaw_deg) const {
  if (!(std::abs(yaw_deg) <= 90.0)) throw DomainError("yaw must lie in [-90, 90]");
  std::vector<double> out;
  out.reserve(blocks_.size());
  for (const auto& block : blocks_)
    out.push_back(mode_ == GateMode::kFixedOne ? 1.0 : soft_gate(block.threshold_deg, yaw_deg, gate_.steepness));
  return out;
}

Tensor ProgressiveModule::frontalize(const Tensor& embedding, double yaw_deg, FrontalizeCache* cache) const {
  const std::vector<double> gamma = gammas(yaw_deg);
  if (cache != nullptr) cache->blocks.assign(blocks_.size(), BlockCache{});
  Tensor f = embedding;
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    f = block_forward(blocks_[i], f, gamma[i], cache ? &cache->blocks[i] : nullptr);
  return f;
}

Tensor ProgressiveModule::frontalize_backward(const FrontalizeCache& cache, const Tensor& upstream) {
  if (cache.blocks.size() != blocks_.size()) throw StateError("frontalize backward without a matching forward cache");
  Tensor grad = upstream;
  for (std::size_t i = blocks_.size(); i-- > 0;) grad = block_backward(blocks_[i], cache.blocks[i], grad);
  return grad;
}

std::size_t ProgressiveModule::parameter_count() const {
  std::size_t n = 0;
  for (const auto& block : blocks_) n += block.parameter_count();
  return n;
}

std::vector<Param*> ProgressiveModule::params() {
  std::vector<Param*> out;
  for (auto& block : blocks_) {
    out.push_back(&block.inner.weight());
    out.push_back(&block.inner.bias());
    out.push_back(&block.outer.weight());
    out.push_back(&block.outer.bias());
  }
  return out;
}

double ProgressiveModule::min_abs_pre_activation(const FrontalizeCache& cache) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& b : cache.blocks)
    for (double v : b.pre_activation.values()) m = std::min(m, std::abs(v));
  return m;
}

std::size_t progressive_parameter_count(std::size_t dim, std::size_t block_count) {
  return block_count * 2 * (dim * dim + dim);
}

}  // namespace posefront
