#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "posefront/numcore.hpp"

namespace posefront {

// |e| / max|e|, elementwise. Throws DegenerateInputError for an all-zero embedding.
Tensor attention_vector(const Tensor& frontal_embedding);

struct PairLoss {
  double value = 0.0;
  // dL/dF_i for each frontalized embedding. Targets and attentions receive no gradient.
  std::vector<Tensor> grad;
};

// (1/N) sum_i ||(F_i - T_i) * A_i||^2.
PairLoss attentive_pair_loss(std::span<const Tensor> frontalized, std::span<const Tensor> targets,
                             std::span<const Tensor> attentions);
// Same as above with all-ones attention.
PairLoss mse_pair_loss(std::span<const Tensor> frontalized, std::span<const Tensor> targets);

inline double apl(std::span<const Tensor> frontalized, std::span<const Tensor> targets,
                  std::span<const Tensor> attentions) {
  return attentive_pair_loss(frontalized, targets, attentions).value;
}
inline double mse_pairwise(std::span<const Tensor> frontalized, std::span<const Tensor> targets) {
  return mse_pair_loss(frontalized, targets).value;
}

// Linear identity classifier producing logits W e + b.
class Classifier {
 public:
  Classifier() = default;
  Classifier(std::size_t dim, std::size_t num_identities, Rng& rng);
  explicit Classifier(AffineLayer layer);

  std::size_t num_identities() const { return layer_.out_dim(); }
  AffineLayer& layer() { return layer_; }
  const AffineLayer& layer() const { return layer_; }

  Tensor logits(const Tensor& embedding, AffineLayer::Cache* cache = nullptr) const {
    return layer_.forward(embedding, cache);
  }

 private:
  AffineLayer layer_;
};

// -log softmax(logits)[label], evaluated with the max subtracted.
double cross_entropy(const Tensor& logits, std::size_t label);
// softmax(logits) - onehot(label).
Tensor cross_entropy_backward(const Tensor& logits, std::size_t label);

inline double total_loss(double l_id, double l_pair, double lambda) { return l_id + lambda * l_pair; }

}  // namespace posefront
