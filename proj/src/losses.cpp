#include "posefront/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "posefront/errors.hpp"

namespace posefront {

Tensor attention_vector(const Tensor& frontal_embedding) {
  if (frontal_embedding.rank() != 1) throw DimensionError("attention input must be a vector");
  double peak = 0.0;
  for (double v : frontal_embedding.values()) peak = std::max(peak, std::abs(v));
  if (peak == 0.0) throw DegenerateInputError("attention vector of an all-zero embedding is undefined");
  Tensor a = frontal_embedding;
  for (double& v : a.values()) v = std::abs(v) / peak;
  return a;
}

namespace {

PairLoss weighted_pair_loss(std::span<const Tensor> frontalized, std::span<const Tensor> targets,
                            const std::span<const Tensor>* attentions) {
  const std::size_t n = frontalized.size();
  if (n == 0) throw DimensionError("pair loss needs at least one pair");
  if (targets.size() != n || (attentions && attentions->size() != n))
    throw DimensionError("pair loss batch sizes differ");

  PairLoss out;
  out.grad.reserve(n);
  const double inv_n = 1.0 / static_cast<double>(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor& f = frontalized[i];
    const Tensor& t = targets[i];
    if (!f.same_shape(t) || f.rank() != 1) throw DimensionError("pair loss embeddings differ in shape");
    const Tensor* a = attentions ? &(*attentions)[i] : nullptr;
    if (a && !a->same_shape(f)) throw DimensionError("attention vector differs in shape");

    Tensor g(f.size());
    double sample = 0.0;
    for (std::size_t k = 0; k < f.size(); ++k) {
      const double w = a ? (*a)[k] : 1.0;
      const double d = (f[k] - t[k]) * w;
      sample += d * d;
      g[k] = 2.0 * inv_n * d * w;
    }
    total += sample;
    out.grad.push_back(std::move(g));
  }
  out.value = total * inv_n;
  return out;
}

}  // namespace

PairLoss attentive_pair_loss(std::span<const Tensor> frontalized, std::span<const Tensor> targets,
                             std::span<const Tensor> attentions) {
  return weighted_pair_loss(frontalized, targets, &attentions);
}

PairLoss mse_pair_loss(std::span<const Tensor> frontalized, std::span<const Tensor> targets) {
  return weighted_pair_loss(frontalized, targets, nullptr);
}

Classifier::Classifier(std::size_t dim, std::size_t num_identities, Rng& rng) : layer_(dim, num_identities, rng) {
  if (num_identities < 2) throw ValidationError("classifier needs at least two identities");
}

Classifier::Classifier(AffineLayer layer) : layer_(std::move(layer)) {
  if (layer_.out_dim() < 2) throw ValidationError("classifier needs at least two identities");
}

double cross_entropy(const Tensor& logits, std::size_t label) {
  if (label >= logits.size())
    throw LookupError("label " + std::to_string(label) + " out of range for " + std::to_string(logits.size()) +
                      " identities");
  const auto values = logits.values();
  const double peak = *std::max_element(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - peak);
  return std::log(sum) - (logits[label] - peak);
}

Tensor cross_entropy_backward(const Tensor& logits, std::size_t label) {
  if (label >= logits.size()) throw LookupError("label out of range");
  const auto values = logits.values();
  const double peak = *std::max_element(values.begin(), values.end());
  Tensor g = logits;
  double sum = 0.0;
  for (double& v : g.values()) {
    v = std::exp(v - peak);
    sum += v;
  }
  for (double& v : g.values()) v /= sum;
  g[label] -= 1.0;
  return g;
}

}  // namespace posefront
