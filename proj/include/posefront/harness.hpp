#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "posefront/losses.hpp"
#include "posefront/numcore.hpp"
#include "posefront/progressive.hpp"
#include "posefront/synthgen.hpp"

namespace posefront {

// Two-layer encoder x -> W2 relu(W1 x + b1) + b2 (D_in -> H -> D).
class Encoder {
 public:
  struct Cache {
    AffineLayer::Cache first;
    Tensor pre_activation;
    AffineLayer::Cache second;
  };

  Encoder() = default;
  Encoder(std::size_t dim_in, std::size_t hidden, std::size_t dim, Rng& rng);
  Encoder(AffineLayer first, AffineLayer second);

  std::size_t dim_in() const { return first_.in_dim(); }
  std::size_t hidden() const { return first_.out_dim(); }
  std::size_t dim() const { return second_.out_dim(); }

  Tensor forward(const Tensor& x, Cache* cache = nullptr) const;
  Tensor backward(const Cache& cache, const Tensor& upstream);

  AffineLayer& first() { return first_; }
  AffineLayer& second() { return second_; }
  const AffineLayer& first() const { return first_; }
  const AffineLayer& second() const { return second_; }
  std::vector<Param*> params();
  std::size_t parameter_count() const { return first_.parameter_count() + second_.parameter_count(); }

 private:
  AffineLayer first_;
  AffineLayer second_;
};

enum class LossMode { kNone, kMse, kApl };

std::string to_string(LossMode mode);
LossMode parse_loss_mode(const std::string& text);

struct TrainConfig {
  int batch_size = 200;
  int epochs = 25;
  double lr_init = 0.1;
  std::vector<int> milestones{5, 10, 15, 20};
  std::vector<double> decay_factors{0.5, 0.2, 0.1, 0.1};
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double lambda = 2.0;
  double grad_clip = 3.0;  // global gradient-norm cap per step; 0 disables
  LossMode loss_mode = LossMode::kApl;
  bool use_progressive = true;
  int block_count = 3;
  std::vector<double> gate_thresholds;  // empty: standard layout for block_count
  bool fixed_gate = false;
  double gate_steepness = kDefaultGateSteepness;
  int hidden_dim = 64;
  int embedding_dim = 32;
  std::uint64_t seed = 1;

  void validate() const;
  GateConfig gate_config() const;
};

// lr_init times every decay factor whose milestone is <= epoch (0-based epochs).
double lr_at_epoch(const TrainConfig& cfg, int epoch);

// Full pipeline: encoder -> progressive module -> identity classifier. The
// progressive module is always allocated so that variants share parameter layout;
// when use_progressive is false it is bypassed and excluded from optimization.
struct Model {
  Encoder encoder;
  ProgressiveModule progressive;
  Classifier classifier;
  bool use_progressive = true;

  // Embedding used for verification: F(psi(x)) or psi(x) without the module.
  Tensor embed(const Tensor& features, double yaw_deg) const;
  std::vector<Param*> trainable_params();
  std::vector<Param*> all_params();
  void zero_grad();
};

Model build_model(std::size_t dim_in, std::size_t num_identities, const TrainConfig& cfg);

// One training example: a sample and its frontal ground truth, with class indices.
struct TrainPair {
  const FaceSample* sample = nullptr;
  const FaceSample* target = nullptr;
  std::size_t sample_label = 0;
  std::size_t target_label = 0;
};

struct ObjectiveValue {
  double total = 0.0;
  double id = 0.0;
  double pair = 0.0;
  std::size_t skipped_pairs = 0;       // APL terms dropped for an all-zero frontal embedding
  double min_abs_pre_activation = 0.0;  // over every ReLU in the pass
};

// Objective L_id + lambda * L_pair over a batch. With `backward` set, gradients
// are accumulated into the model's Param::grad in pair order (callers zero them).
//
// `frozen_targets`, when given, replaces the live frontal embeddings psi(x_f) in the
// pair term (one per pair). Gradient checks use it to hold the detached targets fixed.
ObjectiveValue evaluate_objective(Model& model, std::span<const TrainPair> batch, LossMode mode, double lambda,
                                  bool backward, const std::vector<Tensor>* frozen_targets = nullptr);

// psi(x_f) for every pair of the batch.
std::vector<Tensor> frontal_targets(const Model& model, std::span<const TrainPair> batch);

struct EpochMetrics {
  int epoch = 0;
  double lr = 0.0;
  double loss_total = 0.0;
  double loss_id = 0.0;
  double loss_pair = 0.0;
};

struct TrainResult {
  Model model;
  std::vector<EpochMetrics> log;
  std::size_t skipped_pairs = 0;
};

using ClassMap = std::unordered_map<int, std::size_t>;

// Maps identity labels of `data` onto contiguous class indices in order of first appearance.
ClassMap identity_classes(const Dataset& data);

// `batch_size` samples drawn uniformly with replacement, each paired with its frontal target.
std::vector<TrainPair> build_batch(const Dataset& data, const FrontalTargetIndex& targets,
                                   const ClassMap& classes, std::size_t batch_size, Rng& rng);

TrainResult train(const Dataset& data, const TrainConfig& cfg);

// `epoch,lr,loss_total,loss_id,loss_pair` CSV.
void write_metrics_csv(std::ostream& out, const std::vector<EpochMetrics>& log);

}  // namespace posefront
