#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "posefront/harness.hpp"
#include "posefront/synthgen.hpp"

namespace posefront {

enum class PairKind { kFrontalFrontal, kFrontalProfile };

std::string to_string(PairKind kind);

// Members of a verification pair are indices into the evaluation dataset.
struct VerificationPair {
  std::size_t a = 0;
  std::size_t b = 0;
  bool same_identity = false;
  PairKind kind = PairKind::kFrontalFrontal;
};

using Fold = std::vector<VerificationPair>;

inline constexpr double kProtocolFrontalLimit = 20.0;  // |yaw| below this is frontal
inline constexpr double kProtocolProfileLimit = 60.0;  // |yaw| at or above this is profile

// Identity-disjoint folds. Each fold holds pairs_per_fold pairs: a quarter each of
// positive FF, negative FF, positive FP and negative FP. pairs_per_fold must be a
// multiple of 4. Throws ProtocolError naming the pose bin that is too sparse.
std::vector<Fold> build_protocol(const Dataset& data, int folds, int pairs_per_fold, Rng& rng);

// Cosine similarity; throws DegenerateInputError for a zero vector.
double similarity(const Tensor& a, const Tensor& b);

struct ScoredPair {
  double score = 0.0;
  bool same = false;
};

// Fraction of pairs classified correctly when "same" is predicted for score > threshold.
double accuracy_at(std::span<const ScoredPair> pairs, double threshold);

struct ThresholdChoice {
  double threshold = 0.0;
  double accuracy = 0.0;
};

// Accuracy-maximizing threshold among {min - 1, midpoints of adjacent distinct scores,
// max + 1}; the lowest threshold wins ties.
ThresholdChoice best_threshold(std::span<const ScoredPair> pairs);

struct CrossValidatedAccuracy {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  std::vector<double> fold_accuracy;
  std::vector<double> fold_threshold;
};

// Each fold is scored with the threshold chosen on the union of the other folds.
CrossValidatedAccuracy cross_validated_accuracy(std::span<const std::vector<ScoredPair>> folds);

// Equal error rate: FAR/FRR crossing along the ROC with linear interpolation
// between adjacent operating points. Throws ProtocolError for single-class input.
double eer(std::span<const ScoredPair> pairs);

// P(score of a random positive > score of a random negative), ties count 1/2.
double auc(std::span<const ScoredPair> pairs);

struct FoldMetrics {
  double accuracy = 0.0;
  double eer = 0.0;
  double auc = 0.0;
  double threshold = 0.0;
};

struct MetricSummary {
  std::vector<FoldMetrics> folds;
  double acc_mean = 0.0, acc_std = 0.0;
  double eer_mean = 0.0, eer_std = 0.0;
  double auc_mean = 0.0, auc_std = 0.0;
};

struct VerificationReport {
  MetricSummary frontal_frontal;
  MetricSummary frontal_profile;
};

// Fold-wise metrics for each pair kind from precomputed scores.
MetricSummary summarize(std::span<const std::vector<ScoredPair>> folds);

// Embeds every sample once and scores the protocol, per pair kind.
VerificationReport evaluate_model(const Model& model, const Dataset& data, const std::vector<Fold>& protocol);

// `kind,fold,accuracy,eer,auc,threshold` rows per fold plus `mean` and `std` rows.
void write_report_csv(std::ostream& out, const VerificationReport& report);

std::pair<double, double> mean_and_population_std(std::span<const double> values);

// ---- ablations ----

struct AblationVariant {
  std::string name;
  TrainConfig config;
};

// A run whose training hit a non-finite value is kept as diverged with NaN metrics.
struct SeedResult {
  std::uint64_t seed = 0;
  bool diverged = false;
  double accuracy = 0.0;  // frontal-profile
  double eer = 0.0;
  double auc = 0.0;
  double ff_accuracy = 0.0;  // frontal-frontal
  double first_loss = 0.0;   // mean total loss of the first and last epochs
  double final_loss = 0.0;
};

struct AblationRow {
  std::string variant;
  std::vector<SeedResult> seeds;
  std::size_t converged = 0;  // seeds that trained without diverging
  double acc_mean = 0.0, acc_std = 0.0;
  double eer_mean = 0.0, eer_std = 0.0;
  double auc_mean = 0.0, auc_std = 0.0;
};

// Memo of (config, seed) -> frontal-profile result, shared between ablation matrices.
using AblationCache = std::map<std::string, SeedResult>;

// Trains every variant for every seed (the seed replaces config.seed) and reports
// frontal-profile accuracy/EER/AUC, mean and population std over the converged
// seeds (NaN when none converged). Rows keep the order of `variants`.
std::vector<AblationRow> run_ablation(const std::vector<AblationVariant>& variants, const Dataset& train_data,
                                      const Dataset& eval_data, const std::vector<Fold>& protocol,
                                      std::span<const std::uint64_t> seeds, AblationCache* cache = nullptr);

// `variant,seed_count,acc_mean,acc_std,eer_mean,eer_std,auc_mean,auc_std`; seed_count
// counts converged seeds.
void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows);
// `variant,seed,status,accuracy,eer,auc,ff_accuracy,first_loss,final_loss` with
// status `converged` or `diverged`.
void write_ablation_seeds_csv(std::ostream& out, const std::vector<AblationRow>& rows);

// Loss-mode/progressive combinations: baseline, MSE, Prog., APL, MSE+Prog., APL+Prog.
std::vector<AblationVariant> table1_variants(const TrainConfig& base);
// MSE-only baseline then MSE+Prog. with one, two and three blocks.
std::vector<AblationVariant> table2_variants(const TrainConfig& base);
// MSE-only baseline, MSE+Prog. with every gate fixed at 1, MSE+Prog. with soft gates.
std::vector<AblationVariant> table3_variants(const TrainConfig& base);
// MSE and APL (no progressive module) at each balancing weight.
inline const std::vector<double> kLambdaGrid{0.01, 0.1, 1.0, 2.0, 10.0};
std::vector<AblationVariant> lambda_sweep_variants(const TrainConfig& base);

// Default balancing weight for a loss mode: 2 for APL, 1 for MSE.
double default_lambda(LossMode mode);

// ---- diagnostics ----

// `identity,yaw,e0,...` for every sample's verification embedding.
void write_embeddings_csv(std::ostream& out, const Model& model, const Dataset& data);

struct ChannelValue {
  std::size_t channel = 0;
  double value = 0.0;
};

// The k largest-magnitude channels, sorted by descending magnitude (lower channel first on ties).
std::vector<ChannelValue> top_k_channels(const Tensor& embedding, std::size_t k);

// For up to `count` identities with both frontal and profile samples: the
// smallest-|yaw| and the largest-|yaw| sample indices.
std::vector<std::pair<std::size_t, std::size_t>> select_frontal_profile_pairs(const Dataset& data, std::size_t count);

// `pair,role,identity,yaw,rank,channel,value`, k rows per image.
void write_topk_csv(std::ostream& out, const Model& model, const Dataset& data,
                    std::span<const std::pair<std::size_t, std::size_t>> pairs, std::size_t k);

}  // namespace posefront
