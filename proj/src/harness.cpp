#include "posefront/harness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>

#include "posefront/errors.hpp"
#include "posefront/format.hpp"

namespace posefront {

namespace {

// Substreams of the training seed.
constexpr std::uint64_t kEncoderStream = 11;
constexpr std::uint64_t kProgressiveStream = 12;
constexpr std::uint64_t kClassifierStream = 13;
constexpr std::uint64_t kBatchStream = 14;

double min_abs(const Tensor& t, double current) {
  for (double v : t.values()) current = std::min(current, std::abs(v));
  return current;
}

}  // namespace

Encoder::Encoder(std::size_t dim_in, std::size_t hidden, std::size_t dim, Rng& rng)
    : first_(dim_in, hidden, rng), second_(hidden, dim, rng) {}

Encoder::Encoder(AffineLayer first, AffineLayer second) : first_(std::move(first)), second_(std::move(second)) {
  if (first_.out_dim() != second_.in_dim()) throw DimensionError("encoder layers do not chain");
}

Tensor Encoder::forward(const Tensor& x, Cache* cache) const {
  Tensor hidden = first_.forward(x, cache ? &cache->first : nullptr);
  if (cache != nullptr) cache->pre_activation = hidden;
  return second_.forward(relu_forward(hidden), cache ? &cache->second : nullptr);
}

Tensor Encoder::backward(const Cache& cache, const Tensor& upstream) {
  Tensor d_hidden = relu_backward(cache.pre_activation, second_.backward(cache.second, upstream));
  return first_.backward(cache.first, d_hidden);
}

std::vector<Param*> Encoder::params() {
  return {&first_.weight(), &first_.bias(), &second_.weight(), &second_.bias()};
}

std::string to_string(LossMode mode) {
  switch (mode) {
    case LossMode::kNone:
      return "none";
    case LossMode::kMse:
      return "mse";
    case LossMode::kApl:
      return "apl";
  }
  return "none";
}

LossMode parse_loss_mode(const std::string& text) {
  if (text == "none") return LossMode::kNone;
  if (text == "mse") return LossMode::kMse;
  if (text == "apl") return LossMode::kApl;
  throw ValidationError("loss mode must be one of none, mse, apl (got '" + text + "')");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ValidationError("batch_size must be positive");
  if (epochs < 0) throw ValidationError("epochs must be nonnegative");
  if (!(lr_init >= 0.0)) throw ValidationError("lr_init must be nonnegative");
  if (milestones.size() != decay_factors.size())
    throw ValidationError("milestones and decay_factors must have the same length");
  for (std::size_t i = 0; i < milestones.size(); ++i) {
    if (milestones[i] < 0) throw ValidationError("milestones must be nonnegative");
    if (i > 0 && milestones[i] <= milestones[i - 1]) throw ValidationError("milestones must be strictly increasing");
    if (!(decay_factors[i] > 0.0)) throw ValidationError("decay factors must be positive");
  }
  SgdConfig{lr_init, momentum, weight_decay}.validate();
  if (!(lambda >= 0.0)) throw ValidationError("lambda must be nonnegative");
  if (!(grad_clip >= 0.0)) throw ValidationError("grad_clip must be nonnegative");
  if (!gate_thresholds.empty() && gate_thresholds.size() != static_cast<std::size_t>(block_count))
    throw ValidationError("block_count is " + std::to_string(block_count) + " but " +
                          std::to_string(gate_thresholds.size()) + " gate thresholds were given");
  gate_config().validate();
  if (hidden_dim < 1 || embedding_dim < 1) throw ValidationError("hidden_dim and embedding_dim must be positive");
}

GateConfig TrainConfig::gate_config() const {
  if (gate_thresholds.empty()) return gate_config_for_blocks(block_count, gate_steepness);
  return GateConfig{gate_thresholds, gate_steepness};
}

double lr_at_epoch(const TrainConfig& cfg, int epoch) {
  double lr = cfg.lr_init;
  for (std::size_t k = 0; k < cfg.milestones.size(); ++k)
    if (cfg.milestones[k] <= epoch) lr *= cfg.decay_factors[k];
  return lr;
}

Tensor Model::embed(const Tensor& features, double yaw_deg) const {
  Tensor psi = encoder.forward(features);
  return use_progressive ? progressive.frontalize(psi, yaw_deg) : psi;
}

std::vector<Param*> Model::trainable_params() {
  std::vector<Param*> out = encoder.params();
  if (use_progressive)
    for (Param* p : progressive.params()) out.push_back(p);
  out.push_back(&classifier.layer().weight());
  out.push_back(&classifier.layer().bias());
  return out;
}

std::vector<Param*> Model::all_params() {
  std::vector<Param*> out = encoder.params();
  for (Param* p : progressive.params()) out.push_back(p);
  out.push_back(&classifier.layer().weight());
  out.push_back(&classifier.layer().bias());
  return out;
}

void Model::zero_grad() {
  for (Param* p : all_params()) p->zero_grad();
}

Model build_model(std::size_t dim_in, std::size_t num_identities, const TrainConfig& cfg) {
  const Rng root(cfg.seed);
  Rng enc_rng = root.split(kEncoderStream);
  Rng prog_rng = root.split(kProgressiveStream);
  Rng cls_rng = root.split(kClassifierStream);
  const auto hidden = static_cast<std::size_t>(cfg.hidden_dim);
  const auto dim = static_cast<std::size_t>(cfg.embedding_dim);
  Model model{
      Encoder(dim_in, hidden, dim, enc_rng),
      ProgressiveModule(dim, cfg.gate_config(), prog_rng,
                        cfg.fixed_gate ? GateMode::kFixedOne : GateMode::kSoft),
      Classifier(dim, num_identities, cls_rng),
      cfg.use_progressive,
  };
  return model;
}

ObjectiveValue evaluate_objective(Model& model, std::span<const TrainPair> batch, LossMode mode, double lambda,
                                  bool backward, const std::vector<Tensor>* frozen_targets) {
  const std::size_t n = batch.size();
  if (n == 0) throw DimensionError("objective needs a nonempty batch");
  if (frozen_targets != nullptr && frozen_targets->size() != n)
    throw DimensionError("frozen targets must match the batch size");

  struct Branch {
    Encoder::Cache enc;
    FrontalizeCache prog;
    AffineLayer::Cache cls;
    Tensor psi;
    Tensor frontalized;
    Tensor logits;
  };
  std::vector<Branch> sample_side(n);
  std::vector<Branch> target_side(n);

  ObjectiveValue out;
  out.min_abs_pre_activation = std::numeric_limits<double>::infinity();
  auto run_branch = [&](const FaceSample& s, Branch& b) {
    b.psi = model.encoder.forward(s.features, &b.enc);
    b.frontalized = model.use_progressive ? model.progressive.frontalize(b.psi, s.yaw_deg, &b.prog) : b.psi;
    b.logits = model.classifier.logits(b.frontalized, &b.cls);
    out.min_abs_pre_activation = min_abs(b.enc.pre_activation, out.min_abs_pre_activation);
    if (model.use_progressive)
      out.min_abs_pre_activation =
          std::min(out.min_abs_pre_activation, ProgressiveModule::min_abs_pre_activation(b.prog));
  };

  double id_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    run_branch(*batch[i].sample, sample_side[i]);
    run_branch(*batch[i].target, target_side[i]);
    id_sum += cross_entropy(sample_side[i].logits, batch[i].sample_label);
    id_sum += cross_entropy(target_side[i].logits, batch[i].target_label);
  }
  const double id_scale = 1.0 / static_cast<double>(2 * n);
  out.id = id_sum * id_scale;

  // Pair term over pairs with a usable frontal target; targets and attention are constants.
  std::vector<std::size_t> used;
  std::vector<Tensor> frontalized;
  std::vector<Tensor> targets;
  std::vector<Tensor> attentions;
  PairLoss pair;
  if (mode != LossMode::kNone) {
    for (std::size_t i = 0; i < n; ++i) {
      const Tensor& target = frozen_targets != nullptr ? (*frozen_targets)[i] : target_side[i].psi;
      if (mode == LossMode::kApl) {
        try {
          attentions.push_back(attention_vector(target));
        } catch (const DegenerateInputError&) {
          ++out.skipped_pairs;
          continue;
        }
      }
      used.push_back(i);
      frontalized.push_back(sample_side[i].frontalized);
      targets.push_back(target);
    }
    if (!used.empty())
      pair = mode == LossMode::kApl ? attentive_pair_loss(frontalized, targets, attentions)
                                    : mse_pair_loss(frontalized, targets);
  }
  out.pair = pair.value;
  out.total = total_loss(out.id, out.pair, lambda);

  if (!backward) return out;

  std::vector<const Tensor*> pair_grad(n, nullptr);
  for (std::size_t u = 0; u < used.size(); ++u) pair_grad[used[u]] = &pair.grad[u];

  auto back_branch = [&](Branch& b, std::size_t label, const Tensor* extra) {
    Tensor g_logits = cross_entropy_backward(b.logits, label);
    for (double& v : g_logits.values()) v *= id_scale;
    Tensor g = model.classifier.layer().backward(b.cls, g_logits);
    if (extra != nullptr)
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += lambda * (*extra)[k];
    if (model.use_progressive) g = model.progressive.frontalize_backward(b.prog, g);
    model.encoder.backward(b.enc, g);
  };
  for (std::size_t i = 0; i < n; ++i) {
    back_branch(sample_side[i], batch[i].sample_label, pair_grad[i]);
    back_branch(target_side[i], batch[i].target_label, nullptr);
  }
  return out;
}

std::vector<Tensor> frontal_targets(const Model& model, std::span<const TrainPair> batch) {
  std::vector<Tensor> out;
  out.reserve(batch.size());
  for (const auto& p : batch) out.push_back(model.encoder.forward(p.target->features));
  return out;
}

ClassMap identity_classes(const Dataset& data) {
  ClassMap classes;
  for (const auto& s : data) classes.try_emplace(s.identity, classes.size());
  return classes;
}

std::vector<TrainPair> build_batch(const Dataset& data, const FrontalTargetIndex& targets, const ClassMap& classes,
                                   std::size_t batch_size, Rng& rng) {
  if (data.empty()) throw ValidationError("cannot draw a batch from an empty dataset");
  std::vector<TrainPair> batch;
  batch.reserve(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) {
    const FaceSample& s = data[rng.below(data.size())];
    const FaceSample& t = data[targets.assign(s.identity, rng)];
    batch.push_back({&s, &t, classes.at(s.identity), classes.at(t.identity)});
  }
  return batch;
}

TrainResult train(const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw ValidationError("training dataset is empty");
  const ClassMap classes = identity_classes(data);
  if (classes.size() < 2) throw ValidationError("training needs at least two identities");

  TrainResult result{build_model(data.front().features.size(), classes.size(), cfg), {}, 0};
  Model& model = result.model;
  const FrontalTargetIndex targets(data);
  Rng rng = Rng(cfg.seed).split(kBatchStream);

  const std::size_t batch_size = std::min(static_cast<std::size_t>(cfg.batch_size), data.size());
  const std::size_t steps = (data.size() + batch_size - 1) / batch_size;
  const std::vector<Param*> params = model.trainable_params();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const SgdConfig sgd{lr_at_epoch(cfg, epoch), cfg.momentum, cfg.weight_decay};
    EpochMetrics m{epoch, sgd.learning_rate, 0.0, 0.0, 0.0};
    for (std::size_t step = 0; step < steps; ++step) {
      const std::vector<TrainPair> batch = build_batch(data, targets, classes, batch_size, rng);
      model.zero_grad();
      const ObjectiveValue v = evaluate_objective(model, batch, cfg.loss_mode, cfg.lambda, true);
      if (cfg.grad_clip > 0.0) clip_grad_norm(params, cfg.grad_clip);
      sgd_step(params, sgd);
      m.loss_total += v.total;
      m.loss_id += v.id;
      m.loss_pair += v.pair;
      result.skipped_pairs += v.skipped_pairs;
    }
    const double inv = 1.0 / static_cast<double>(steps);
    m.loss_total *= inv;
    m.loss_id *= inv;
    m.loss_pair *= inv;
    result.log.push_back(m);
  }
  return result;
}

void write_metrics_csv(std::ostream& out, const std::vector<EpochMetrics>& log) {
  out << "epoch,lr,loss_total,loss_id,loss_pair\n";
  for (const auto& m : log) {
    out << m.epoch << ',';
    write_double(out, m.lr);
    out << ',';
    write_double(out, m.loss_total);
    out << ',';
    write_double(out, m.loss_id);
    out << ',';
    write_double(out, m.loss_pair);
    out << '\n';
  }
}

}  // namespace posefront
