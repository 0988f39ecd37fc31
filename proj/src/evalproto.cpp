#include "posefront/evalproto.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "posefront/errors.hpp"
#include "posefront/format.hpp"

namespace posefront {

std::string to_string(PairKind kind) { return kind == PairKind::kFrontalFrontal ? "FF" : "FP"; }

namespace {

struct IdentityPool {
  int identity = 0;
  std::vector<std::size_t> frontal;
  std::vector<std::size_t> profile;
};

template <typename T>
const T& pick(const std::vector<T>& items, Rng& rng) {
  return items[rng.below(items.size())];
}

}  // namespace

std::vector<Fold> build_protocol(const Dataset& data, int folds, int pairs_per_fold, Rng& rng) {
  if (folds < 2) throw ValidationError("protocol needs at least two folds");
  if (pairs_per_fold < 4 || pairs_per_fold % 4 != 0)
    throw ValidationError("pairs_per_fold must be a positive multiple of 4");

  std::map<int, IdentityPool> pools;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double a = std::abs(data[i].yaw_deg);
    IdentityPool& p = pools[data[i].identity];
    p.identity = data[i].identity;
    if (a < kProtocolFrontalLimit) p.frontal.push_back(i);
    if (a >= kProtocolProfileLimit) p.profile.push_back(i);
  }
  std::size_t with_frontal = 0;
  std::size_t with_profile = 0;
  std::vector<IdentityPool> eligible;
  for (auto& [id, p] : pools) {
    with_frontal += p.frontal.empty() ? 0 : 1;
    with_profile += p.profile.empty() ? 0 : 1;
    if (!p.frontal.empty() && !p.profile.empty()) eligible.push_back(std::move(p));
  }
  const auto needed = static_cast<std::size_t>(2 * folds);
  if (eligible.size() < needed) {
    const std::string bin = with_frontal < needed   ? "frontal (|yaw| < 20)"
                            : with_profile < needed ? "profile (|yaw| >= 60)"
                                                    : "frontal and profile combined";
    throw ProtocolError("insufficient samples in the " + bin + " bin: " + std::to_string(eligible.size()) +
                        " identities qualify, " + std::to_string(needed) + " needed for " + std::to_string(folds) +
                        " folds");
  }

  for (std::size_t i = eligible.size(); i > 1; --i) std::swap(eligible[i - 1], eligible[rng.below(i)]);
  std::vector<std::vector<const IdentityPool*>> members(static_cast<std::size_t>(folds));
  for (std::size_t i = 0; i < eligible.size(); ++i) members[i % members.size()].push_back(&eligible[i]);

  const int quarter = pairs_per_fold / 4;
  std::vector<Fold> out(members.size());
  for (std::size_t f = 0; f < members.size(); ++f) {
    const auto& ids = members[f];
    std::vector<const IdentityPool*> multi_frontal;
    for (const auto* p : ids)
      if (p->frontal.size() >= 2) multi_frontal.push_back(p);
    if (multi_frontal.empty())
      throw ProtocolError("insufficient samples in the frontal (|yaw| < 20) bin: fold " + std::to_string(f) +
                          " has no identity with two frontal samples");

    auto two_identities = [&]() {
      const std::size_t x = rng.below(ids.size());
      std::size_t y = rng.below(ids.size() - 1);
      if (y >= x) ++y;
      return std::pair{ids[x], ids[y]};
    };

    Fold& fold = out[f];
    fold.reserve(static_cast<std::size_t>(pairs_per_fold));
    for (int k = 0; k < quarter; ++k) {
      const IdentityPool* p = pick(multi_frontal, rng);
      const std::size_t x = rng.below(p->frontal.size());
      std::size_t y = rng.below(p->frontal.size() - 1);
      if (y >= x) ++y;
      fold.push_back({p->frontal[x], p->frontal[y], true, PairKind::kFrontalFrontal});
    }
    for (int k = 0; k < quarter; ++k) {
      const auto [p, q] = two_identities();
      fold.push_back({pick(p->frontal, rng), pick(q->frontal, rng), false, PairKind::kFrontalFrontal});
    }
    for (int k = 0; k < quarter; ++k) {
      const IdentityPool* p = pick(ids, rng);
      fold.push_back({pick(p->frontal, rng), pick(p->profile, rng), true, PairKind::kFrontalProfile});
    }
    for (int k = 0; k < quarter; ++k) {
      const auto [p, q] = two_identities();
      fold.push_back({pick(p->frontal, rng), pick(q->profile, rng), false, PairKind::kFrontalProfile});
    }
  }
  return out;
}

double similarity(const Tensor& a, const Tensor& b) {
  const double na = squared_norm(a.values());
  const double nb = squared_norm(b.values());
  if (na == 0.0 || nb == 0.0) throw DegenerateInputError("cosine similarity of a zero vector");
  const double c = dot(a.values(), b.values()) / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(c, -1.0, 1.0);
}

double accuracy_at(std::span<const ScoredPair> pairs, double threshold) {
  if (pairs.empty()) throw ProtocolError("cannot score an empty fold");
  std::size_t correct = 0;
  for (const auto& p : pairs) correct += ((p.score > threshold) == p.same) ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

namespace {

// Distinct scores ascending with the positive/negative counts at each.
struct ScoreGroup {
  double score;
  std::size_t pos;
  std::size_t neg;
};

std::vector<ScoreGroup> group_scores(std::span<const ScoredPair> pairs) {
  std::vector<ScoredPair> sorted(pairs.begin(), pairs.end());
  std::sort(sorted.begin(), sorted.end(), [](const auto& x, const auto& y) { return x.score < y.score; });
  std::vector<ScoreGroup> groups;
  for (const auto& p : sorted) {
    if (groups.empty() || groups.back().score != p.score) groups.push_back({p.score, 0, 0});
    (p.same ? groups.back().pos : groups.back().neg) += 1;
  }
  return groups;
}

void require_both_classes(const std::vector<ScoreGroup>& groups, std::size_t& pos, std::size_t& neg) {
  pos = 0;
  neg = 0;
  for (const auto& g : groups) {
    pos += g.pos;
    neg += g.neg;
  }
  if (pos == 0 || neg == 0) throw ProtocolError("metric needs both positive and negative pairs");
}

}  // namespace

ThresholdChoice best_threshold(std::span<const ScoredPair> pairs) {
  if (pairs.empty()) throw ProtocolError("cannot choose a threshold on an empty set");
  const auto groups = group_scores(pairs);
  const double n = static_cast<double>(pairs.size());

  // Sweep thresholds upward; below the minimum score every pair is called "same".
  std::size_t correct = 0;
  for (const auto& g : groups) correct += g.pos;
  ThresholdChoice best{groups.front().score - 1.0, static_cast<double>(correct) / n};
  std::size_t best_correct = correct;
  for (std::size_t j = 0; j < groups.size(); ++j) {
    correct = correct + groups[j].neg - groups[j].pos;
    const double threshold =
        j + 1 < groups.size() ? 0.5 * (groups[j].score + groups[j + 1].score) : groups.back().score + 1.0;
    if (correct > best_correct) {
      best_correct = correct;
      best = {threshold, static_cast<double>(correct) / n};
    }
  }
  return best;
}

std::pair<double, double> mean_and_population_std(std::span<const double> values) {
  if (values.empty()) return {0.0, 0.0};
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / n)};
}

CrossValidatedAccuracy cross_validated_accuracy(std::span<const std::vector<ScoredPair>> folds) {
  if (folds.size() < 2) throw ProtocolError("cross validation needs at least two folds");
  for (const auto& f : folds)
    if (f.empty()) throw ProtocolError("cross validation fold is empty");

  CrossValidatedAccuracy out;
  std::vector<ScoredPair> rest;
  for (std::size_t held = 0; held < folds.size(); ++held) {
    rest.clear();
    for (std::size_t f = 0; f < folds.size(); ++f)
      if (f != held) rest.insert(rest.end(), folds[f].begin(), folds[f].end());
    const double threshold = best_threshold(rest).threshold;
    out.fold_threshold.push_back(threshold);
    out.fold_accuracy.push_back(accuracy_at(folds[held], threshold));
  }
  std::tie(out.mean, out.std) = mean_and_population_std(out.fold_accuracy);
  return out;
}

double eer(std::span<const ScoredPair> pairs) {
  const auto groups = group_scores(pairs);
  std::size_t pos = 0;
  std::size_t neg = 0;
  require_both_classes(groups, pos, neg);

  // Operating point j rejects the j lowest score groups.
  double prev_far = 1.0;
  double prev_frr = 0.0;
  std::size_t rejected_pos = 0;
  std::size_t rejected_neg = 0;
  for (const auto& g : groups) {
    rejected_pos += g.pos;
    rejected_neg += g.neg;
    const double far = static_cast<double>(neg - rejected_neg) / static_cast<double>(neg);
    const double frr = static_cast<double>(rejected_pos) / static_cast<double>(pos);
    if (far <= frr) {
      if (far == frr) return far;
      const double before = prev_far - prev_frr;  // > 0
      const double after = far - frr;             // < 0
      const double alpha = before / (before - after);
      return prev_far + alpha * (far - prev_far);
    }
    prev_far = far;
    prev_frr = frr;
  }
  return prev_far;  // unreachable: the final point has FAR = 0 and FRR = 1
}

double auc(std::span<const ScoredPair> pairs) {
  const auto groups = group_scores(pairs);
  std::size_t pos = 0;
  std::size_t neg = 0;
  require_both_classes(groups, pos, neg);
  // Each positive beats every negative in lower groups and ties half of those in its own.
  double wins = 0.0;
  std::size_t neg_below = 0;
  for (const auto& g : groups) {
    wins += static_cast<double>(g.pos) * (static_cast<double>(neg_below) + 0.5 * static_cast<double>(g.neg));
    neg_below += g.neg;
  }
  return wins / (static_cast<double>(pos) * static_cast<double>(neg));
}

MetricSummary summarize(std::span<const std::vector<ScoredPair>> folds) {
  const CrossValidatedAccuracy cv = cross_validated_accuracy(folds);
  MetricSummary s;
  std::vector<double> eers;
  std::vector<double> aucs;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    FoldMetrics m{cv.fold_accuracy[f], eer(folds[f]), auc(folds[f]), cv.fold_threshold[f]};
    eers.push_back(m.eer);
    aucs.push_back(m.auc);
    s.folds.push_back(m);
  }
  s.acc_mean = cv.mean;
  s.acc_std = cv.std;
  std::tie(s.eer_mean, s.eer_std) = mean_and_population_std(eers);
  std::tie(s.auc_mean, s.auc_std) = mean_and_population_std(aucs);
  return s;
}

VerificationReport evaluate_model(const Model& model, const Dataset& data, const std::vector<Fold>& protocol) {
  std::vector<Tensor> embeddings(data.size());
  std::vector<bool> done(data.size(), false);
  auto embedding = [&](std::size_t i) -> const Tensor& {
    if (i >= data.size()) throw LookupError("protocol references a sample outside the dataset");
    if (!done[i]) {
      embeddings[i] = model.embed(data[i].features, data[i].yaw_deg);
      done[i] = true;
    }
    return embeddings[i];
  };

  std::vector<std::vector<ScoredPair>> ff(protocol.size());
  std::vector<std::vector<ScoredPair>> fp(protocol.size());
  for (std::size_t f = 0; f < protocol.size(); ++f) {
    for (const auto& pair : protocol[f]) {
      const ScoredPair scored{similarity(embedding(pair.a), embedding(pair.b)), pair.same_identity};
      (pair.kind == PairKind::kFrontalFrontal ? ff[f] : fp[f]).push_back(scored);
    }
  }
  return {summarize(ff), summarize(fp)};
}

namespace {

void write_fields(std::ostream& out, std::initializer_list<double> values) {
  for (double v : values) {
    out << ',';
    write_double(out, v);
  }
  out << '\n';
}

}  // namespace

void write_report_csv(std::ostream& out, const VerificationReport& report) {
  out << "kind,fold,accuracy,eer,auc,threshold\n";
  auto section = [&](const char* kind, const MetricSummary& s) {
    for (std::size_t f = 0; f < s.folds.size(); ++f) {
      out << kind << ',' << f;
      write_fields(out, {s.folds[f].accuracy, s.folds[f].eer, s.folds[f].auc, s.folds[f].threshold});
    }
    std::vector<double> thresholds;
    for (const auto& m : s.folds) thresholds.push_back(m.threshold);
    const auto [t_mean, t_std] = mean_and_population_std(thresholds);
    out << kind << ",mean";
    write_fields(out, {s.acc_mean, s.eer_mean, s.auc_mean, t_mean});
    out << kind << ",std";
    write_fields(out, {s.acc_std, s.eer_std, s.auc_std, t_std});
  };
  section("FF", report.frontal_frontal);
  section("FP", report.frontal_profile);
}

namespace {

std::string cache_key(const TrainConfig& c) {
  std::ostringstream k;
  k << c.batch_size << '|' << c.epochs << '|' << format_double(c.lr_init) << '|';
  for (int m : c.milestones) k << m << ',';
  k << '|';
  for (double d : c.decay_factors) k << format_double(d) << ',';
  k << '|' << format_double(c.momentum) << '|' << format_double(c.weight_decay) << '|' << format_double(c.lambda) << '|' << format_double(c.grad_clip)
    << '|' << to_string(c.loss_mode) << '|' << c.use_progressive << '|' << c.block_count << '|' << c.fixed_gate << '|'
    << format_double(c.gate_steepness) << '|';
  for (double t : c.gate_thresholds) k << format_double(t) << ',';
  k << '|' << c.hidden_dim << '|' << c.embedding_dim << '|' << c.seed;
  return k.str();
}

}  // namespace

std::vector<AblationRow> run_ablation(const std::vector<AblationVariant>& variants, const Dataset& train_data,
                                      const Dataset& eval_data, const std::vector<Fold>& protocol,
                                      std::span<const std::uint64_t> seeds, AblationCache* cache) {
  for (const auto& v : variants) v.config.validate();
  std::vector<AblationRow> rows;
  for (const auto& v : variants) {
    AblationRow row;
    row.variant = v.name;
    for (std::uint64_t seed : seeds) {
      TrainConfig cfg = v.config;
      cfg.seed = seed;
      const std::string key = cache_key(cfg);
      SeedResult r;
      if (cache != nullptr && cache->contains(key)) {
        r = cache->at(key);
      } else {
        r.seed = seed;
        try {
          const TrainResult trained = train(train_data, cfg);
          const VerificationReport report = evaluate_model(trained.model, eval_data, protocol);
          r.accuracy = report.frontal_profile.acc_mean;
          r.eer = report.frontal_profile.eer_mean;
          r.auc = report.frontal_profile.auc_mean;
          r.ff_accuracy = report.frontal_frontal.acc_mean;
          if (!trained.log.empty()) {
            r.first_loss = trained.log.front().loss_total;
            r.final_loss = trained.log.back().loss_total;
          }
        } catch (const NumericError&) {
          constexpr double nan = std::numeric_limits<double>::quiet_NaN();
          r.diverged = true;
          r.accuracy = r.eer = r.auc = r.ff_accuracy = r.first_loss = r.final_loss = nan;
        }
        if (cache != nullptr) cache->emplace(key, r);
      }
      row.seeds.push_back(r);
    }
    std::vector<double> acc, e, a;
    for (const auto& r : row.seeds) {
      if (r.diverged) continue;
      acc.push_back(r.accuracy);
      e.push_back(r.eer);
      a.push_back(r.auc);
    }
    row.converged = acc.size();
    if (acc.empty()) {
      constexpr double nan = std::numeric_limits<double>::quiet_NaN();
      row.acc_mean = row.acc_std = row.eer_mean = row.eer_std = row.auc_mean = row.auc_std = nan;
    } else {
      std::tie(row.acc_mean, row.acc_std) = mean_and_population_std(acc);
      std::tie(row.eer_mean, row.eer_std) = mean_and_population_std(e);
      std::tie(row.auc_mean, row.auc_std) = mean_and_population_std(a);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows) {
  out << "variant,seed_count,acc_mean,acc_std,eer_mean,eer_std,auc_mean,auc_std\n";
  for (const auto& r : rows) {
    out << r.variant << ',' << r.converged;
    write_fields(out, {r.acc_mean, r.acc_std, r.eer_mean, r.eer_std, r.auc_mean, r.auc_std});
  }
}

void write_ablation_seeds_csv(std::ostream& out, const std::vector<AblationRow>& rows) {
  out << "variant,seed,status,accuracy,eer,auc,ff_accuracy,first_loss,final_loss\n";
  for (const auto& r : rows)
    for (const auto& s : r.seeds) {
      out << r.variant << ',' << s.seed << ',' << (s.diverged ? "diverged" : "converged");
      write_fields(out, {s.accuracy, s.eer, s.auc, s.ff_accuracy, s.first_loss, s.final_loss});
    }
}

double default_lambda(LossMode mode) { return mode == LossMode::kApl ? 2.0 : 1.0; }

namespace {

AblationVariant variant(const std::string& name, const TrainConfig& base, LossMode mode, bool progressive) {
  TrainConfig c = base;
  c.loss_mode = mode;
  c.use_progressive = progressive;
  c.lambda = mode == LossMode::kNone ? 0.0 : default_lambda(mode);
  return {name, c};
}

}  // namespace

std::vector<AblationVariant> table1_variants(const TrainConfig& base) {
  return {
      variant("baseline", base, LossMode::kNone, false), variant("mse", base, LossMode::kMse, false),
      variant("prog", base, LossMode::kNone, true),      variant("apl", base, LossMode::kApl, false),
      variant("mse+prog", base, LossMode::kMse, true),   variant("apl+prog", base, LossMode::kApl, true),
  };
}

std::vector<AblationVariant> table2_variants(const TrainConfig& base) {
  std::vector<AblationVariant> out{variant("mse", base, LossMode::kMse, false)};
  const char* names[] = {"mse+prog/1-block", "mse+prog/2-block", "mse+prog/3-block"};
  for (int k = 1; k <= 3; ++k) {
    AblationVariant v = variant(names[k - 1], base, LossMode::kMse, true);
    v.config.block_count = k;
    v.config.gate_thresholds.clear();
    out.push_back(v);
  }
  return out;
}

std::vector<AblationVariant> table3_variants(const TrainConfig& base) {
  AblationVariant fixed = variant("mse+prog/fixed-gate", base, LossMode::kMse, true);
  fixed.config.fixed_gate = true;
  AblationVariant soft = variant("mse+prog/soft-gate", base, LossMode::kMse, true);
  soft.config.fixed_gate = false;
  return {variant("mse", base, LossMode::kMse, false), fixed, soft};
}

std::vector<AblationVariant> lambda_sweep_variants(const TrainConfig& base) {
  std::vector<AblationVariant> out;
  for (LossMode mode : {LossMode::kMse, LossMode::kApl}) {
    for (double lambda : kLambdaGrid) {
      AblationVariant v = variant(to_string(mode) + "/lambda=" + format_double(lambda), base, mode, false);
      v.config.lambda = lambda;
      out.push_back(v);
    }
  }
  return out;
}

void write_embeddings_csv(std::ostream& out, const Model& model, const Dataset& data) {
  bool header = false;
  for (const auto& s : data) {
    const Tensor e = model.embed(s.features, s.yaw_deg);
    if (!header) {
      out << "identity,yaw";
      for (std::size_t k = 0; k < e.size(); ++k) out << ",e" << k;
      out << '\n';
      header = true;
    }
    out << s.identity << ',';
    write_double(out, s.yaw_deg);
    for (double v : e.values()) {
      out << ',';
      write_double(out, v);
    }
    out << '\n';
  }
}

std::vector<ChannelValue> top_k_channels(const Tensor& embedding, std::size_t k) {
  std::vector<ChannelValue> all;
  all.reserve(embedding.size());
  for (std::size_t c = 0; c < embedding.size(); ++c) all.push_back({c, embedding[c]});
  k = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(),
                    [](const ChannelValue& x, const ChannelValue& y) {
                      const double ax = std::abs(x.value);
                      const double ay = std::abs(y.value);
                      return ax != ay ? ax > ay : x.channel < y.channel;
                    });
  all.resize(k);
  return all;
}

std::vector<std::pair<std::size_t, std::size_t>> select_frontal_profile_pairs(const Dataset& data,
                                                                              std::size_t count) {
  std::map<int, std::pair<std::size_t, std::size_t>> extremes;
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto [it, fresh] = extremes.try_emplace(data[i].identity, i, i);
    if (fresh) continue;
    const double a = std::abs(data[i].yaw_deg);
    if (a < std::abs(data[it->second.first].yaw_deg)) it->second.first = i;
    if (a > std::abs(data[it->second.second].yaw_deg)) it->second.second = i;
  }
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (const auto& [id, p] : extremes) {
    if (out.size() >= count) break;
    if (std::abs(data[p.first].yaw_deg) < kProtocolFrontalLimit &&
        std::abs(data[p.second].yaw_deg) >= kProtocolProfileLimit)
      out.push_back(p);
  }
  return out;
}

void write_topk_csv(std::ostream& out, const Model& model, const Dataset& data,
                    std::span<const std::pair<std::size_t, std::size_t>> pairs, std::size_t k) {
  out << "pair,role,identity,yaw,rank,channel,value\n";
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    for (const auto& [role, index] : {std::pair{"frontal", pairs[p].first}, std::pair{"profile", pairs[p].second}}) {
      const FaceSample& s = data.at(index);
      const auto top = top_k_channels(model.embed(s.features, s.yaw_deg), k);
      for (std::size_t r = 0; r < top.size(); ++r) {
        out << p << ',' << role << ',' << s.identity << ',';
        write_double(out, s.yaw_deg);
        out << ',' << r << ',' << top[r].channel << ',';
        write_double(out, top[r].value);
        out << '\n';
      }
    }
  }
}

}  // namespace posefront
