#include "posefront/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "posefront/errors.hpp"
#include "posefront/format.hpp"
#include "posefront/harness.hpp"
#include "posefront/losses.hpp"
#include "posefront/progressive.hpp"

namespace posefront {

namespace {

constexpr double kElementwiseTolerance = 1e-6;
constexpr double kTolerance = 1e-5;

Tensor random_vector(std::size_t n, Rng& rng) {
  Tensor t(n);
  for (double& v : t.values()) v = rng.normal();
  return t;
}

// Gradient of f with respect to every entry of `params`, flattened in order.
std::vector<double> numeric_param_grad(const std::vector<Param*>& params, const std::function<double()>& f,
                                       double h) {
  std::vector<double> out;
  for (Param* p : params) {
    for (double& v : p->value.values()) {
      const double saved = v;
      v = saved + h;
      const double up = f();
      v = saved - h;
      const double down = f();
      v = saved;
      out.push_back((up - down) / (2.0 * h));
    }
  }
  return out;
}

std::vector<double> flat_grads(const std::vector<Param*>& params) {
  std::vector<double> out;
  for (const Param* p : params) out.insert(out.end(), p->grad.values().begin(), p->grad.values().end());
  return out;
}

void zero(const std::vector<Param*>& params) {
  for (Param* p : params) p->zero_grad();
}

class Check {
 public:
  Check(std::string name, double tolerance, const GradcheckOptions& opts) : opts_(opts) {
    row_.component = std::move(name);
    row_.tolerance = tolerance;
  }

  // Records one comparison; `analytic` is negated when a sign error is injected.
  void compare(std::vector<double> analytic, std::span<const double> numeric) {
    if (opts_.inject_sign_error)
      for (double& v : analytic) v = -v;
    row_.max_rel_error = std::max(row_.max_rel_error, relative_error(analytic, numeric));
  }
  void compare(const Tensor& analytic, const Tensor& numeric) {
    compare(std::vector<double>(analytic.values().begin(), analytic.values().end()), numeric.values());
  }

  void finish_trial() { ++row_.trials; }
  int trials() const { return exhausted() ? opts_.trials : row_.trials; }
  void redraw() { ++row_.redrawn; }
  bool exhausted() const { return row_.redrawn > 100 * opts_.trials; }

  GradcheckRow result() {
    if (exhausted()) throw NumericError(row_.component + ": could not draw trials away from ReLU kinks");
    row_.passed = row_.max_rel_error < row_.tolerance;
    return row_;
  }

 private:
  const GradcheckOptions& opts_;
  GradcheckRow row_;
};

double projected(const Tensor& y, const Tensor& c) { return dot(y.values(), c.values()); }

GradcheckRow check_affine(const GradcheckOptions& o, Rng& rng) {
  Check check("affine", kTolerance, o);
  for (int t = 0; t < o.trials; ++t) {
    const std::size_t in = 1 + rng.below(8), out = 1 + rng.below(8);
    Tensor w(out, in);
    for (double& v : w.values()) v = rng.normal();
    AffineLayer layer(std::move(w), random_vector(out, rng));
    const Tensor x = random_vector(in, rng);
    const Tensor c = random_vector(out, rng);
    std::vector<Param*> params{&layer.weight(), &layer.bias()};
    zero(params);
    AffineLayer::Cache cache;
    layer.forward(x, &cache);
    const Tensor dx = layer.backward(cache, c);
    const auto f_x = [&](const Tensor& v) { return projected(layer.forward(v), c); };
    check.compare(dx, finite_difference_grad(f_x, x, o.step));
    const auto f_p = [&] { return projected(layer.forward(x), c); };
    check.compare(flat_grads(params), numeric_param_grad(params, f_p, o.step));
    check.finish_trial();
  }
  return check.result();
}

GradcheckRow check_relu(const GradcheckOptions& o, Rng& rng) {
  Check check("relu", kElementwiseTolerance, o);
  while (check.trials() < o.trials) {
    const Tensor x = random_vector(1 + rng.below(16), rng);
    if (std::any_of(x.values().begin(), x.values().end(), [&](double v) { return std::abs(v) < o.kink_margin; })) {
      check.redraw();
      continue;
    }
    const Tensor c = random_vector(x.size(), rng);
    const auto f = [&](const Tensor& v) { return projected(relu_forward(v), c); };
    check.compare(relu_backward(x, c), finite_difference_grad(f, x, o.step));
    check.finish_trial();
  }
  return check.result();
}

GradcheckRow check_hadamard(const GradcheckOptions& o, Rng& rng) {
  Check check("hadamard", kElementwiseTolerance, o);
  for (int t = 0; t < o.trials; ++t) {
    const std::size_t n = 1 + rng.below(16);
    const Tensor a = random_vector(n, rng), b = random_vector(n, rng), c = random_vector(n, rng);
    const auto f = [&](const Tensor& v) { return projected(hadamard(v, b), c); };
    check.compare(hadamard_backward(b, c), finite_difference_grad(f, a, o.step));
    check.finish_trial();
  }
  return check.result();
}

GradcheckRow check_cross_entropy(const GradcheckOptions& o, Rng& rng) {
  Check check("cross_entropy", kElementwiseTolerance, o);
  for (int t = 0; t < o.trials; ++t) {
    const std::size_t k = 2 + rng.below(8);
    Tensor logits = random_vector(k, rng);
    for (double& v : logits.values()) v *= 3.0;
    const std::size_t label = rng.below(k);
    const auto f = [&](const Tensor& v) { return cross_entropy(v, label); };
    check.compare(cross_entropy_backward(logits, label), finite_difference_grad(f, logits, o.step));
    check.finish_trial();
  }
  return check.result();
}

GradcheckRow check_pair_loss(const GradcheckOptions& o, Rng& rng, bool attentive) {
  Check check(attentive ? "apl" : "mse", kTolerance, o);
  for (int t = 0; t < o.trials; ++t) {
    const std::size_t n = 1 + rng.below(4), d = 1 + rng.below(8);
    std::vector<Tensor> f, targets, attn;
    for (std::size_t i = 0; i < n; ++i) {
      f.push_back(random_vector(d, rng));
      targets.push_back(random_vector(d, rng));
      attn.push_back(attention_vector(targets.back()));
    }
    const PairLoss loss = attentive ? attentive_pair_loss(f, targets, attn) : mse_pair_loss(f, targets);
    for (std::size_t i = 0; i < n; ++i) {
      const auto fn = [&](const Tensor& v) {
        std::vector<Tensor> moved = f;
        moved[i] = v;
        return attentive ? apl(moved, targets, attn) : mse_pairwise(moved, targets);
      };
      check.compare(loss.grad[i], finite_difference_grad(fn, f[i], o.step));
    }
    check.finish_trial();
  }
  return check.result();
}

GradcheckRow check_block(const GradcheckOptions& o, Rng& rng) {
  constexpr std::size_t kDim = 8;
  Check check("residual_block", kTolerance, o);
  while (check.trials() < o.trials) {
    ResidualBlock block(kDim, 40.0, rng);
    for (double& v : block.inner.bias().value.values()) v = 0.1 * rng.normal();
    const Tensor x = random_vector(kDim, rng);
    const double gamma = rng.uniform();
    BlockCache cache;
    block_forward(block, x, gamma, &cache);
    const Tensor& pre = cache.pre_activation;
    if (std::any_of(pre.values().begin(), pre.values().end(), [&](double v) { return std::abs(v) < o.kink_margin; })) {
      check.redraw();
      continue;
    }
    const Tensor c = random_vector(kDim, rng);
    std::vector<Param*> params{&block.inner.weight(), &block.inner.bias(), &block.outer.weight(),
                               &block.outer.bias()};
    zero(params);
    const Tensor dx = block_backward(block, cache, c);
    const auto f_x = [&](const Tensor& v) { return projected(block_forward(block, v, gamma), c); };
    check.compare(dx, finite_difference_grad(f_x, x, o.step));
    const auto f_p = [&] { return projected(block_forward(block, x, gamma), c); };
    check.compare(flat_grads(params), numeric_param_grad(params, f_p, o.step));
    check.finish_trial();
  }
  return check.result();
}

GradcheckRow check_frontalize(const GradcheckOptions& o, Rng& rng) {
  constexpr std::size_t kDim = 8;
  Check check("frontalize", kTolerance, o);
  while (check.trials() < o.trials) {
    ProgressiveModule module(kDim, GateConfig{}, rng);
    const Tensor x = random_vector(kDim, rng);
    const double yaw = rng.uniform(-90.0, 90.0);
    FrontalizeCache cache;
    module.frontalize(x, yaw, &cache);
    if (ProgressiveModule::min_abs_pre_activation(cache) < o.kink_margin) {
      check.redraw();
      continue;
    }
    const Tensor c = random_vector(kDim, rng);
    const std::vector<Param*> params = module.params();
    zero(params);
    const Tensor dx = module.frontalize_backward(cache, c);
    const auto f_x = [&](const Tensor& v) { return projected(module.frontalize(v, yaw), c); };
    check.compare(dx, finite_difference_grad(f_x, x, o.step));
    const auto f_p = [&] { return projected(module.frontalize(x, yaw), c); };
    check.compare(flat_grads(params), numeric_param_grad(params, f_p, o.step));
    check.finish_trial();
  }
  return check.result();
}

GradcheckRow check_objective(const GradcheckOptions& o, Rng& rng) {
  constexpr std::size_t kDimIn = 6, kIdentities = 3, kPairs = 4;
  Check check("objective", kTolerance, o);
  TrainConfig cfg;
  cfg.hidden_dim = 8;
  cfg.embedding_dim = 8;
  while (check.trials() < o.trials) {
    cfg.seed = rng();
    cfg.loss_mode = rng.below(2) == 0 ? LossMode::kApl : LossMode::kMse;
    Model model = build_model(kDimIn, kIdentities, cfg);
    for (Param* p : model.all_params())
      if (p->value.rank() == 1)
        for (double& v : p->value.values()) v = 0.1 * rng.normal();

    Dataset samples;
    for (std::size_t i = 0; i < 2 * kPairs; ++i) {
      const int identity = static_cast<int>(i / 2 % kIdentities);
      const double yaw = i % 2 == 0 ? rng.uniform(-90.0, 90.0) : rng.uniform(-9.0, 9.0);
      samples.push_back({random_vector(kDimIn, rng), yaw, identity});
    }
    std::vector<TrainPair> batch;
    for (std::size_t i = 0; i < kPairs; ++i) {
      const auto label = static_cast<std::size_t>(samples[2 * i].identity);
      batch.push_back({&samples[2 * i], &samples[2 * i + 1], label, label});
    }

    model.zero_grad();
    const ObjectiveValue base = evaluate_objective(model, batch, cfg.loss_mode, cfg.lambda, true);
    if (base.min_abs_pre_activation < o.kink_margin) {
      check.redraw();
      continue;
    }
    const std::vector<Tensor> frozen = frontal_targets(model, batch);
    const std::vector<Param*> params = model.all_params();
    const std::vector<double> analytic = flat_grads(params);
    const auto f = [&] { return evaluate_objective(model, batch, cfg.loss_mode, cfg.lambda, false, &frozen).total; };
    check.compare(analytic, numeric_param_grad(params, f, o.step));
    check.finish_trial();
  }
  return check.result();
}

}  // namespace

std::vector<GradcheckRow> run_gradcheck(const GradcheckOptions& opts) {
  if (opts.trials < 1) throw ValidationError("gradcheck needs at least one trial");
  if (!(opts.step > 0.0) || !(opts.kink_margin > opts.step))
    throw ValidationError("gradcheck step must be positive and smaller than the kink margin");
  const Rng root(opts.seed);
  std::vector<GradcheckRow> rows;
  std::uint64_t stream = 0;
  auto next = [&] { return root.split(++stream); };
  {
    Rng r = next();
    rows.push_back(check_affine(opts, r));
  }
  {
    Rng r = next();
    rows.push_back(check_relu(opts, r));
  }
  {
    Rng r = next();
    rows.push_back(check_hadamard(opts, r));
  }
  {
    Rng r = next();
    rows.push_back(check_cross_entropy(opts, r));
  }
  {
    Rng r = next();
    rows.push_back(check_pair_loss(opts, r, false));
  }
  {
    Rng r = next();
    rows.push_back(check_pair_loss(opts, r, true));
  }
  {
    Rng r = next();
    rows.push_back(check_block(opts, r));
  }
  {
    Rng r = next();
    rows.push_back(check_frontalize(opts, r));
  }
  {
    Rng r = next();
    rows.push_back(check_objective(opts, r));
  }
  return rows;
}

bool all_passed(const std::vector<GradcheckRow>& rows) {
  return std::all_of(rows.begin(), rows.end(), [](const GradcheckRow& r) { return r.passed; });
}

void write_gradcheck_csv(std::ostream& out, const std::vector<GradcheckRow>& rows) {
  out << "component,trials,redrawn,max_rel_error,tolerance,passed\n";
  for (const auto& r : rows) {
    out << r.component << ',' << r.trials << ',' << r.redrawn << ',' << format_double(r.max_rel_error) << ','
        << format_double(r.tolerance) << ',' << (r.passed ? "true" : "false") << '\n';
  }
}

}  // namespace posefront
