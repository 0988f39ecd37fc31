#include "posefront/numcore.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "posefront/errors.hpp"

namespace posefront {

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Tensor::Tensor(std::size_t length) : rank_(1), rows_(length), cols_(1), values_(length, 0.0) {
  if (length == 0) throw DimensionError("tensor length must be positive");
}

Tensor::Tensor(std::size_t rows, std::size_t cols)
    : rank_(2), rows_(rows), cols_(cols), values_(rows * cols, 0.0) {
  if (rows == 0 || cols == 0) throw DimensionError("matrix dimensions must be positive");
}

Tensor Tensor::from(std::vector<double> values) {
  Tensor t(values.size());
  t.values_ = std::move(values);
  return t;
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t cols = rows.size() == 0 ? 0 : rows.begin()->size();
  Tensor t(rows.size(), cols);
  std::size_t r = 0;
  for (const auto& row : rows) {
    if (row.size() != cols) throw DimensionError("ragged rows in matrix literal");
    std::copy(row.begin(), row.end(), t.values_.begin() + static_cast<std::ptrdiff_t>(r * cols));
    ++r;
  }
  return t;
}

void Tensor::fill(double value) { std::fill(values_.begin(), values_.end(), value); }

void require_finite(std::span<const double> values, std::string_view what) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError("non-finite value in " + std::string(what));
  }
}

Param::Param(Tensor initial) : value(std::move(initial)), grad(value), momentum(value) {
  grad.fill(0.0);
  momentum.fill(0.0);
}

void SgdConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw ValidationError("learning rate must be nonnegative and finite");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ValidationError("weight decay must be nonnegative");
}

namespace {

// Four interleaved partial sums: a fixed summation order that the compiler can
// vectorize without reassociating floating-point adds.
double dot_kernel(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

void require_vector(const Tensor& t, std::string_view what) {
  if (t.rank() != 1) throw DimensionError(std::string(what) + " must be a vector");
}

}  // namespace

Tensor affine_forward(const Tensor& weight, const Tensor& bias, const Tensor& x) {
  if (weight.rank() != 2) throw DimensionError("affine weight must be a matrix");
  require_vector(bias, "affine bias");
  require_vector(x, "affine input");
  if (weight.cols() != x.size() || weight.rows() != bias.size())
    throw DimensionError("affine shape mismatch: W is " + std::to_string(weight.rows()) + "x" +
                         std::to_string(weight.cols()) + ", b has " + std::to_string(bias.size()) +
                         ", x has " + std::to_string(x.size()));
  const std::size_t rows = weight.rows();
  const std::size_t cols = weight.cols();
  Tensor y(rows);
  const double* w = weight.data();
  const double* xv = x.data();
  for (std::size_t r = 0; r < rows; ++r) y[r] = dot_kernel(w + r * cols, xv, cols) + bias[r];
  require_finite(y.values(), "affine output");
  return y;
}

Tensor relu_forward(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
  return y;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw DimensionError("hadamard operands differ in shape");
  Tensor y = a;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= b[i];
  return y;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("dot operands differ in length");
  return dot_kernel(a.data(), b.data(), a.size());
}

double squared_norm(std::span<const double> a) { return dot(a, a); }

Tensor affine_backward(Param& weight, Param& bias, const Tensor& cached_input, const Tensor& upstream) {
  if (cached_input.empty()) throw StateError("affine backward called without a cached forward input");
  const std::size_t rows = weight.value.rows();
  const std::size_t cols = weight.value.cols();
  if (upstream.size() != rows || cached_input.size() != cols)
    throw DimensionError("affine backward shape mismatch");
  require_finite(upstream.values(), "affine upstream gradient");

  double* __restrict dw = weight.grad.data();
  const double* __restrict w = weight.value.data();
  const double* __restrict x = cached_input.data();
  Tensor downstream(cols);
  double* __restrict dx = downstream.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double g = upstream[r];
    bias.grad[r] += g;
    double* __restrict dwr = dw + r * cols;
    const double* __restrict wr = w + r * cols;
    for (std::size_t c = 0; c < cols; ++c) dwr[c] += g * x[c];
    for (std::size_t c = 0; c < cols; ++c) dx[c] += g * wr[c];
  }
  return downstream;
}

Tensor relu_backward(const Tensor& cached_input, const Tensor& upstream) {
  if (cached_input.empty()) throw StateError("relu backward called without a cached forward input");
  if (!cached_input.same_shape(upstream)) throw DimensionError("relu backward shape mismatch");
  Tensor downstream = upstream;
  for (std::size_t i = 0; i < downstream.size(); ++i) {
    if (!(cached_input[i] > 0.0)) downstream[i] = 0.0;
  }
  return downstream;
}

Tensor hadamard_backward(const Tensor& other_operand, const Tensor& upstream) {
  if (other_operand.empty()) throw StateError("hadamard backward called without a cached operand");
  return hadamard(other_operand, upstream);
}

AffineLayer::AffineLayer(std::size_t in_dim, std::size_t out_dim, Rng& rng)
    : weight_(glorot_uniform(out_dim, in_dim, rng)), bias_(Tensor(out_dim)) {}

AffineLayer::AffineLayer(Tensor weight, Tensor bias) : weight_(std::move(weight)), bias_(std::move(bias)) {
  if (weight_.value.rank() != 2 || bias_.value.rank() != 1 || bias_.value.size() != weight_.value.rows())
    throw DimensionError("affine layer parameters have inconsistent shapes");
}

Tensor AffineLayer::forward(const Tensor& x, Cache* cache) const {
  Tensor y = affine_forward(weight_.value, bias_.value, x);
  if (cache != nullptr) cache->input = x;
  return y;
}

Tensor AffineLayer::backward(const Cache& cache, const Tensor& upstream) {
  return affine_backward(weight_, bias_, cache.input, upstream);
}

Tensor glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor w(rows, cols);
  const double s = std::sqrt(6.0 / static_cast<double>(rows + cols));
  for (double& v : w.values()) v = rng.uniform(-s, s);
  return w;
}

void sgd_step(std::span<Param* const> params, const SgdConfig& cfg) {
  for (Param* p : params) {
    double* value = p->value.data();
    const double* grad = p->grad.data();
    double* buf = p->momentum.data();
    const std::size_t n = p->value.size();
    for (std::size_t i = 0; i < n; ++i) {
      const double g = grad[i] + cfg.weight_decay * value[i];
      buf[i] = cfg.momentum * buf[i] + g;
      value[i] -= cfg.learning_rate * buf[i];
    }
  }
}

Tensor finite_difference_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h) {
  if (!(h > 0.0)) throw DomainError("finite-difference step must be positive");
  Tensor grad = x;
  Tensor probe = x;
  for (std::size_t k = 0; k < x.size(); ++k) {
    probe[k] = x[k] + h;
    const double plus = f(probe);
    probe[k] = x[k] - h;
    const double minus = f(probe);
    probe[k] = x[k];
    if (!std::isfinite(plus) || !std::isfinite(minus))
      throw NumericError("objective is non-finite at coordinate " + std::to_string(k));
    grad[k] = (plus - minus) / (2.0 * h);
  }
  return grad;
}

double relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  if (analytic.size() != numeric.size()) throw DimensionError("gradient vectors differ in length");
  double diff = 0.0;
  double na = 0.0;
  double nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  const double scale = std::sqrt(std::max(na, nn));
  if (scale < 1e-12) return 0.0;
  return std::sqrt(diff) / scale;
}

}  // namespace posefront

namespace posefront {

double clip_grad_norm(std::span<Param* const> params, double max_norm) {
  if (!(max_norm > 0.0)) throw DomainError("max_norm must be positive");
  double sq = 0.0;
  for (const Param* p : params) sq += squared_norm(p->grad.values());
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (Param* p : params)
      for (double& g : p->grad.values()) g *= scale;
  }
  return norm;
}

}  // namespace posefront
