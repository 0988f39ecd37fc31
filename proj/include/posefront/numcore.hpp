#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string_view>
#include <vector>

#include "posefront/rng.hpp"

namespace posefront {

// Dense row-major tensor of rank 1 (vector) or rank 2 (matrix), 64-bit values.
// A default-constructed tensor is empty (rank 0) and only serves as "not set".
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::size_t length);
  Tensor(std::size_t rows, std::size_t cols);

  static Tensor from(std::vector<double> values);
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);

  int rank() const { return rank_; }
  bool empty() const { return rank_ == 0; }
  std::size_t size() const { return values_.size(); }
  // For rank 1, rows() is the length and cols() is 1.
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool same_shape(const Tensor& other) const {
    return rank_ == other.rank_ && rows_ == other.rows_ && cols_ == other.cols_;
  }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

  void fill(double value);

  bool operator==(const Tensor& other) const = default;

 private:
  int rank_ = 0;
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

// Throws NumericError naming `what` if any entry is NaN or infinite.
void require_finite(std::span<const double> values, std::string_view what);

// Trainable tensor with its gradient accumulator and momentum buffer.
struct Param {
  Tensor value;
  Tensor grad;
  Tensor momentum;

  Param() = default;
  explicit Param(Tensor initial);

  void zero_grad() { grad.fill(0.0); }
  std::size_t size() const { return value.size(); }
};

struct SgdConfig {
  double learning_rate = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;

  void validate() const;
};

// ---- forward kernels ----

Tensor affine_forward(const Tensor& weight, const Tensor& bias, const Tensor& x);
Tensor relu_forward(const Tensor& x);
Tensor hadamard(const Tensor& a, const Tensor& b);
double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);

// ---- backward kernels ----
// Gradients are accumulated (+=) into Param::grad; callers zero them per step.

// Given the input cached from affine_forward and dL/dy, accumulates dL/dW and dL/db
// and returns dL/dx.
Tensor affine_backward(Param& weight, Param& bias, const Tensor& cached_input, const Tensor& upstream);
// ReLU'(0) is taken as 0.
Tensor relu_backward(const Tensor& cached_input, const Tensor& upstream);
// d(a*b)/da given b; symmetric in the arguments.
Tensor hadamard_backward(const Tensor& other_operand, const Tensor& upstream);

// Affine layer with its own cache type, the building block of every model here.
class AffineLayer {
 public:
  struct Cache {
    Tensor input;
  };

  AffineLayer() = default;
  AffineLayer(std::size_t in_dim, std::size_t out_dim, Rng& rng);
  AffineLayer(Tensor weight, Tensor bias);

  std::size_t in_dim() const { return weight_.value.cols(); }
  std::size_t out_dim() const { return weight_.value.rows(); }

  Tensor forward(const Tensor& x, Cache* cache = nullptr) const;
  Tensor backward(const Cache& cache, const Tensor& upstream);

  Param& weight() { return weight_; }
  Param& bias() { return bias_; }
  const Param& weight() const { return weight_; }
  const Param& bias() const { return bias_; }
  std::size_t parameter_count() const { return weight_.size() + bias_.size(); }

 private:
  Param weight_;
  Param bias_;
};

// Uniform in [-s, s], s = sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng);

void sgd_step(std::span<Param* const> params, const SgdConfig& cfg);

// Rescales every gradient so their joint L2 norm is at most max_norm. Returns the norm before clipping.
double clip_grad_norm(std::span<Param* const> params, double max_norm);

// Central differences (f(x + h e_k) - f(x - h e_k)) / 2h for every coordinate of x.
Tensor finite_difference_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h);

// ||a - b|| / max(||a||, ||b||); 0 when both are (numerically) zero.
double relative_error(std::span<const double> analytic, std::span<const double> numeric);

}  // namespace posefront
