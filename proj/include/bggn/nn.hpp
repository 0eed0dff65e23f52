// Minimal differentiable substrate: row-major matrices, MLPs with exact
// reverse-mode gradients, an Adam optimizer, Gaussian reparameterization and
// the Gaussian / Bernoulli log-densities used by the generative objectives.
//
// Everything is double precision and deterministic given explicit inputs.
// Analytic gradients are verified against central finite differences in the
// test suite.

#ifndef BGGN_NN_HPP
#define BGGN_NN_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "bggn/rng.hpp"

namespace bggn::nn {

struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;  // row-major

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

  static Matrix zeros(int r, int c) { return Matrix(r, c); }
  static Matrix filled(int r, int c, double v);
  static Matrix from_rows(const std::vector<std::vector<double>>& rows);

  bool same_shape(const Matrix& other) const {
    return rows == other.rows && cols == other.cols;
  }
  bool all_finite() const;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix add(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);
void add_in_place(Matrix& a, const Matrix& b, double s = 1.0);
double sum(const Matrix& m);

enum class Activation { Identity, Tanh, Relu, Sigmoid, Softplus };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);
double apply_activation(Activation a, double x);
double activation_derivative(Activation a, double pre, double post);

/// Numerically stable log(1 + e^x).
double softplus(double x);
double sigmoid(double x);

/// Fully connected network. weights[l] is [in_l, out_l]; biases[l] is
/// [1, out_l]; activation acts[l] follows the affine map of layer l.
struct Mlp {
  std::vector<Matrix> weights;
  std::vector<Matrix> biases;
  std::vector<Activation> acts;

  int layer_count() const { return static_cast<int>(weights.size()); }
  int input_dim() const { return weights.front().rows; }
  int output_dim() const { return weights.back().cols; }
  std::size_t parameter_count() const;
};

/// Glorot-style init: W ~ N(0, 1/fan_in), b = 0.
Mlp make_mlp(const std::vector<int>& sizes, const std::vector<Activation>& acts, Rng& rng);

/// Activations recorded during forward, sufficient for an exact backward.
struct ForwardCache {
  Matrix input;
  std::vector<Matrix> pre;   // affine outputs per layer
  std::vector<Matrix> post;  // activation outputs per layer
  const Mlp* owner = nullptr;
};

/// Runs the network on a batch (rows = samples). When `cache` is non-null it
/// is filled for a later backward pass.
Matrix forward(const Mlp& mlp, const Matrix& input, ForwardCache* cache = nullptr);

struct MlpGrads {
  std::vector<Matrix> weights;
  std::vector<Matrix> biases;
};

MlpGrads zero_grads(const Mlp& mlp);
void accumulate(MlpGrads& into, const MlpGrads& from, double s = 1.0);
void scale_grads(MlpGrads& grads, double s);

/// Exact reverse-mode pass. Accumulates parameter gradients into `grads`
/// (which must match `mlp`'s shapes) and returns the gradient w.r.t. the
/// input batch. Throws if the cache does not belong to `mlp`.
Matrix backward(const Mlp& mlp, const ForwardCache& cache, const Matrix& output_grad,
                MlpGrads& grads);

/// Flat views used by the optimizer and by checkpointing.
std::vector<Matrix*> mlp_params(Mlp& mlp);
std::vector<const Matrix*> mlp_params(const Mlp& mlp);
std::vector<const Matrix*> grad_views(const MlpGrads& grads);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adaptive-moment optimizer over an explicit parameter list. Moment buffers
/// are allocated on the first step; afterwards shapes must stay fixed.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  /// Applies one bias-corrected update. Throws on non-finite gradients.
  void step(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads);

  long step_count() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  void set_learning_rate(double lr) { cfg_.lr = lr; }

 private:
  AdamConfig cfg_;
  long t_ = 0;
  std::vector<Matrix> m_, v_;
};

/// z = mean + exp(0.5 * log_variance) * noise, elementwise.
Matrix gaussian_reparam(const Matrix& mean, const Matrix& log_variance, const Matrix& noise);

/// Backward of the reparameterization given dL/dz.
struct ReparamGrads {
  Matrix mean;
  Matrix log_variance;
};
ReparamGrads gaussian_reparam_backward(const Matrix& log_variance, const Matrix& noise,
                                       const Matrix& dz);

/// Per-row log N(z; mean, diag exp(log_variance)).
std::vector<double> gaussian_logpdf(const Matrix& z, const Matrix& mean,
                                    const Matrix& log_variance);

/// Gradients of sum_r w_r * logpdf(row r) w.r.t. z, mean and log_variance.
struct GaussianLogpdfGrads {
  Matrix z;
  Matrix mean;
  Matrix log_variance;
};
GaussianLogpdfGrads gaussian_logpdf_backward(const Matrix& z, const Matrix& mean,
                                             const Matrix& log_variance,
                                             const std::vector<double>& row_weights);

/// Probability floor used whenever a Bernoulli probability enters a log.
inline constexpr double kProbEps = 1e-6;

double clamp_prob(double p);

/// sum_i [ a_i log p_i + (1 - a_i) log(1 - p_i) ] with clamped probabilities.
double bernoulli_logpmf(const std::vector<std::uint8_t>& bits, const std::vector<double>& probs);

/// d logpmf / d p_i evaluated at the (unclamped) probabilities.
std::vector<double> bernoulli_logpmf_grad(const std::vector<std::uint8_t>& bits,
                                          const std::vector<double>& probs);

/// sum_i [ -p_i log p_i - (1-p_i) log(1-p_i) ]; 0 <= value <= d * log 2.
double bernoulli_entropy(const std::vector<double>& probs);
std::vector<double> bernoulli_entropy_grad(const std::vector<double>& probs);

}  // namespace bggn::nn

#endif  // BGGN_NN_HPP
