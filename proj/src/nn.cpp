#include "bggn/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace bggn::nn {

Matrix Matrix::filled(int r, int c, double v) {
  Matrix m(r, c);
  std::fill(m.data.begin(), m.data.end(), v);
  return m;
}

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw std::invalid_argument("Matrix::from_rows: empty input");
  Matrix m(static_cast<int>(rows.size()), static_cast<int>(rows.front().size()));
  for (int r = 0; r < m.rows; ++r) {
    if (static_cast<int>(rows[r].size()) != m.cols) {
      throw std::invalid_argument("Matrix::from_rows: ragged rows");
    }
    for (int c = 0; c < m.cols; ++c) m.at(r, c) = rows[r][c];
  }
  return m;
}

bool Matrix::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) throw std::invalid_argument("matmul: inner dimensions differ");
  Matrix out(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    for (int k = 0; k < a.cols; ++k) {
      const double aik = a.at(i, k);
      if (aik == 0.0) continue;
      for (int j = 0; j < b.cols; ++j) {
        out.at(i, j) += aik * b.at(k, j);
      }
    }
  }
  return out;
}

Matrix transpose(const Matrix& m) {
  Matrix out(m.cols, m.rows);
  for (int r = 0; r < m.rows; ++r) {
    for (int c = 0; c < m.cols; ++c) out.at(c, r) = m.at(r, c);
  }
  return out;
}

namespace {
void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (!a.same_shape(b)) throw std::invalid_argument(std::string(what) + ": shape mismatch");
}
}  // namespace

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.data[i];
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  Matrix out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
  return out;
}

Matrix subtract(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "subtract");
  Matrix out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
  return out;
}

Matrix scale(const Matrix& a, double s) {
  Matrix out = a;
  for (double& v : out.data) v *= s;
  return out;
}

void add_in_place(Matrix& a, const Matrix& b, double s) {
  require_same_shape(a, b, "add_in_place");
  for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += s * b.data[i];
}

double sum(const Matrix& m) {
  double total = 0.0;
  for (double v : m.data) total += v;
  return total;
}

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Softplus: return "softplus";
  }
  throw std::logic_error("activation_name: unknown activation");
}

Activation activation_from_name(const std::string& name) {
  if (name == "identity") return Activation::Identity;
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu") return Activation::Relu;
  if (name == "sigmoid") return Activation::Sigmoid;
  if (name == "softplus") return Activation::Softplus;
  throw std::invalid_argument("unknown activation: " + name);
}

double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double apply_activation(Activation a, double x) {
  switch (a) {
    case Activation::Identity: return x;
    case Activation::Tanh: return std::tanh(x);
    case Activation::Relu: return x > 0.0 ? x : 0.0;
    case Activation::Sigmoid: return sigmoid(x);
    case Activation::Softplus: return softplus(x);
  }
  throw std::logic_error("apply_activation: unknown activation");
}

double activation_derivative(Activation a, double pre, double post) {
  switch (a) {
    case Activation::Identity: return 1.0;
    case Activation::Tanh: return 1.0 - post * post;
    case Activation::Relu: return pre > 0.0 ? 1.0 : 0.0;
    case Activation::Sigmoid: return post * (1.0 - post);
    case Activation::Softplus: return sigmoid(pre);
  }
  throw std::logic_error("activation_derivative: unknown activation");
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& w : weights) n += w.data.size();
  for (const auto& b : biases) n += b.data.size();
  return n;
}

Mlp make_mlp(const std::vector<int>& sizes, const std::vector<Activation>& acts, Rng& rng) {
  if (sizes.size() < 2) throw std::invalid_argument("make_mlp: need at least two layer sizes");
  if (acts.size() != sizes.size() - 1) {
    throw std::invalid_argument("make_mlp: one activation per layer required");
  }
  Mlp mlp;
  mlp.acts = acts;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int fan_in = sizes[l];
    const int fan_out = sizes[l + 1];
    if (fan_in < 1 || fan_out < 1) throw std::invalid_argument("make_mlp: layer sizes must be positive");
    Matrix w(fan_in, fan_out);
    const double std_dev = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : w.data) v = std_dev * rng.normal();
    mlp.weights.push_back(std::move(w));
    mlp.biases.push_back(Matrix::zeros(1, fan_out));
  }
  return mlp;
}

Matrix forward(const Mlp& mlp, const Matrix& input, ForwardCache* cache) {
  if (input.cols != mlp.input_dim()) {
    throw std::invalid_argument("forward: input width does not match first layer");
  }
  if (cache) {
    cache->input = input;
    cache->pre.clear();
    cache->post.clear();
    cache->owner = &mlp;
  }
  Matrix h = input;
  for (int l = 0; l < mlp.layer_count(); ++l) {
    Matrix pre = matmul(h, mlp.weights[l]);
    for (int r = 0; r < pre.rows; ++r) {
      for (int c = 0; c < pre.cols; ++c) pre.at(r, c) += mlp.biases[l].at(0, c);
    }
    Matrix post = pre;
    for (double& v : post.data) v = apply_activation(mlp.acts[l], v);
    if (cache) {
      cache->pre.push_back(pre);
      cache->post.push_back(post);
    }
    h = std::move(post);
  }
  if (!h.all_finite()) throw std::runtime_error("forward: non-finite output");
  return h;
}

MlpGrads zero_grads(const Mlp& mlp) {
  MlpGrads g;
  for (const auto& w : mlp.weights) g.weights.push_back(Matrix::zeros(w.rows, w.cols));
  for (const auto& b : mlp.biases) g.biases.push_back(Matrix::zeros(b.rows, b.cols));
  return g;
}

void accumulate(MlpGrads& into, const MlpGrads& from, double s) {
  for (std::size_t i = 0; i < into.weights.size(); ++i) add_in_place(into.weights[i], from.weights[i], s);
  for (std::size_t i = 0; i < into.biases.size(); ++i) add_in_place(into.biases[i], from.biases[i], s);
}

void scale_grads(MlpGrads& grads, double s) {
  for (auto& w : grads.weights)
    for (double& v : w.data) v *= s;
  for (auto& b : grads.biases)
    for (double& v : b.data) v *= s;
}

Matrix backward(const Mlp& mlp, const ForwardCache& cache, const Matrix& output_grad,
                MlpGrads& grads) {
  if (cache.owner != &mlp || static_cast<int>(cache.pre.size()) != mlp.layer_count()) {
    throw std::invalid_argument("backward: cache does not belong to this model");
  }
  if (!output_grad.same_shape(cache.post.back())) {
    throw std::invalid_argument("backward: output gradient shape mismatch");
  }
  Matrix delta = output_grad;
  for (int l = mlp.layer_count() - 1; l >= 0; --l) {
    // through the activation
    const Matrix& pre = cache.pre[l];
    const Matrix& post = cache.post[l];
    for (int r = 0; r < delta.rows; ++r) {
      for (int c = 0; c < delta.cols; ++c) {
        delta.at(r, c) *= activation_derivative(mlp.acts[l], pre.at(r, c), post.at(r, c));
      }
    }
    const Matrix& layer_in = (l == 0) ? cache.input : cache.post[l - 1];
    add_in_place(grads.weights[l], matmul(transpose(layer_in), delta));
    for (int c = 0; c < delta.cols; ++c) {
      double col_sum = 0.0;
      for (int r = 0; r < delta.rows; ++r) col_sum += delta.at(r, c);
      grads.biases[l].at(0, c) += col_sum;
    }
    if (l > 0) delta = matmul(delta, transpose(mlp.weights[l]));
  }
  return matmul(delta, transpose(mlp.weights[0]));
}

std::vector<Matrix*> mlp_params(Mlp& mlp) {
  std::vector<Matrix*> out;
  for (auto& w : mlp.weights) out.push_back(&w);
  for (auto& b : mlp.biases) out.push_back(&b);
  return out;
}

std::vector<const Matrix*> mlp_params(const Mlp& mlp) {
  std::vector<const Matrix*> out;
  for (const auto& w : mlp.weights) out.push_back(&w);
  for (const auto& b : mlp.biases) out.push_back(&b);
  return out;
}

std::vector<const Matrix*> grad_views(const MlpGrads& grads) {
  std::vector<const Matrix*> out;
  for (const auto& w : grads.weights) out.push_back(&w);
  for (const auto& b : grads.biases) out.push_back(&b);
  return out;
}

void Adam::step(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads) {
  if (params.size() != grads.size()) throw std::invalid_argument("Adam::step: list size mismatch");
  if (m_.empty()) {
    for (const Matrix* p : params) {
      m_.push_back(Matrix::zeros(p->rows, p->cols));
      v_.push_back(Matrix::zeros(p->rows, p->cols));
    }
  }
  if (m_.size() != params.size()) throw std::invalid_argument("Adam::step: parameter count changed");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& p = *params[i];
    const Matrix& g = *grads[i];
    if (!p.same_shape(g) || !p.same_shape(m_[i])) {
      throw std::invalid_argument("Adam::step: shape mismatch");
    }
    if (!g.all_finite()) throw std::runtime_error("Adam::step: non-finite gradient");
    for (std::size_t j = 0; j < p.data.size(); ++j) {
      const double grad = g.data[j];
      m_[i].data[j] = cfg_.beta1 * m_[i].data[j] + (1.0 - cfg_.beta1) * grad;
      v_[i].data[j] = cfg_.beta2 * v_[i].data[j] + (1.0 - cfg_.beta2) * grad * grad;
      const double m_hat = m_[i].data[j] / bc1;
      const double v_hat = v_[i].data[j] / bc2;
      p.data[j] -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
    }
  }
}

Matrix gaussian_reparam(const Matrix& mean, const Matrix& log_variance, const Matrix& noise) {
  if (!mean.same_shape(log_variance) || !mean.same_shape(noise)) {
    throw std::invalid_argument("gaussian_reparam: shape mismatch");
  }
  Matrix z = mean;
  for (std::size_t i = 0; i < z.data.size(); ++i) {
    z.data[i] += std::exp(0.5 * log_variance.data[i]) * noise.data[i];
  }
  return z;
}

ReparamGrads gaussian_reparam_backward(const Matrix& log_variance, const Matrix& noise,
                                       const Matrix& dz) {
  if (!log_variance.same_shape(noise) || !log_variance.same_shape(dz)) {
    throw std::invalid_argument("gaussian_reparam_backward: shape mismatch");
  }
  ReparamGrads g;
  g.mean = dz;
  g.log_variance = dz;
  for (std::size_t i = 0; i < dz.data.size(); ++i) {
    g.log_variance.data[i] =
        dz.data[i] * 0.5 * std::exp(0.5 * log_variance.data[i]) * noise.data[i];
  }
  return g;
}

std::vector<double> gaussian_logpdf(const Matrix& z, const Matrix& mean,
                                    const Matrix& log_variance) {
  if (!z.same_shape(mean) || !z.same_shape(log_variance)) {
    throw std::invalid_argument("gaussian_logpdf: shape mismatch");
  }
  constexpr double kLog2Pi = 1.8378770664093454835606594728112;
  std::vector<double> out(static_cast<std::size_t>(z.rows), 0.0);
  for (int r = 0; r < z.rows; ++r) {
    double acc = 0.0;
    for (int c = 0; c < z.cols; ++c) {
      const double lv = log_variance.at(r, c);
      const double diff = z.at(r, c) - mean.at(r, c);
      acc += -0.5 * kLog2Pi - 0.5 * lv - diff * diff / (2.0 * std::exp(lv));
    }
    out[static_cast<std::size_t>(r)] = acc;
  }
  return out;
}

GaussianLogpdfGrads gaussian_logpdf_backward(const Matrix& z, const Matrix& mean,
                                             const Matrix& log_variance,
                                             const std::vector<double>& row_weights) {
  if (!z.same_shape(mean) || !z.same_shape(log_variance)) {
    throw std::invalid_argument("gaussian_logpdf_backward: shape mismatch");
  }
  if (static_cast<int>(row_weights.size()) != z.rows) {
    throw std::invalid_argument("gaussian_logpdf_backward: one weight per row required");
  }
  GaussianLogpdfGrads g{Matrix(z.rows, z.cols), Matrix(z.rows, z.cols), Matrix(z.rows, z.cols)};
  for (int r = 0; r < z.rows; ++r) {
    const double w = row_weights[static_cast<std::size_t>(r)];
    for (int c = 0; c < z.cols; ++c) {
      const double lv = log_variance.at(r, c);
      const double inv_var = std::exp(-lv);
      const double diff = z.at(r, c) - mean.at(r, c);
      g.z.at(r, c) = w * (-diff * inv_var);
      g.mean.at(r, c) = w * (diff * inv_var);
      g.log_variance.at(r, c) = w * (-0.5 + 0.5 * diff * diff * inv_var);
    }
  }
  return g;
}

double clamp_prob(double p) {
  if (p < kProbEps) return kProbEps;
  if (p > 1.0 - kProbEps) return 1.0 - kProbEps;
  return p;
}

double bernoulli_logpmf(const std::vector<std::uint8_t>& bits, const std::vector<double>& probs) {
  if (bits.size() != probs.size()) throw std::invalid_argument("bernoulli_logpmf: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < bits.size(); ++i) {
    const double p = clamp_prob(probs[i]);
    acc += bits[i] ? std::log(p) : std::log(1.0 - p);
  }
  return acc;
}

std::vector<double> bernoulli_logpmf_grad(const std::vector<std::uint8_t>& bits,
                                          const std::vector<double>& probs) {
  if (bits.size() != probs.size())
    throw std::invalid_argument("bernoulli_logpmf_grad: length mismatch");
  std::vector<double> g(bits.size(), 0.0);
  for (std::size_t i = 0; i < bits.size(); ++i) {
    const double p = clamp_prob(probs[i]);
    g[i] = bits[i] ? 1.0 / p : -1.0 / (1.0 - p);
  }
  return g;
}

double bernoulli_entropy(const std::vector<double>& probs) {
  double acc = 0.0;
  for (double raw : probs) {
    const double p = clamp_prob(raw);
    acc += -p * std::log(p) - (1.0 - p) * std::log(1.0 - p);
  }
  return acc;
}

std::vector<double> bernoulli_entropy_grad(const std::vector<double>& probs) {
  std::vector<double> g(probs.size(), 0.0);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = clamp_prob(probs[i]);
    g[i] = std::log((1.0 - p) / p);
  }
  return g;
}

}  // namespace bggn::nn
