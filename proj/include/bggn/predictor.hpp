// Bias-value regressor over attribute vectors. A shared MLP trunk feeds a
// softplus regression head (predictions stay non-negative) and, optionally,
// an auxiliary classifier over equal-frequency bias bins. Skewed bias
// distributions are handled by inverse-bin-frequency sample reweighting.

#ifndef BGGN_PREDICTOR_HPP
#define BGGN_PREDICTOR_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "bggn/attrspace.hpp"
#include "bggn/nn.hpp"

namespace bggn::predictor {

struct PredictorConfig {
  std::vector<int> hidden = {64, 64};
  int epochs = 400;
  int batch_size = 32;
  double learning_rate = 1e-3;
  bool reweight = true;
  int bins = 10;
  double aux_weight = 0.1;  // lambda for the bin-classification loss; 0 disables
  double val_fraction = 0.1;
  int patience = 40;
  std::uint64_t seed = 0;
};

class BiasPredictor {
 public:
  BiasPredictor() = default;
  BiasPredictor(nn::Mlp trunk, nn::Mlp reg_head, nn::Mlp aux_head, std::vector<double> bin_edges,
                PredictorConfig config);

  double predict(const attrspace::AttributeVector& a) const;
  std::vector<double> predict_batch(const std::vector<attrspace::AttributeVector>& batch) const;

  int dimension() const { return trunk_.input_dim(); }
  const std::vector<double>& bin_edges() const { return bin_edges_; }
  const PredictorConfig& config() const { return config_; }

  std::string to_json() const;
  static BiasPredictor from_json(const std::string& text);
  void save(const std::string& path) const;
  static BiasPredictor load(const std::string& path);

  // mutable access for the trainer
  nn::Mlp& trunk() { return trunk_; }
  nn::Mlp& reg_head() { return reg_head_; }
  nn::Mlp& aux_head() { return aux_head_; }
  const nn::Mlp& trunk() const { return trunk_; }

 private:
  nn::Mlp trunk_;     // d -> hidden (tanh)
  nn::Mlp reg_head_;  // hidden -> 1 (softplus)
  nn::Mlp aux_head_;  // hidden -> bins (logits)
  std::vector<double> bin_edges_;  // internal edges, ascending, deduplicated
  PredictorConfig config_;
};

/// Internal equal-frequency edges (B-1 quantiles, deduplicated). Used for
/// the auxiliary classification targets, where balanced classes are wanted.
std::vector<double> equal_frequency_edges(std::vector<double> values, int bins);

/// Internal equal-width edges over [min, max]. Used for the reweighting
/// counts; under skew these bins have very different occupancies, which is
/// what inverse-count weights act on.
std::vector<double> equal_width_edges(const std::vector<double>& values, int bins);

/// Bin index of `value` given internal edges; in [0, edges.size()].
int bin_index(double value, const std::vector<double>& edges);

/// Per-sample weights proportional to 1 / count(bin), normalized to mean 1.
std::vector<double> inverse_bin_weights(const std::vector<double>& values,
                                        const std::vector<double>& edges);

struct TrainDiagnostics {
  double initial_mse = 0.0;  // on the training slice, before any update
  double final_mse = 0.0;    // on the training slice, returned parameters
  int epochs_run = 0;
  std::vector<double> sample_weights;  // per training group, table key order
};

/// Fits the regressor by weighted MSE (plus the optional auxiliary
/// cross-entropy), early-stopping on a group-level validation slice.
/// Deterministic given config.seed.
BiasPredictor train_predictor(const attrspace::GroupBiasTable& table,
                              const PredictorConfig& config,
                              TrainDiagnostics* diagnostics = nullptr);

}  // namespace bggn::predictor

#endif  // BGGN_PREDICTOR_HPP
