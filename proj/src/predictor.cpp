#include "bggn/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "bggn/checkpoint.hpp"

namespace bggn::predictor {

using attrspace::AttributeVector;
using attrspace::GroupBiasTable;
using nn::Matrix;

BiasPredictor::BiasPredictor(nn::Mlp trunk, nn::Mlp reg_head, nn::Mlp aux_head,
                             std::vector<double> bin_edges, PredictorConfig config)
    : trunk_(std::move(trunk)),
      reg_head_(std::move(reg_head)),
      aux_head_(std::move(aux_head)),
      bin_edges_(std::move(bin_edges)),
      config_(std::move(config)) {}

namespace {

Matrix bits_to_row(const AttributeVector& a) {
  Matrix row(1, a.dimension());
  for (int i = 0; i < a.dimension(); ++i) row.at(0, i) = a.bits[static_cast<std::size_t>(i)];
  return row;
}

Matrix bits_to_matrix(const std::vector<AttributeVector>& batch) {
  if (batch.empty()) throw std::invalid_argument("bits_to_matrix: empty batch");
  const int d = batch.front().dimension();
  Matrix m(static_cast<int>(batch.size()), d);
  for (int r = 0; r < m.rows; ++r) {
    if (batch[static_cast<std::size_t>(r)].dimension() != d) {
      throw std::invalid_argument("bits_to_matrix: mixed dimensions");
    }
    for (int c = 0; c < d; ++c) {
      m.at(r, c) = batch[static_cast<std::size_t>(r)].bits[static_cast<std::size_t>(c)];
    }
  }
  return m;
}

}  // namespace

double BiasPredictor::predict(const AttributeVector& a) const {
  if (a.dimension() != dimension()) {
    throw std::invalid_argument("predict: attribute dimension does not match the model");
  }
  const Matrix h = nn::forward(trunk_, bits_to_row(a));
  const Matrix y = nn::forward(reg_head_, h);
  return y.at(0, 0);
}

std::vector<double> BiasPredictor::predict_batch(const std::vector<AttributeVector>& batch) const {
  if (batch.empty()) return {};
  const Matrix h = nn::forward(trunk_, bits_to_matrix(batch));
  const Matrix y = nn::forward(reg_head_, h);
  std::vector<double> out(batch.size());
  for (int r = 0; r < y.rows; ++r) out[static_cast<std::size_t>(r)] = y.at(r, 0);
  return out;
}

std::string BiasPredictor::to_json() const {
  nlohmann::json doc;
  doc["kind"] = "bias_predictor";
  doc["trunk"] = mlp_to_json(trunk_);
  doc["reg_head"] = mlp_to_json(reg_head_);
  doc["aux_head"] = mlp_to_json(aux_head_);
  doc["bin_edges"] = bin_edges_;
  doc["seed"] = config_.seed;
  return doc.dump(2);
}

BiasPredictor BiasPredictor::from_json(const std::string& text) {
  const auto doc = nlohmann::json::parse(text);
  if (doc.value("kind", "") != "bias_predictor") {
    throw std::invalid_argument("predictor checkpoint: wrong kind");
  }
  BiasPredictor p;
  p.trunk_ = mlp_from_json(doc.at("trunk"));
  p.reg_head_ = mlp_from_json(doc.at("reg_head"));
  p.aux_head_ = mlp_from_json(doc.at("aux_head"));
  p.bin_edges_ = doc.at("bin_edges").get<std::vector<double>>();
  p.config_.seed = doc.value("seed", std::uint64_t{0});
  return p;
}

void BiasPredictor::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write predictor checkpoint: " + path);
  out << to_json() << "\n";
}

BiasPredictor BiasPredictor::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open predictor checkpoint: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_json(buffer.str());
}

std::vector<double> equal_frequency_edges(std::vector<double> values, int bins) {
  if (bins < 1) throw std::invalid_argument("equal_frequency_edges: bins must be >= 1");
  if (values.empty()) throw std::invalid_argument("equal_frequency_edges: empty values");
  std::sort(values.begin(), values.end());
  std::vector<double> edges;
  const auto n = values.size();
  for (int k = 1; k < bins; ++k) {
    const auto idx = std::min(
        n - 1,
        static_cast<std::size_t>(static_cast<double>(k) * static_cast<double>(n) / bins));
    edges.push_back(values[idx]);
  }
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

std::vector<double> equal_width_edges(const std::vector<double>& values, int bins) {
  if (bins < 1) throw std::invalid_argument("equal_width_edges: bins must be >= 1");
  if (values.empty()) throw std::invalid_argument("equal_width_edges: empty values");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  if (hi <= lo) return {};  // constant values: one bin
  std::vector<double> edges;
  for (int k = 1; k < bins; ++k) {
    edges.push_back(lo + (hi - lo) * static_cast<double>(k) / bins);
  }
  return edges;
}

int bin_index(double value, const std::vector<double>& edges) {
  return static_cast<int>(std::upper_bound(edges.begin(), edges.end(), value) - edges.begin());
}

std::vector<double> inverse_bin_weights(const std::vector<double>& values,
                                        const std::vector<double>& edges) {
  const int n_bins = static_cast<int>(edges.size()) + 1;
  std::vector<std::int64_t> counts(static_cast<std::size_t>(n_bins), 0);
  std::vector<int> assignment(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    assignment[i] = bin_index(values[i], edges);
    counts[static_cast<std::size_t>(assignment[i])] += 1;
  }
  int occupied = 0;
  for (auto c : counts)
    if (c > 0) ++occupied;
  // w_i = 1/count(bin_i), scaled so the mean over samples is exactly 1:
  // sum_i 1/count(bin_i) = #occupied bins.
  const double scale = static_cast<double>(values.size()) / static_cast<double>(occupied);
  std::vector<double> weights(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    weights[i] = scale / static_cast<double>(counts[static_cast<std::size_t>(assignment[i])]);
  }
  return weights;
}

namespace {

double plain_mse(const BiasPredictor& p, const std::vector<AttributeVector>& keys,
                 const std::vector<double>& targets) {
  const auto preds = p.predict_batch(keys);
  double acc = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double diff = preds[i] - targets[i];
    acc += diff * diff;
  }
  return acc / static_cast<double>(preds.size());
}

struct Snapshot {
  nn::Mlp trunk, reg_head, aux_head;
};

}  // namespace

BiasPredictor train_predictor(const GroupBiasTable& table, const PredictorConfig& config,
                              TrainDiagnostics* diagnostics) {
  if (table.size() < 2) {
    throw std::invalid_argument("train_predictor: need at least two groups");
  }
  if (config.bins < 1) throw std::invalid_argument("train_predictor: bins must be >= 1");
  const int d = attrspace::table_dimension(table);

  std::vector<AttributeVector> keys;
  std::vector<double> biases;
  for (const auto& [a, stats] : table) {
    keys.push_back(a);
    biases.push_back(stats.bias);
  }
  const auto n = keys.size();

  // group-level validation slice for early stopping
  Rng split_rng(Rng::derive(config.seed, "predictor-valsplit"));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  split_rng.shuffle(order);
  auto val_count =
      static_cast<std::size_t>(std::llround(config.val_fraction * static_cast<double>(n)));
  if (n - val_count < 2) val_count = 0;  // tiny tables train without a slice

  std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(val_count),
                                     order.end());
  std::vector<std::size_t> val_idx(order.begin(),
                                   order.begin() + static_cast<std::ptrdiff_t>(val_count));
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(val_idx.begin(), val_idx.end());

  std::vector<AttributeVector> train_keys;
  std::vector<double> train_biases;
  for (auto i : train_idx) {
    train_keys.push_back(keys[i]);
    train_biases.push_back(biases[i]);
  }
  std::vector<AttributeVector> val_keys;
  std::vector<double> val_biases;
  for (auto i : val_idx) {
    val_keys.push_back(keys[i]);
    val_biases.push_back(biases[i]);
  }

  const auto edges = equal_frequency_edges(train_biases, config.bins);
  const int n_bins = static_cast<int>(edges.size()) + 1;

  std::vector<double> weights(train_keys.size(), 1.0);
  if (config.reweight) {
    weights = inverse_bin_weights(train_biases, equal_width_edges(train_biases, config.bins));
  }
  std::vector<int> bin_targets;
  for (double b : train_biases) bin_targets.push_back(bin_index(b, edges));

  const Matrix train_inputs = bits_to_matrix(train_keys);

  Rng init_rng(Rng::derive(config.seed, "predictor-init"));
  std::vector<int> trunk_sizes = {d};
  for (int h : config.hidden) trunk_sizes.push_back(h);
  std::vector<nn::Activation> trunk_acts(config.hidden.size(), nn::Activation::Tanh);
  nn::Mlp trunk = nn::make_mlp(trunk_sizes, trunk_acts, init_rng);
  const int top = trunk_sizes.back();
  nn::Mlp reg_head = nn::make_mlp({top, 1}, {nn::Activation::Softplus}, init_rng);
  nn::Mlp aux_head = nn::make_mlp({top, n_bins}, {nn::Activation::Identity}, init_rng);

  BiasPredictor model(trunk, reg_head, aux_head, edges, config);

  const double initial_mse = plain_mse(model, train_keys, train_biases);

  nn::Adam adam(nn::AdamConfig{.lr = config.learning_rate});
  Rng epoch_rng(Rng::derive(config.seed, "predictor-epochs"));

  Snapshot best{model.trunk(), model.reg_head(), model.aux_head()};
  double best_val = val_idx.empty() ? initial_mse : plain_mse(model, val_keys, val_biases);
  int stale_epochs = 0;
  int epochs_run = 0;
  const bool use_aux = config.aux_weight > 0.0 && n_bins > 1;

  const auto n_train = train_keys.size();
  std::vector<std::size_t> batch_order(n_train);
  for (std::size_t i = 0; i < n_train; ++i) batch_order[i] = i;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    epoch_rng.shuffle(batch_order);
    for (std::size_t start = 0; start < n_train;
         start += static_cast<std::size_t>(config.batch_size)) {
      const auto end = std::min(n_train, start + static_cast<std::size_t>(config.batch_size));
      const int bsz = static_cast<int>(end - start);
      Matrix x(bsz, d);
      std::vector<double> y(static_cast<std::size_t>(bsz));
      std::vector<double> w(static_cast<std::size_t>(bsz));
      std::vector<int> bins_t(static_cast<std::size_t>(bsz));
      for (int r = 0; r < bsz; ++r) {
        const auto src = batch_order[start + static_cast<std::size_t>(r)];
        for (int c = 0; c < d; ++c) x.at(r, c) = train_inputs.at(static_cast<int>(src), c);
        y[static_cast<std::size_t>(r)] = train_biases[src];
        w[static_cast<std::size_t>(r)] = weights[src];
        bins_t[static_cast<std::size_t>(r)] = bin_targets[src];
      }

      nn::ForwardCache trunk_cache, reg_cache, aux_cache;
      const Matrix h = nn::forward(model.trunk(), x, &trunk_cache);
      const Matrix yhat = nn::forward(model.reg_head(), h, &reg_cache);

      Matrix dyhat(bsz, 1);
      for (int r = 0; r < bsz; ++r) {
        dyhat.at(r, 0) = 2.0 * w[static_cast<std::size_t>(r)] *
                         (yhat.at(r, 0) - y[static_cast<std::size_t>(r)]) / bsz;
      }
      nn::MlpGrads reg_grads = nn::zero_grads(model.reg_head());
      Matrix dh = nn::backward(model.reg_head(), reg_cache, dyhat, reg_grads);

      nn::MlpGrads aux_grads = nn::zero_grads(model.aux_head());
      if (use_aux) {
        const Matrix logits = nn::forward(model.aux_head(), h, &aux_cache);
        Matrix dlogits(bsz, n_bins);
        for (int r = 0; r < bsz; ++r) {
          double max_logit = logits.at(r, 0);
          for (int c = 1; c < n_bins; ++c) max_logit = std::max(max_logit, logits.at(r, c));
          double denom = 0.0;
          for (int c = 0; c < n_bins; ++c) denom += std::exp(logits.at(r, c) - max_logit);
          for (int c = 0; c < n_bins; ++c) {
            const double p = std::exp(logits.at(r, c) - max_logit) / denom;
            const double target = (c == bins_t[static_cast<std::size_t>(r)]) ? 1.0 : 0.0;
            dlogits.at(r, c) =
                config.aux_weight * w[static_cast<std::size_t>(r)] * (p - target) / bsz;
          }
        }
        const Matrix dh_aux = nn::backward(model.aux_head(), aux_cache, dlogits, aux_grads);
        nn::add_in_place(dh, dh_aux);
      }

      nn::MlpGrads trunk_grads = nn::zero_grads(model.trunk());
      nn::backward(model.trunk(), trunk_cache, dh, trunk_grads);

      std::vector<Matrix*> params;
      std::vector<const Matrix*> grads;
      for (auto* p : nn::mlp_params(model.trunk())) params.push_back(p);
      for (auto* p : nn::mlp_params(model.reg_head())) params.push_back(p);
      for (auto* p : nn::mlp_params(model.aux_head())) params.push_back(p);
      for (const auto* g : nn::grad_views(trunk_grads)) grads.push_back(g);
      for (const auto* g : nn::grad_views(reg_grads)) grads.push_back(g);
      for (const auto* g : nn::grad_views(aux_grads)) grads.push_back(g);
      adam.step(params, grads);
    }
    ++epochs_run;

    const double val_mse = val_idx.empty() ? plain_mse(model, train_keys, train_biases)
                                           : plain_mse(model, val_keys, val_biases);
    if (val_mse < best_val - 1e-12) {
      best_val = val_mse;
      best = Snapshot{model.trunk(), model.reg_head(), model.aux_head()};
      stale_epochs = 0;
    } else if (++stale_epochs >= config.patience) {
      break;
    }
  }

  BiasPredictor result(best.trunk, best.reg_head, best.aux_head, edges, config);
  if (diagnostics) {
    diagnostics->initial_mse = initial_mse;
    diagnostics->final_mse = plain_mse(result, train_keys, train_biases);
    diagnostics->epochs_run = epochs_run;
    diagnostics->sample_weights = weights;
  }
  return result;
}

}  // namespace bggn::predictor
