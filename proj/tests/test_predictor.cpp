#include "bggn/predictor.hpp"

#include <cmath>

#include "doctest.h"
#include "testutil.hpp"

using namespace bggn;
using namespace bggn::predictor;
using attrspace::AttributeVector;
using attrspace::GroupBiasTable;

namespace {

attrspace::SyntheticLandscape cohort_landscape(int d, std::uint64_t seed) {
  attrspace::SyntheticLandscape ls;
  ls.dimension = d;
  ls.offset = -1.5;
  ls.linear.assign(static_cast<std::size_t>(d), 0.0);
  for (int i = 0; i < d; ++i) ls.linear[static_cast<std::size_t>(i)] = 0.1 * ((i % 3) - 1);
  attrspace::Cohort cohort;
  cohort.assignment = {{1, 1}, {3, 1}};
  cohort.boost = 3.0;
  ls.cohorts.push_back(cohort);
  ls.marginals.assign(static_cast<std::size_t>(d), 0.5);
  ls.noise_sigma = 0.0;
  ls.seed = seed;
  return ls;
}

PredictorConfig fast_config(std::uint64_t seed) {
  PredictorConfig cfg;
  cfg.hidden = {32, 32};
  cfg.epochs = 300;
  cfg.patience = 60;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("train_predictor: fits a constant-bias table within 1%") {
  GroupBiasTable table;
  const double c = 0.8;
  for (std::uint64_t i = 0; i < 16; ++i) table[AttributeVector::from_index(i, 4)] = {c, 1};
  auto cfg = fast_config(3);
  cfg.epochs = 1200;
  cfg.patience = 1 << 20;
  cfg.val_fraction = 0.0;
  const auto model = train_predictor(table, cfg);
  for (const auto& [a, stats] : table) {
    CHECK(std::abs(model.predict(a) - c) < 0.01 * c);
  }
}

TEST_CASE("train_predictor: rank correlation > 0.9 on a d=6 exhaustive table") {
  const auto ls = cohort_landscape(6, 10);
  const auto table = attrspace::sample_dataset(ls, 64, 1);
  auto cfg = fast_config(11);
  cfg.epochs = 2000;
  cfg.patience = 1 << 20;
  cfg.val_fraction = 0.0;
  const auto model = train_predictor(table, cfg);

  std::vector<double> predicted, truth;
  for (const auto& [a, stats] : table) {
    predicted.push_back(model.predict(a));
    truth.push_back(attrspace::landscape_bias(ls, a));
  }
  CHECK(testutil::spearman(predicted, truth) > 0.9);
}

TEST_CASE("train_predictor: noiseless d=4 exhaustive table, max error < 0.05") {
  const auto ls = cohort_landscape(4, 20);
  const auto table = attrspace::sample_dataset(ls, 16, 1);
  auto cfg = fast_config(21);
  cfg.epochs = 4000;
  cfg.patience = 1 << 20;
  cfg.val_fraction = 0.0;  // memorize all 16 groups
  const auto model = train_predictor(table, cfg);
  double worst = 0.0;
  for (const auto& [a, stats] : table) {
    worst = std::max(worst, std::abs(model.predict(a) - stats.bias));
  }
  CHECK(worst < 0.05);
}

TEST_CASE("train_predictor: reweighting helps the high-bias decile on skewed tables") {
  // 95% low-bias groups, 5% high-bias; compare mean error on the top decile
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(900 + seed);
    GroupBiasTable table;
    const int d = 8;
    std::vector<std::uint64_t> codes;
    while (codes.size() < 200) {
      const auto code = rng.uniform_int(std::uint64_t{1} << d);
      if (std::find(codes.begin(), codes.end(), code) == codes.end()) codes.push_back(code);
    }
    for (std::size_t i = 0; i < codes.size(); ++i) {
      const bool high = i < 20;  // 10%: the top decile is exactly the planted set
      const double bias = high ? 2.0 + 0.2 * rng.uniform() : 0.1 + 0.1 * rng.uniform();
      table[AttributeVector::from_index(codes[i], d)] = {bias, 1};
    }

    auto base_cfg = fast_config(seed);
    base_cfg.epochs = 400;
    base_cfg.patience = 1 << 20;
    base_cfg.val_fraction = 0.0;
    base_cfg.aux_weight = 0.0;
    auto with = base_cfg;
    with.reweight = true;
    auto without = base_cfg;
    without.reweight = false;

    const auto model_with = train_predictor(table, with);
    const auto model_without = train_predictor(table, without);

    // top decile by true bias
    std::vector<std::pair<double, AttributeVector>> ranked;
    for (const auto& [a, stats] : table) ranked.push_back({stats.bias, a});
    std::sort(ranked.rbegin(), ranked.rend());
    double err_with = 0.0, err_without = 0.0;
    const std::size_t top = ranked.size() / 10;
    for (std::size_t i = 0; i < top; ++i) {
      err_with += std::abs(model_with.predict(ranked[i].second) - ranked[i].first);
      err_without += std::abs(model_without.predict(ranked[i].second) - ranked[i].first);
    }
    if (err_with < err_without) ++wins;
  }
  CHECK(wins >= 3);  // majority of 5 seeds
}

TEST_CASE("predict: non-negative on random inputs") {
  const auto ls = cohort_landscape(5, 30);
  const auto table = attrspace::sample_dataset(ls, 32, 1);
  auto cfg = fast_config(31);
  cfg.epochs = 50;
  const auto model = train_predictor(table, cfg);
  Rng rng(32);
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = AttributeVector::from_index(rng.uniform_int(32), 5);
    CHECK(model.predict(a) >= 0.0);
  }
}

TEST_CASE("predict: deterministic and dimension-checked") {
  const auto ls = cohort_landscape(4, 40);
  const auto table = attrspace::sample_dataset(ls, 16, 1);
  auto cfg = fast_config(41);
  cfg.epochs = 30;
  const auto model = train_predictor(table, cfg);
  const auto a = AttributeVector::from_index(9, 4);
  CHECK(model.predict(a) == model.predict(a));
  CHECK_THROWS_AS(model.predict(AttributeVector::from_index(1, 3)), std::invalid_argument);
}

TEST_CASE("train_predictor: training MSE decreases from epoch 0 to the end") {
  const auto ls = cohort_landscape(6, 50);
  const auto table = attrspace::sample_dataset(ls, 48, 1);
  TrainDiagnostics diag;
  auto cfg = fast_config(51);
  cfg.epochs = 120;
  train_predictor(table, cfg, &diag);
  CHECK(diag.final_mse < diag.initial_mse);
}

TEST_CASE("train_predictor: degenerate single-key table throws") {
  GroupBiasTable table;
  table[AttributeVector::from_index(0, 3)] = {0.5, 1};
  CHECK_THROWS_AS(train_predictor(table, fast_config(1)), std::invalid_argument);
}

TEST_CASE("inverse_bin_weights: inversely proportional to bin counts, mean 1") {
  // values spread over 3 distinct bins with counts 6, 3, 1
  std::vector<double> values;
  for (int i = 0; i < 6; ++i) values.push_back(0.1);
  for (int i = 0; i < 3; ++i) values.push_back(0.5);
  values.push_back(0.9);
  const std::vector<double> edges = {0.3, 0.7};
  const auto weights = inverse_bin_weights(values, edges);

  double mean = 0.0;
  for (double w : weights) mean += w;
  mean /= static_cast<double>(weights.size());
  CHECK(mean == doctest::Approx(1.0).epsilon(1e-12));

  // w * count constant across bins
  const double k0 = weights[0] * 6.0;
  const double k1 = weights[6] * 3.0;
  const double k2 = weights[9] * 1.0;
  CHECK(k0 == doctest::Approx(k1).epsilon(1e-12));
  CHECK(k1 == doctest::Approx(k2).epsilon(1e-12));
}

TEST_CASE("equal_frequency_edges: quantile bins on distinct values") {
  std::vector<double> values;
  for (int i = 0; i < 100; ++i) values.push_back(static_cast<double>(i));
  const auto edges = equal_frequency_edges(values, 10);
  CHECK(edges.size() == 9);
  // each bin gets ~10 samples
  std::vector<int> counts(10, 0);
  for (double v : values) counts[static_cast<std::size_t>(bin_index(v, edges))]++;
  for (int c : counts) CHECK(std::abs(c - 10) <= 1);
}

TEST_CASE("equal_frequency_edges: collapses under heavy ties") {
  std::vector<double> values(50, 0.2);
  values.push_back(0.9);
  const auto edges = equal_frequency_edges(values, 10);
  CHECK(edges.size() <= 1);
}

TEST_CASE("checkpoint: save/load round trip preserves predictions") {
  const auto ls = cohort_landscape(5, 60);
  const auto table = attrspace::sample_dataset(ls, 24, 1);
  auto cfg = fast_config(61);
  cfg.epochs = 40;
  const auto model = train_predictor(table, cfg);
  const auto text = model.to_json();
  const auto restored = BiasPredictor::from_json(text);
  CHECK(restored.bin_edges() == model.bin_edges());
  for (const auto& [a, stats] : table) {
    CHECK(restored.predict(a) == model.predict(a));
  }
}
