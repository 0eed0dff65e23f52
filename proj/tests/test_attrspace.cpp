#include "bggn/attrspace.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "testutil.hpp"

using namespace bggn;
using namespace bggn::attrspace;

namespace {

AttributeVector av(std::initializer_list<int> bits) {
  std::vector<std::uint8_t> b;
  for (int v : bits) b.push_back(static_cast<std::uint8_t>(v));
  return AttributeVector(std::move(b));
}

SyntheticLandscape random_landscape(int d, std::uint64_t seed, double noise = 0.0) {
  Rng rng(seed);
  SyntheticLandscape ls;
  ls.dimension = d;
  ls.offset = rng.normal();
  for (int i = 0; i < d; ++i) ls.linear.push_back(0.5 * rng.normal());
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j)
      if (rng.bernoulli(0.3)) ls.pairwise.push_back({i, j, 0.4 * rng.normal()});
  Cohort cohort;
  cohort.assignment = {{0, 1}, {d - 1, 0}};
  cohort.boost = 1.5;
  ls.cohorts.push_back(cohort);
  ls.marginals.assign(static_cast<std::size_t>(d), 0.5);
  ls.noise_sigma = noise;
  ls.seed = seed;
  return ls;
}

}  // namespace

TEST_CASE("aggregate_bias: mean of three records") {
  std::vector<SampleLossRecord> records = {
      {av({1, 0}), 0.1}, {av({1, 0}), 0.2}, {av({1, 0}), 0.3}};
  const auto table = aggregate_bias(records);
  REQUIRE(table.size() == 1);
  CHECK(table.at(av({1, 0})).bias == doctest::Approx(0.2));
  CHECK(table.at(av({1, 0})).count == 3);
}

TEST_CASE("aggregate_bias: singleton record") {
  const auto table = aggregate_bias({{av({0, 1, 1}), 0.7}});
  CHECK(table.at(av({0, 1, 1})).bias == doctest::Approx(0.7));
  CHECK(table.at(av({0, 1, 1})).count == 1);
}

TEST_CASE("aggregate_bias: matches a naive group-by-mean recomputation") {
  Rng rng(101);
  std::vector<SampleLossRecord> records;
  for (int i = 0; i < 50; ++i) {
    AttributeVector a = AttributeVector::from_index(rng.uniform_int(8), 3);
    records.push_back({a, rng.uniform()});
  }
  const auto table = aggregate_bias(records);

  // naive oracle: two passes with separate sum/count maps
  std::map<std::string, double> sums;
  std::map<std::string, int> counts;
  for (const auto& rec : records) {
    sums[rec.attribute.to_string()] += rec.loss;
    counts[rec.attribute.to_string()] += 1;
  }
  CHECK(table.size() == sums.size());
  for (const auto& [a, stats] : table) {
    CHECK(stats.bias == doctest::Approx(sums[a.to_string()] / counts[a.to_string()]).epsilon(1e-12));
    CHECK(stats.count == counts[a.to_string()]);
  }
}

TEST_CASE("aggregate_bias: permutation invariance") {
  Rng rng(202);
  std::vector<SampleLossRecord> records;
  for (int i = 0; i < 30; ++i) {
    records.push_back({AttributeVector::from_index(rng.uniform_int(4), 2), rng.uniform()});
  }
  auto shuffled = records;
  rng.shuffle(shuffled);
  const auto a = aggregate_bias(records);
  const auto b = aggregate_bias(shuffled);
  REQUIRE(a.size() == b.size());
  for (const auto& [key, stats] : a) {
    CHECK(b.at(key).bias == doctest::Approx(stats.bias).epsilon(1e-12));
    CHECK(b.at(key).count == stats.count);
  }
}

TEST_CASE("aggregate_bias: error paths") {
  CHECK_THROWS_AS(aggregate_bias({}), std::invalid_argument);
  CHECK_THROWS_AS(aggregate_bias({{av({1, 0}), 0.1}, {av({1}), 0.1}}), std::invalid_argument);
  CHECK_THROWS_AS(aggregate_bias({{av({1, 0}), -0.5}}), std::invalid_argument);
}

TEST_CASE("split_by_group: partition arithmetic and disjointness") {
  GroupBiasTable table;
  for (std::uint64_t i = 0; i < 10; ++i) {
    table[AttributeVector::from_index(i, 4)] = {0.1 * static_cast<double>(i), 1};
  }
  const auto split = split_by_group(table, 0.3, 42);
  CHECK(split.holdout.size() == 3);
  CHECK(split.observation.size() == 7);
  for (const auto& [a, stats] : split.holdout) CHECK(split.observation.count(a) == 0);
  // union equals the input key set
  GroupBiasTable merged = split.observation;
  for (const auto& [a, stats] : split.holdout) merged[a] = stats;
  CHECK(merged.size() == table.size());
}

TEST_CASE("split_by_group: deterministic given seed") {
  GroupBiasTable table;
  for (std::uint64_t i = 0; i < 20; ++i) table[AttributeVector::from_index(i, 5)] = {0.5, 2};
  const auto s1 = split_by_group(table, 0.25, 7);
  const auto s2 = split_by_group(table, 0.25, 7);
  CHECK(s1.holdout == s2.holdout);
  CHECK(s1.observation == s2.observation);
  const auto s3 = split_by_group(table, 0.25, 8);
  CHECK(s3.holdout != s1.holdout);  // overwhelmingly likely under a different seed
}

TEST_CASE("split_by_group: 70/30 split at CelebA-like scale") {
  // 7864 + 3370 = 11234 observed groups, holdout fraction 0.3
  GroupBiasTable table;
  for (std::uint64_t i = 0; i < 11234; ++i) table[AttributeVector::from_index(i, 16)] = {0.2, 1};
  const auto split = split_by_group(table, 0.3, 1);
  CHECK(split.holdout.size() == 3370);
  CHECK(split.observation.size() == 7864);
}

TEST_CASE("split_by_group: fraction out of range") {
  GroupBiasTable table;
  table[av({0})] = {0.1, 1};
  table[av({1})] = {0.2, 1};
  CHECK_THROWS_AS(split_by_group(table, 0.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(split_by_group(table, 1.0, 1), std::invalid_argument);
}

TEST_CASE("landscape_bias: constant landscape is ln 2") {
  SyntheticLandscape ls;
  ls.dimension = 3;
  ls.linear.assign(3, 0.0);
  ls.marginals.assign(3, 0.5);
  for (const auto& a : EnumerationRange(3)) {
    CHECK(landscape_bias(ls, a) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
}

TEST_CASE("landscape_bias: single cohort closed form") {
  SyntheticLandscape ls;
  ls.dimension = 4;
  ls.linear.assign(4, 0.0);
  ls.marginals.assign(4, 0.5);
  const double h = 2.3;
  Cohort cohort;
  cohort.assignment = {{1, 1}, {2, 1}};
  cohort.boost = h;
  ls.cohorts.push_back(cohort);
  const double lo = landscape_bias(ls, av({0, 0, 0, 0}));
  const double hi = landscape_bias(ls, av({1, 1, 1, 1}));
  CHECK(hi - lo == doctest::Approx(std::log1p(std::exp(h)) - std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("landscape_bias: matches term-by-term recomputation") {
  const auto ls = random_landscape(4, 77);
  for (const auto& a : EnumerationRange(4)) {
    // independent evaluator
    double raw = ls.offset;
    for (int i = 0; i < 4; ++i) raw += ls.linear[static_cast<std::size_t>(i)] * a.bits[static_cast<std::size_t>(i)];
    for (const auto& t : ls.pairwise) {
      raw += t.weight * static_cast<double>(a.bits[static_cast<std::size_t>(t.i)]) *
             static_cast<double>(a.bits[static_cast<std::size_t>(t.j)]);
    }
    for (const auto& c : ls.cohorts) {
      bool match = true;
      for (const auto& [idx, bit] : c.assignment) {
        if (a.bits[static_cast<std::size_t>(idx)] != bit) match = false;
      }
      if (match) raw += c.boost;
    }
    const double expect = std::log1p(std::exp(raw));
    CHECK(landscape_bias(ls, a) == doctest::Approx(expect).epsilon(1e-10));
    CHECK(landscape_bias(ls, a) >= 0.0);
  }
}

TEST_CASE("landscape_bias: dimension mismatch throws") {
  const auto ls = random_landscape(4, 3);
  CHECK_THROWS_AS(landscape_bias(ls, av({1, 0})), std::invalid_argument);
}

TEST_CASE("sample_dataset: noiseless biases equal landscape_bias") {
  auto ls = random_landscape(5, 11, 0.0);
  const auto table = sample_dataset(ls, 12, 4);
  CHECK(table.size() == 12);
  for (const auto& [a, stats] : table) {
    CHECK(stats.bias == doctest::Approx(landscape_bias(ls, a)).epsilon(1e-12));
    CHECK(stats.count == 4);
  }
}

TEST_CASE("sample_dataset: exhaustive support at n_groups = 2^d") {
  auto ls = random_landscape(4, 13, 0.0);
  const auto table = sample_dataset(ls, 16, 1);
  CHECK(table.size() == 16);
  std::uint64_t code = 0;
  for (const auto& [a, stats] : table) CHECK(a.to_index() == code++);
}

TEST_CASE("sample_dataset: rejects n_groups above 2^d") {
  auto ls = random_landscape(3, 5);
  CHECK_THROWS_AS(sample_dataset(ls, 9, 1), std::invalid_argument);
}

TEST_CASE("sample_dataset: group error shrinks like 1/sqrt(samples_per_group)") {
  // Monte Carlo over 100 repetitions at two sample counts
  const int reps = 100;
  double rmse_small = 0.0, rmse_large = 0.0;
  for (int rep = 0; rep < reps; ++rep) {
    auto ls = random_landscape(4, 500 + static_cast<std::uint64_t>(rep), 0.8);
    const auto coarse = sample_dataset(ls, 16, 4);
    const auto fine = sample_dataset(ls, 16, 400);
    for (const auto& [a, stats] : coarse) {
      const double err = stats.bias - landscape_bias(ls, a);
      rmse_small += err * err;
    }
    for (const auto& [a, stats] : fine) {
      const double err = stats.bias - landscape_bias(ls, a);
      rmse_large += err * err;
    }
  }
  rmse_small = std::sqrt(rmse_small / (16.0 * reps));
  rmse_large = std::sqrt(rmse_large / (16.0 * reps));
  // 100x more samples per group => ~10x smaller error (allow slack for the
  // max(0, .) clipping and finite reps)
  CHECK(rmse_large < rmse_small / 5.0);
}

TEST_CASE("enumerate_space: d=2 ascending binary order") {
  AttributeSpace space{2, {}};
  std::vector<std::string> seen;
  for (const auto& a : enumerate_space(space)) seen.push_back(a.to_string());
  CHECK(seen == std::vector<std::string>{"00", "01", "10", "11"});
}

TEST_CASE("enumerate_space: d=10 yields 1024 distinct vectors") {
  AttributeSpace space{10, {}};
  std::set<AttributeVector> seen;
  std::uint64_t n = 0;
  for (const auto& a : enumerate_space(space)) {
    seen.insert(a);
    ++n;
  }
  CHECK(n == 1024);
  CHECK(seen.size() == 1024);
}

TEST_CASE("enumerate_space: d=1") {
  AttributeSpace space{1, {}};
  std::vector<std::string> seen;
  for (const auto& a : enumerate_space(space)) seen.push_back(a.to_string());
  CHECK(seen == std::vector<std::string>{"0", "1"});
}

TEST_CASE("enumerate_space: cap exceeded names the override") {
  AttributeSpace space{25, {}};
  try {
    enumerate_space(space);
    FAIL("expected an exception");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("cap") != std::string::npos);
  }
  // explicit override works
  CHECK_NOTHROW(enumerate_space(space, 25));
}

TEST_CASE("enumeration streams restart independently") {
  const EnumerationRange range(3);
  std::uint64_t first_pass = 0, second_pass = 0;
  for (auto it = range.begin(); it != range.end(); ++it) ++first_pass;
  for (auto it = range.begin(); it != range.end(); ++it) ++second_pass;
  CHECK(first_pass == 8);
  CHECK(second_pass == 8);
}

TEST_CASE("group csv round trip and duplicate merging") {
  std::stringstream csv;
  csv << "a0,a1,bias,count\n";
  csv << "1,0,0.2,3\n";
  csv << "0,1,0.5,1\n";
  csv << "1,0,0.4,1\n";  // duplicate row: merged with count weights
  const auto table = read_group_csv(csv);
  CHECK(table.size() == 2);
  CHECK(table.at(av({1, 0})).bias == doctest::Approx((0.2 * 3 + 0.4) / 4.0));
  CHECK(table.at(av({1, 0})).count == 4);

  std::stringstream out;
  write_group_csv(table, out);
  std::stringstream in2(out.str());
  const auto table2 = read_group_csv(in2);
  CHECK(table2.size() == table.size());
  for (const auto& [a, stats] : table) {
    CHECK(table2.at(a).bias == doctest::Approx(stats.bias).epsilon(1e-15));
    CHECK(table2.at(a).count == stats.count);
  }
}

TEST_CASE("group csv without count column defaults to 1") {
  std::stringstream csv;
  csv << "a0,a1,a2,bias\n0,1,1,0.75\n";
  const auto table = read_group_csv(csv);
  CHECK(table.at(av({0, 1, 1})).bias == doctest::Approx(0.75));
  CHECK(table.at(av({0, 1, 1})).count == 1);
}

TEST_CASE("group csv rejects malformed input") {
  std::stringstream bad_header("x,y,bias\n0,1,0.1\n");
  CHECK_THROWS_AS(read_group_csv(bad_header), std::invalid_argument);
  std::stringstream bad_bit("a0,bias\n2,0.1\n");
  CHECK_THROWS_AS(read_group_csv(bad_bit), std::invalid_argument);
  std::stringstream negative("a0,bias\n1,-0.1\n");
  CHECK_THROWS_AS(read_group_csv(negative), std::invalid_argument);
}

TEST_CASE("sample csv round trip feeds aggregate_bias") {
  std::stringstream csv;
  csv << "a0,a1,loss\n1,0,0.1\n1,0,0.3\n0,1,0.9\n";
  const auto records = read_sample_csv(csv);
  REQUIRE(records.size() == 3);
  const auto table = aggregate_bias(records);
  CHECK(table.at(av({1, 0})).bias == doctest::Approx(0.2));
  CHECK(table.at(av({0, 1})).count == 1);

  std::stringstream out;
  write_sample_csv(records, out);
  std::stringstream in2(out.str());
  const auto records2 = read_sample_csv(in2);
  REQUIRE(records2.size() == records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(records2[i].attribute == records[i].attribute);
    CHECK(records2[i].loss == doctest::Approx(records[i].loss).epsilon(1e-15));
  }
}

TEST_CASE("landscape json round trip") {
  const auto ls = random_landscape(5, 99, 0.25);
  const auto text = landscape_to_json(ls);
  const auto parsed = landscape_from_json(text);
  CHECK(parsed.dimension == ls.dimension);
  CHECK(parsed.offset == doctest::Approx(ls.offset).epsilon(1e-15));
  CHECK(parsed.noise_sigma == doctest::Approx(ls.noise_sigma));
  CHECK(parsed.seed == ls.seed);
  REQUIRE(parsed.pairwise.size() == ls.pairwise.size());
  for (const auto& a : EnumerationRange(5)) {
    CHECK(landscape_bias(parsed, a) == doctest::Approx(landscape_bias(ls, a)).epsilon(1e-12));
  }
}

TEST_CASE("landscape json rejects unknown keys") {
  CHECK_THROWS_AS(landscape_from_json(R"({"dimension": 2, "bogus": 1})"), std::invalid_argument);
}

TEST_CASE("attribute names default to a{i}") {
  AttributeSpace space{3, {"male", "", "young"}};
  CHECK(space.name_of(0) == "male");
  CHECK(space.name_of(1) == "a1");
  CHECK(space.name_of(2) == "young");
}
