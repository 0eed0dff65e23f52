#include "bggn/attrspace.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "bggn/nn.hpp"
#include "json.hpp"

namespace bggn::attrspace {

AttributeVector::AttributeVector(std::vector<std::uint8_t> b) : bits(std::move(b)) {
  for (auto bit : bits) {
    if (bit > 1) throw std::invalid_argument("AttributeVector: bits must be 0 or 1");
  }
}

std::uint64_t AttributeVector::to_index() const {
  if (dimension() > 63) throw std::invalid_argument("AttributeVector::to_index: dimension > 63");
  std::uint64_t code = 0;
  for (auto bit : bits) code = (code << 1) | bit;
  return code;
}

AttributeVector AttributeVector::from_index(std::uint64_t index, int dimension) {
  if (dimension < 1 || dimension > 63) {
    throw std::invalid_argument("AttributeVector::from_index: bad dimension");
  }
  AttributeVector a;
  a.bits.resize(static_cast<std::size_t>(dimension));
  for (int i = dimension - 1; i >= 0; --i) {
    a.bits[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(index & 1);
    index >>= 1;
  }
  return a;
}

std::string AttributeVector::to_string() const {
  std::string s;
  s.reserve(bits.size());
  for (auto bit : bits) s.push_back(bit ? '1' : '0');
  return s;
}

std::string AttributeSpace::name_of(int index) const {
  if (index < 0 || index >= dimension) throw std::invalid_argument("name_of: index out of range");
  if (static_cast<std::size_t>(index) < attribute_names.size() &&
      !attribute_names[static_cast<std::size_t>(index)].empty()) {
    return attribute_names[static_cast<std::size_t>(index)];
  }
  return "a" + std::to_string(index);
}

int table_dimension(const GroupBiasTable& table) {
  if (table.empty()) throw std::invalid_argument("table_dimension: empty table");
  return table.begin()->first.dimension();
}

double mean_bias(const GroupBiasTable& table) {
  if (table.empty()) throw std::invalid_argument("mean_bias: empty table");
  double acc = 0.0;
  for (const auto& [a, stats] : table) acc += stats.bias;
  return acc / static_cast<double>(table.size());
}

bool Cohort::matches(const AttributeVector& a) const {
  for (const auto& [idx, bit] : assignment) {
    if (a.bits[static_cast<std::size_t>(idx)] != bit) return false;
  }
  return true;
}

void SyntheticLandscape::validate() const {
  if (dimension < 1) throw std::invalid_argument("landscape: dimension must be >= 1");
  if (static_cast<int>(linear.size()) != dimension) {
    throw std::invalid_argument("landscape: need one linear weight per attribute");
  }
  if (static_cast<int>(marginals.size()) != dimension) {
    throw std::invalid_argument("landscape: need one marginal per attribute");
  }
  for (double p : marginals) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("landscape: marginals must lie in (0,1)");
  }
  for (const auto& term : pairwise) {
    if (term.i < 0 || term.i >= dimension || term.j < 0 || term.j >= dimension || term.i == term.j) {
      throw std::invalid_argument("landscape: bad pairwise indices");
    }
  }
  for (const auto& cohort : cohorts) {
    if (cohort.boost < 0.0) throw std::invalid_argument("landscape: cohort boost must be >= 0");
    std::set<int> seen;
    for (const auto& [idx, bit] : cohort.assignment) {
      if (idx < 0 || idx >= dimension) throw std::invalid_argument("landscape: cohort index out of range");
      if (bit > 1) throw std::invalid_argument("landscape: cohort bits must be 0 or 1");
      if (!seen.insert(idx).second) throw std::invalid_argument("landscape: duplicate cohort index");
    }
  }
  if (noise_sigma < 0.0) throw std::invalid_argument("landscape: noise_sigma must be >= 0");
}

GroupBiasTable aggregate_bias(const std::vector<SampleLossRecord>& records) {
  if (records.empty()) throw std::invalid_argument("aggregate_bias: empty input");
  const int d = records.front().attribute.dimension();
  GroupBiasTable table;
  std::map<AttributeVector, double> totals;
  for (const auto& rec : records) {
    if (rec.attribute.dimension() != d) {
      throw std::invalid_argument("aggregate_bias: mixed attribute dimensions");
    }
    if (rec.loss < 0.0) throw std::invalid_argument("aggregate_bias: negative loss");
    totals[rec.attribute] += rec.loss;
    table[rec.attribute].count += 1;
  }
  for (auto& [a, stats] : table) stats.bias = totals[a] / static_cast<double>(stats.count);
  return table;
}

DatasetSplit split_by_group(const GroupBiasTable& table, double holdout_fraction,
                            std::uint64_t seed) {
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw std::invalid_argument("split_by_group: fraction must lie in (0,1)");
  }
  if (table.size() < 2) throw std::invalid_argument("split_by_group: need at least two groups");
  std::vector<AttributeVector> keys;
  keys.reserve(table.size());
  for (const auto& [a, stats] : table) keys.push_back(a);
  Rng rng(seed);
  rng.shuffle(keys);
  const auto holdout_count = static_cast<std::size_t>(
      std::llround(holdout_fraction * static_cast<double>(keys.size())));
  DatasetSplit split;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    auto& side = (i < holdout_count) ? split.holdout : split.observation;
    side[keys[i]] = table.at(keys[i]);
  }
  return split;
}

double landscape_bias(const SyntheticLandscape& landscape, const AttributeVector& a) {
  if (a.dimension() != landscape.dimension) {
    throw std::invalid_argument("landscape_bias: dimension mismatch");
  }
  double raw = landscape.offset;
  for (int i = 0; i < landscape.dimension; ++i) {
    raw += landscape.linear[static_cast<std::size_t>(i)] * a.bits[static_cast<std::size_t>(i)];
  }
  for (const auto& term : landscape.pairwise) {
    raw += term.weight * a.bits[static_cast<std::size_t>(term.i)] *
           a.bits[static_cast<std::size_t>(term.j)];
  }
  for (const auto& cohort : landscape.cohorts) {
    if (cohort.matches(a)) raw += cohort.boost;
  }
  return nn::softplus(raw);
}

GroupBiasTable sample_dataset(const SyntheticLandscape& landscape, std::uint64_t n_groups,
                              std::int64_t samples_per_group) {
  landscape.validate();
  if (samples_per_group < 1) throw std::invalid_argument("sample_dataset: samples_per_group >= 1");
  if (landscape.dimension > 62) throw std::invalid_argument("sample_dataset: dimension too large");
  const std::uint64_t space_size = std::uint64_t{1} << landscape.dimension;
  if (n_groups > space_size) {
    throw std::invalid_argument("sample_dataset: n_groups exceeds 2^d distinct vectors");
  }
  Rng rng(landscape.seed);
  std::set<AttributeVector> chosen;
  const std::uint64_t max_attempts = 50 * n_groups + 10000;
  std::uint64_t attempts = 0;
  while (chosen.size() < n_groups && attempts < max_attempts) {
    AttributeVector a;
    a.bits.resize(static_cast<std::size_t>(landscape.dimension));
    for (int i = 0; i < landscape.dimension; ++i) {
      a.bits[static_cast<std::size_t>(i)] =
          rng.bernoulli(landscape.marginals[static_cast<std::size_t>(i)]) ? 1 : 0;
    }
    chosen.insert(std::move(a));
    ++attempts;
  }
  // rejection stalled (tiny remaining support); finish deterministically
  if (chosen.size() < n_groups) {
    for (std::uint64_t code = 0; code < space_size && chosen.size() < n_groups; ++code) {
      chosen.insert(AttributeVector::from_index(code, landscape.dimension));
    }
  }
  GroupBiasTable table;
  const double noise_scale =
      landscape.noise_sigma / std::sqrt(static_cast<double>(samples_per_group));
  for (const auto& a : chosen) {
    const double truth = landscape_bias(landscape, a);
    const double noisy = truth + noise_scale * rng.normal();
    table[a] = GroupStats{std::max(0.0, noisy), samples_per_group};
  }
  return table;
}

EnumerationRange::EnumerationRange(int dimension, int cap) : dimension_(dimension) {
  if (dimension < 1) throw std::invalid_argument("enumerate_space: dimension must be >= 1");
  if (dimension > cap) {
    throw std::invalid_argument(
        "enumerate_space: dimension " + std::to_string(dimension) + " exceeds the enumeration cap " +
        std::to_string(cap) + "; pass a larger cap explicitly to override");
  }
  if (cap > 62) throw std::invalid_argument("enumerate_space: cap above 62 is not supported");
}

EnumerationRange enumerate_space(const AttributeSpace& space, int cap) {
  return EnumerationRange(space.dimension, cap);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::uint8_t parse_bit(const std::string& s, const char* what) {
  if (s == "0") return 0;
  if (s == "1") return 1;
  throw std::invalid_argument(std::string(what) + ": bit field must be 0 or 1, got '" + s + "'");
}

int header_dimension(const std::vector<std::string>& header, const char* what) {
  int d = 0;
  while (d < static_cast<int>(header.size()) && header[static_cast<std::size_t>(d)] == "a" + std::to_string(d)) {
    ++d;
  }
  if (d == 0) throw std::invalid_argument(std::string(what) + ": header must start with a0,a1,...");
  return d;
}

std::string trim(const std::string& s) {
  auto begin = s.find_first_not_of(" \t\r\n");
  auto end = s.find_last_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  return s.substr(begin, end - begin + 1);
}

}  // namespace

GroupBiasTable read_group_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("group csv: missing header");
  auto header = split_csv_line(trim(line));
  const int d = header_dimension(header, "group csv");
  const int extra = static_cast<int>(header.size()) - d;
  bool has_count = false;
  if (extra == 1 && header[static_cast<std::size_t>(d)] == "bias") {
    has_count = false;
  } else if (extra == 2 && header[static_cast<std::size_t>(d)] == "bias" &&
             header[static_cast<std::size_t>(d) + 1] == "count") {
    has_count = true;
  } else {
    throw std::invalid_argument("group csv: header must end with bias[,count]");
  }

  // merge duplicates with count-weighted means
  std::map<AttributeVector, std::pair<double, std::int64_t>> weighted;  // (sum bias*count, count)
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (static_cast<int>(fields.size()) != static_cast<int>(header.size())) {
      throw std::invalid_argument("group csv: row width does not match header");
    }
    AttributeVector a;
    a.bits.resize(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) a.bits[static_cast<std::size_t>(i)] = parse_bit(fields[static_cast<std::size_t>(i)], "group csv");
    const double bias = std::stod(fields[static_cast<std::size_t>(d)]);
    if (bias < 0.0) throw std::invalid_argument("group csv: bias must be >= 0");
    std::int64_t count = 1;
    if (has_count) {
      count = std::stoll(fields[static_cast<std::size_t>(d) + 1]);
      if (count < 1) throw std::invalid_argument("group csv: count must be >= 1");
    }
    auto& entry = weighted[a];
    entry.first += bias * static_cast<double>(count);
    entry.second += count;
  }
  if (weighted.empty()) throw std::invalid_argument("group csv: no data rows");
  GroupBiasTable table;
  for (const auto& [a, acc] : weighted) {
    table[a] = GroupStats{acc.first / static_cast<double>(acc.second), acc.second};
  }
  return table;
}

GroupBiasTable read_group_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open group csv: " + path);
  return read_group_csv(in);
}

void write_group_csv(const GroupBiasTable& table, std::ostream& out) {
  if (table.empty()) throw std::invalid_argument("write_group_csv: empty table");
  const int d = table_dimension(table);
  for (int i = 0; i < d; ++i) out << "a" << i << ",";
  out << "bias,count\n";
  out.precision(17);
  for (const auto& [a, stats] : table) {
    for (auto bit : a.bits) out << static_cast<int>(bit) << ",";
    out << stats.bias << "," << stats.count << "\n";
  }
}

void write_group_csv_file(const GroupBiasTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write group csv: " + path);
  write_group_csv(table, out);
}

std::vector<SampleLossRecord> read_sample_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("sample csv: missing header");
  auto header = split_csv_line(trim(line));
  const int d = header_dimension(header, "sample csv");
  if (static_cast<int>(header.size()) != d + 1 || header.back() != "loss") {
    throw std::invalid_argument("sample csv: header must end with loss");
  }
  std::vector<SampleLossRecord> records;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (static_cast<int>(fields.size()) != d + 1) {
      throw std::invalid_argument("sample csv: row width does not match header");
    }
    SampleLossRecord rec;
    rec.attribute.bits.resize(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) {
      rec.attribute.bits[static_cast<std::size_t>(i)] = parse_bit(fields[static_cast<std::size_t>(i)], "sample csv");
    }
    rec.loss = std::stod(fields.back());
    if (rec.loss < 0.0) throw std::invalid_argument("sample csv: loss must be >= 0");
    records.push_back(std::move(rec));
  }
  if (records.empty()) throw std::invalid_argument("sample csv: no data rows");
  return records;
}

std::vector<SampleLossRecord> read_sample_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open sample csv: " + path);
  return read_sample_csv(in);
}

void write_sample_csv(const std::vector<SampleLossRecord>& records, std::ostream& out) {
  if (records.empty()) throw std::invalid_argument("write_sample_csv: empty input");
  const int d = records.front().attribute.dimension();
  for (int i = 0; i < d; ++i) out << "a" << i << ",";
  out << "loss\n";
  out.precision(17);
  for (const auto& rec : records) {
    for (auto bit : rec.attribute.bits) out << static_cast<int>(bit) << ",";
    out << rec.loss << "\n";
  }
}

namespace {

using nlohmann::json;

void require_keys(const json& obj, const std::vector<std::string>& allowed, const char* what) {
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw std::invalid_argument(std::string(what) + ": unknown key '" + key + "'");
    }
  }
}

}  // namespace

SyntheticLandscape landscape_from_json(const std::string& text) {
  json doc = json::parse(text);
  require_keys(doc, {"dimension", "offset", "linear", "pairwise", "cohorts", "marginals",
                     "noise_sigma", "seed"},
               "landscape json");
  SyntheticLandscape ls;
  ls.dimension = doc.at("dimension").get<int>();
  ls.offset = doc.value("offset", 0.0);
  ls.linear = doc.value("linear", std::vector<double>(static_cast<std::size_t>(ls.dimension), 0.0));
  if (doc.contains("pairwise")) {
    for (const auto& term : doc.at("pairwise")) {
      if (!term.is_array() || term.size() != 3) {
        throw std::invalid_argument("landscape json: pairwise entries are [i, j, weight]");
      }
      ls.pairwise.push_back(PairwiseTerm{term[0].get<int>(), term[1].get<int>(), term[2].get<double>()});
    }
  }
  if (doc.contains("cohorts")) {
    for (const auto& c : doc.at("cohorts")) {
      require_keys(c, {"assign", "boost"}, "landscape cohort");
      Cohort cohort;
      cohort.boost = c.at("boost").get<double>();
      for (const auto& pair : c.at("assign")) {
        if (!pair.is_array() || pair.size() != 2) {
          throw std::invalid_argument("landscape json: cohort assign entries are [index, bit]");
        }
        cohort.assignment.emplace_back(pair[0].get<int>(), pair[1].get<std::uint8_t>());
      }
      ls.cohorts.push_back(std::move(cohort));
    }
  }
  ls.marginals =
      doc.value("marginals", std::vector<double>(static_cast<std::size_t>(ls.dimension), 0.5));
  ls.noise_sigma = doc.value("noise_sigma", 0.0);
  ls.seed = doc.value("seed", std::uint64_t{0});
  ls.validate();
  return ls;
}

SyntheticLandscape read_landscape_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open landscape file: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return landscape_from_json(buffer.str());
}

std::string landscape_to_json(const SyntheticLandscape& landscape) {
  json doc;
  doc["dimension"] = landscape.dimension;
  doc["offset"] = landscape.offset;
  doc["linear"] = landscape.linear;
  json pairwise = json::array();
  for (const auto& term : landscape.pairwise) pairwise.push_back({term.i, term.j, term.weight});
  doc["pairwise"] = pairwise;
  json cohorts = json::array();
  for (const auto& cohort : landscape.cohorts) {
    json assign = json::array();
    for (const auto& [idx, bit] : cohort.assignment) assign.push_back({idx, bit});
    cohorts.push_back({{"assign", assign}, {"boost", cohort.boost}});
  }
  doc["cohorts"] = cohorts;
  doc["marginals"] = landscape.marginals;
  doc["noise_sigma"] = landscape.noise_sigma;
  doc["seed"] = landscape.seed;
  return doc.dump(2);
}

void write_landscape_file(const SyntheticLandscape& landscape, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write landscape file: " + path);
  out << landscape_to_json(landscape) << "\n";
}

GroupBiasTable landscape_truth_table(const SyntheticLandscape& landscape, int cap) {
  GroupBiasTable table;
  for (const auto& a : EnumerationRange(landscape.dimension, cap)) {
    table[a] = GroupStats{landscape_bias(landscape, a), 1};
  }
  return table;
}

}  // namespace bggn::attrspace
