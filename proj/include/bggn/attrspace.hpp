// Attribute-space representation: binary attribute vectors, per-group bias
// tables aggregated from sample losses, group-level observation/holdout
// splits, and synthetic bias landscapes for desk-scale experiments.

#ifndef BGGN_ATTRSPACE_HPP
#define BGGN_ATTRSPACE_HPP

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bggn/nn.hpp"
#include "bggn/rng.hpp"

namespace bggn::attrspace {

/// One intersectional sensitive attribute: a full assignment to all d binary
/// attributes. Ordered lexicographically, which coincides with ascending
/// binary order when bit 0 is the most significant position.
struct AttributeVector {
  std::vector<std::uint8_t> bits;

  AttributeVector() = default;
  explicit AttributeVector(std::vector<std::uint8_t> b);

  int dimension() const { return static_cast<int>(bits.size()); }

  /// Integer code with bits[0] as the most significant bit. Requires d <= 63.
  std::uint64_t to_index() const;
  static AttributeVector from_index(std::uint64_t index, int dimension);

  auto operator<=>(const AttributeVector&) const = default;

  std::string to_string() const;  // e.g. "0110"
};

struct AttributeSpace {
  int dimension = 0;
  std::vector<std::string> attribute_names;  // optional; empty => a0..a{d-1}

  std::string name_of(int index) const;
};

struct SampleLossRecord {
  AttributeVector attribute;
  double loss = 0.0;
};

struct GroupStats {
  double bias = 0.0;
  std::int64_t count = 0;

  auto operator<=>(const GroupStats&) const = default;
};

/// Map from attribute vector to (mean loss, support count). The std::map key
/// order doubles as the deterministic iteration order everywhere.
using GroupBiasTable = std::map<AttributeVector, GroupStats>;

int table_dimension(const GroupBiasTable& table);
double mean_bias(const GroupBiasTable& table);

struct DatasetSplit {
  GroupBiasTable observation;
  GroupBiasTable holdout;
};

struct PairwiseTerm {
  int i = 0;
  int j = 0;
  double weight = 0.0;
};

/// Partial assignment (attribute index -> bit) plus an additive pre-softplus
/// boost applied when a vector matches every pinned bit.
struct Cohort {
  std::vector<std::pair<int, std::uint8_t>> assignment;
  double boost = 0.0;

  bool matches(const AttributeVector& a) const;
};

/// Deterministic synthetic bias landscape:
///   bias(a) = softplus(offset + sum_i w_i a_i + sum_(i,j) w_ij a_i a_j
///                      + sum_c boost_c * 1[a matches cohort c])
struct SyntheticLandscape {
  int dimension = 0;
  double offset = 0.0;
  std::vector<double> linear;          // d weights
  std::vector<PairwiseTerm> pairwise;  // i < j
  std::vector<Cohort> cohorts;
  std::vector<double> marginals;  // d sampling probabilities in (0,1)
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

inline constexpr int kEnumerationCap = 20;  // 2^20 vectors

/// Mean of per-sample losses per distinct attribute vector.
GroupBiasTable aggregate_bias(const std::vector<SampleLossRecord>& records);

/// Group-level partition: round(holdout_fraction * #keys) keys go to the
/// holdout side, the rest to observation. No key appears on both sides.
DatasetSplit split_by_group(const GroupBiasTable& table, double holdout_fraction,
                            std::uint64_t seed);

double landscape_bias(const SyntheticLandscape& landscape, const AttributeVector& a);

/// Draws n_groups distinct attribute vectors from the landscape's
/// product-Bernoulli marginals and records noisy group biases:
/// max(0, bias(a) + N(0, sigma^2 / samples_per_group)).
GroupBiasTable sample_dataset(const SyntheticLandscape& landscape, std::uint64_t n_groups,
                              std::int64_t samples_per_group);

/// Restartable stream over all 2^d vectors in ascending binary order.
class EnumerationRange {
 public:
  EnumerationRange(int dimension, int cap = kEnumerationCap);

  class iterator {
   public:
    using value_type = AttributeVector;

    iterator(std::uint64_t index, int dimension) : index_(index), dimension_(dimension) {}
    AttributeVector operator*() const { return AttributeVector::from_index(index_, dimension_); }
    iterator& operator++() {
      ++index_;
      return *this;
    }
    bool operator!=(const iterator& other) const { return index_ != other.index_; }
    bool operator==(const iterator& other) const { return index_ == other.index_; }

   private:
    std::uint64_t index_;
    int dimension_;
  };

  iterator begin() const { return iterator(0, dimension_); }
  iterator end() const { return iterator(std::uint64_t{1} << dimension_, dimension_); }
  std::uint64_t size() const { return std::uint64_t{1} << dimension_; }

 private:
  int dimension_;
};

EnumerationRange enumerate_space(const AttributeSpace& space, int cap = kEnumerationCap);

// ---- file formats ----

/// Group CSV: header `a0,...,a{d-1},bias[,count]`. Duplicate attribute rows
/// merge with count-weighted means.
GroupBiasTable read_group_csv(std::istream& in);
GroupBiasTable read_group_csv_file(const std::string& path);
void write_group_csv(const GroupBiasTable& table, std::ostream& out);
void write_group_csv_file(const GroupBiasTable& table, const std::string& path);

/// Sample CSV: header `a0,...,a{d-1},loss`.
std::vector<SampleLossRecord> read_sample_csv(std::istream& in);
std::vector<SampleLossRecord> read_sample_csv_file(const std::string& path);
void write_sample_csv(const std::vector<SampleLossRecord>& records, std::ostream& out);

/// Landscape spec JSON with keys
/// `dimension, offset, linear, pairwise, cohorts, marginals, noise_sigma, seed`.
SyntheticLandscape landscape_from_json(const std::string& text);
SyntheticLandscape read_landscape_file(const std::string& path);
std::string landscape_to_json(const SyntheticLandscape& landscape);
void write_landscape_file(const SyntheticLandscape& landscape, const std::string& path);

/// Full ground-truth table over all 2^d vectors (noise-free landscape bias).
GroupBiasTable landscape_truth_table(const SyntheticLandscape& landscape,
                                     int cap = kEnumerationCap);

/// Bit vectors as real matrices for model inputs.
nn::Matrix bits_row(const AttributeVector& a);
nn::Matrix bits_matrix(const std::vector<AttributeVector>& batch);

}  // namespace bggn::attrspace

#endif  // BGGN_ATTRSPACE_HPP
