// JSON (de)serialization for MLPs. Checkpoints carry layer sizes,
// activations, flat parameter arrays and the seed lineage of the run that
// produced them. Doubles survive the round trip exactly (shortest
// round-trip representation).

#ifndef BGGN_CHECKPOINT_HPP
#define BGGN_CHECKPOINT_HPP

#include <stdexcept>
#include <string>
#include <vector>

#include "bggn/nn.hpp"
#include "json.hpp"

namespace bggn {

inline nlohmann::json mlp_to_json(const nn::Mlp& mlp) {
  nlohmann::json doc;
  std::vector<int> sizes;
  sizes.push_back(mlp.input_dim());
  for (const auto& w : mlp.weights) sizes.push_back(w.cols);
  doc["sizes"] = sizes;
  std::vector<std::string> acts;
  for (auto a : mlp.acts) acts.push_back(nn::activation_name(a));
  doc["activations"] = acts;
  std::vector<double> weights, biases;
  for (const auto& w : mlp.weights) weights.insert(weights.end(), w.data.begin(), w.data.end());
  for (const auto& b : mlp.biases) biases.insert(biases.end(), b.data.begin(), b.data.end());
  doc["weights"] = weights;
  doc["biases"] = biases;
  return doc;
}

inline nn::Mlp mlp_from_json(const nlohmann::json& doc) {
  const auto sizes = doc.at("sizes").get<std::vector<int>>();
  const auto act_names = doc.at("activations").get<std::vector<std::string>>();
  if (sizes.size() < 2 || act_names.size() != sizes.size() - 1) {
    throw std::invalid_argument("mlp checkpoint: inconsistent sizes/activations");
  }
  nn::Mlp mlp;
  for (const auto& name : act_names) mlp.acts.push_back(nn::activation_from_name(name));
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    mlp.weights.emplace_back(sizes[l], sizes[l + 1]);
    mlp.biases.emplace_back(1, sizes[l + 1]);
  }
  const auto weights = doc.at("weights").get<std::vector<double>>();
  const auto biases = doc.at("biases").get<std::vector<double>>();
  std::size_t wi = 0, bi = 0;
  for (auto& w : mlp.weights) {
    if (wi + w.data.size() > weights.size()) {
      throw std::invalid_argument("mlp checkpoint: weight array too short");
    }
    std::copy(weights.begin() + static_cast<std::ptrdiff_t>(wi),
              weights.begin() + static_cast<std::ptrdiff_t>(wi + w.data.size()), w.data.begin());
    wi += w.data.size();
  }
  for (auto& b : mlp.biases) {
    if (bi + b.data.size() > biases.size()) {
      throw std::invalid_argument("mlp checkpoint: bias array too short");
    }
    std::copy(biases.begin() + static_cast<std::ptrdiff_t>(bi),
              biases.begin() + static_cast<std::ptrdiff_t>(bi + b.data.size()), b.data.begin());
    bi += b.data.size();
  }
  if (wi != weights.size() || bi != biases.size()) {
    throw std::invalid_argument("mlp checkpoint: parameter array length mismatch");
  }
  return mlp;
}

}  // namespace bggn

#endif  // BGGN_CHECKPOINT_HPP
