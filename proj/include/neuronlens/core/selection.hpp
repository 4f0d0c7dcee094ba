#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "neuronlens/core/types.hpp"

namespace neuronlens {

/// `k` random neurons from every layer present in the input.
struct RandomPerLayer {
  std::size_t k = 20;
  std::uint64_t seed = 0;
};

/// Like RandomPerLayer, restricted to neurons whose score is > threshold.
struct RandomInterpretable {
  std::size_t k = 20;
  std::uint64_t seed = 0;
  double threshold = 0.35;
};

/// The `k` highest-scoring neurons of every layer present in the input.
struct TopKPerLayer {
  std::size_t k = 20;
};

/// The `n` highest-scoring neurons overall.
struct TopN {
  std::size_t n = 1000;
};

using SelectionStrategy = std::variant<RandomPerLayer, RandomInterpretable, TopKPerLayer, TopN>;

/// Overrides the baseline scores used by score-based strategies, e.g. with
/// freshly computed simulation scores. Neurons absent from the map are
/// treated as unscored.
using ScoreOverride = std::map<NeuronId, double>;

/// Selects neuron ids. Score-based strategies ignore neurons without a score.
///
/// Random strategies return ids sorted by (layer, neuron). TopKPerLayer
/// returns layers ascending, each layer by score descending. TopN returns
/// score descending. Score ties are broken by (layer, neuron) ascending.
///
/// Throws InsufficientNeurons when a layer (or the dataset, for TopN) has
/// fewer candidates than requested.
std::vector<NeuronId> select_neurons(const std::vector<NeuronRecord>& records,
                                     const SelectionStrategy& strategy,
                                     const ScoreOverride* scores = nullptr);

std::map<int, std::size_t> layer_histogram(const std::vector<NeuronId>& ids);

SelectionStrategy parse_strategy(const std::string& name, std::size_t k, std::uint64_t seed,
                                 double threshold);

}  // namespace neuronlens
