#include "neuronlens/core/selection.hpp"

#include <algorithm>

#include "neuronlens/core/errors.hpp"
#include "neuronlens/core/rng.hpp"

namespace neuronlens {

namespace {

struct Scored {
  NeuronId id;
  double score;
};

std::optional<double> score_of(const NeuronRecord& r, const ScoreOverride* scores) {
  if (scores != nullptr) {
    auto it = scores->find(r.id);
    if (it == scores->end()) return std::nullopt;
    return it->second;
  }
  return r.baseline_score;
}

bool by_score_desc(const Scored& a, const Scored& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.id < b.id;
}

std::map<int, std::vector<NeuronId>> group_by_layer(std::vector<NeuronId> ids) {
  std::sort(ids.begin(), ids.end());
  std::map<int, std::vector<NeuronId>> by_layer;
  for (const auto& id : ids) by_layer[id.layer].push_back(id);
  return by_layer;
}

std::vector<NeuronId> sample_per_layer(std::vector<NeuronId> candidates, std::size_t k,
                                       std::uint64_t seed) {
  SeededRng rng(seed);
  std::vector<NeuronId> out;
  for (auto& [layer, ids] : group_by_layer(std::move(candidates))) {
    if (ids.size() < k) throw InsufficientNeurons(layer, k, ids.size());
    rng.shuffle(std::span<NeuronId>(ids));
    out.insert(out.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k));
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Scored> scored(const std::vector<NeuronRecord>& records, const ScoreOverride* scores) {
  std::vector<Scored> out;
  for (const auto& r : records) {
    if (auto s = score_of(r, scores)) out.push_back({r.id, *s});
  }
  return out;
}

}  // namespace

std::vector<NeuronId> select_neurons(const std::vector<NeuronRecord>& records,
                                     const SelectionStrategy& strategy,
                                     const ScoreOverride* scores) {
  return std::visit(
      [&](const auto& s) -> std::vector<NeuronId> {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, RandomPerLayer>) {
          std::vector<NeuronId> ids;
          for (const auto& r : records) ids.push_back(r.id);
          return sample_per_layer(std::move(ids), s.k, s.seed);
        } else if constexpr (std::is_same_v<S, RandomInterpretable>) {
          // layers with no interpretable neuron at all still count as short
          std::vector<NeuronId> ids;
          std::map<int, std::size_t> layers;
          for (const auto& r : records) {
            layers[r.id.layer];
            auto sc = score_of(r, scores);
            if (sc && *sc > s.threshold) {
              ids.push_back(r.id);
              ++layers[r.id.layer];
            }
          }
          for (const auto& [layer, n] : layers) {
            if (n < s.k) throw InsufficientNeurons(layer, s.k, n);
          }
          return sample_per_layer(std::move(ids), s.k, s.seed);
        } else if constexpr (std::is_same_v<S, TopKPerLayer>) {
          std::map<int, std::vector<Scored>> by_layer;
          for (const auto& r : records) by_layer[r.id.layer];
          for (const auto& x : scored(records, scores)) by_layer[x.id.layer].push_back(x);
          std::vector<NeuronId> out;
          for (auto& [layer, xs] : by_layer) {
            if (xs.size() < s.k) throw InsufficientNeurons(layer, s.k, xs.size());
            std::sort(xs.begin(), xs.end(), by_score_desc);
            for (std::size_t i = 0; i < s.k; ++i) out.push_back(xs[i].id);
          }
          return out;
        } else {
          auto xs = scored(records, scores);
          if (xs.size() < s.n) throw InsufficientNeurons(std::nullopt, s.n, xs.size());
          std::sort(xs.begin(), xs.end(), by_score_desc);
          std::vector<NeuronId> out;
          out.reserve(s.n);
          for (std::size_t i = 0; i < s.n; ++i) out.push_back(xs[i].id);
          return out;
        }
      },
      strategy);
}

std::map<int, std::size_t> layer_histogram(const std::vector<NeuronId>& ids) {
  std::map<int, std::size_t> h;
  for (const auto& id : ids) ++h[id.layer];
  return h;
}

SelectionStrategy parse_strategy(const std::string& name, std::size_t k, std::uint64_t seed,
                                 double threshold) {
  if (name == "random") return RandomPerLayer{k, seed};
  if (name == "random-interpretable") return RandomInterpretable{k, seed, threshold};
  if (name == "top-per-layer") return TopKPerLayer{k};
  if (name == "top-n") return TopN{k};
  throw InvalidArgument("unknown selection strategy: " + name +
                        " (expected random, random-interpretable, top-per-layer, top-n)");
}

}  // namespace neuronlens
