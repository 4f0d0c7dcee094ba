#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "neuronlens/core/types.hpp"
#include "neuronlens/gateway/gateway.hpp"
#include "neuronlens/simscore/stats.hpp"

namespace neuronlens::simscore {

class AllPositionsMissing : public Error {
 public:
  AllPositionsMissing() : Error("simulator produced no usable prediction for any position") {}
};

enum class ExcerptSource { Top, Random };
std::string_view to_string(ExcerptSource s);

/// Which dataset excerpts a simulation uses.
enum class ExcerptSelection { Top, Random, Both };
ExcerptSelection parse_excerpt_selection(std::string_view s);
std::string_view to_string(ExcerptSelection s);

struct SimulationTask {
  Explanation explanation;
  std::vector<ActivationRecord> excerpts;
  std::vector<ExcerptSource> sources;  // parallel to excerpts
  double neuron_max = 0.0;

  /// Top and/or random excerpts of `neuron`, scaled by its top-excerpt max.
  static SimulationTask from_neuron(const Explanation& explanation, const NeuronRecord& neuron,
                                    ExcerptSelection which);
  void validate() const;
};

struct SimulationOutcome {
  /// Expected activation per position; nullopt where the simulator gave no numeric alternative.
  std::vector<std::vector<std::optional<double>>> predicted;
  std::vector<std::vector<int>> actual_discretized;
  /// Pooled over every non-missing position of every excerpt.
  double correlation = 0.0;
  bool degenerate = false;
  /// Per-excerpt correlation (0 where degenerate or too short).
  std::vector<double> per_excerpt_r;
  std::size_t missing_positions = 0;
  /// More than 20% of positions missing.
  bool unreliable = false;
};

/// Simulation prompt for one excerpt: the explanation, then the excerpt one
/// token per line as `token<TAB>unknown`, then an open `<start>` block for the
/// model to fill in with `token<TAB>value` lines.
std::string build_simulation_prompt(const std::string& explanation, const ActivationRecord& excerpt);
std::string build_simulation_prompt(const SimulationTask& task, std::size_t excerpt_index);

/// Probability-weighted mean over the keys "0".."10" (whitespace-stripped,
/// duplicates merged), renormalized over those keys. nullopt if none present.
std::optional<double> expected_activation(const std::map<std::string, double>& alternatives);

/// Maps a logprob completion back onto `excerpt_length` positions. A value
/// position is the first output position on line L whose preceding text ends
/// with a tab; it predicts excerpt position L. Output after `<end>` is ignored.
std::vector<std::optional<double>> decode_predictions(const gateway::CompletionResult& completion,
                                                      std::size_t excerpt_length);

/// Pools predictions against discretized actual activations.
SimulationOutcome assemble_outcome(const SimulationTask& task,
                                   std::vector<std::vector<std::optional<double>>> predicted);

/// Simulates every excerpt (concurrently, within the gateway's cap) and scores.
SimulationOutcome score_explanation(const SimulationTask& task, gateway::Gateway& gateway,
                                    const gateway::ModelEndpoint& simulator);

/// Per-method mean and standard error of the correlations.
std::map<PromptMethod, MeanAndError> aggregate_scores(
    const std::map<PromptMethod, std::vector<double>>& correlations_by_method);

ScoreReport to_score_report(const SimulationOutcome& outcome, const SimulationTask& task,
                            const std::string& subset);

}  // namespace neuronlens::simscore
