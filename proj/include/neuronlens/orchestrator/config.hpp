#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "neuronlens/core/dataset.hpp"
#include "neuronlens/core/errors.hpp"
#include "neuronlens/core/selection.hpp"
#include "neuronlens/gateway/gateway.hpp"
#include "neuronlens/prompts/cost.hpp"
#include "neuronlens/simscore/simulation.hpp"

namespace neuronlens::orchestrator {

/// Bad flags, bad config text or an impossible request. Maps to exit code 1.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Parses the config dialect: `[section]` headers (dotted names allowed),
/// `key = value` lines and `#` comments. Values are double-quoted strings,
/// numbers, true/false, or flat arrays of those. Returns
/// {"": {top-level keys}, "section": {...}, ...}.
nlohmann::json parse_config_text(const std::string& text);

enum class ScoreSource { Baseline, Simulation };

struct SelectionConfig {
  std::string strategy = "all";  // all, random, random-interpretable, top-per-layer, top-n
  std::size_t k = 20;
  std::uint64_t seed = 0;
  double threshold = 0.35;
  ScoreSource score_source = ScoreSource::Baseline;
  /// Scores file holding SimulationCorrelation reports when score_source is Simulation.
  std::filesystem::path score_file;
};

struct ExperimentConfig {
  std::filesystem::path dataset_path;
  DatasetSchema schema;
  SelectionConfig selection;
  std::vector<PromptMethod> methods{kAllMethods.begin(), kAllMethods.end()};

  std::map<std::string, gateway::ModelEndpoint> endpoints;
  std::string explainer;  // keys into `endpoints`
  std::string simulator;
  std::string embedder;
  std::string judge;

  double quantile = 0.9;
  int samples_per_puzzle = 3;
  std::int64_t seed = 0;
  std::filesystem::path output_dir = "out";
  gateway::Mode mode = gateway::Mode::Replay;
  std::filesystem::path cassette;
  /// Where Live/Record requests go: "http" or the offline "synthetic" model.
  std::string upstream = "http";

  std::filesystem::path few_shot_path;
  std::filesystem::path puzzles_dir;
  std::filesystem::path cot_exemplars_path;
  std::optional<std::filesystem::path> bpe_merges;

  std::string subset = "default";
  simscore::ExcerptSelection excerpts = simscore::ExcerptSelection::Both;
  int workers = 4;
  bool strict = false;

  std::string judge_strategy = "v4";
  double controversial_threshold = 3.0;
  std::size_t judge_context_cap = 20;

  std::optional<double> adacs_min_baseline_score;
  std::size_t efficiency_neurons = 50;

  prompts::Pricing pricing{0.0005, 0.0015};
  int completion_tokens_per_call = 60;

  /// Relative paths in the file resolve against the file's directory.
  static ExperimentConfig load(const std::filesystem::path& path);
  static ExperimentConfig from_text(const std::string& text, const std::filesystem::path& base_dir);

  /// Throws UsageError when a role names a missing endpoint or an endpoint is invalid.
  void validate() const;
  const gateway::ModelEndpoint& endpoint_for(const std::string& role) const;

  /// Canonical form; the manifest hash is taken over its dump.
  [[nodiscard]] nlohmann::json to_json() const;
  [[nodiscard]] std::string hash() const;
};

std::vector<PromptMethod> parse_method_list(const std::string& comma_separated);

}  // namespace neuronlens::orchestrator
