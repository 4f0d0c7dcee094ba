#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace neuronlens {

/// Identity of one MLP neuron in the subject model.
struct NeuronId {
  int layer = 0;
  int neuron = 0;

  auto operator<=>(const NeuronId&) const = default;
};

std::string to_string(const NeuronId& id);

/// One text excerpt as parallel token/activation sequences for a single neuron.
///
/// Construct through `ActivationRecord::make`, which enforces equal non-zero
/// lengths and clamps negative activations to zero.
struct ActivationRecord {
  std::vector<std::string> tokens;
  std::vector<double> activations;

  /// Validates and clamps. `clamped` (if given) is incremented once per
  /// negative value that was raised to zero.
  static ActivationRecord make(std::vector<std::string> tokens, std::vector<double> activations,
                               int* clamped = nullptr);

  [[nodiscard]] std::size_t size() const { return tokens.size(); }
  [[nodiscard]] double max_activation() const;

  bool operator==(const ActivationRecord&) const = default;
};

struct NeuronRecord {
  NeuronId id;
  std::vector<ActivationRecord> top_excerpts;
  std::vector<ActivationRecord> random_excerpts;
  std::optional<std::string> baseline_explanation;
  std::optional<double> baseline_score;

  /// Max activation over the top excerpts. Always > 0 for a validated record.
  [[nodiscard]] double neuron_max() const;

  bool operator==(const NeuronRecord&) const = default;
};

enum class PromptMethod { Original, Summary, Highlight, HS, AVHS };

inline constexpr std::array<PromptMethod, 5> kAllMethods = {
    PromptMethod::Original, PromptMethod::Summary, PromptMethod::Highlight, PromptMethod::HS,
    PromptMethod::AVHS};

std::string_view to_string(PromptMethod m);
PromptMethod parse_method(std::string_view s);

/// Short labels used when several methods share one prompt ("O", "S", "H", "HS", "AVHS").
std::string_view short_label(PromptMethod m);

enum class Metric { SimulationCorrelation, AdaCS, HumanRating };

std::string_view to_string(Metric m);
Metric parse_metric(std::string_view s);

struct Explanation {
  NeuronId neuron;
  PromptMethod method = PromptMethod::Original;
  std::string text;
  std::string explainer_model;
  std::int64_t prompt_token_count = 0;
  std::string created_at;  // ISO-8601 UTC, e.g. 2023-11-14T22:13:20Z

  bool operator==(const Explanation&) const = default;
};

/// Collapses whitespace runs (including newlines) to single spaces and trims.
/// Throws InvalidArgument if nothing is left.
std::string normalize_explanation_text(std::string_view raw);

/// What a score is about: a dataset neuron or a named puzzle.
struct ScoreSubject {
  std::optional<NeuronId> neuron;
  std::optional<std::string> puzzle;

  bool operator==(const ScoreSubject&) const = default;
};

struct ScoreReport {
  ScoreSubject subject;
  PromptMethod method = PromptMethod::Original;
  Metric metric = Metric::SimulationCorrelation;
  double value = 0.0;
  std::optional<double> stderr_;
  std::string subset;  // grouping label, e.g. "random" or "top1k"
  nlohmann::json detail = nlohmann::json::object();

  /// Throws InvalidArgument when value is outside the metric's range.
  void validate() const;

  bool operator==(const ScoreReport&) const = default;
};

std::string utc_timestamp_now();
std::string utc_timestamp_from_unix(std::int64_t seconds);

}  // namespace neuronlens
