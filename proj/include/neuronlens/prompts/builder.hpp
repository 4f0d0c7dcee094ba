#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "neuronlens/core/types.hpp"
#include "neuronlens/prompts/activation.hpp"
#include "neuronlens/prompts/token_counter.hpp"

namespace neuronlens::prompts {

class EmptyFewShot : public Error {
 public:
  EmptyFewShot() : Error("at least one few-shot example is required") {}
};

enum class Role { System, User, Assistant };
std::string_view to_string(Role r);

struct Message {
  Role role = Role::User;
  std::string content;

  bool operator==(const Message&) const = default;
};

struct BuiltPrompt {
  PromptMethod method = PromptMethod::Original;
  std::vector<Message> messages;
  std::size_t token_count = 0;
  /// Per target excerpt, the highly activating positions (ascending).
  std::vector<std::vector<std::size_t>> highlighted_token_indices;

  bool operator==(const BuiltPrompt&) const = default;
};

struct FewShotExample {
  std::vector<ActivationRecord> excerpts;
  std::string explanation;
};

/// Preambles plus few-shot examples, loaded from a JSON data file.
struct FewShotSet {
  std::string version;
  std::map<PromptMethod, std::string> preambles;
  std::vector<FewShotExample> examples;

  static FewShotSet load(const std::filesystem::path& path);
  static FewShotSet from_json(const nlohmann::json& j);
};

inline constexpr double kDefaultQuantile = 0.9;

/// Single-excerpt renderings. `neuron_max` feeds the discretized values
/// shown by Original and AVHS.
std::string render_raw_text(const ActivationRecord& r);
std::string render_highlight(const ActivationRecord& r, double quantile);
std::string render_summary_line(const ActivationRecord& r, double quantile);
std::string render_value_line(const ActivationRecord& r, double quantile, double neuron_max);
std::string render_original(const ActivationRecord& r, double neuron_max);
std::string render_excerpt(PromptMethod method, const ActivationRecord& r, double quantile,
                           double neuron_max);

/// Line-oriented formats escape newline, carriage return and tab inside a token.
std::string escape_token_for_line(std::string_view token);

/// Builds the explanation prompt for one set of top excerpts.
///
/// Messages: system preamble, then per few-shot example a user turn with the
/// rendered excerpts and an assistant turn with its explanation, then a final
/// user turn with the target excerpts and the completion cue.
BuiltPrompt build_prompt(std::span<const ActivationRecord> excerpts, PromptMethod method,
                         const FewShotSet& few_shot, double quantile,
                         const TokenCounter& counter);

BuiltPrompt build_prompt(const NeuronRecord& neuron, PromptMethod method,
                         const FewShotSet& few_shot, double quantile,
                         const TokenCounter& counter);

/// Plain-text transcript of a prompt ("### role" headers), used for golden files.
std::string render_transcript(const BuiltPrompt& prompt);

}  // namespace neuronlens::prompts
