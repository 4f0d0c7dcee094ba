#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace neuronlens::gateway {

enum class EndpointKind { Chat, CompletionWithLogprobs, Embedding };

std::string_view to_string(EndpointKind k);
EndpointKind parse_endpoint_kind(std::string_view s);

inline constexpr std::string_view kDefaultApiKeyEnv = "NEURONLENS_API_KEY";

/// One model behind an OpenAI-compatible HTTP API.
struct ModelEndpoint {
  std::string name;      // config-table key, also the concurrency-cap key
  std::string base_url;  // e.g. https://api.openai.com/v1
  std::string model_name;
  std::string api_key_env = std::string(kDefaultApiKeyEnv);
  EndpointKind kind = EndpointKind::Chat;
  std::chrono::milliseconds timeout{60'000};
  int max_retries = 3;
  int max_concurrency = 4;

  /// Throws InvalidArgument unless max_concurrency >= 1, timeout > 0 and max_retries >= 0.
  void validate() const;
};

struct DecodeParams {
  double temperature = 1.0;
  int max_tokens = 256;
  std::optional<int> top_logprobs;
  std::optional<std::int64_t> seed;
};

/// Explainer default: temperature 1, single sample.
DecodeParams explainer_defaults();
/// Simulator default: temperature 0, top-5 logprobs.
DecodeParams simulator_defaults(int max_tokens);

struct Usage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
};

struct CompletionResult {
  std::string text;
  /// Sampled token per output position (logprob-capable endpoints only).
  std::vector<std::string> tokens;
  /// Top alternatives per output position, token -> log-probability (<= 0).
  /// Present iff the endpoint kind is CompletionWithLogprobs.
  std::optional<std::vector<std::map<std::string, double>>> token_logprob_alternatives;
  Usage usage;
  /// Server-reported creation time (unix seconds) when the response carries one.
  std::optional<std::int64_t> created;
  int retries = 0;
};

}  // namespace neuronlens::gateway
