#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <semaphore>
#include <span>
#include <string>
#include <vector>

#include "neuronlens/core/errors.hpp"
#include "neuronlens/core/rng.hpp"
#include "neuronlens/gateway/endpoint.hpp"
#include "neuronlens/gateway/transport.hpp"
#include "neuronlens/prompts/builder.hpp"

namespace neuronlens::gateway {

enum class GatewayErrorKind { RateLimited, Timeout, ConnectionFailed, AuthFailure, ServerError, BadRequest, MalformedResponse };

std::string_view to_string(GatewayErrorKind k);

class GatewayError : public Error {
 public:
  GatewayError(GatewayErrorKind kind, const std::string& message, int attempts, int status = 0,
               std::optional<double> retry_after = std::nullopt)
      : Error(message), kind_(kind), attempts_(attempts), status_(status), retry_after_(retry_after) {}

  [[nodiscard]] GatewayErrorKind kind() const { return kind_; }
  [[nodiscard]] int attempts() const { return attempts_; }
  [[nodiscard]] int status() const { return status_; }
  [[nodiscard]] std::optional<double> retry_after() const { return retry_after_; }

 private:
  GatewayErrorKind kind_;
  int attempts_;
  int status_;
  std::optional<double> retry_after_;
};

enum class Mode { Live, Record, Replay };
std::string_view to_string(Mode m);
Mode parse_mode(std::string_view s);

/// Exponential backoff: delay(n) = base * factor^n * (1 + jitter * u),
/// u uniform in [-1, 1], capped at max_delay. A server Retry-After that is
/// longer than the computed delay wins.
struct RetryPolicy {
  std::chrono::milliseconds base{1000};
  double factor = 2.0;
  double jitter = 0.2;
  std::chrono::milliseconds max_delay{60'000};
  std::uint64_t jitter_seed = 0x5eed;
  /// Replaceable so tests need not wait.
  std::function<void(std::chrono::milliseconds)> sleep;
};

struct EndpointStats {
  std::size_t requests = 0;
  std::size_t retries = 0;
  std::size_t failures = 0;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
};

/// Uniform client for chat, logprob completion and embedding endpoints.
///
/// Shareable across threads. Each endpoint (by name) gets its own in-flight
/// cap of `max_concurrency`; the slot is held only while a request is on the
/// wire, never during backoff.
class Gateway {
 public:
  explicit Gateway(std::shared_ptr<Transport> transport, RetryPolicy policy = {});

  /// Live: HTTP. Record: HTTP wrapped in a recorder writing `cassette`.
  /// Replay: cassette only; no HTTP client is ever constructed.
  static std::shared_ptr<Gateway> for_mode(Mode mode, const std::filesystem::path& cassette,
                                           RetryPolicy policy = {});
  /// Record mode around an arbitrary upstream (used to record fixtures from the synthetic model).
  static std::shared_ptr<Gateway> recording(std::shared_ptr<Transport> upstream,
                                            const std::filesystem::path& cassette,
                                            RetryPolicy policy = {});

  /// Chat completion over role-tagged messages.
  CompletionResult complete(const ModelEndpoint& endpoint,
                            std::span<const prompts::Message> messages,
                            const DecodeParams& params);
  CompletionResult complete(const ModelEndpoint& endpoint, const prompts::BuiltPrompt& prompt,
                            const DecodeParams& params);
  /// Raw prompt: a plain completion on CompletionWithLogprobs endpoints, a
  /// single user message on Chat endpoints.
  CompletionResult complete(const ModelEndpoint& endpoint, const std::string& prompt,
                            const DecodeParams& params);

  /// One vector per text, same order. An empty batch makes no request.
  std::vector<std::vector<double>> embed(const ModelEndpoint& endpoint,
                                         const std::vector<std::string>& texts);

  [[nodiscard]] EndpointStats stats(const std::string& endpoint_name) const;

 private:
  ApiResponse send_with_retries(const ModelEndpoint& endpoint, const ApiRequest& request,
                                int* retries);
  std::counting_semaphore<>& slot_for(const ModelEndpoint& endpoint);
  std::chrono::milliseconds backoff(int retry_index);
  void account(const ModelEndpoint& endpoint, const Usage& usage, int retries, bool failed);

  std::shared_ptr<Transport> transport_;
  RetryPolicy policy_;

  mutable std::mutex mu_;
  std::map<std::string, std::unique_ptr<std::counting_semaphore<>>> slots_;
  std::map<std::string, EndpointStats> stats_;
  SeededRng jitter_rng_;
};

/// Replaces the value of the endpoint's API-key variable (if set and
/// non-trivial) with "[REDACTED]".
std::string redact_secrets(std::string text, const std::string& api_key_env);

/// Parses an OpenAI-style response body for the given kind. Throws
/// GatewayError(MalformedResponse).
CompletionResult parse_completion_body(EndpointKind kind, const std::string& body);
std::vector<std::vector<double>> parse_embedding_body(const std::string& body,
                                                      std::size_t expected_count);

}  // namespace neuronlens::gateway
