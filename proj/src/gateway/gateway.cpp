#include "neuronlens/gateway/gateway.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

namespace neuronlens::gateway {

using nlohmann::json;

std::string_view to_string(EndpointKind k) {
  switch (k) {
    case EndpointKind::Chat: return "chat";
    case EndpointKind::CompletionWithLogprobs: return "completion-logprobs";
    case EndpointKind::Embedding: return "embedding";
  }
  return "?";
}

EndpointKind parse_endpoint_kind(std::string_view s) {
  for (auto k : {EndpointKind::Chat, EndpointKind::CompletionWithLogprobs, EndpointKind::Embedding}) {
    if (s == to_string(k)) return k;
  }
  throw InvalidArgument("unknown endpoint kind: " + std::string(s) +
                        " (expected chat, completion-logprobs, embedding)");
}

void ModelEndpoint::validate() const {
  if (max_concurrency < 1) throw InvalidArgument("endpoint " + name + ": max_concurrency must be >= 1");
  if (timeout.count() <= 0) throw InvalidArgument("endpoint " + name + ": timeout must be > 0");
  if (max_retries < 0) throw InvalidArgument("endpoint " + name + ": max_retries must be >= 0");
  if (model_name.empty()) throw InvalidArgument("endpoint " + name + ": model name is empty");
}

DecodeParams explainer_defaults() { return DecodeParams{1.0, 60, std::nullopt, std::nullopt}; }

DecodeParams simulator_defaults(int max_tokens) { return DecodeParams{0.0, max_tokens, 5, std::nullopt}; }

std::string_view to_string(GatewayErrorKind k) {
  switch (k) {
    case GatewayErrorKind::RateLimited: return "RateLimited";
    case GatewayErrorKind::Timeout: return "Timeout";
    case GatewayErrorKind::ConnectionFailed: return "ConnectionFailed";
    case GatewayErrorKind::AuthFailure: return "AuthFailure";
    case GatewayErrorKind::ServerError: return "ServerError";
    case GatewayErrorKind::BadRequest: return "BadRequest";
    case GatewayErrorKind::MalformedResponse: return "MalformedResponse";
  }
  return "?";
}

std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::Live: return "live";
    case Mode::Record: return "record";
    case Mode::Replay: return "replay";
  }
  return "?";
}

Mode parse_mode(std::string_view s) {
  for (auto m : {Mode::Live, Mode::Record, Mode::Replay}) {
    if (s == to_string(m)) return m;
  }
  throw InvalidArgument("unknown mode: " + std::string(s) + " (expected live, record, replay)");
}

std::string redact_secrets(std::string text, const std::string& api_key_env) {
  const char* key = std::getenv(api_key_env.c_str());
  if (key == nullptr || std::string_view(key).size() < 4) return text;
  const std::string secret(key);
  for (auto pos = text.find(secret); pos != std::string::npos; pos = text.find(secret, pos)) {
    text.replace(pos, secret.size(), "[REDACTED]");
  }
  return text;
}

namespace {

GatewayError malformed(const std::string& why) {
  return GatewayError(GatewayErrorKind::MalformedResponse, "malformed response: " + why, 1);
}

Usage parse_usage(const json& j) {
  Usage u;
  if (j.contains("usage") && j.at("usage").is_object()) {
    u.prompt_tokens = j.at("usage").value("prompt_tokens", std::int64_t{0});
    u.completion_tokens = j.at("usage").value("completion_tokens", std::int64_t{0});
  }
  return u;
}

std::string snippet(const std::string& body) {
  return body.size() > 200 ? body.substr(0, 200) + "..." : body;
}

class SlotGuard {
 public:
  explicit SlotGuard(std::counting_semaphore<>& s) : s_(s) { s_.acquire(); }
  ~SlotGuard() { s_.release(); }
  SlotGuard(const SlotGuard&) = delete;
  SlotGuard& operator=(const SlotGuard&) = delete;

 private:
  std::counting_semaphore<>& s_;
};

}  // namespace

CompletionResult parse_completion_body(EndpointKind kind, const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error&) {
    throw malformed("body is not JSON");
  }
  try {
    const json& choice = j.at("choices").at(0);
    CompletionResult r;
    r.usage = parse_usage(j);
    if (j.contains("created") && j.at("created").is_number_integer()) {
      r.created = j.at("created").get<std::int64_t>();
    }
    if (kind == EndpointKind::Chat) {
      r.text = choice.at("message").at("content").get<std::string>();
      return r;
    }
    if (kind != EndpointKind::CompletionWithLogprobs) throw malformed("not a completion endpoint");
    r.text = choice.at("text").get<std::string>();
    const json& lp = choice.at("logprobs");
    if (!lp.is_object()) throw malformed("logprobs missing");
    r.tokens = lp.at("tokens").get<std::vector<std::string>>();
    std::vector<std::map<std::string, double>> alternatives;
    for (const auto& pos : lp.at("top_logprobs")) {
      std::map<std::string, double> m;
      if (pos.is_object()) {
        for (const auto& [tok, v] : pos.items()) {
          double p = v.get<double>();
          if (p > 1e-6 || std::isnan(p)) throw malformed("log-probability > 0");
          m[tok] = std::min(p, 0.0);
        }
      }
      alternatives.push_back(std::move(m));
    }
    if (alternatives.size() != r.tokens.size()) throw malformed("top_logprobs/tokens length mismatch");
    r.token_logprob_alternatives = std::move(alternatives);
    return r;
  } catch (const json::exception& e) {
    throw malformed(e.what());
  }
}

std::vector<std::vector<double>> parse_embedding_body(const std::string& body,
                                                      std::size_t expected_count) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error&) {
    throw malformed("body is not JSON");
  }
  try {
    std::vector<std::vector<double>> out(expected_count);
    std::vector<bool> filled(expected_count, false);
    const json& data = j.at("data");
    if (data.size() != expected_count) throw malformed("embedding count does not match input count");
    std::size_t position = 0;
    for (const auto& item : data) {
      std::size_t idx = item.contains("index") ? item.at("index").get<std::size_t>() : position;
      ++position;
      if (idx >= expected_count || filled[idx]) throw malformed("bad embedding index");
      out[idx] = item.at("embedding").get<std::vector<double>>();
      filled[idx] = true;
    }
    for (const auto& v : out) {
      if (v.empty() || v.size() != out.front().size()) throw malformed("embedding dimensions differ");
    }
    return out;
  } catch (const json::exception& e) {
    throw malformed(e.what());
  }
}

Gateway::Gateway(std::shared_ptr<Transport> transport, RetryPolicy policy)
    : transport_(std::move(transport)), policy_(std::move(policy)), jitter_rng_(policy_.jitter_seed) {
  if (!policy_.sleep) {
    policy_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }
}

std::shared_ptr<Gateway> Gateway::for_mode(Mode mode, const std::filesystem::path& cassette,
                                           RetryPolicy policy) {
  switch (mode) {
    case Mode::Live:
      return std::make_shared<Gateway>(std::make_shared<HttpTransport>(), std::move(policy));
    case Mode::Record:
      return recording(std::make_shared<HttpTransport>(), cassette, std::move(policy));
    case Mode::Replay:
      return std::make_shared<Gateway>(
          std::make_shared<ReplayTransport>(std::make_shared<Cassette>(cassette)), std::move(policy));
  }
  throw InvalidArgument("unknown mode");
}

std::shared_ptr<Gateway> Gateway::recording(std::shared_ptr<Transport> upstream,
                                            const std::filesystem::path& cassette,
                                            RetryPolicy policy) {
  return std::make_shared<Gateway>(
      std::make_shared<RecordingTransport>(std::move(upstream), std::make_shared<Cassette>(cassette)),
      std::move(policy));
}

std::counting_semaphore<>& Gateway::slot_for(const ModelEndpoint& endpoint) {
  std::lock_guard lock(mu_);
  auto& slot = slots_[endpoint.name];
  if (!slot) slot = std::make_unique<std::counting_semaphore<>>(endpoint.max_concurrency);
  return *slot;
}

std::chrono::milliseconds Gateway::backoff(int retry_index) {
  double u;
  {
    std::lock_guard lock(mu_);
    u = static_cast<double>(jitter_rng_.below(1'000'001)) / 500'000.0 - 1.0;
  }
  double ms = static_cast<double>(policy_.base.count()) * std::pow(policy_.factor, retry_index) *
              (1.0 + policy_.jitter * u);
  ms = std::clamp(ms, 0.0, static_cast<double>(policy_.max_delay.count()));
  return std::chrono::milliseconds(static_cast<std::int64_t>(ms));
}

void Gateway::account(const ModelEndpoint& endpoint, const Usage& usage, int retries, bool failed) {
  std::lock_guard lock(mu_);
  auto& s = stats_[endpoint.name];
  ++s.requests;
  s.retries += static_cast<std::size_t>(retries);
  if (failed) ++s.failures;
  s.prompt_tokens += usage.prompt_tokens;
  s.completion_tokens += usage.completion_tokens;
}

EndpointStats Gateway::stats(const std::string& endpoint_name) const {
  std::lock_guard lock(mu_);
  auto it = stats_.find(endpoint_name);
  return it == stats_.end() ? EndpointStats{} : it->second;
}

ApiResponse Gateway::send_with_retries(const ModelEndpoint& endpoint, const ApiRequest& request,
                                       int* retries) {
  endpoint.validate();
  auto& slot = slot_for(endpoint);
  const int attempts_allowed = endpoint.max_retries + 1;
  for (int attempt = 1;; ++attempt) {
    std::optional<GatewayError> failure;
    std::optional<double> retry_after;
    try {
      ApiResponse r;
      {
        SlotGuard guard(slot);
        r = transport_->send(request);
      }
      if (r.status >= 200 && r.status < 300) {
        *retries = attempt - 1;
        return r;
      }
      std::string body = redact_secrets(snippet(r.body), endpoint.api_key_env);
      std::string where = "endpoint " + endpoint.name + " returned HTTP " + std::to_string(r.status);
      if (r.status == 401 || r.status == 403) {
        throw GatewayError(GatewayErrorKind::AuthFailure, where + ": " + body, attempt, r.status);
      }
      if (r.status == 429) {
        retry_after = r.retry_after_seconds;
        failure.emplace(GatewayErrorKind::RateLimited,
                        where + " (rate limited) after " + std::to_string(attempt) + " attempt(s)",
                        attempt, r.status, r.retry_after_seconds);
      } else if (r.status >= 500 || r.status == 408) {
        failure.emplace(GatewayErrorKind::ServerError,
                        where + " after " + std::to_string(attempt) + " attempt(s): " + body, attempt,
                        r.status);
      } else {
        throw GatewayError(GatewayErrorKind::BadRequest, where + ": " + body, attempt, r.status);
      }
    } catch (const TransportTimeout& e) {
      failure.emplace(GatewayErrorKind::Timeout,
                      redact_secrets(e.what(), endpoint.api_key_env) + " after " +
                          std::to_string(attempt) + " attempt(s)",
                      attempt);
    } catch (const ConnectionFailed& e) {
      failure.emplace(GatewayErrorKind::ConnectionFailed,
                      redact_secrets(e.what(), endpoint.api_key_env) + " after " +
                          std::to_string(attempt) + " attempt(s)",
                      attempt);
    }
    if (attempt >= attempts_allowed) {
      *retries = attempt - 1;
      throw *failure;
    }
    auto delay = backoff(attempt - 1);
    if (retry_after) {
      auto server = std::chrono::milliseconds(static_cast<std::int64_t>(*retry_after * 1000.0));
      delay = std::max(delay, server);
    }
    policy_.sleep(delay);
  }
}

CompletionResult Gateway::complete(const ModelEndpoint& endpoint,
                                   std::span<const prompts::Message> messages,
                                   const DecodeParams& params) {
  if (endpoint.kind != EndpointKind::Chat) {
    throw InvalidArgument("endpoint " + endpoint.name + " is not a chat endpoint");
  }
  json msgs = json::array();
  for (const auto& m : messages) msgs.push_back({{"role", prompts::to_string(m.role)}, {"content", m.content}});
  ApiRequest req;
  req.kind = endpoint.kind;
  req.base_url = endpoint.base_url;
  req.path = "/chat/completions";
  req.api_key_env = endpoint.api_key_env;
  req.timeout = endpoint.timeout;
  req.body = {{"model", endpoint.model_name},
              {"messages", std::move(msgs)},
              {"temperature", params.temperature},
              {"max_tokens", params.max_tokens},
              {"n", 1}};
  if (params.seed) req.body["seed"] = *params.seed;

  int retries = 0;
  try {
    ApiResponse r = send_with_retries(endpoint, req, &retries);
    CompletionResult out = parse_completion_body(endpoint.kind, r.body);
    out.retries = retries;
    account(endpoint, out.usage, retries, false);
    return out;
  } catch (...) {
    account(endpoint, {}, retries, true);
    throw;
  }
}

CompletionResult Gateway::complete(const ModelEndpoint& endpoint, const prompts::BuiltPrompt& prompt,
                                   const DecodeParams& params) {
  return complete(endpoint, std::span<const prompts::Message>(prompt.messages), params);
}

CompletionResult Gateway::complete(const ModelEndpoint& endpoint, const std::string& prompt,
                                   const DecodeParams& params) {
  if (endpoint.kind == EndpointKind::Chat) {
    std::vector<prompts::Message> one{{prompts::Role::User, prompt}};
    return complete(endpoint, std::span<const prompts::Message>(one), params);
  }
  if (endpoint.kind != EndpointKind::CompletionWithLogprobs) {
    throw InvalidArgument("endpoint " + endpoint.name + " cannot complete text");
  }
  ApiRequest req;
  req.kind = endpoint.kind;
  req.base_url = endpoint.base_url;
  req.path = "/completions";
  req.api_key_env = endpoint.api_key_env;
  req.timeout = endpoint.timeout;
  req.body = {{"model", endpoint.model_name},
              {"prompt", prompt},
              {"temperature", params.temperature},
              {"max_tokens", params.max_tokens},
              {"logprobs", params.top_logprobs.value_or(5)}};
  if (params.seed) req.body["seed"] = *params.seed;

  int retries = 0;
  try {
    ApiResponse r = send_with_retries(endpoint, req, &retries);
    CompletionResult out = parse_completion_body(endpoint.kind, r.body);
    out.retries = retries;
    account(endpoint, out.usage, retries, false);
    return out;
  } catch (...) {
    account(endpoint, {}, retries, true);
    throw;
  }
}

std::vector<std::vector<double>> Gateway::embed(const ModelEndpoint& endpoint,
                                                const std::vector<std::string>& texts) {
  if (endpoint.kind != EndpointKind::Embedding) {
    throw InvalidArgument("endpoint " + endpoint.name + " is not an embedding endpoint");
  }
  if (texts.empty()) return {};
  for (const auto& t : texts) {
    if (t.empty()) throw InvalidArgument("cannot embed an empty text");
  }
  ApiRequest req;
  req.kind = endpoint.kind;
  req.base_url = endpoint.base_url;
  req.path = "/embeddings";
  req.api_key_env = endpoint.api_key_env;
  req.timeout = endpoint.timeout;
  req.body = {{"model", endpoint.model_name}, {"input", texts}};

  int retries = 0;
  try {
    ApiResponse r = send_with_retries(endpoint, req, &retries);
    auto vectors = parse_embedding_body(r.body, texts.size());
    Usage u;
    try {
      u = parse_usage(json::parse(r.body));
    } catch (const json::exception&) {
    }
    account(endpoint, u, retries, false);
    return vectors;
  } catch (...) {
    account(endpoint, {}, retries, true);
    throw;
  }
}

}  // namespace neuronlens::gateway
