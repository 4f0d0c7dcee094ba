#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "neuronlens/core/errors.hpp"
#include "neuronlens/gateway/endpoint.hpp"

namespace neuronlens::gateway {

/// A request in API terms. The API key is not part of it; only the live
/// transport resolves `api_key_env`.
struct ApiRequest {
  EndpointKind kind = EndpointKind::Chat;
  std::string base_url;
  std::string path;  // e.g. "/chat/completions"
  nlohmann::json body;
  std::string api_key_env = std::string(kDefaultApiKeyEnv);
  std::chrono::milliseconds timeout{60'000};
};

struct ApiResponse {
  int status = 200;
  std::string body;
  std::optional<double> retry_after_seconds;
};

/// Raised by a transport when the exchange timed out.
class TransportTimeout : public Error {
 public:
  using Error::Error;
};

/// Raised by a transport when no connection could be made.
class ConnectionFailed : public Error {
 public:
  using Error::Error;
};

class CassetteMiss : public Error {
 public:
  explicit CassetteMiss(std::string hash)
      : Error("no cassette entry for request " + hash), hash_(std::move(hash)) {}
  [[nodiscard]] const std::string& request_hash() const { return hash_; }

 private:
  std::string hash_;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual ApiResponse send(const ApiRequest& request) = 0;
};

/// Lower-case hex SHA-256 digest.
std::string sha256_hex(const std::string& data);

/// SHA-256 (hex) over the endpoint kind and the canonical request body
/// (model, messages or prompt or inputs, decode parameters). Base URL and
/// credentials are excluded.
std::string request_hash(const ApiRequest& request);

/// OpenAI-compatible HTTP(S) client. Reads the bearer token from the
/// environment variable named in the request at send time.
class HttpTransport final : public Transport {
 public:
  ApiResponse send(const ApiRequest& request) override;

  /// Number of live HTTP exchanges attempted by any HttpTransport in this process.
  static std::size_t live_request_count();

 private:
  static std::atomic<std::size_t> live_requests_;
};

/// Adapts a callable; used for fakes and the offline synthetic model.
class FunctionTransport : public Transport {
 public:
  using Handler = std::function<ApiResponse(const ApiRequest&)>;
  explicit FunctionTransport(Handler handler) : handler_(std::move(handler)) {}
  ApiResponse send(const ApiRequest& request) override { return handler_(request); }

 private:
  Handler handler_;
};

/// Request-hash keyed store of verbatim responses, persisted as JSONL lines
/// `{"request_hash", "request_summary", "response": {"status", "body"}}`.
class Cassette {
 public:
  /// Loads `path` if it exists; a missing file is an empty cassette.
  explicit Cassette(std::filesystem::path path);

  std::optional<ApiResponse> find(const std::string& hash) const;
  /// Appends unless the hash is already present.
  void put(const std::string& hash, const ApiRequest& request, const ApiResponse& response);
  [[nodiscard]] std::size_t size() const;
  [[nodiscard]] const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::map<std::string, ApiResponse> entries_;
};

/// Forwards to `inner` and stores every 2xx response in the cassette.
class RecordingTransport final : public Transport {
 public:
  RecordingTransport(std::shared_ptr<Transport> inner, std::shared_ptr<Cassette> cassette)
      : inner_(std::move(inner)), cassette_(std::move(cassette)) {}
  ApiResponse send(const ApiRequest& request) override;

 private:
  std::shared_ptr<Transport> inner_;
  std::shared_ptr<Cassette> cassette_;
};

/// Answers only from the cassette; throws CassetteMiss otherwise.
class ReplayTransport final : public Transport {
 public:
  explicit ReplayTransport(std::shared_ptr<Cassette> cassette) : cassette_(std::move(cassette)) {}
  ApiResponse send(const ApiRequest& request) override;

 private:
  std::shared_ptr<Cassette> cassette_;
};

}  // namespace neuronlens::gateway
