#include "neuronlens/gateway/transport.hpp"

#include <cstdlib>
#include <fstream>

#include <openssl/evp.h>

#include <httplib.h>

#include "neuronlens/core/jsonl.hpp"

namespace neuronlens::gateway {

using nlohmann::json;

std::atomic<std::size_t> HttpTransport::live_requests_{0};

namespace {

struct SplitUrl {
  std::string scheme_host_port;
  std::string path_prefix;
};

SplitUrl split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw InvalidArgument("base_url needs a scheme: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, ""};
  std::string prefix = url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {url.substr(0, path_start), prefix};
}

std::optional<double> parse_retry_after(const std::string& v) {
  if (v.empty()) return std::nullopt;
  char* end = nullptr;
  double s = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || s < 0.0) return std::nullopt;  // HTTP-date form is not honored
  return s;
}

json summary_of(const ApiRequest& request) {
  json s{{"kind", to_string(request.kind)}, {"path", request.path}};
  if (request.body.contains("model")) s["model"] = request.body.at("model");
  std::string preview;
  if (request.body.contains("messages") && !request.body.at("messages").empty()) {
    preview = request.body.at("messages").back().value("content", "");
  } else if (request.body.contains("prompt") && request.body.at("prompt").is_string()) {
    preview = request.body.at("prompt").get<std::string>();
  } else if (request.body.contains("input") && !request.body.at("input").empty()) {
    preview = request.body.at("input").front().get<std::string>();
  }
  if (preview.size() > 80) preview = preview.substr(preview.size() - 80);
  s["preview"] = preview;
  return s;
}

}  // namespace

std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, data.data(), data.size()) != 1 ||
      EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw Error("sha256 failed");
  }
  EVP_MD_CTX_free(ctx);
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

std::string request_hash(const ApiRequest& request) {
  // nlohmann::json objects keep keys sorted, so dump() is canonical
  return sha256_hex(std::string(to_string(request.kind)) + "\n" +
                    request.body.dump(-1, ' ', false, json::error_handler_t::replace));
}

ApiResponse HttpTransport::send(const ApiRequest& request) {
  ++live_requests_;
  auto url = split_url(request.base_url);
  httplib::Client client(url.scheme_host_port);
  auto secs = std::chrono::duration_cast<std::chrono::seconds>(request.timeout);
  auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(request.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  httplib::Headers headers;
  if (const char* key = std::getenv(request.api_key_env.c_str()); key != nullptr && *key != '\0') {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  auto res = client.Post(url.path_prefix + request.path, headers,
                         request.body.dump(-1, ' ', false, json::error_handler_t::replace),
                         "application/json");
  if (!res) {
    auto err = res.error();
    if (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout ||
        err == httplib::Error::Write) {
      throw TransportTimeout("request to " + url.scheme_host_port + " timed out");
    }
    throw ConnectionFailed("request to " + url.scheme_host_port + " failed: " + httplib::to_string(err));
  }
  ApiResponse out;
  out.status = res->status;
  out.body = res->body;
  if (res->has_header("Retry-After")) out.retry_after_seconds = parse_retry_after(res->get_header_value("Retry-After"));
  return out;
}

std::size_t HttpTransport::live_request_count() { return live_requests_.load(); }

Cassette::Cassette(std::filesystem::path path) : path_(std::move(path)) {
  if (!std::filesystem::exists(path_)) return;
  for_each_jsonl(path_, [&](std::size_t line, const json& j) {
    try {
      ApiResponse r;
      r.status = j.at("response").at("status").get<int>();
      r.body = j.at("response").at("body").get<std::string>();
      entries_.emplace(j.at("request_hash").get<std::string>(), std::move(r));
    } catch (const json::exception& e) {
      throw SchemaViolation(line, "<cassette>", e.what());
    }
  });
}

std::optional<ApiResponse> Cassette::find(const std::string& hash) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find(hash);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void Cassette::put(const std::string& hash, const ApiRequest& request, const ApiResponse& response) {
  std::lock_guard lock(mu_);
  if (!entries_.emplace(hash, response).second) return;
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  if (!out) throw Error("cannot append to cassette " + path_.string());
  json line{{"request_hash", hash},
            {"request_summary", summary_of(request)},
            {"response", {{"status", response.status}, {"body", response.body}}}};
  out << line.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
}

std::size_t Cassette::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

ApiResponse RecordingTransport::send(const ApiRequest& request) {
  ApiResponse r = inner_->send(request);
  if (r.status >= 200 && r.status < 300) cassette_->put(request_hash(request), request, r);
  return r;
}

ApiResponse ReplayTransport::send(const ApiRequest& request) {
  auto hash = request_hash(request);
  auto r = cassette_->find(hash);
  if (!r) throw CassetteMiss(hash);
  return *r;
}

}  // namespace neuronlens::gateway
