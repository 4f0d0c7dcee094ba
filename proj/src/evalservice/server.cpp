#include "neuronlens/evalservice/server.hpp"

#include <thread>

#include <httplib.h>

namespace neuronlens::evalservice {

using nlohmann::json;

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
  send_json(res, status, {{"error", {{"code", code}, {"message", message}}}});
}

bool equal_constant_time(const std::string& a, const std::string& b) {
  if (a.size() != b.size()) return false;
  unsigned char diff = 0;
  for (std::size_t i = 0; i < a.size(); ++i) diff |= static_cast<unsigned char>(a[i] ^ b[i]);
  return diff == 0;
}

int rating_value(const json& v) {
  if (!v.is_number_integer()) throw InvalidRating("ratings must be integers from 1 to 5");
  return v.get<int>();
}

RatingSubmission parse_submission(const std::string& session_id, const json& body) {
  RatingSubmission s;
  s.session_id = session_id;
  const json& n = body.at("neuron");
  s.neuron = {n.at("layer").get<int>(), n.at("neuron").get<int>()};
  const json& r = body.at("slot_ratings");
  if (r.is_array()) {
    for (std::size_t i = 0; i < r.size(); ++i) s.slot_ratings[static_cast<int>(i)] = rating_value(r[i]);
  } else if (r.is_object()) {
    for (const auto& [k, v] : r.items()) {
      std::size_t used = 0;
      int slot = -1;
      try {
        slot = std::stoi(k, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != k.size()) throw InvalidRating("slot keys must be integers");
      s.slot_ratings[slot] = rating_value(v);
    }
  } else {
    throw InvalidRating("slot_ratings must be an object or an array");
  }
  if (!body.at("best_slot").is_number_integer()) throw InvalidRating("best_slot must be an integer");
  s.best_slot = body.at("best_slot").get<int>();
  return s;
}

// Maps service exceptions to HTTP errors.
template <class F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const UnknownSession& e) {
    send_error(res, 404, "UnknownSession", e.what());
  } catch (const SessionComplete& e) {
    send_error(res, 409, "SessionComplete", e.what());
  } catch (const InvalidRating& e) {
    send_error(res, 400, "InvalidRating", e.what());
  } catch (const WrongNeuron& e) {
    send_error(res, 409, "WrongNeuron", e.what());
  } catch (const DuplicateSubmission& e) {
    send_error(res, 409, "DuplicateSubmission", e.what());
  } catch (const EmptyStore& e) {
    send_error(res, 404, "EmptyStore", e.what());
  } catch (const InsufficientExplainedNeurons& e) {
    send_error(res, 409, "InsufficientExplainedNeurons", e.what());
  } catch (const json::exception&) {
    send_error(res, 400, "BadRequest", "request body is not valid JSON of the expected shape");
  } catch (const InvalidArgument& e) {
    send_error(res, 400, "BadRequest", e.what());
  } catch (const std::exception&) {
    send_error(res, 500, "Internal", "internal error");
  }
}

}  // namespace

struct EvalServer::Impl {
  std::shared_ptr<StudyService> service;
  std::string admin_token;
  httplib::Server http;
  std::thread thread;
};

EvalServer::EvalServer(std::shared_ptr<StudyService> service, std::string admin_token)
    : impl_(std::make_unique<Impl>()) {
  impl_->service = std::move(service);
  impl_->admin_token = std::move(admin_token);
  auto& http = impl_->http;
  Impl* self = impl_.get();

  http.Post("/sessions", [self](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      json body = req.body.empty() ? json::object() : json::parse(req.body);
      StudyConfig cfg = self->service->defaults();
      if (body.contains("neurons_per_layer")) cfg.neurons_per_layer = body.at("neurons_per_layer").get<std::size_t>();
      if (body.contains("explainer_tag")) cfg.explainer_tag = body.at("explainer_tag").get<std::string>();
      if (body.contains("seed")) cfg.seed = body.at("seed").get<std::uint64_t>();
      auto s = self->service->create_session(body.value("rater_id", std::string()), cfg);
      send_json(res, 201, {{"session_id", s.session_id}, {"total", s.assignment.size()}});
    });
  });

  http.Get(R"(/sessions/([^/]+)/task)", [self](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, self->service->get_task(req.matches[1])); });
  });

  http.Post(R"(/sessions/([^/]+)/ratings)", [self](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto submission = parse_submission(req.matches[1], json::parse(req.body));
      send_json(res, 200, self->service->submit_rating(submission));
    });
  });

  http.Get("/study/results", [self](const httplib::Request& req, httplib::Response& res) {
    if (self->admin_token.empty()) {
      send_error(res, 403, "Forbidden", "results endpoint is disabled");
      return;
    }
    const std::string header = req.get_header_value("Authorization");
    const std::string prefix = "Bearer ";
    if (header.rfind(prefix, 0) != 0 || !equal_constant_time(header.substr(prefix.size()), self->admin_token)) {
      send_error(res, 401, "Unauthorized", "admin bearer token required");
      return;
    }
    guarded(res, [&] { send_json(res, 200, to_json(self->service->results())); });
  });

  http.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) send_error(res, res.status, "NotFound", "no such endpoint");
  });
}

EvalServer::~EvalServer() { stop(); }

int EvalServer::bind(const std::string& host, int port) {
  int bound = port == 0 ? impl_->http.bind_to_any_port(host) : (impl_->http.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void EvalServer::listen() { impl_->http.listen_after_bind(); }

int EvalServer::start(const std::string& host, int port) {
  int bound = bind(host, port);
  impl_->thread = std::thread([this] { listen(); });
  impl_->http.wait_until_ready();
  return bound;
}

void EvalServer::stop() {
  if (!impl_) return;
  impl_->http.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace neuronlens::evalservice
