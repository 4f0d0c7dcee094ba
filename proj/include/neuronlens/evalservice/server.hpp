#pragma once

#include <memory>
#include <string>

#include "neuronlens/evalservice/study.hpp"

namespace neuronlens::evalservice {

/// JSON-over-HTTP front for a StudyService:
///   POST /sessions                 {"rater_id", "neurons_per_layer"?, "explainer_tag"?, "seed"?}
///   GET  /sessions/{id}/task
///   POST /sessions/{id}/ratings    {"neuron": {"layer", "neuron"}, "slot_ratings", "best_slot"}
///   GET  /study/results            Authorization: Bearer <admin token>
/// Errors are {"error": {"code", "message"}} with a 4xx status.
class EvalServer {
 public:
  EvalServer(std::shared_ptr<StudyService> service, std::string admin_token);
  ~EvalServer();
  EvalServer(const EvalServer&) = delete;
  EvalServer& operator=(const EvalServer&) = delete;

  /// Binds and returns the port (0 picks a free one). Throws on failure.
  int bind(const std::string& host, int port);
  /// Serves until stop(); call after bind().
  void listen();
  /// bind() then serve on a background thread.
  int start(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace neuronlens::evalservice
