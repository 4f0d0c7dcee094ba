#pragma once

#include <array>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "neuronlens/core/errors.hpp"
#include "neuronlens/core/types.hpp"
#include "neuronlens/simscore/stats.hpp"

namespace neuronlens::evalservice {

class UnknownSession : public Error {
 public:
  explicit UnknownSession(const std::string& id) : Error("unknown or expired session " + id) {}
};
class SessionComplete : public Error {
 public:
  SessionComplete() : Error("session has no remaining tasks") {}
};
class InvalidRating : public Error {
 public:
  using Error::Error;
};
class WrongNeuron : public Error {
 public:
  using Error::Error;
};
class DuplicateSubmission : public Error {
 public:
  using Error::Error;
};
class EmptyStore : public Error {
 public:
  EmptyStore() : Error("no ratings have been submitted") {}
};
class InsufficientExplainedNeurons : public Error {
 public:
  InsufficientExplainedNeurons(int layer, std::size_t wanted, std::size_t available)
      : Error("layer " + std::to_string(layer) + " has " + std::to_string(available) +
              " fully explained qualifying neurons, " + std::to_string(wanted) + " needed"),
        layer_(layer) {}
  [[nodiscard]] int layer() const { return layer_; }

 private:
  int layer_;
};

inline constexpr std::size_t kSlots = 5;
using SlotMethods = std::array<PromptMethod, kSlots>;

struct StudyConfig {
  int layer_count = 48;
  std::size_t neurons_per_layer = 1;
  double score_threshold = 0.35;  // baseline_score must exceed it
  std::string explainer_tag;      // explainer_model filter; empty accepts any
  std::optional<std::uint64_t> seed;
  std::chrono::seconds idle_timeout{24 * 3600};
};

struct Assignment {
  NeuronId neuron;
  SlotMethods slot_methods;  // server side only
};

struct EvalSession {
  std::string session_id;
  std::string rater_id;
  std::string explainer_tag;
  std::vector<Assignment> assignment;
  std::size_t cursor = 0;
  std::uint64_t seed = 0;
};

struct RatingSubmission {
  std::string session_id;
  NeuronId neuron;
  std::map<int, int> slot_ratings;  // slot -> 1..5
  int best_slot = -1;
};

/// One persisted rating line, un-blinded by the stored slot methods.
struct StoredRating {
  std::string session_id;
  std::string rater_id;
  std::string explainer_tag;
  NeuronId neuron;
  std::array<int, kSlots> slot_ratings{};
  int best_slot = 0;
  SlotMethods slot_methods{};
  std::string submitted_at;
};

nlohmann::json to_json(const StoredRating& r);
StoredRating stored_rating_from_json(const nlohmann::json& j);

/// Append-only JSONL ratings file. Appends hold an exclusive advisory file
/// lock so separate processes sharing the file do not interleave lines.
class RatingsStore {
 public:
  explicit RatingsStore(std::filesystem::path path);
  void append(const StoredRating& r);
  /// Reads the file fresh.
  [[nodiscard]] std::vector<StoredRating> read_all() const;
  [[nodiscard]] const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
};

struct MethodResult {
  PromptMethod method = PromptMethod::Original;
  simscore::MeanAndError rating;
  std::size_t best_count = 0;
  double best_fraction = 0.0;
};

struct StudyResults {
  std::size_t submissions = 0;
  std::vector<MethodResult> methods;  // enum order
};

/// Per method: mean rating +/- SEM over all its ratings, and the fraction of
/// submissions whose best slot held it. Throws EmptyStore.
StudyResults aggregate_study(const std::vector<StoredRating>& ratings);
nlohmann::json to_json(const StudyResults& r);
/// "method  avg +/- sem  best%" lines, 3 decimals and 2-decimal percentages.
std::string render_study_text(const StudyResults& r);

/// Session bookkeeping and blinding. Every JSON it returns for raters is
/// free of method identifiers. Thread-safe.
class StudyService {
 public:
  using Clock = std::function<std::chrono::system_clock::time_point()>;

  StudyService(std::vector<NeuronRecord> neurons, const std::vector<Explanation>& explanations,
               StudyConfig defaults, std::shared_ptr<RatingsStore> store, Clock clock = {});

  /// Returns the new session. `overrides` may change neurons_per_layer,
  /// explainer_tag and seed.
  EvalSession create_session(const std::string& rater_id, const StudyConfig& config);
  [[nodiscard]] const StudyConfig& defaults() const { return defaults_; }

  nlohmann::json get_task(const std::string& session_id);
  nlohmann::json submit_rating(const RatingSubmission& submission);
  StudyResults results() const;

  /// Server-side view for tests and admin tooling.
  std::optional<EvalSession> session(const std::string& session_id) const;

 private:
  struct Entry {
    EvalSession session;
    std::chrono::system_clock::time_point last_active;
    std::mutex mu;
  };

  std::shared_ptr<Entry> find(const std::string& session_id);
  /// (neuron, method) -> explanation text for the given explainer tag.
  const std::map<PromptMethod, std::string>* texts_for(const NeuronId& id, const std::string& tag) const;

  std::map<NeuronId, NeuronRecord> neurons_;
  std::map<std::string, std::map<NeuronId, std::map<PromptMethod, std::string>>> texts_by_tag_;
  StudyConfig defaults_;
  std::shared_ptr<RatingsStore> store_;
  Clock clock_;

  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
};

}  // namespace neuronlens::evalservice
