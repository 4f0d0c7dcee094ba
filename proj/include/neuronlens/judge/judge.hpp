#pragma once

#include <deque>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "neuronlens/core/errors.hpp"
#include "neuronlens/core/types.hpp"
#include "neuronlens/gateway/gateway.hpp"

namespace neuronlens::judge {

class UnparseableScore : public Error {
 public:
  explicit UnparseableScore(std::string raw)
      : Error("could not parse a 0-10 score from judge reply: \"" + clip(raw) + "\""), raw_(std::move(raw)) {}
  [[nodiscard]] const std::string& raw_text() const { return raw_; }

 private:
  static std::string clip(const std::string& s) { return s.size() > 120 ? s.substr(0, 120) + "..." : s; }
  std::string raw_;
};

class WrongCount : public Error {
 public:
  using Error::Error;
};

class WrongGroupSize : public Error {
 public:
  using Error::Error;
};

enum class Strategy { AccumulatingFewShot, BatchedPairs, ChainOfThought };
std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view s);  // accepts the enum names and v4 / v5 / v6

struct ExplanationPair {
  std::string first;   // reference, e.g. the baseline explanation
  std::string second;  // generated explanation

  bool operator==(const ExplanationPair&) const = default;
};

struct JudgeRanking {
  ExplanationPair pair;
  double score = 0.0;
  Strategy strategy = Strategy::AccumulatingFewShot;
  std::optional<std::string> rationale;  // present iff ChainOfThought
};

/// Score grammar: an optional label, then a decimal number with at most one
/// fractional digit, within [0, 10]. The last number in the reply is used;
/// a trailing "/10" or "out of 10" denominator is skipped. Never throws
/// anything but UnparseableScore.
double parse_score(const std::string& reply);

/// Parses "LABEL: score" entries for the five method labels (O, S, H, HS,
/// AVHS) in any order. All five must appear exactly once.
std::map<PromptMethod, double> parse_labeled_scores(const std::string& reply);

/// Rolling few-shot memory for the accumulating strategy; oldest evicted first.
class AccumulatingContext {
 public:
  explicit AccumulatingContext(std::size_t cap = 20) : cap_(cap) {}
  void add(const ExplanationPair& pair, double score);
  [[nodiscard]] const std::deque<std::pair<ExplanationPair, double>>& entries() const { return entries_; }
  [[nodiscard]] std::size_t cap() const { return cap_; }

 private:
  std::size_t cap_;
  std::deque<std::pair<ExplanationPair, double>> entries_;
};

struct CotExemplar {
  ExplanationPair pair;
  double score = 0.0;
  std::string rationale;
};

/// Editable chain-of-thought exemplars, JSON `{"exemplars": [{first, second, score, rationale}]}`.
std::vector<CotExemplar> load_cot_exemplars(const std::filesystem::path& path);

/// Per-session judge state. Single writer.
struct JudgeState {
  AccumulatingContext accumulating{20};
  std::vector<CotExemplar> cot_exemplars;
};

std::string build_pair_prompt(const ExplanationPair& pair, Strategy strategy, const JudgeState& state);
std::string build_batch_prompt(const std::map<PromptMethod, ExplanationPair>& pairs);

/// Judges one pair. AccumulatingFewShot appends the result to its context.
JudgeRanking judge_pair(const ExplanationPair& pair, Strategy strategy, gateway::Gateway& gateway,
                        const gateway::ModelEndpoint& judge, JudgeState& state);

/// All five method pairs of one neuron in a single prompt.
std::map<PromptMethod, JudgeRanking> judge_batch(const std::map<PromptMethod, ExplanationPair>& pairs,
                                                 gateway::Gateway& gateway,
                                                 const gateway::ModelEndpoint& judge);

/// Neurons whose five scores span strictly more than `range_threshold`.
std::vector<NeuronId> select_controversial(
    const std::vector<std::pair<NeuronId, std::vector<double>>>& groups, double range_threshold = 3.0);

}  // namespace neuronlens::judge
