#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "neuronlens/core/types.hpp"
#include "neuronlens/gateway/gateway.hpp"
#include "neuronlens/prompts/builder.hpp"
#include "neuronlens/simscore/stats.hpp"

namespace neuronlens::adacs {

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class ZeroVector : public Error {
 public:
  ZeroVector() : Error("cosine similarity of a zero vector is undefined") {}
};

class MissingBaseline : public Error {
 public:
  MissingBaseline() : Error("baseline explanation is missing or empty") {}
};

enum class ReferenceKind { Baseline, GroundTruth };
std::string_view to_string(ReferenceKind k);

struct SimilarityResult {
  std::string subject;  // neuron id ("layer:neuron") or puzzle name
  PromptMethod method = PromptMethod::Original;
  double cosine = 0.0;
  ReferenceKind reference_kind = ReferenceKind::Baseline;
  std::size_t rank = 0;   // 1 = most similar
  bool tied = false;      // shares its cosine with another method
  double embedding_norm = 0.0;
};

/// dot(a, b) / (|a| |b|), clamped to [-1, 1].
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Whitespace runs collapse to one space; ends are trimmed.
std::string normalize_for_embedding(std::string_view text);

/// Embeds the baseline and every explanation in one batch and ranks methods
/// by descending cosine; equal cosines are ordered by method enum order and
/// flagged as tied. Results come back in rank order.
std::vector<SimilarityResult> compare_to_baseline(const std::vector<Explanation>& explanations,
                                                  const std::string& baseline,
                                                  gateway::Gateway& gateway,
                                                  const gateway::ModelEndpoint& embedder);

/// Same ranking over precomputed vectors (first = reference).
std::vector<SimilarityResult> rank_against_reference(
    const std::vector<PromptMethod>& methods, std::span<const std::vector<double>> method_vectors,
    const std::vector<double>& reference, const std::string& subject, ReferenceKind kind);

/// A handcrafted activation pattern with a known explanation.
struct NeuronPuzzle {
  std::string name;
  std::string ground_truth;
  std::vector<ActivationRecord> excerpts;

  static NeuronPuzzle load(const std::filesystem::path& path);
  static NeuronPuzzle from_json(const nlohmann::json& j);
};

/// Every `*.json` under `dir`, sorted by file name.
std::vector<NeuronPuzzle> load_puzzles(const std::filesystem::path& dir);

struct PuzzleScore {
  simscore::MeanAndError summary;
  std::vector<SimilarityResult> samples;  // puzzles x samples_per_puzzle, puzzle-major
};

struct PuzzleRun {
  const prompts::FewShotSet* few_shot = nullptr;
  const prompts::TokenCounter* counter = nullptr;
  double quantile = prompts::kDefaultQuantile;
  int samples_per_puzzle = 3;
  std::int64_t base_seed = 0;
};

/// For each puzzle draws `samples_per_puzzle` explanations with the method's
/// prompt (sample i uses decode seed base_seed + i), embeds each next to the
/// ground truth and averages all cosines.
PuzzleScore score_puzzles(const std::vector<NeuronPuzzle>& puzzles, PromptMethod method,
                          gateway::Gateway& gateway, const gateway::ModelEndpoint& explainer,
                          const gateway::ModelEndpoint& embedder, const PuzzleRun& run);

}  // namespace neuronlens::adacs
