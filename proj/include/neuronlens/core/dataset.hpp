#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "neuronlens/core/types.hpp"

namespace neuronlens {

/// Bounds and strictness for a neuron dataset. Defaults describe GPT-2 XL.
struct DatasetSchema {
  int layer_count = 48;
  int neurons_per_layer = 6400;
  /// Strict: any bad line rejects the whole file. Lenient: bad lines are skipped and reported.
  bool strict = true;
};

struct IngestProblem {
  std::size_t line = 0;
  std::string field;
  std::string message;
};

struct IngestResult {
  std::vector<NeuronRecord> records;
  int clamped_activations = 0;
  std::vector<IngestProblem> problems;  // only populated in lenient mode
};

/// Reads a JSON-lines neuron dataset. Blank lines are ignored.
///
/// Throws MissingFile, SchemaViolation (first bad line, strict mode) or
/// AllZeroNeuron (strict mode).
IngestResult ingest_neurons(const std::filesystem::path& path, const DatasetSchema& schema = {});

/// Same as ingest_neurons over in-memory JSONL text.
IngestResult ingest_neurons_text(const std::string& text, const DatasetSchema& schema = {});

nlohmann::json to_json(const ActivationRecord& r);
nlohmann::json to_json(const NeuronRecord& r);
nlohmann::json to_json(const Explanation& e);
nlohmann::json to_json(const ScoreReport& s);

/// Parses one activation record object; throws SchemaViolation tagged with `line`.
ActivationRecord activation_record_from_json(const nlohmann::json& j, std::size_t line,
                                             const std::string& field, int* clamped = nullptr);
Explanation explanation_from_json(const nlohmann::json& j);
ScoreReport score_report_from_json(const nlohmann::json& j);

/// One compact JSON object per line, LF terminated.
std::string serialize_neurons(const std::vector<NeuronRecord>& records);

std::vector<Explanation> read_explanations(const std::filesystem::path& path);
std::vector<ScoreReport> read_scores(const std::filesystem::path& path);

}  // namespace neuronlens
