#include "neuronlens/core/dataset.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include "neuronlens/core/errors.hpp"
#include "neuronlens/core/jsonl.hpp"

namespace neuronlens {

using nlohmann::json;

namespace {

int require_int(const json& j, const char* field, std::size_t line) {
  if (!j.contains(field)) throw SchemaViolation(line, field, "missing");
  const json& v = j.at(field);
  if (!v.is_number_integer()) throw SchemaViolation(line, field, "expected integer");
  return v.get<int>();
}

std::vector<ActivationRecord> excerpts_from_json(const json& j, const char* field,
                                                 std::size_t line, int* clamped) {
  if (!j.contains(field)) throw SchemaViolation(line, field, "missing");
  const json& arr = j.at(field);
  if (!arr.is_array()) throw SchemaViolation(line, field, "expected array");
  std::vector<ActivationRecord> out;
  out.reserve(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) {
    out.push_back(activation_record_from_json(arr[i], line,
                                              std::string(field) + "[" + std::to_string(i) + "]",
                                              clamped));
  }
  return out;
}

NeuronRecord record_from_json(const json& j, std::size_t line, const DatasetSchema& schema,
                              int* clamped) {
  if (!j.is_object()) throw SchemaViolation(line, "<line>", "expected object");
  NeuronRecord r;
  r.id.layer = require_int(j, "layer", line);
  r.id.neuron = require_int(j, "neuron", line);
  if (r.id.layer < 0 || r.id.layer >= schema.layer_count) {
    throw SchemaViolation(line, "layer", "out of range [0, " + std::to_string(schema.layer_count) + ")");
  }
  if (r.id.neuron < 0 || r.id.neuron >= schema.neurons_per_layer) {
    throw SchemaViolation(line, "neuron",
                          "out of range [0, " + std::to_string(schema.neurons_per_layer) + ")");
  }
  r.top_excerpts = excerpts_from_json(j, "top_excerpts", line, clamped);
  if (r.top_excerpts.empty()) throw SchemaViolation(line, "top_excerpts", "must be non-empty");
  r.random_excerpts = excerpts_from_json(j, "random_excerpts", line, clamped);

  if (j.contains("baseline_explanation") && !j.at("baseline_explanation").is_null()) {
    const json& v = j.at("baseline_explanation");
    if (!v.is_string()) throw SchemaViolation(line, "baseline_explanation", "expected string or null");
    r.baseline_explanation = v.get<std::string>();
  }
  if (j.contains("baseline_score") && !j.at("baseline_score").is_null()) {
    const json& v = j.at("baseline_score");
    if (!v.is_number()) throw SchemaViolation(line, "baseline_score", "expected number or null");
    double s = v.get<double>();
    if (!(s >= -1.0 && s <= 1.0)) throw SchemaViolation(line, "baseline_score", "outside [-1, 1]");
    r.baseline_score = s;
  }
  if (!(r.neuron_max() > 0.0)) throw AllZeroNeuron(r.id, line);
  return r;
}

}  // namespace

ActivationRecord activation_record_from_json(const json& j, std::size_t line,
                                             const std::string& field, int* clamped) {
  if (!j.is_object()) throw SchemaViolation(line, field, "expected object");
  if (!j.contains("tokens") || !j.at("tokens").is_array()) {
    throw SchemaViolation(line, field + ".tokens", "expected array of strings");
  }
  if (!j.contains("activations") || !j.at("activations").is_array()) {
    throw SchemaViolation(line, field + ".activations", "expected array of numbers");
  }
  std::vector<std::string> tokens;
  for (const auto& t : j.at("tokens")) {
    if (!t.is_string()) throw SchemaViolation(line, field + ".tokens", "expected string");
    tokens.push_back(t.get<std::string>());
  }
  std::vector<double> acts;
  for (const auto& a : j.at("activations")) {
    if (!a.is_number()) throw SchemaViolation(line, field + ".activations", "expected number");
    acts.push_back(a.get<double>());
  }
  if (tokens.empty()) throw SchemaViolation(line, field + ".tokens", "must be non-empty");
  if (tokens.size() != acts.size()) {
    throw SchemaViolation(line, field,
                          "tokens length " + std::to_string(tokens.size()) +
                              " != activations length " + std::to_string(acts.size()));
  }
  for (double a : acts) {
    if (!std::isfinite(a)) throw SchemaViolation(line, field + ".activations", "not finite");
  }
  return ActivationRecord::make(std::move(tokens), std::move(acts), clamped);
}

IngestResult ingest_neurons_text(const std::string& text, const DatasetSchema& schema) {
  IngestResult result;
  std::set<NeuronId> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      json j;
      try {
        j = json::parse(line);
      } catch (const json::parse_error& e) {
        throw SchemaViolation(number, "<line>", std::string("invalid JSON: ") + e.what());
      }
      int clamped = 0;
      NeuronRecord r = record_from_json(j, number, schema, &clamped);
      if (!seen.insert(r.id).second) {
        throw SchemaViolation(number, "neuron", "duplicate neuron " + to_string(r.id));
      }
      result.clamped_activations += clamped;
      result.records.push_back(std::move(r));
    } catch (const SchemaViolation& e) {
      if (schema.strict) throw;
      result.problems.push_back({e.line(), e.field(), e.what()});
    } catch (const AllZeroNeuron& e) {
      if (schema.strict) throw;
      result.problems.push_back({e.line(), "top_excerpts", e.what()});
    }
  }
  return result;
}

IngestResult ingest_neurons(const std::filesystem::path& path, const DatasetSchema& schema) {
  if (!std::filesystem::exists(path)) throw MissingFile(path.string());
  return ingest_neurons_text(read_text_file(path), schema);
}

json to_json(const ActivationRecord& r) {
  return json{{"tokens", r.tokens}, {"activations", r.activations}};
}

json to_json(const NeuronRecord& r) {
  json top = json::array();
  for (const auto& e : r.top_excerpts) top.push_back(to_json(e));
  json rnd = json::array();
  for (const auto& e : r.random_excerpts) rnd.push_back(to_json(e));
  json j;
  j["layer"] = r.id.layer;
  j["neuron"] = r.id.neuron;
  j["top_excerpts"] = std::move(top);
  j["random_excerpts"] = std::move(rnd);
  j["baseline_explanation"] = r.baseline_explanation ? json(*r.baseline_explanation) : json(nullptr);
  j["baseline_score"] = r.baseline_score ? json(*r.baseline_score) : json(nullptr);
  return j;
}

std::string serialize_neurons(const std::vector<NeuronRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += to_json(r).dump(-1, ' ', false, json::error_handler_t::replace);
    out += '\n';
  }
  return out;
}

json to_json(const Explanation& e) {
  return json{{"layer", e.neuron.layer},
              {"neuron", e.neuron.neuron},
              {"method", to_string(e.method)},
              {"text", e.text},
              {"explainer_model", e.explainer_model},
              {"prompt_token_count", e.prompt_token_count},
              {"created_at", e.created_at}};
}

Explanation explanation_from_json(const json& j) {
  Explanation e;
  e.neuron = {j.at("layer").get<int>(), j.at("neuron").get<int>()};
  e.method = parse_method(j.at("method").get<std::string>());
  e.text = j.at("text").get<std::string>();
  if (e.text.empty() || normalize_explanation_text(e.text) != e.text) {
    throw InvalidArgument("explanation text must be a trimmed single paragraph");
  }
  e.explainer_model = j.at("explainer_model").get<std::string>();
  e.prompt_token_count = j.at("prompt_token_count").get<std::int64_t>();
  if (e.prompt_token_count < 0) throw InvalidArgument("negative prompt_token_count");
  e.created_at = j.at("created_at").get<std::string>();
  return e;
}

json to_json(const ScoreReport& s) {
  json j;
  if (s.subject.neuron) {
    j["layer"] = s.subject.neuron->layer;
    j["neuron"] = s.subject.neuron->neuron;
  }
  if (s.subject.puzzle) j["puzzle"] = *s.subject.puzzle;
  j["subset"] = s.subset;
  j["method"] = to_string(s.method);
  j["metric"] = to_string(s.metric);
  j["value"] = s.value;
  j["stderr"] = s.stderr_ ? json(*s.stderr_) : json(nullptr);
  j["detail"] = s.detail;
  return j;
}

ScoreReport score_report_from_json(const json& j) {
  ScoreReport s;
  if (j.contains("layer")) {
    s.subject.neuron = NeuronId{j.at("layer").get<int>(), j.at("neuron").get<int>()};
  }
  if (j.contains("puzzle")) s.subject.puzzle = j.at("puzzle").get<std::string>();
  s.subset = j.value("subset", std::string());
  s.method = parse_method(j.at("method").get<std::string>());
  s.metric = parse_metric(j.at("metric").get<std::string>());
  s.value = j.at("value").get<double>();
  if (j.contains("stderr") && !j.at("stderr").is_null()) s.stderr_ = j.at("stderr").get<double>();
  if (j.contains("detail")) s.detail = j.at("detail");
  s.validate();
  return s;
}

std::vector<Explanation> read_explanations(const std::filesystem::path& path) {
  std::vector<Explanation> out;
  for_each_jsonl(path, [&](std::size_t line, const json& j) {
    try {
      out.push_back(explanation_from_json(j));
    } catch (const json::exception& e) {
      throw SchemaViolation(line, "<explanation>", e.what());
    } catch (const InvalidArgument& e) {
      throw SchemaViolation(line, "<explanation>", e.what());
    }
  });
  return out;
}

std::vector<ScoreReport> read_scores(const std::filesystem::path& path) {
  std::vector<ScoreReport> out;
  for_each_jsonl(path, [&](std::size_t line, const json& j) {
    try {
      out.push_back(score_report_from_json(j));
    } catch (const json::exception& e) {
      throw SchemaViolation(line, "<score>", e.what());
    } catch (const InvalidArgument& e) {
      throw SchemaViolation(line, "<score>", e.what());
    }
  });
  return out;
}

}  // namespace neuronlens
