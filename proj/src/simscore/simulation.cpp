#include "neuronlens/simscore/simulation.hpp"

#include <cmath>
#include <future>

#include "neuronlens/prompts/activation.hpp"
#include "neuronlens/prompts/builder.hpp"

namespace neuronlens::simscore {

using nlohmann::json;

namespace {

constexpr std::string_view kSimulationPreamble =
    "We're studying neurons in a neural network. Each neuron looks for some particular thing in a "
    "short document. Look at an explanation of what the neuron does, and try to predict its "
    "activations on each token.\n\n"
    "The activation format is token<tab>activation, activations go from 0 to 10, \"unknown\" "
    "indicates an unknown activation. Most activations will be 0.\n\n";

std::string_view trim(std::string_view s) {
  auto parts = prompts::split_token(s);
  return parts.core;
}

}  // namespace

std::string_view to_string(ExcerptSource s) { return s == ExcerptSource::Top ? "top" : "random"; }

ExcerptSelection parse_excerpt_selection(std::string_view s) {
  if (s == "top") return ExcerptSelection::Top;
  if (s == "random") return ExcerptSelection::Random;
  if (s == "both") return ExcerptSelection::Both;
  throw InvalidArgument("unknown excerpt selection: " + std::string(s) + " (expected top, random, both)");
}

std::string_view to_string(ExcerptSelection s) {
  switch (s) {
    case ExcerptSelection::Top: return "top";
    case ExcerptSelection::Random: return "random";
    case ExcerptSelection::Both: return "both";
  }
  return "?";
}

SimulationTask SimulationTask::from_neuron(const Explanation& explanation, const NeuronRecord& neuron,
                                           ExcerptSelection which) {
  SimulationTask t;
  t.explanation = explanation;
  t.neuron_max = neuron.neuron_max();
  if (which != ExcerptSelection::Random) {
    for (const auto& r : neuron.top_excerpts) {
      t.excerpts.push_back(r);
      t.sources.push_back(ExcerptSource::Top);
    }
  }
  if (which != ExcerptSelection::Top) {
    for (const auto& r : neuron.random_excerpts) {
      t.excerpts.push_back(r);
      t.sources.push_back(ExcerptSource::Random);
    }
  }
  t.validate();
  return t;
}

void SimulationTask::validate() const {
  if (excerpts.empty()) throw InvalidArgument("simulation task has no excerpts");
  if (sources.size() != excerpts.size()) throw InvalidArgument("excerpt sources do not match excerpts");
  if (!(neuron_max > 0.0)) throw prompts::NonPositiveMax();
  if (explanation.text.empty()) throw InvalidArgument("simulation task has an empty explanation");
}

std::string build_simulation_prompt(const std::string& explanation, const ActivationRecord& excerpt) {
  std::string out(kSimulationPreamble);
  out += "Neuron 1\nExplanation of neuron 1 behavior: the main thing this neuron does is find ";
  out += explanation;
  out += "\nActivations:\n<start>\n";
  for (const auto& tok : excerpt.tokens) {
    out += prompts::escape_token_for_line(tok);
    out += "\tunknown\n";
  }
  out +=
      "<end>\n\nReplace each \"unknown\" above with an integer from 0 to 10. Repeat every token "
      "exactly as given, one per line.\n<start>\n";
  return out;
}

std::string build_simulation_prompt(const SimulationTask& task, std::size_t excerpt_index) {
  return build_simulation_prompt(task.explanation.text, task.excerpts.at(excerpt_index));
}

std::optional<double> expected_activation(const std::map<std::string, double>& alternatives) {
  std::map<int, double> prob;
  for (const auto& [tok, logprob] : alternatives) {
    auto key = trim(tok);
    if (key.empty() || key.size() > 2) continue;
    int v = 0;
    bool numeric = true;
    for (char c : key) {
      if (c < '0' || c > '9') {
        numeric = false;
        break;
      }
      v = v * 10 + (c - '0');
    }
    // "00".."09" are not valid scale values
    if (!numeric || v > 10 || (key.size() == 2 && key[0] == '0')) continue;
    prob[v] += std::exp(logprob);
  }
  double total = 0.0;
  for (const auto& [v, p] : prob) total += p;
  if (prob.empty() || !(total > 0.0)) return std::nullopt;
  double e = 0.0;
  for (const auto& [v, p] : prob) e += static_cast<double>(v) * (p / total);
  return e;
}

std::vector<std::optional<double>> decode_predictions(const gateway::CompletionResult& completion,
                                                      std::size_t excerpt_length) {
  std::vector<std::optional<double>> out(excerpt_length);
  if (!completion.token_logprob_alternatives) return out;
  const auto& alts = *completion.token_logprob_alternatives;

  std::string line;  // current output line so far
  std::size_t line_index = 0;
  bool seen_value_on_line = false;
  bool started = false;
  for (std::size_t p = 0; p < completion.tokens.size() && p < alts.size(); ++p) {
    const std::string& tok = completion.tokens[p];
    bool value_here = !line.empty() && line.back() == '\t';
    if (!value_here && tok.size() > 1 && tok.front() == '\t') value_here = true;
    if (value_here && !seen_value_on_line) {
      seen_value_on_line = true;
      started = true;
      if (line_index < excerpt_length) out[line_index] = expected_activation(alts[p]);
    }
    for (char c : tok) {
      if (c != '\n') {
        line.push_back(c);
        continue;
      }
      if (line == "<end>") return out;
      // a leading echo of the <start> marker is not a token line
      if (!(line == "<start>" && !started)) ++line_index;
      line.clear();
      seen_value_on_line = false;
    }
    if (line == "<end>") return out;
  }
  return out;
}

SimulationOutcome assemble_outcome(const SimulationTask& task,
                                   std::vector<std::vector<std::optional<double>>> predicted) {
  task.validate();
  if (predicted.size() != task.excerpts.size()) {
    throw LengthMismatch("prediction count does not match excerpt count");
  }
  SimulationOutcome out;
  std::vector<double> xs;
  std::vector<double> ys;
  std::size_t total = 0;
  for (std::size_t e = 0; e < task.excerpts.size(); ++e) {
    const auto& excerpt = task.excerpts[e];
    if (predicted[e].size() != excerpt.size()) {
      throw LengthMismatch("prediction length does not match excerpt " + std::to_string(e));
    }
    auto actual = prompts::discretize_activations(excerpt, task.neuron_max);
    std::vector<double> ex;
    std::vector<double> ey;
    for (std::size_t i = 0; i < excerpt.size(); ++i) {
      ++total;
      if (!predicted[e][i]) {
        ++out.missing_positions;
        continue;
      }
      ex.push_back(*predicted[e][i]);
      ey.push_back(static_cast<double>(actual[i]));
    }
    out.per_excerpt_r.push_back(ex.size() >= 2 ? pearson_correlation(ex, ey).r : 0.0);
    xs.insert(xs.end(), ex.begin(), ex.end());
    ys.insert(ys.end(), ey.begin(), ey.end());
    out.actual_discretized.push_back(std::move(actual));
  }
  out.predicted = std::move(predicted);
  if (xs.empty()) throw AllPositionsMissing();
  if (xs.size() < 2) {
    out.degenerate = true;
  } else {
    auto c = pearson_correlation(xs, ys);
    out.correlation = c.r;
    out.degenerate = c.degenerate;
  }
  out.unreliable = static_cast<double>(out.missing_positions) > 0.2 * static_cast<double>(total);
  return out;
}

SimulationOutcome score_explanation(const SimulationTask& task, gateway::Gateway& gateway,
                                    const gateway::ModelEndpoint& simulator) {
  task.validate();
  if (simulator.kind != gateway::EndpointKind::CompletionWithLogprobs) {
    throw InvalidArgument("simulator endpoint " + simulator.name + " must support logprobs");
  }
  std::vector<std::future<std::vector<std::optional<double>>>> pending;
  pending.reserve(task.excerpts.size());
  for (std::size_t e = 0; e < task.excerpts.size(); ++e) {
    pending.push_back(std::async(std::launch::async, [&, e] {
      const auto& excerpt = task.excerpts[e];
      // four output tokens per line is typical; leave headroom
      auto params = gateway::simulator_defaults(static_cast<int>(excerpt.size()) * 6 + 16);
      auto completion = gateway.complete(simulator, build_simulation_prompt(task, e), params);
      return decode_predictions(completion, excerpt.size());
    }));
  }
  std::vector<std::vector<std::optional<double>>> predicted;
  std::exception_ptr first_error;
  for (auto& f : pending) {
    try {
      predicted.push_back(f.get());
    } catch (...) {
      if (!first_error) first_error = std::current_exception();
    }
  }
  if (first_error) std::rethrow_exception(first_error);
  return assemble_outcome(task, std::move(predicted));
}

std::map<PromptMethod, MeanAndError> aggregate_scores(
    const std::map<PromptMethod, std::vector<double>>& correlations_by_method) {
  std::map<PromptMethod, MeanAndError> out;
  for (const auto& [method, values] : correlations_by_method) {
    if (values.empty()) throw EmptyGroup("no outcomes for method " + std::string(to_string(method)));
    out[method] = mean_and_stderr(values);
  }
  return out;
}

ScoreReport to_score_report(const SimulationOutcome& outcome, const SimulationTask& task,
                            const std::string& subset) {
  ScoreReport s;
  s.subject.neuron = task.explanation.neuron;
  s.method = task.explanation.method;
  s.metric = Metric::SimulationCorrelation;
  s.value = outcome.correlation;
  s.subset = subset;
  json sources = json::array();
  for (auto src : task.sources) sources.push_back(to_string(src));
  s.detail = {{"per_excerpt_r", outcome.per_excerpt_r},
              {"missing_positions", outcome.missing_positions},
              {"degenerate", outcome.degenerate},
              {"unreliable", outcome.unreliable},
              {"excerpt_sources", std::move(sources)}};
  s.validate();
  return s;
}

}  // namespace neuronlens::simscore
