#include "neuronlens/core/types.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>

#include "neuronlens/core/errors.hpp"

namespace neuronlens {

std::string to_string(const NeuronId& id) {
  return std::to_string(id.layer) + ":" + std::to_string(id.neuron);
}

ActivationRecord ActivationRecord::make(std::vector<std::string> tokens,
                                        std::vector<double> activations, int* clamped) {
  if (tokens.empty()) throw InvalidArgument("activation record has no tokens");
  if (tokens.size() != activations.size()) {
    throw InvalidArgument("activation record has " + std::to_string(tokens.size()) +
                          " tokens but " + std::to_string(activations.size()) + " activations");
  }
  for (double& a : activations) {
    if (!std::isfinite(a)) throw InvalidArgument("activation is not finite");
    if (a < 0.0) {
      a = 0.0;
      if (clamped != nullptr) ++*clamped;
    }
  }
  return ActivationRecord{std::move(tokens), std::move(activations)};
}

double ActivationRecord::max_activation() const {
  return activations.empty() ? 0.0 : *std::max_element(activations.begin(), activations.end());
}

double NeuronRecord::neuron_max() const {
  double m = 0.0;
  for (const auto& r : top_excerpts) m = std::max(m, r.max_activation());
  return m;
}

std::string_view to_string(PromptMethod m) {
  switch (m) {
    case PromptMethod::Original: return "Original";
    case PromptMethod::Summary: return "Summary";
    case PromptMethod::Highlight: return "Highlight";
    case PromptMethod::HS: return "HS";
    case PromptMethod::AVHS: return "AVHS";
  }
  return "?";
}

std::string_view short_label(PromptMethod m) {
  switch (m) {
    case PromptMethod::Original: return "O";
    case PromptMethod::Summary: return "S";
    case PromptMethod::Highlight: return "H";
    case PromptMethod::HS: return "HS";
    case PromptMethod::AVHS: return "AVHS";
  }
  return "?";
}

PromptMethod parse_method(std::string_view s) {
  for (PromptMethod m : kAllMethods) {
    if (s == to_string(m)) return m;
  }
  throw InvalidArgument("unknown prompt method: " + std::string(s));
}

std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::SimulationCorrelation: return "SimulationCorrelation";
    case Metric::AdaCS: return "AdaCS";
    case Metric::HumanRating: return "HumanRating";
  }
  return "?";
}

Metric parse_metric(std::string_view s) {
  for (Metric m : {Metric::SimulationCorrelation, Metric::AdaCS, Metric::HumanRating}) {
    if (s == to_string(m)) return m;
  }
  throw InvalidArgument("unknown metric: " + std::string(s));
}

std::string normalize_explanation_text(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (char c : raw) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  if (out.empty()) throw InvalidArgument("explanation text is empty");
  return out;
}

void ScoreReport::validate() const {
  if (!std::isfinite(value)) throw InvalidArgument("score value is not finite");
  switch (metric) {
    case Metric::SimulationCorrelation:
    case Metric::AdaCS:
      // cosine may overshoot by rounding
      if (value < -1.0 - 1e-9 || value > 1.0 + 1e-9) {
        throw InvalidArgument(std::string(to_string(metric)) + " value outside [-1, 1]");
      }
      break;
    case Metric::HumanRating:
      if (value < 1.0 || value > 5.0) throw InvalidArgument("HumanRating value outside [1, 5]");
      break;
  }
  if (stderr_ && (*stderr_ < 0.0 || !std::isfinite(*stderr_))) {
    throw InvalidArgument("stderr must be a non-negative finite number");
  }
  if (subject.neuron.has_value() == subject.puzzle.has_value()) {
    throw InvalidArgument("score subject must be exactly one of neuron or puzzle");
  }
}

std::string utc_timestamp_from_unix(std::int64_t seconds) {
  std::time_t t = static_cast<std::time_t>(seconds);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string utc_timestamp_now() {
  auto now = std::chrono::system_clock::now();
  return utc_timestamp_from_unix(
      std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count());
}

}  // namespace neuronlens
