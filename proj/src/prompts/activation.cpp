#include "neuronlens/prompts/activation.hpp"

#include <algorithm>
#include <cmath>

namespace neuronlens::prompts {

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

}  // namespace

double high_activation_threshold(const ActivationRecord& record, double quantile) {
  if (!(quantile > 0.0 && quantile <= 1.0)) throw InvalidArgument("quantile must lie in (0, 1]");
  if (record.activations.empty()) throw InvalidArgument("empty activation record");
  if (!(record.max_activation() > 0.0)) throw AllZeroExcerpt();

  std::vector<double> sorted = record.activations;
  std::sort(sorted.begin(), sorted.end());
  const auto n = static_cast<double>(sorted.size());
  // q*n can land a hair above an integer (0.7*10 = 7.000000000000001)
  double pos = quantile * n;
  double nearest = std::round(pos);
  double rank = std::abs(pos - nearest) < 1e-9 ? nearest : std::ceil(pos);
  auto index = static_cast<std::size_t>(std::clamp(rank, 1.0, n)) - 1;
  return sorted[index];
}

std::vector<std::size_t> highly_activating_positions(const ActivationRecord& record,
                                                     double quantile) {
  const double threshold = high_activation_threshold(record, quantile);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < record.size(); ++i) {
    double a = record.activations[i];
    if (a >= threshold && a > 0.0 && !split_token(record.tokens[i]).core.empty()) out.push_back(i);
  }
  return out;
}

int discretize(double activation, double neuron_max) {
  if (!(neuron_max > 0.0)) throw NonPositiveMax();
  double v = std::round(10.0 * activation / neuron_max);
  return static_cast<int>(std::clamp(v, 0.0, 10.0));
}

std::vector<int> discretize_activations(const ActivationRecord& record, double neuron_max) {
  if (!(neuron_max > 0.0)) throw NonPositiveMax();
  std::vector<int> out;
  out.reserve(record.size());
  for (double a : record.activations) out.push_back(discretize(a, neuron_max));
  return out;
}

TokenParts split_token(std::string_view token) {
  std::size_t b = 0;
  while (b < token.size() && is_space(token[b])) ++b;
  std::size_t e = token.size();
  while (e > b && is_space(token[e - 1])) --e;
  return {token.substr(0, b), token.substr(b, e - b), token.substr(e)};
}

}  // namespace neuronlens::prompts
