#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "neuronlens/core/errors.hpp"
#include "neuronlens/core/types.hpp"

namespace neuronlens::prompts {

class AllZeroExcerpt : public Error {
 public:
  AllZeroExcerpt() : Error("excerpt has no positive activation") {}
};

class NonPositiveMax : public Error {
 public:
  NonPositiveMax() : Error("neuron max activation must be > 0") {}
};

/// Nearest-rank quantile of the excerpt's activations: the ceil(q*n)-th
/// smallest value (1-based). q must lie in (0, 1].
double high_activation_threshold(const ActivationRecord& record, double quantile);

/// Positions whose activation is >= the quantile threshold and > 0, and whose
/// token has visible (non-whitespace) text. Ascending.
std::vector<std::size_t> highly_activating_positions(const ActivationRecord& record,
                                                     double quantile);

/// round(10 * a / neuron_max), half away from zero, clipped to [0, 10].
std::vector<int> discretize_activations(const ActivationRecord& record, double neuron_max);
int discretize(double activation, double neuron_max);

/// A token split as leading whitespace / visible core / trailing whitespace.
struct TokenParts {
  std::string_view lead;
  std::string_view core;
  std::string_view trail;
};
TokenParts split_token(std::string_view token);

}  // namespace neuronlens::prompts
