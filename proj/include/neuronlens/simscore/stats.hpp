#pragma once

#include <optional>
#include <span>

#include "neuronlens/core/errors.hpp"

namespace neuronlens::simscore {

class LengthMismatch : public Error {
 public:
  using Error::Error;
};

class TooShort : public Error {
 public:
  using Error::Error;
};

struct Correlation {
  double r = 0.0;
  /// Either input had zero variance; r is then reported as 0.
  bool degenerate = false;
};

/// Sample Pearson correlation (two-pass, centered). Inputs must have equal
/// length >= 2.
Correlation pearson_correlation(std::span<const double> x, std::span<const double> y);

struct MeanAndError {
  double mean = 0.0;
  /// Sample standard deviation (n - 1) over sqrt(n); absent when n == 1.
  std::optional<double> stderr_;
  std::size_t n = 0;
};

/// Throws EmptyGroup for an empty input.
MeanAndError mean_and_stderr(std::span<const double> values);

}  // namespace neuronlens::simscore
