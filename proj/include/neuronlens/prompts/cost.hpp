#pragma once

#include <cstdint>

namespace neuronlens::prompts {

/// Per-1k-token prices in the account currency.
struct Pricing {
  double rate_in_per_1k = 0.0;
  double rate_out_per_1k = 0.0;
};

/// prompt/1000 * rate_in + completion/1000 * rate_out. Throws on negative inputs.
double estimate_cost(std::int64_t prompt_tokens, std::int64_t completion_tokens,
                     const Pricing& pricing);

}  // namespace neuronlens::prompts
