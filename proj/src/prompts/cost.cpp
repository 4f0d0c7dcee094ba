#include "neuronlens/prompts/cost.hpp"

#include "neuronlens/core/errors.hpp"

namespace neuronlens::prompts {

double estimate_cost(std::int64_t prompt_tokens, std::int64_t completion_tokens,
                     const Pricing& pricing) {
  if (prompt_tokens < 0 || completion_tokens < 0) throw InvalidArgument("negative token count");
  if (pricing.rate_in_per_1k < 0.0 || pricing.rate_out_per_1k < 0.0) {
    throw InvalidArgument("negative token rate");
  }
  return static_cast<double>(prompt_tokens) / 1000.0 * pricing.rate_in_per_1k +
         static_cast<double>(completion_tokens) / 1000.0 * pricing.rate_out_per_1k;
}

}  // namespace neuronlens::prompts
