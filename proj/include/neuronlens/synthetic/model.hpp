#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "neuronlens/gateway/transport.hpp"

// Deterministic offline stand-in for an OpenAI-compatible server. It answers
// chat (explainer and judge prompts), logprob completion (simulator prompts)
// and embedding requests from the request content alone, so fixtures can be
// recorded without network access.
namespace neuronlens::synthetic {

inline constexpr std::int64_t kFixedCreated = 1'700'000'000;
inline constexpr std::size_t kEmbeddingDim = 64;

/// Explanation text for the final user turn of an explainer prompt.
std::string explain(const std::string& final_user_turn, std::int64_t seed);

/// Reply to a judge prompt (pairwise, chain-of-thought or batched).
std::string judge_reply(const std::string& prompt);

/// Bag-of-words feature hash, unit length.
std::vector<double> embed_text(std::string_view text);

gateway::ApiResponse respond(const gateway::ApiRequest& request);

std::shared_ptr<gateway::Transport> make_transport();

}  // namespace neuronlens::synthetic
