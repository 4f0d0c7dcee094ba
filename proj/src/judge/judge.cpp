#include "neuronlens/judge/judge.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>

#include "neuronlens/core/jsonl.hpp"

namespace neuronlens::judge {

using nlohmann::json;

namespace {

bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

struct NumberToken {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool negative = false;
  std::size_t int_digits = 0;
  std::size_t frac_digits = 0;
  double value = 0.0;
};

// Reads digits[.digits] starting at `i`.
NumberToken read_number(const std::string& s, std::size_t i) {
  NumberToken n;
  n.begin = i;
  std::size_t j = i;
  while (j < s.size() && is_digit(s[j])) ++j;
  n.int_digits = j - i;
  if (j + 1 < s.size() && s[j] == '.' && is_digit(s[j + 1])) {
    ++j;
    std::size_t f = j;
    while (j < s.size() && is_digit(s[j])) ++j;
    n.frac_digits = j - f;
  }
  n.end = j;
  n.value = n.int_digits <= 3 ? std::strtod(s.substr(i, j - i).c_str(), nullptr) : 1e9;
  if (i > 0 && s[i - 1] == '-' && (i < 2 || !is_alnum(s[i - 2]))) n.negative = true;
  return n;
}

std::vector<NumberToken> numbers_in(const std::string& s) {
  std::vector<NumberToken> out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (!is_digit(s[i])) {
      ++i;
      continue;
    }
    NumberToken n = read_number(s, i);
    bool glued = (i > 0 && (std::isalpha(static_cast<unsigned char>(s[i - 1])) || s[i - 1] == '.')) ||
                 (n.end < s.size() && std::isalpha(static_cast<unsigned char>(s[n.end])));
    if (!glued) out.push_back(n);
    i = n.end;
  }
  return out;
}

bool valid_score(const NumberToken& n) {
  return !n.negative && n.frac_digits <= 1 && n.value >= 0.0 && n.value <= 10.0;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

// True when the text before `pos` ends with "/" or "out of" (ignoring spaces).
bool is_denominator(const std::string& s, std::size_t pos) {
  std::size_t k = pos;
  while (k > 0 && s[k - 1] == ' ') --k;
  if (k > 0 && s[k - 1] == '/') return true;
  std::string before = lower(s.substr(0, k));
  return before.size() >= 6 && before.compare(before.size() - 6, 6, "out of") == 0;
}

std::string format_score(double v) {
  std::string s = std::to_string(v);
  auto dot = s.find('.');
  return s.substr(0, dot + 2);
}

std::string pair_block(const ExplanationPair& pair) {
  return "first explanation: " + pair.first + "\nsecond explanation: " + pair.second + "\n";
}

}  // namespace

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::AccumulatingFewShot: return "AccumulatingFewShot";
    case Strategy::BatchedPairs: return "BatchedPairs";
    case Strategy::ChainOfThought: return "ChainOfThought";
  }
  return "?";
}

Strategy parse_strategy(std::string_view s) {
  if (s == "v4" || s == "AccumulatingFewShot") return Strategy::AccumulatingFewShot;
  if (s == "v5" || s == "BatchedPairs") return Strategy::BatchedPairs;
  if (s == "v6" || s == "ChainOfThought") return Strategy::ChainOfThought;
  throw InvalidArgument("unknown judge strategy: " + std::string(s) + " (expected v4, v5, v6)");
}

double parse_score(const std::string& reply) {
  auto nums = numbers_in(reply);
  if (nums.empty()) throw UnparseableScore(reply);
  std::size_t pick = nums.size() - 1;
  if (pick > 0 && nums[pick].value == 10.0 && is_denominator(reply, nums[pick].begin)) --pick;
  if (!valid_score(nums[pick])) throw UnparseableScore(reply);
  return nums[pick].value;
}

std::map<PromptMethod, double> parse_labeled_scores(const std::string& reply) {
  static constexpr std::pair<std::string_view, PromptMethod> kLabels[] = {
      {"AVHS", PromptMethod::AVHS}, {"HS", PromptMethod::HS}, {"H", PromptMethod::Highlight},
      {"S", PromptMethod::Summary}, {"O", PromptMethod::Original}};
  std::map<PromptMethod, double> out;
  std::size_t i = 0;
  while (i < reply.size()) {
    if (i > 0 && is_alnum(reply[i - 1])) {
      ++i;
      continue;
    }
    bool matched = false;
    for (const auto& [label, method] : kLabels) {
      if (reply.compare(i, label.size(), label) != 0) continue;
      std::size_t j = i + label.size();
      if (j < reply.size() && is_alnum(reply[j])) continue;
      while (j < reply.size() && reply[j] == ' ') ++j;
      if (j >= reply.size() || (reply[j] != ':' && reply[j] != '=')) continue;
      ++j;
      while (j < reply.size() && (reply[j] == ' ' || reply[j] == '\'' || reply[j] == '"')) ++j;
      if (j >= reply.size() || !is_digit(reply[j])) throw UnparseableScore(reply);
      NumberToken n = read_number(reply, j);
      if (!valid_score(n) || (n.end < reply.size() && std::isalpha(static_cast<unsigned char>(reply[n.end])))) {
        throw UnparseableScore(reply);
      }
      if (!out.emplace(method, n.value).second) {
        throw WrongCount("label " + std::string(label) + " appears more than once");
      }
      i = n.end;
      matched = true;
      break;
    }
    if (!matched) ++i;
  }
  if (out.size() != kAllMethods.size()) {
    throw WrongCount("expected 5 labeled scores, found " + std::to_string(out.size()));
  }
  return out;
}

void AccumulatingContext::add(const ExplanationPair& pair, double score) {
  if (cap_ == 0) return;
  entries_.emplace_back(pair, score);
  while (entries_.size() > cap_) entries_.pop_front();
}

std::vector<CotExemplar> load_cot_exemplars(const std::filesystem::path& path) {
  json j = json::parse(read_text_file(path));
  std::vector<CotExemplar> out;
  for (const auto& e : j.at("exemplars")) {
    CotExemplar x;
    x.pair = {e.at("first").get<std::string>(), e.at("second").get<std::string>()};
    x.score = e.at("score").get<double>();
    x.rationale = e.at("rationale").get<std::string>();
    out.push_back(std::move(x));
  }
  return out;
}

std::string build_pair_prompt(const ExplanationPair& pair, Strategy strategy, const JudgeState& state) {
  std::string out =
      "You will receive 2 explanations of what a neuron in a language model responds to. Rate how "
      "similar their meaning is on a scale from 0 to 10, where 10 means they describe the same "
      "behavior.\n\n";
  if (strategy == Strategy::AccumulatingFewShot) {
    if (!state.accumulating.entries().empty()) {
      out +=
          "Here are some example pairs of explanations and their ranks. You will receive 2 "
          "explanations, then the ranking value of their similarity.\n\n";
      for (const auto& [p, score] : state.accumulating.entries()) {
        out += pair_block(p) + format_score(score) + "\n\n";
      }
    }
    out += "Reply with the ranking value only.\n\n" + pair_block(pair);
    return out;
  }
  if (strategy == Strategy::ChainOfThought) {
    if (!state.cot_exemplars.empty()) {
      out +=
          "Here are some example pairs of explanations, the reasoning behind their similarity "
          "ranking, and the ranking.\n\n";
      for (const auto& ex : state.cot_exemplars) {
        out += pair_block(ex.pair) + "reasoning: " + ex.rationale + "\nrating: " + format_score(ex.score) +
               "\n\n";
      }
    }
    out += "Explain your reasoning on one line starting with \"reasoning:\", then give the ranking on a "
           "final line starting with \"rating:\".\n\n" +
           pair_block(pair);
    return out;
  }
  throw InvalidArgument("batched pairs are judged with judge_batch");
}

std::string build_batch_prompt(const std::map<PromptMethod, ExplanationPair>& pairs) {
  std::string out =
      "You will receive 5 pairs of explanations of what a neuron in a language model responds to, "
      "each pair under a label. For every pair, rate how similar the two explanations are on a "
      "scale from 0 to 10. Compare the pairs with each other so the ratings are consistent.\n\n";
  for (PromptMethod m : kAllMethods) {
    out += std::string(short_label(m)) + ":\n" + pair_block(pairs.at(m)) + "\n";
  }
  out += "Reply on one line in the form \"S: 8.5, AVHS: 7.0, HS: 6.0, H: 5.5, O: 3.0\" covering all five labels.\n";
  return out;
}

JudgeRanking judge_pair(const ExplanationPair& pair, Strategy strategy, gateway::Gateway& gateway,
                        const gateway::ModelEndpoint& judge, JudgeState& state) {
  if (pair.first.empty() || pair.second.empty()) throw InvalidArgument("judge pair has an empty explanation");
  gateway::DecodeParams params{0.0, strategy == Strategy::ChainOfThought ? 200 : 8, std::nullopt, std::nullopt};
  auto reply = gateway.complete(judge, build_pair_prompt(pair, strategy, state), params).text;

  JudgeRanking r;
  r.pair = pair;
  r.strategy = strategy;
  r.score = parse_score(reply);
  if (strategy == Strategy::ChainOfThought) {
    std::string low = lower(reply);
    auto rating_at = low.rfind("rating:");
    std::string rationale = rating_at == std::string::npos ? reply : reply.substr(0, rating_at);
    auto reasoning_at = lower(rationale).find("reasoning:");
    if (reasoning_at != std::string::npos) rationale = rationale.substr(reasoning_at + 10);
    try {
      r.rationale = normalize_explanation_text(rationale);
    } catch (const InvalidArgument&) {
      r.rationale = std::string();
    }
  }
  if (strategy == Strategy::AccumulatingFewShot) state.accumulating.add(pair, r.score);
  return r;
}

std::map<PromptMethod, JudgeRanking> judge_batch(const std::map<PromptMethod, ExplanationPair>& pairs,
                                                 gateway::Gateway& gateway,
                                                 const gateway::ModelEndpoint& judge) {
  if (pairs.size() != kAllMethods.size()) {
    throw WrongCount("batched judging needs exactly one pair per method, got " + std::to_string(pairs.size()));
  }
  for (const auto& [m, p] : pairs) {
    if (p.first.empty() || p.second.empty()) throw InvalidArgument("judge pair has an empty explanation");
  }
  gateway::DecodeParams params{0.0, 60, std::nullopt, std::nullopt};
  auto reply = gateway.complete(judge, build_batch_prompt(pairs), params).text;
  auto scores = parse_labeled_scores(reply);
  std::map<PromptMethod, JudgeRanking> out;
  for (const auto& [m, score] : scores) {
    out[m] = JudgeRanking{pairs.at(m), score, Strategy::BatchedPairs, std::nullopt};
  }
  return out;
}

std::vector<NeuronId> select_controversial(
    const std::vector<std::pair<NeuronId, std::vector<double>>>& groups, double range_threshold) {
  std::vector<NeuronId> out;
  for (const auto& [id, scores] : groups) {
    if (scores.size() != kAllMethods.size()) {
      throw WrongGroupSize("neuron " + to_string(id) + " has " + std::to_string(scores.size()) +
                           " scores, expected 5");
    }
    auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
    if (*hi - *lo > range_threshold) out.push_back(id);
  }
  return out;
}

}  // namespace neuronlens::judge
