#include "neuronlens/synthetic/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <optional>
#include <set>

#include "neuronlens/prompts/activation.hpp"
#include "neuronlens/prompts/token_counter.hpp"

namespace neuronlens::synthetic {

using nlohmann::json;

namespace {

constexpr std::string_view kCue = "the main thing this neuron does is find";
constexpr std::string_view kTokenLine = "Activating tokens:";

std::vector<std::string> split_lines(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto nl = s.find('\n', start);
    if (nl == std::string::npos) {
      out.push_back(s.substr(start));
      break;
    }
    out.push_back(s.substr(start, nl - start));
    start = nl + 1;
  }
  return out;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::vector<std::string> words_of(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u) || u >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(u)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

const std::set<std::string>& stopwords() {
  static const std::set<std::string> s = {"a",     "an",    "and",  "the",      "of",    "to",
                                          "in",    "on",    "or",   "words",    "word",  "like",
                                          "such",  "as",    "tokens", "token",  "mentions", "related",
                                          "terms", "find",  "is",   "are",      "with",  "for"};
  return s;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

// Frequency-ranked keywords; ties keep first occurrence.
std::vector<std::string> top_keywords(const std::vector<std::string>& candidates, std::size_t k) {
  std::map<std::string, std::pair<int, std::size_t>> stats;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    std::string w = lower(prompts::split_token(candidates[i]).core);
    if (w.empty()) continue;
    auto [it, fresh] = stats.try_emplace(w, 0, i);
    ++it->second.first;
  }
  std::vector<std::pair<std::string, std::pair<int, std::size_t>>> v(stats.begin(), stats.end());
  std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
    if (a.second.first != b.second.first) return a.second.first > b.second.first;
    return a.second.second < b.second.second;
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < v.size() && i < k; ++i) out.push_back(v[i].first);
  return out;
}

std::string join_natural(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += (i + 1 == items.size()) ? " and " : ", ";
    out += "\"" + items[i] + "\"";
  }
  return out;
}

std::vector<std::string> activating_from_lists(const std::vector<std::string>& lines) {
  std::vector<std::string> out;
  for (const auto& line : lines) {
    if (line.rfind(kTokenLine, 0) != 0) continue;
    std::string rest = line.substr(kTokenLine.size());
    std::size_t start = 0;
    while (start < rest.size()) {
      auto comma = rest.find(", ", start);
      std::string item = rest.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      // AVHS items carry " (v)"
      auto paren = item.rfind(" (");
      if (paren != std::string::npos && !item.empty() && item.back() == ')') item = item.substr(0, paren);
      out.push_back(item);
      if (comma == std::string::npos) break;
      start = comma + 2;
    }
  }
  return out;
}

std::vector<std::string> activating_from_brackets(const std::string& text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while ((i = text.find('[', i)) != std::string::npos) {
    auto close = text.find(']', i + 1);
    if (close == std::string::npos) break;
    out.push_back(text.substr(i + 1, close - i - 1));
    i = close + 1;
  }
  return out;
}

// Original format lines are "token<TAB>value". A lower bar than the other
// formats lets weaker activations leak into the keywords.
std::vector<std::string> activating_from_values(const std::vector<std::string>& lines) {
  std::vector<std::string> out;
  for (const auto& line : lines) {
    auto tab = line.rfind('\t');
    if (tab == std::string::npos) continue;
    int v = std::atoi(line.c_str() + tab + 1);
    if (v >= 4) out.push_back(line.substr(0, tab));
  }
  return out;
}

json completion_envelope(const std::string& object, const std::string& model, json choice,
                         std::int64_t prompt_tokens, std::int64_t completion_tokens) {
  return {{"id", "synthetic"},
          {"object", object},
          {"created", kFixedCreated},
          {"model", model},
          {"choices", json::array({std::move(choice)})},
          {"usage",
           {{"prompt_tokens", prompt_tokens},
            {"completion_tokens", completion_tokens},
            {"total_tokens", prompt_tokens + completion_tokens}}}};
}

std::size_t count_tokens(std::string_view s) {
  static const prompts::WhitespacePunctuationCounter counter;
  return counter.count(s);
}

// --- judge ---

struct Pair {
  std::string first;
  std::string second;
};

std::vector<Pair> pairs_in(const std::string& prompt) {
  std::vector<Pair> out;
  constexpr std::string_view kFirst = "first explanation: ";
  constexpr std::string_view kSecond = "second explanation: ";
  std::optional<std::string> pending;
  for (const auto& line : split_lines(prompt)) {
    if (line.rfind(kFirst, 0) == 0) {
      pending = line.substr(kFirst.size());
    } else if (line.rfind(kSecond, 0) == 0 && pending) {
      out.push_back({*pending, line.substr(kSecond.size())});
      pending.reset();
    }
  }
  return out;
}

double overlap_score(const Pair& p) {
  std::set<std::string> a;
  std::set<std::string> b;
  for (auto& w : words_of(p.first)) {
    if (!stopwords().count(w)) a.insert(w);
  }
  for (auto& w : words_of(p.second)) {
    if (!stopwords().count(w)) b.insert(w);
  }
  if (a.empty() && b.empty()) return 10.0;
  std::size_t common = 0;
  for (const auto& w : a) common += b.count(w);
  const double jaccard = static_cast<double>(common) / static_cast<double>(a.size() + b.size() - common);
  return std::round(jaccard * 20.0) / 2.0;
}

std::string one_decimal(double v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

}  // namespace

std::string explain(const std::string& final_user_turn, std::int64_t seed) {
  auto lines = split_lines(final_user_turn);
  std::vector<std::string> found;
  if (final_user_turn.find("Activations:\n<start>") != std::string::npos) {
    found = activating_from_values(lines);
  } else if (final_user_turn.find(kTokenLine) != std::string::npos) {
    found = activating_from_lists(lines);
  } else {
    found = activating_from_brackets(final_user_turn);
  }
  auto keywords = top_keywords(found, 3);
  if (keywords.empty()) return "no clear pattern";
  static constexpr std::string_view kLeads[] = {"words like ", "the tokens ", "mentions of "};
  const auto lead = kLeads[static_cast<std::size_t>(seed < 0 ? -seed : seed) % 3];
  return std::string(lead) + join_natural(keywords);
}

std::string judge_reply(const std::string& prompt) {
  auto pairs = pairs_in(prompt);
  if (pairs.empty()) return "I cannot rate this.";
  if (prompt.find("5 pairs of explanations") != std::string::npos && pairs.size() >= 5) {
    static constexpr std::string_view kLabels[] = {"O", "S", "H", "HS", "AVHS"};
    std::string out;
    for (std::size_t i = 0; i < 5; ++i) {
      if (i > 0) out += ", ";
      out += std::string(kLabels[i]) + ": " + one_decimal(overlap_score(pairs[pairs.size() - 5 + i]));
    }
    return out;
  }
  const Pair& target = pairs.back();
  const std::string score = one_decimal(overlap_score(target));
  if (prompt.find("starting with \"reasoning:\"") != std::string::npos) {
    return "reasoning: the two explanations share some of their key words.\nrating: " + score;
  }
  return score;
}

std::vector<double> embed_text(std::string_view text) {
  std::vector<double> v(kEmbeddingDim, 0.0);
  v[kEmbeddingDim - 1] = 0.5;  // keeps every vector non-zero
  for (const auto& w : words_of(text)) {
    if (stopwords().count(w)) continue;
    auto h = fnv1a(w);
    v[h % (kEmbeddingDim - 1)] += ((h >> 32) & 1U) ? 1.0 : 0.7;
  }
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  for (double& x : v) x /= n;
  return v;
}

namespace {

json simulate(const std::string& prompt) {
  // explanation is the rest of the cue line
  std::string explanation;
  auto cue = prompt.find(kCue);
  if (cue != std::string::npos) {
    auto start = cue + kCue.size();
    explanation = prompt.substr(start, prompt.find('\n', start) - start);
  }
  std::set<std::string> vocab;
  for (auto& w : words_of(explanation)) vocab.insert(w);

  std::vector<std::string> excerpt;
  auto begin = prompt.find("<start>\n");
  auto end = prompt.find("<end>", begin);
  if (begin != std::string::npos && end != std::string::npos) {
    for (const auto& line : split_lines(prompt.substr(begin + 8, end - begin - 8))) {
      auto tab = line.rfind("\tunknown");
      if (tab != std::string::npos) excerpt.push_back(line.substr(0, tab));
    }
  }

  json tokens = json::array();
  json top = json::array();
  std::string text;
  auto emit = [&](const std::string& tok, json alts) {
    tokens.push_back(tok);
    top.push_back(std::move(alts));
    text += tok;
  };
  for (const auto& tok : excerpt) {
    auto ws = words_of(tok);
    bool hit = !ws.empty() && std::all_of(ws.begin(), ws.end(), [&](const std::string& w) {
      return vocab.count(w) > 0 && !stopwords().count(w);
    });
    emit(tok, json{{tok, 0.0}});
    emit("\t", json{{"\t", 0.0}});
    if (hit) {
      emit("10", json{{"10", std::log(0.7)}, {"9", std::log(0.2)}, {"0", std::log(0.1)}});
    } else {
      emit("0", json{{"0", std::log(0.85)}, {"1", std::log(0.1)}, {"2", std::log(0.05)}});
    }
    emit("\n", json{{"\n", 0.0}});
  }
  emit("<end>", json{{"<end>", 0.0}});
  emit("\n", json{{"\n", 0.0}});
  return json{{"index", 0},
              {"text", text},
              {"logprobs", {{"tokens", tokens}, {"top_logprobs", top}}},
              {"finish_reason", "stop"}};
}

}  // namespace

gateway::ApiResponse respond(const gateway::ApiRequest& request) {
  const json& body = request.body;
  const std::string model = body.value("model", std::string("synthetic"));
  json out;
  if (request.path == "/embeddings") {
    json data = json::array();
    std::int64_t tokens = 0;
    const auto& input = body.at("input");
    for (std::size_t i = 0; i < input.size(); ++i) {
      const auto text = input.at(i).get<std::string>();
      tokens += static_cast<std::int64_t>(count_tokens(text));
      data.push_back({{"object", "embedding"}, {"index", i}, {"embedding", embed_text(text)}});
    }
    out = {{"object", "list"},
           {"data", std::move(data)},
           {"model", model},
           {"usage", {{"prompt_tokens", tokens}, {"total_tokens", tokens}}}};
  } else if (request.path == "/completions") {
    const auto prompt = body.at("prompt").get<std::string>();
    json choice = simulate(prompt);
    auto completion_tokens = static_cast<std::int64_t>(choice["logprobs"]["tokens"].size());
    out = completion_envelope("text_completion", model, std::move(choice),
                              static_cast<std::int64_t>(count_tokens(prompt)), completion_tokens);
  } else if (request.path == "/chat/completions") {
    const auto& messages = body.at("messages");
    std::int64_t prompt_tokens = 0;
    for (const auto& m : messages) prompt_tokens += static_cast<std::int64_t>(count_tokens(m.value("content", "")));
    const auto last = messages.back().value("content", std::string());
    std::string reply;
    if (last.find(kCue) != std::string::npos && last.find("explanation: ") == std::string::npos) {
      reply = " " + explain(last, body.value("seed", std::int64_t{0}));
    } else {
      reply = judge_reply(last);
    }
    json choice = {{"index", 0},
                   {"message", {{"role", "assistant"}, {"content", reply}}},
                   {"finish_reason", "stop"}};
    out = completion_envelope("chat.completion", model, std::move(choice), prompt_tokens,
                              static_cast<std::int64_t>(count_tokens(reply)));
  } else {
    return gateway::ApiResponse{404, R"({"error":{"message":"unknown path"}})", std::nullopt};
  }
  return gateway::ApiResponse{200, out.dump(), std::nullopt};
}

std::shared_ptr<gateway::Transport> make_transport() {
  return std::make_shared<gateway::FunctionTransport>(respond);
}

}  // namespace neuronlens::synthetic
