#include "neuronlens/prompts/builder.hpp"

#include <algorithm>
#include <set>

#include "neuronlens/core/dataset.hpp"
#include "neuronlens/core/jsonl.hpp"

namespace neuronlens::prompts {

using nlohmann::json;

namespace {

constexpr std::string_view kTokenLinePrefix = "Activating tokens:";

double max_over(std::span<const ActivationRecord> excerpts) {
  double m = 0.0;
  for (const auto& r : excerpts) m = std::max(m, r.max_activation());
  return m;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) out += sep;
    out += parts[i];
  }
  return out;
}

std::string token_line(const std::vector<std::string>& items) {
  std::string out(kTokenLinePrefix);
  if (!items.empty()) {
    out += ' ';
    out += join(items, ", ");
  }
  return out;
}

std::string render_block(std::span<const ActivationRecord> excerpts, PromptMethod method,
                         double quantile, double neuron_max, std::size_t neuron_number) {
  std::string out = "Neuron " + std::to_string(neuron_number) + "\n";
  if (method == PromptMethod::Original) {
    out += "Activations:\n";
    for (const auto& r : excerpts) {
      out += "<start>\n";
      out += render_original(r, neuron_max);
      out += "<end>\n";
    }
  } else {
    out += "Excerpts:\n";
    for (const auto& r : excerpts) {
      out += '\n';
      out += render_excerpt(method, r, quantile, neuron_max);
      out += '\n';
    }
  }
  out += "\nExplanation of neuron " + std::to_string(neuron_number) +
         " behavior: the main thing this neuron does is find";
  return out;
}

}  // namespace

std::string_view to_string(Role r) {
  switch (r) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "?";
}

std::string escape_token_for_line(std::string_view token) {
  std::string out;
  out.reserve(token.size());
  for (char c : token) {
    switch (c) {
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string render_raw_text(const ActivationRecord& r) {
  std::string out;
  for (const auto& t : r.tokens) out += t;
  return out;
}

std::string render_highlight(const ActivationRecord& r, double quantile) {
  auto hot = highly_activating_positions(r, quantile);
  std::string out;
  std::size_t next = 0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (next < hot.size() && hot[next] == i) {
      ++next;
      auto parts = split_token(r.tokens[i]);
      out += parts.lead;
      out += '[';
      out += parts.core;
      out += ']';
      out += parts.trail;
    } else {
      out += r.tokens[i];
    }
  }
  return out;
}

std::string render_summary_line(const ActivationRecord& r, double quantile) {
  std::vector<std::string> items;
  std::set<std::string_view> seen;
  for (std::size_t i : highly_activating_positions(r, quantile)) {
    auto core = split_token(r.tokens[i]).core;
    if (seen.insert(core).second) items.emplace_back(core);
  }
  return token_line(items);
}

std::string render_value_line(const ActivationRecord& r, double quantile, double neuron_max) {
  std::vector<std::string> items;
  for (std::size_t i : highly_activating_positions(r, quantile)) {
    items.push_back(std::string(split_token(r.tokens[i]).core) + " (" +
                    std::to_string(discretize(r.activations[i], neuron_max)) + ")");
  }
  return token_line(items);
}

std::string render_original(const ActivationRecord& r, double neuron_max) {
  auto values = discretize_activations(r, neuron_max);
  std::string out;
  for (std::size_t i = 0; i < r.size(); ++i) {
    out += escape_token_for_line(r.tokens[i]);
    out += '\t';
    out += std::to_string(values[i]);
    out += '\n';
  }
  return out;
}

std::string render_excerpt(PromptMethod method, const ActivationRecord& r, double quantile,
                           double neuron_max) {
  switch (method) {
    case PromptMethod::Original: return render_original(r, neuron_max);
    case PromptMethod::Summary: return render_raw_text(r) + "\n" + render_summary_line(r, quantile);
    case PromptMethod::Highlight: return render_highlight(r, quantile);
    case PromptMethod::HS: return render_highlight(r, quantile) + "\n" + render_summary_line(r, quantile);
    case PromptMethod::AVHS:
      return render_highlight(r, quantile) + "\n" + render_value_line(r, quantile, neuron_max);
  }
  throw InvalidArgument("unknown prompt method");
}

FewShotSet FewShotSet::from_json(const json& j) {
  FewShotSet set;
  set.version = j.value("version", std::string("unversioned"));
  const json& pre = j.at("method_preambles");
  for (PromptMethod m : kAllMethods) {
    auto key = std::string(to_string(m));
    if (!pre.contains(key)) throw InvalidArgument("few-shot data lacks a preamble for " + key);
    set.preambles[m] = pre.at(key).get<std::string>();
  }
  for (const auto& ex : j.at("examples")) {
    FewShotExample e;
    std::size_t i = 0;
    for (const auto& r : ex.at("excerpts")) {
      e.excerpts.push_back(
          activation_record_from_json(r, 0, "examples.excerpts[" + std::to_string(i++) + "]"));
    }
    if (e.excerpts.empty() || !(max_over(e.excerpts) > 0.0)) {
      throw InvalidArgument("few-shot example needs excerpts with a positive activation");
    }
    e.explanation = normalize_explanation_text(ex.at("explanation").get<std::string>());
    set.examples.push_back(std::move(e));
  }
  return set;
}

FewShotSet FewShotSet::load(const std::filesystem::path& path) {
  return from_json(json::parse(read_text_file(path)));
}

BuiltPrompt build_prompt(std::span<const ActivationRecord> excerpts, PromptMethod method,
                         const FewShotSet& few_shot, double quantile,
                         const TokenCounter& counter) {
  if (few_shot.examples.empty()) throw EmptyFewShot();
  if (excerpts.empty()) throw InvalidArgument("no excerpts to explain");
  const double neuron_max = max_over(excerpts);
  if (!(neuron_max > 0.0)) throw NonPositiveMax();

  BuiltPrompt p;
  p.method = method;
  p.messages.push_back({Role::System, few_shot.preambles.at(method)});
  std::size_t number = 1;
  for (const auto& ex : few_shot.examples) {
    p.messages.push_back(
        {Role::User, render_block(ex.excerpts, method, quantile, max_over(ex.excerpts), number)});
    p.messages.push_back({Role::Assistant, " " + ex.explanation});
    ++number;
  }
  p.messages.push_back({Role::User, render_block(excerpts, method, quantile, neuron_max, number)});

  for (const auto& r : excerpts) p.highlighted_token_indices.push_back(highly_activating_positions(r, quantile));
  for (const auto& m : p.messages) p.token_count += counter.count(m.content);
  return p;
}

BuiltPrompt build_prompt(const NeuronRecord& neuron, PromptMethod method,
                         const FewShotSet& few_shot, double quantile,
                         const TokenCounter& counter) {
  return build_prompt(std::span<const ActivationRecord>(neuron.top_excerpts), method, few_shot,
                      quantile, counter);
}

std::string render_transcript(const BuiltPrompt& prompt) {
  std::string out;
  for (std::size_t i = 0; i < prompt.messages.size(); ++i) {
    if (i > 0) out += "\n\n";
    out += "### ";
    out += to_string(prompt.messages[i].role);
    out += '\n';
    out += prompt.messages[i].content;
  }
  out += '\n';
  return out;
}

}  // namespace neuronlens::prompts
