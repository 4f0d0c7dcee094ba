#include "neuronlens/orchestrator/config.hpp"

#include <cctype>
#include <cstdlib>

#include "neuronlens/core/jsonl.hpp"

namespace neuronlens::orchestrator {

using nlohmann::json;

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

[[noreturn]] void fail(std::size_t line, const std::string& why) {
  throw UsageError("config line " + std::to_string(line) + ": " + why);
}

class ValueParser {
 public:
  ValueParser(std::string_view text, std::size_t line) : s_(text), line_(line) {}

  json parse_all() {
    json v = parse_value();
    skip_space();
    if (i_ < s_.size() && s_[i_] != '#') fail(line_, "unexpected text after value");
    return v;
  }

 private:
  void skip_space() {
    while (i_ < s_.size() && (s_[i_] == ' ' || s_[i_] == '\t')) ++i_;
  }

  json parse_value() {
    skip_space();
    if (i_ >= s_.size()) fail(line_, "missing value");
    if (s_[i_] == '"') return parse_string();
    if (s_[i_] == '[') return parse_array();
    std::size_t start = i_;
    while (i_ < s_.size() && s_[i_] != ',' && s_[i_] != ']' && s_[i_] != '#' && s_[i_] != ' ' &&
           s_[i_] != '\t') {
      ++i_;
    }
    std::string word(s_.substr(start, i_ - start));
    if (word == "true") return true;
    if (word == "false") return false;
    char* end = nullptr;
    if (word.find_first_of(".eE") == std::string::npos) {
      long long n = std::strtoll(word.c_str(), &end, 10);
      if (!word.empty() && end == word.c_str() + word.size()) return n;
    }
    double d = std::strtod(word.c_str(), &end);
    if (word.empty() || end != word.c_str() + word.size()) {
      fail(line_, "expected a quoted string, number, boolean or array, got '" + word + "'");
    }
    return d;
  }

  json parse_string() {
    ++i_;
    std::string out;
    while (i_ < s_.size() && s_[i_] != '"') {
      char c = s_[i_++];
      if (c != '\\') {
        out.push_back(c);
        continue;
      }
      if (i_ >= s_.size()) break;
      char e = s_[i_++];
      switch (e) {
        case 'n': out.push_back('\n'); break;
        case 't': out.push_back('\t'); break;
        case '"': out.push_back('"'); break;
        case '\\': out.push_back('\\'); break;
        default: fail(line_, std::string("unknown escape \\") + e);
      }
    }
    if (i_ >= s_.size()) fail(line_, "unterminated string");
    ++i_;
    return out;
  }

  json parse_array() {
    ++i_;
    json arr = json::array();
    skip_space();
    if (i_ < s_.size() && s_[i_] == ']') {
      ++i_;
      return arr;
    }
    while (true) {
      arr.push_back(parse_value());
      skip_space();
      if (i_ < s_.size() && s_[i_] == ',') {
        ++i_;
        continue;
      }
      if (i_ < s_.size() && s_[i_] == ']') {
        ++i_;
        return arr;
      }
      fail(line_, "unterminated array");
    }
  }

  std::string_view s_;
  std::size_t line_;
  std::size_t i_ = 0;
};

bool valid_name(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-' && c != '.') return false;
  }
  return true;
}

// Typed accessors that also remember which keys were consumed.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {}

  template <class F>
  void with(const std::string& key, F&& f) {
    if (!j_.contains(key)) return;
    used_.push_back(key);
    try {
      f(j_.at(key));
    } catch (const json::exception&) {
      throw UsageError("config [" + name_ + "] " + key + ": wrong value type");
    }
  }

  void string(const std::string& key, std::string& out) {
    with(key, [&](const json& v) { out = v.get<std::string>(); });
  }
  void path(const std::string& key, std::filesystem::path& out, const std::filesystem::path& base) {
    with(key, [&](const json& v) {
      std::filesystem::path p = v.get<std::string>();
      out = p.is_absolute() || p.empty() ? p : base / p;
    });
  }
  template <class T>
  void number(const std::string& key, T& out) {
    with(key, [&](const json& v) {
      if (!v.is_number()) throw UsageError("config [" + name_ + "] " + key + ": expected a number");
      out = v.get<T>();
    });
  }
  void boolean(const std::string& key, bool& out) {
    with(key, [&](const json& v) { out = v.get<bool>(); });
  }

  void reject_unknown() const {
    for (const auto& [k, v] : j_.items()) {
      if (std::find(used_.begin(), used_.end(), k) == used_.end()) {
        throw UsageError("config [" + (name_.empty() ? std::string("top level") : name_) +
                         "]: unknown key '" + k + "'");
      }
    }
  }

 private:
  const json& j_;
  std::string name_;
  std::vector<std::string> used_;
};

std::string_view to_string(ScoreSource s) { return s == ScoreSource::Baseline ? "baseline" : "simulation"; }

}  // namespace

json parse_config_text(const std::string& text) {
  json doc = json::object();
  doc[""] = json::object();
  std::string section;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto nl = text.find('\n', start);
    std::string raw = text.substr(start, nl == std::string::npos ? std::string::npos : nl - start);
    start = nl == std::string::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    if (line[0] == '[') {
      auto close = line.find(']');
      if (close == std::string::npos) fail(line_no, "unterminated section header");
      section = trim(std::string_view(line).substr(1, close - 1));
      if (!valid_name(section)) fail(line_no, "bad section name '" + section + "'");
      std::string rest = trim(std::string_view(line).substr(close + 1));
      if (!rest.empty() && rest[0] != '#') fail(line_no, "unexpected text after section header");
      if (doc.contains(section)) fail(line_no, "section [" + section + "] appears twice");
      doc[section] = json::object();
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos) fail(line_no, "expected key = value");
    std::string key = trim(std::string_view(line).substr(0, eq));
    if (!valid_name(key)) fail(line_no, "bad key '" + key + "'");
    if (doc[section].contains(key)) fail(line_no, "duplicate key '" + key + "'");
    doc[section][key] = ValueParser(std::string_view(line).substr(eq + 1), line_no).parse_all();
  }
  return doc;
}

std::vector<PromptMethod> parse_method_list(const std::string& comma_separated) {
  std::vector<PromptMethod> out;
  std::size_t start = 0;
  while (start <= comma_separated.size()) {
    auto comma = comma_separated.find(',', start);
    std::string item = trim(std::string_view(comma_separated)
                                .substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    start = comma == std::string::npos ? comma_separated.size() + 1 : comma + 1;
    if (item.empty()) continue;
    PromptMethod m;
    try {
      m = parse_method(item);
    } catch (const InvalidArgument& e) {
      throw UsageError(e.what());
    }
    if (std::find(out.begin(), out.end(), m) != out.end()) throw UsageError("method listed twice: " + item);
    out.push_back(m);
  }
  return out;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingFile(path.string());
  auto base = path.parent_path();
  return from_text(read_text_file(path), base.empty() ? std::filesystem::path(".") : base);
}

ExperimentConfig ExperimentConfig::from_text(const std::string& text, const std::filesystem::path& base) {
  json doc = parse_config_text(text);
  ExperimentConfig c;

  Section top(doc.at(""), "");
  top.path("dataset", c.dataset_path, base);
  top.path("output_dir", c.output_dir, base);
  top.path("cassette", c.cassette, base);
  top.path("few_shot", c.few_shot_path, base);
  top.path("puzzles_dir", c.puzzles_dir, base);
  top.path("cot_exemplars", c.cot_exemplars_path, base);
  top.with("bpe_merges", [&](const json& v) {
    std::filesystem::path p = v.get<std::string>();
    c.bpe_merges = p.is_absolute() ? p : base / p;
  });
  top.with("mode", [&](const json& v) {
    try {
      c.mode = gateway::parse_mode(v.get<std::string>());
    } catch (const InvalidArgument& e) {
      throw UsageError(e.what());
    }
  });
  top.string("upstream", c.upstream);
  top.with("methods", [&](const json& v) {
    if (v.is_string()) {
      c.methods = parse_method_list(v.get<std::string>());
    } else {
      std::string joined;
      for (const auto& m : v) joined += m.get<std::string>() + ",";
      c.methods = parse_method_list(joined);
    }
  });
  top.number("quantile", c.quantile);
  top.number("samples_per_puzzle", c.samples_per_puzzle);
  top.number("seed", c.seed);
  top.string("subset", c.subset);
  top.with("excerpts", [&](const json& v) {
    try {
      c.excerpts = simscore::parse_excerpt_selection(v.get<std::string>());
    } catch (const InvalidArgument& e) {
      throw UsageError(e.what());
    }
  });
  top.number("workers", c.workers);
  top.boolean("strict", c.strict);
  top.string("explainer", c.explainer);
  top.string("simulator", c.simulator);
  top.string("embedder", c.embedder);
  top.string("judge", c.judge);
  top.number("layer_count", c.schema.layer_count);
  top.number("neurons_per_layer", c.schema.neurons_per_layer);
  top.with("lenient_ingest", [&](const json& v) { c.schema.strict = !v.get<bool>(); });
  top.reject_unknown();

  for (const auto& [name, body] : doc.items()) {
    if (name.empty()) continue;
    Section s(body, name);
    if (name == "selection") {
      s.string("strategy", c.selection.strategy);
      s.number("k", c.selection.k);
      s.number("seed", c.selection.seed);
      s.number("threshold", c.selection.threshold);
      s.with("score_source", [&](const json& v) {
        auto src = v.get<std::string>();
        if (src == "baseline") {
          c.selection.score_source = ScoreSource::Baseline;
        } else if (src == "simulation") {
          c.selection.score_source = ScoreSource::Simulation;
        } else {
          throw UsageError("config [selection] score_source: expected baseline or simulation");
        }
      });
      s.path("score_file", c.selection.score_file, base);
    } else if (name == "judge") {
      s.string("strategy", c.judge_strategy);
      s.number("range_threshold", c.controversial_threshold);
      s.number("context_cap", c.judge_context_cap);
    } else if (name == "adacs") {
      s.with("min_baseline_score", [&](const json& v) { c.adacs_min_baseline_score = v.get<double>(); });
    } else if (name == "efficiency") {
      s.number("neurons", c.efficiency_neurons);
    } else if (name == "cost") {
      s.number("rate_in_per_1k", c.pricing.rate_in_per_1k);
      s.number("rate_out_per_1k", c.pricing.rate_out_per_1k);
      s.number("completion_tokens", c.completion_tokens_per_call);
    } else if (name.rfind("endpoint.", 0) == 0) {
      gateway::ModelEndpoint e;
      e.name = name.substr(9);
      if (e.name.empty()) throw UsageError("config: endpoint section needs a name");
      s.string("base_url", e.base_url);
      s.string("model", e.model_name);
      s.string("api_key_env", e.api_key_env);
      s.with("kind", [&](const json& v) {
        try {
          e.kind = gateway::parse_endpoint_kind(v.get<std::string>());
        } catch (const InvalidArgument& ex) {
          throw UsageError(ex.what());
        }
      });
      std::int64_t timeout_ms = e.timeout.count();
      s.number("timeout_ms", timeout_ms);
      e.timeout = std::chrono::milliseconds(timeout_ms);
      s.number("max_retries", e.max_retries);
      s.number("max_concurrency", e.max_concurrency);
      c.endpoints[e.name] = e;
    } else {
      throw UsageError("config: unknown section [" + name + "]");
    }
    s.reject_unknown();
  }
  c.validate();
  return c;
}

void ExperimentConfig::validate() const {
  if (!(quantile > 0.0 && quantile <= 1.0)) throw UsageError("quantile must lie in (0, 1]");
  if (samples_per_puzzle < 1) throw UsageError("samples_per_puzzle must be >= 1");
  if (workers < 1) throw UsageError("workers must be >= 1");
  if (upstream != "http" && upstream != "synthetic") throw UsageError("upstream must be http or synthetic");
  for (const auto& [role, name] : {std::pair<std::string, std::string>{"explainer", explainer},
                                   {"simulator", simulator},
                                   {"embedder", embedder},
                                   {"judge", judge}}) {
    if (!name.empty() && endpoints.find(name) == endpoints.end()) {
      throw UsageError(role + " refers to undefined endpoint '" + name + "'");
    }
  }
  for (const auto& [name, e] : endpoints) {
    try {
      e.validate();
    } catch (const InvalidArgument& ex) {
      throw UsageError(ex.what());
    }
  }
}

const gateway::ModelEndpoint& ExperimentConfig::endpoint_for(const std::string& role) const {
  const std::string* name = nullptr;
  if (role == "explainer") name = &explainer;
  if (role == "simulator") name = &simulator;
  if (role == "embedder") name = &embedder;
  if (role == "judge") name = &judge;
  if (name == nullptr) throw InvalidArgument("unknown role " + role);
  if (name->empty()) throw UsageError("no " + role + " endpoint configured");
  auto it = endpoints.find(*name);
  if (it == endpoints.end()) throw UsageError(role + " refers to undefined endpoint '" + *name + "'");
  return it->second;
}

json ExperimentConfig::to_json() const {
  json methods_j = json::array();
  for (auto m : methods) methods_j.push_back(to_string(m));
  json endpoints_j = json::object();
  for (const auto& [name, e] : endpoints) {
    endpoints_j[name] = {{"base_url", e.base_url},
                         {"model", e.model_name},
                         {"kind", gateway::to_string(e.kind)},
                         {"api_key_env", e.api_key_env},
                         {"timeout_ms", e.timeout.count()},
                         {"max_retries", e.max_retries},
                         {"max_concurrency", e.max_concurrency}};
  }
  json j = {
      {"dataset", dataset_path.generic_string()},
      {"layer_count", schema.layer_count},
      {"neurons_per_layer", schema.neurons_per_layer},
      {"strict_ingest", schema.strict},
      {"selection",
       {{"strategy", selection.strategy},
        {"k", selection.k},
        {"seed", selection.seed},
        {"threshold", selection.threshold},
        {"score_source", to_string(selection.score_source)},
        {"score_file", selection.score_file.generic_string()}}},
      {"methods", methods_j},
      {"endpoints", endpoints_j},
      {"roles", {{"explainer", explainer}, {"simulator", simulator}, {"embedder", embedder}, {"judge", judge}}},
      {"quantile", quantile},
      {"samples_per_puzzle", samples_per_puzzle},
      {"seed", seed},
      {"mode", gateway::to_string(mode)},
      {"cassette", cassette.generic_string()},
      {"upstream", upstream},
      {"few_shot", few_shot_path.generic_string()},
      {"puzzles_dir", puzzles_dir.generic_string()},
      {"cot_exemplars", cot_exemplars_path.generic_string()},
      {"bpe_merges", bpe_merges ? bpe_merges->generic_string() : std::string()},
      {"subset", subset},
      {"excerpts", simscore::to_string(excerpts)},
      {"strict", strict},
      {"judge", {{"strategy", judge_strategy}, {"range_threshold", controversial_threshold}, {"context_cap", judge_context_cap}}},
      {"efficiency_neurons", efficiency_neurons},
      {"pricing", {{"rate_in_per_1k", pricing.rate_in_per_1k}, {"rate_out_per_1k", pricing.rate_out_per_1k}}},
      {"completion_tokens_per_call", completion_tokens_per_call}};
  j["adacs_min_baseline_score"] = adacs_min_baseline_score ? json(*adacs_min_baseline_score) : json(nullptr);
  return j;
}

std::string ExperimentConfig::hash() const { return gateway::sha256_hex(to_json().dump()); }

}  // namespace neuronlens::orchestrator
