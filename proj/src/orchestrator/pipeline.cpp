#include "neuronlens/orchestrator/pipeline.hpp"

#include <cstdio>
#include <set>
#include <tuple>

#include <spdlog/sinks/base_sink.h>

#include "neuronlens/adacs/similarity.hpp"
#include "neuronlens/core/jsonl.hpp"
#include "neuronlens/judge/judge.hpp"
#include "neuronlens/synthetic/model.hpp"
#include "ordered_pool.hpp"

#ifndef NEURONLENS_VERSION
#define NEURONLENS_VERSION "dev"
#endif

namespace neuronlens::orchestrator {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

class RedactingSink final : public spdlog::sinks::base_sink<std::mutex> {
 public:
  explicit RedactingSink(std::vector<std::string> envs) : envs_(std::move(envs)) {}

 protected:
  void sink_it_(const spdlog::details::log_msg& msg) override {
    spdlog::memory_buf_t buf;
    formatter_->format(msg, buf);
    std::string text(buf.data(), buf.size());
    for (const auto& env : envs_) text = gateway::redact_secrets(std::move(text), env);
    std::fwrite(text.data(), 1, text.size(), stderr);
  }
  void flush_() override { std::fflush(stderr); }

 private:
  std::vector<std::string> envs_;
};

std::string describe(const std::exception_ptr& e) {
  try {
    std::rethrow_exception(e);
  } catch (const std::exception& ex) {
    return ex.what();
  } catch (...) {
    return "unknown error";
  }
}

std::string score_key(const ScoreReport& s) {
  std::string subject = s.subject.neuron ? to_string(*s.subject.neuron) : "puzzle:" + s.subject.puzzle.value_or("");
  return subject + "|" + std::string(to_string(s.method)) + "|" + std::string(to_string(s.metric)) + "|" +
         s.subset;
}

std::set<std::string> existing_score_keys(const fs::path& path) {
  std::set<std::string> keys;
  if (fs::exists(path)) {
    for (const auto& s : read_scores(path)) keys.insert(score_key(s));
  }
  return keys;
}

std::vector<Explanation> load_explanations(const ExperimentConfig& config) {
  auto path = config.output_dir / kExplanationsFile;
  if (!fs::exists(path)) throw MissingFile(path.string());
  std::vector<Explanation> out;
  for (auto& e : read_explanations(path)) {
    if (std::find(config.methods.begin(), config.methods.end(), e.method) != config.methods.end()) {
      out.push_back(std::move(e));
    }
  }
  return out;
}

std::map<NeuronId, NeuronRecord> dataset_by_id(const ExperimentConfig& config) {
  std::map<NeuronId, NeuronRecord> out;
  for (auto& r : ingest_neurons(config.dataset_path, config.schema).records) out.emplace(r.id, std::move(r));
  return out;
}

void finish(RunSummary& sum, bool strict) {
  if (sum.failed == 0) {
    sum.exit_code = kExitOk;
  } else {
    sum.exit_code = strict ? kExitFatal : kExitPartial;
  }
}

json counts_json(const RunSummary& s) {
  return {{"written", s.written},
          {"skipped_existing", s.skipped_existing},
          {"skipped_ineligible", s.skipped_ineligible},
          {"failed", s.failed}};
}

// Shared failure bookkeeping for sinks; returns whether the run continues.
bool note_failure(RunSummary& sum, spdlog::logger& log, const std::string& what, const std::exception_ptr& e,
                  bool strict) {
  std::string msg = what + ": " + describe(e);
  log.error("{}", msg);
  ++sum.failed;
  sum.failures.push_back(msg);
  return !strict;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

std::string format_rank(double r) {
  if (r == static_cast<double>(static_cast<long long>(r))) return std::to_string(static_cast<long long>(r));
  return fixed(r, 1);
}

std::string_view metric_label(Metric m) {
  switch (m) {
    case Metric::SimulationCorrelation: return "simscore";
    case Metric::AdaCS: return "adacs";
    case Metric::HumanRating: return "human";
  }
  return "?";
}

}  // namespace

std::shared_ptr<spdlog::logger> make_logger(const ExperimentConfig& config) {
  std::vector<std::string> envs{std::string(gateway::kDefaultApiKeyEnv)};
  for (const auto& [name, e] : config.endpoints) {
    if (std::find(envs.begin(), envs.end(), e.api_key_env) == envs.end()) envs.push_back(e.api_key_env);
  }
  auto logger = std::make_shared<spdlog::logger>("neuronlens", std::make_shared<RedactingSink>(std::move(envs)));
  logger->set_pattern("[%l] %v");
  return logger;
}

std::shared_ptr<gateway::Gateway> make_gateway(const ExperimentConfig& config) {
  const bool synthetic = config.upstream == "synthetic";
  if (config.mode != gateway::Mode::Live && config.cassette.empty()) {
    throw UsageError(std::string(gateway::to_string(config.mode)) + " mode needs a cassette path");
  }
  switch (config.mode) {
    case gateway::Mode::Replay:
      if (!fs::exists(config.cassette)) throw MissingFile(config.cassette.string());
      return gateway::Gateway::for_mode(gateway::Mode::Replay, config.cassette);
    case gateway::Mode::Record:
      if (synthetic) return gateway::Gateway::recording(synthetic::make_transport(), config.cassette);
      return gateway::Gateway::for_mode(gateway::Mode::Record, config.cassette);
    case gateway::Mode::Live:
      if (synthetic) return std::make_shared<gateway::Gateway>(synthetic::make_transport());
      return gateway::Gateway::for_mode(gateway::Mode::Live, config.cassette);
  }
  throw UsageError("unknown mode");
}

std::unique_ptr<prompts::TokenCounter> make_counter(const ExperimentConfig& config) {
  if (config.bpe_merges) {
    return std::make_unique<prompts::BpeTokenCounter>(prompts::BpeTokenCounter::from_merges_file(*config.bpe_merges));
  }
  return prompts::make_default_counter();
}

std::vector<NeuronRecord> load_selected(const ExperimentConfig& config, spdlog::logger& log) {
  auto ingested = ingest_neurons(config.dataset_path, config.schema);
  if (ingested.clamped_activations > 0) {
    log.warn("{} negative activations clamped to 0", ingested.clamped_activations);
  }
  for (const auto& p : ingested.problems) log.warn("skipped line {} ({}): {}", p.line, p.field, p.message);
  auto& records = ingested.records;
  if (config.selection.strategy == "all") return std::move(records);

  SelectionStrategy strategy;
  try {
    strategy = parse_strategy(config.selection.strategy, config.selection.k, config.selection.seed,
                              config.selection.threshold);
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  ScoreOverride override_scores;
  const ScoreOverride* scores = nullptr;
  if (config.selection.score_source == ScoreSource::Simulation) {
    std::map<NeuronId, std::vector<double>> by_neuron;
    for (const auto& s : read_scores(config.selection.score_file)) {
      if (s.metric == Metric::SimulationCorrelation && s.subject.neuron) by_neuron[*s.subject.neuron].push_back(s.value);
    }
    for (const auto& [id, values] : by_neuron) override_scores[id] = simscore::mean_and_stderr(values).mean;
    scores = &override_scores;
    log.info("selection scores: simulation means from {}", config.selection.score_file.string());
  }
  auto ids = select_neurons(records, strategy, scores);
  std::map<NeuronId, const NeuronRecord*> index;
  for (const auto& r : records) index[r.id] = &r;
  std::vector<NeuronRecord> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(*index.at(id));
  return out;
}

void write_manifest(const ExperimentConfig& config, const std::string& command, const json& extra) {
  json m = {{"command", command},
            {"config_hash", config.hash()},
            {"code_version", NEURONLENS_VERSION},
            {"seed", config.seed},
            {"mode", gateway::to_string(config.mode)},
            {"score_source", config.selection.score_source == ScoreSource::Baseline ? "baseline" : "simulation"}};
  for (const auto& [k, v] : extra.items()) m[k] = v;
  fs::create_directories(config.output_dir);
  write_text_file(config.output_dir / ("manifest." + command + ".json"), m.dump(2) + "\n");
}

RunSummary run_explain(const ExperimentConfig& config, gateway::Gateway& gateway, spdlog::logger& log) {
  if (config.methods.empty()) throw UsageError("no prompt methods selected");
  const auto& explainer = config.endpoint_for("explainer");
  const auto few_shot = prompts::FewShotSet::load(config.few_shot_path);
  const auto counter = make_counter(config);
  const auto records = load_selected(config, log);

  fs::create_directories(config.output_dir);
  const auto path = config.output_dir / kExplanationsFile;
  std::set<std::pair<NeuronId, PromptMethod>> have;
  if (fs::exists(path)) {
    for (const auto& e : read_explanations(path)) have.insert({e.neuron, e.method});
  }

  RunSummary sum;
  std::vector<std::pair<const NeuronRecord*, PromptMethod>> items;
  for (const auto& r : records) {
    for (auto m : config.methods) {
      if (have.count({r.id, m})) {
        ++sum.skipped_existing;
      } else {
        items.emplace_back(&r, m);
      }
    }
  }
  log.info("explain: {} neurons x {} methods, {} already done", records.size(), config.methods.size(),
           sum.skipped_existing);

  JsonlWriter writer(path);
  detail::run_ordered<Explanation>(
      items.size(), config.workers,
      [&](std::size_t i) {
        const auto& [rec, method] = items[i];
        auto prompt = prompts::build_prompt(*rec, method, few_shot, config.quantile, *counter);
        auto completion = gateway.complete(explainer, prompt, gateway::explainer_defaults());
        Explanation e;
        e.neuron = rec->id;
        e.method = method;
        e.text = normalize_explanation_text(completion.text);
        e.explainer_model = explainer.model_name;
        e.prompt_token_count = static_cast<std::int64_t>(prompt.token_count);
        e.created_at = completion.created ? utc_timestamp_from_unix(*completion.created) : utc_timestamp_now();
        return e;
      },
      [&](std::size_t i, detail::Finished<Explanation>& f) {
        if (f.value) {
          writer.append(to_json(*f.value));
          ++sum.written;
          return true;
        }
        return note_failure(sum, log,
                            "explain " + to_string(items[i].first->id) + " " + std::string(to_string(items[i].second)),
                            f.error, config.strict);
      });
  finish(sum, config.strict);
  write_manifest(config, "explain", {{"counter", counter->name()}, {"few_shot_version", few_shot.version},
                                      {"results", counts_json(sum)}});
  return sum;
}

RunSummary run_simscore(const ExperimentConfig& config, gateway::Gateway& gateway, spdlog::logger& log) {
  const auto& simulator = config.endpoint_for("simulator");
  const auto explanations = load_explanations(config);
  const auto dataset = dataset_by_id(config);
  const auto path = config.output_dir / kScoresFile;
  const auto have = existing_score_keys(path);

  RunSummary sum;
  std::vector<const Explanation*> items;
  for (const auto& e : explanations) {
    if (dataset.find(e.neuron) == dataset.end()) {
      log.warn("explanation for {} has no dataset record; skipped", to_string(e.neuron));
      ++sum.skipped_ineligible;
      continue;
    }
    ScoreReport probe;
    probe.subject.neuron = e.neuron;
    probe.method = e.method;
    probe.metric = Metric::SimulationCorrelation;
    probe.subset = config.subset;
    if (have.count(score_key(probe))) {
      ++sum.skipped_existing;
      continue;
    }
    items.push_back(&e);
  }

  JsonlWriter writer(path);
  detail::run_ordered<ScoreReport>(
      items.size(), config.workers,
      [&](std::size_t i) {
        const auto& e = *items[i];
        auto task = simscore::SimulationTask::from_neuron(e, dataset.at(e.neuron), config.excerpts);
        auto outcome = simscore::score_explanation(task, gateway, simulator);
        return simscore::to_score_report(outcome, task, config.subset);
      },
      [&](std::size_t i, detail::Finished<ScoreReport>& f) {
        const auto& e = *items[i];
        if (f.value) {
          if (f.value->detail.value("unreliable", false)) {
            log.warn("simscore {} {}: more than 20% of positions missing", to_string(e.neuron), to_string(e.method));
          }
          writer.append(to_json(*f.value));
          ++sum.written;
          return true;
        }
        return note_failure(sum, log, "simscore " + to_string(e.neuron) + " " + std::string(to_string(e.method)),
                            f.error, config.strict);
      });
  finish(sum, config.strict);
  write_manifest(config, "simscore", {{"excerpts", simscore::to_string(config.excerpts)}, {"results", counts_json(sum)}});
  return sum;
}

RunSummary run_adacs(const ExperimentConfig& config, gateway::Gateway& gateway, spdlog::logger& log) {
  const auto& embedder = config.endpoint_for("embedder");
  const auto explanations = load_explanations(config);
  const auto dataset = dataset_by_id(config);
  const auto path = config.output_dir / kScoresFile;
  const auto have = existing_score_keys(path);

  std::map<NeuronId, std::vector<Explanation>> grouped;
  for (const auto& e : explanations) grouped[e.neuron].push_back(e);

  RunSummary sum;
  std::vector<std::pair<NeuronId, const std::vector<Explanation>*>> items;
  for (const auto& [id, group] : grouped) {
    auto it = dataset.find(id);
    if (it == dataset.end() || !it->second.baseline_explanation || it->second.baseline_explanation->empty()) {
      log.info("adacs: {} has no baseline explanation; skipped", to_string(id));
      ++sum.skipped_ineligible;
      continue;
    }
    if (config.adacs_min_baseline_score &&
        !(it->second.baseline_score && *it->second.baseline_score >= *config.adacs_min_baseline_score)) {
      ++sum.skipped_ineligible;
      continue;
    }
    bool missing = false;
    for (const auto& e : group) {
      ScoreReport probe;
      probe.subject.neuron = id;
      probe.method = e.method;
      probe.metric = Metric::AdaCS;
      probe.subset = config.subset;
      missing = missing || !have.count(score_key(probe));
    }
    if (!missing) {
      sum.skipped_existing += group.size();
      continue;
    }
    items.emplace_back(id, &group);
  }

  JsonlWriter writer(path);
  detail::run_ordered<std::vector<ScoreReport>>(
      items.size(), config.workers,
      [&](std::size_t i) {
        const auto& [id, group] = items[i];
        auto results = adacs::compare_to_baseline(*group, *dataset.at(id).baseline_explanation, gateway, embedder);
        std::vector<ScoreReport> out;
        for (const auto& e : *group) {
          const auto& r = *std::find_if(results.begin(), results.end(),
                                        [&](const adacs::SimilarityResult& s) { return s.method == e.method; });
          ScoreReport s;
          s.subject.neuron = id;
          s.method = e.method;
          s.metric = Metric::AdaCS;
          s.value = r.cosine;
          s.subset = config.subset;
          s.detail = {{"rank", r.rank},
                      {"tied", r.tied},
                      {"embedding_norm", r.embedding_norm},
                      {"reference_kind", adacs::to_string(r.reference_kind)},
                      {"methods_compared", results.size()}};
          s.validate();
          out.push_back(std::move(s));
        }
        return out;
      },
      [&](std::size_t i, detail::Finished<std::vector<ScoreReport>>& f) {
        if (f.value) {
          for (const auto& s : *f.value) {
            if (have.count(score_key(s))) {
              ++sum.skipped_existing;
              continue;
            }
            writer.append(to_json(s));
            ++sum.written;
          }
          return true;
        }
        return note_failure(sum, log, "adacs " + to_string(items[i].first), f.error, config.strict);
      });
  finish(sum, config.strict);
  write_manifest(config, "adacs", {{"results", counts_json(sum)}});
  return sum;
}

RunSummary run_puzzles(const ExperimentConfig& config, gateway::Gateway& gateway, spdlog::logger& log) {
  if (config.methods.empty()) throw UsageError("no prompt methods selected");
  const auto& explainer = config.endpoint_for("explainer");
  const auto& embedder = config.endpoint_for("embedder");
  const auto few_shot = prompts::FewShotSet::load(config.few_shot_path);
  const auto counter = make_counter(config);
  const auto puzzles = adacs::load_puzzles(config.puzzles_dir);
  const auto path = config.output_dir / kScoresFile;
  fs::create_directories(config.output_dir);
  const auto have = existing_score_keys(path);
  const std::string subset = "puzzles";

  RunSummary sum;
  std::vector<std::pair<const adacs::NeuronPuzzle*, PromptMethod>> items;
  for (const auto& p : puzzles) {
    for (auto m : config.methods) {
      ScoreReport probe;
      probe.subject.puzzle = p.name;
      probe.method = m;
      probe.metric = Metric::AdaCS;
      probe.subset = subset;
      if (have.count(score_key(probe))) {
        ++sum.skipped_existing;
      } else {
        items.emplace_back(&p, m);
      }
    }
  }
  log.info("puzzles: {} puzzles x {} methods x {} samples", puzzles.size(), config.methods.size(),
           config.samples_per_puzzle);

  adacs::PuzzleRun run;
  run.few_shot = &few_shot;
  run.counter = counter.get();
  run.quantile = config.quantile;
  run.samples_per_puzzle = config.samples_per_puzzle;
  run.base_seed = config.seed;

  JsonlWriter writer(path);
  detail::run_ordered<ScoreReport>(
      items.size(), config.workers,
      [&](std::size_t i) {
        const auto& [puzzle, method] = items[i];
        auto scored = adacs::score_puzzles({*puzzle}, method, gateway, explainer, embedder, run);
        ScoreReport s;
        s.subject.puzzle = puzzle->name;
        s.method = method;
        s.metric = Metric::AdaCS;
        s.value = scored.summary.mean;
        s.stderr_ = scored.summary.stderr_;
        s.subset = subset;
        json samples = json::array();
        for (const auto& r : scored.samples) samples.push_back(r.cosine);
        s.detail = {{"samples", samples}, {"reference_kind", "ground-truth"}};
        s.validate();
        return s;
      },
      [&](std::size_t i, detail::Finished<ScoreReport>& f) {
        if (f.value) {
          writer.append(to_json(*f.value));
          ++sum.written;
          return true;
        }
        return note_failure(sum, log,
                            "puzzle " + items[i].first->name + " " + std::string(to_string(items[i].second)),
                            f.error, config.strict);
      });
  finish(sum, config.strict);
  write_manifest(config, "puzzles", {{"puzzles", puzzles.size()}, {"results", counts_json(sum)}});
  return sum;
}

namespace {

json judgment_json(const NeuronId& id, PromptMethod m, const judge::JudgeRanking& r) {
  json j = {{"neuron", {{"layer", id.layer}, {"neuron", id.neuron}}},
            {"method", to_string(m)},
            {"strategy", judge::to_string(r.strategy)},
            {"score", r.score}};
  if (r.rationale) j["rationale"] = *r.rationale;
  return j;
}

}  // namespace

RunSummary run_judge(const ExperimentConfig& config, gateway::Gateway& gateway, spdlog::logger& log) {
  const auto& judge_ep = config.endpoint_for("judge");
  judge::Strategy strategy;
  try {
    strategy = judge::parse_strategy(config.judge_strategy);
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  const std::string strategy_name(judge::to_string(strategy));
  const auto explanations = load_explanations(config);
  const auto dataset = dataset_by_id(config);
  const auto path = config.output_dir / kJudgmentsFile;

  judge::JudgeState state;
  state.accumulating = judge::AccumulatingContext(config.judge_context_cap);
  if (strategy == judge::Strategy::ChainOfThought) {
    if (config.cot_exemplars_path.empty()) {
      log.warn("chain-of-thought judging without exemplars");
    } else {
      state.cot_exemplars = judge::load_cot_exemplars(config.cot_exemplars_path);
    }
  }

  std::map<NeuronId, std::map<PromptMethod, const Explanation*>> grouped;
  for (const auto& e : explanations) grouped[e.neuron][e.method] = &e;

  // Resume: existing judgments are skipped and, for the accumulating
  // strategy, replayed into the context in file order.
  std::set<std::tuple<NeuronId, PromptMethod>> have;
  if (fs::exists(path)) {
    for_each_jsonl(path, [&](std::size_t, const json& j) {
      if (j.at("strategy").get<std::string>() != strategy_name) return;
      NeuronId id{j.at("neuron").at("layer").get<int>(), j.at("neuron").at("neuron").get<int>()};
      PromptMethod m = parse_method(j.at("method").get<std::string>());
      have.insert({id, m});
      if (strategy == judge::Strategy::AccumulatingFewShot) {
        auto g = grouped.find(id);
        auto d = dataset.find(id);
        if (g != grouped.end() && g->second.count(m) && d != dataset.end() && d->second.baseline_explanation) {
          state.accumulating.add({*d->second.baseline_explanation, g->second.at(m)->text}, j.at("score").get<double>());
        }
      }
    });
  }

  RunSummary sum;
  std::vector<std::pair<NeuronId, std::vector<PromptMethod>>> items;
  for (const auto& [id, by_method] : grouped) {
    auto d = dataset.find(id);
    if (d == dataset.end() || !d->second.baseline_explanation || d->second.baseline_explanation->empty()) {
      ++sum.skipped_ineligible;
      continue;
    }
    std::vector<PromptMethod> todo;
    for (const auto& [m, e] : by_method) {
      if (have.count({id, m})) {
        ++sum.skipped_existing;
      } else {
        todo.push_back(m);
      }
    }
    if (todo.empty()) continue;
    if (strategy == judge::Strategy::BatchedPairs) {
      if (by_method.size() != kAllMethods.size() || todo.size() != kAllMethods.size()) {
        log.warn("judge: {} lacks a full set of 5 method explanations; skipped", to_string(id));
        ++sum.skipped_ineligible;
        continue;
      }
      items.emplace_back(id, todo);
    } else {
      for (auto m : todo) items.push_back({id, {m}});
    }
  }

  const int workers = strategy == judge::Strategy::AccumulatingFewShot ? 1 : config.workers;
  using Batch = std::vector<std::pair<PromptMethod, judge::JudgeRanking>>;
  JsonlWriter writer(path);
  detail::run_ordered<Batch>(
      items.size(), workers,
      [&](std::size_t i) {
        const auto& [id, methods] = items[i];
        const std::string& baseline = *dataset.at(id).baseline_explanation;
        Batch out;
        if (strategy == judge::Strategy::BatchedPairs) {
          std::map<PromptMethod, judge::ExplanationPair> pairs;
          for (auto m : methods) pairs[m] = {baseline, grouped.at(id).at(m)->text};
          for (auto& [m, r] : judge::judge_batch(pairs, gateway, judge_ep)) out.emplace_back(m, r);
        } else {
          auto m = methods.front();
          out.emplace_back(m, judge::judge_pair({baseline, grouped.at(id).at(m)->text}, strategy, gateway,
                                                judge_ep, state));
        }
        return out;
      },
      [&](std::size_t i, detail::Finished<Batch>& f) {
        if (f.value) {
          for (const auto& [m, r] : *f.value) {
            writer.append(judgment_json(items[i].first, m, r));
            ++sum.written;
          }
          return true;
        }
        return note_failure(sum, log, "judge " + to_string(items[i].first), f.error, config.strict);
      });

  // Controversial neurons over every stored judgment of this strategy.
  std::map<NeuronId, std::map<PromptMethod, double>> scores;
  if (fs::exists(path)) {
    for_each_jsonl(path, [&](std::size_t, const json& j) {
      if (j.at("strategy").get<std::string>() != strategy_name) return;
      NeuronId id{j.at("neuron").at("layer").get<int>(), j.at("neuron").at("neuron").get<int>()};
      scores[id][parse_method(j.at("method").get<std::string>())] = j.at("score").get<double>();
    });
  }
  std::vector<std::pair<NeuronId, std::vector<double>>> groups;
  for (const auto& [id, by_method] : scores) {
    if (by_method.size() != kAllMethods.size()) continue;
    std::vector<double> v;
    for (auto m : kAllMethods) v.push_back(by_method.at(m));
    groups.emplace_back(id, std::move(v));
  }
  json picked = json::array();
  for (const auto& id : judge::select_controversial(groups, config.controversial_threshold)) {
    picked.push_back({{"layer", id.layer}, {"neuron", id.neuron}});
  }
  write_text_file(config.output_dir / kControversialFile,
                  json{{"strategy", strategy_name},
                       {"range_threshold", config.controversial_threshold},
                       {"neurons_considered", groups.size()},
                       {"controversial", picked}}
                          .dump(2) +
                      "\n");
  finish(sum, config.strict);
  write_manifest(config, "judge", {{"strategy", strategy_name}, {"results", counts_json(sum)}});
  return sum;
}

// ---- reports ----

std::string ReportColumn::label() const { return subset + "/" + std::string(metric_label(metric)); }

std::vector<double> rank_descending(const std::vector<double>& values) {
  std::vector<std::size_t> order(values.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  std::vector<double> rank(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    double shared = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = shared;
    i = j + 1;
  }
  return rank;
}

Report build_report(const std::vector<ScoreReport>& scores) {
  if (scores.empty()) throw EmptyGroup("no scores to report");
  std::vector<std::pair<std::string, Metric>> order;
  std::map<std::pair<std::string, Metric>, std::map<PromptMethod, std::vector<double>>> values;
  for (const auto& s : scores) {
    auto key = std::make_pair(s.subset, s.metric);
    if (!values.count(key)) order.push_back(key);
    values[key][s.method].push_back(s.value);
  }
  Report report;
  std::map<PromptMethod, std::vector<double>> ranks_by_method;
  for (const auto& key : order) {
    ReportColumn col;
    col.subset = key.first;
    col.metric = key.second;
    std::vector<PromptMethod> present;
    std::vector<double> means;
    for (auto m : kAllMethods) {
      auto it = values[key].find(m);
      if (it == values[key].end()) continue;
      col.by_method[m] = simscore::mean_and_stderr(it->second);
      present.push_back(m);
      means.push_back(col.by_method[m].mean);
    }
    auto ranks = rank_descending(means);
    for (std::size_t i = 0; i < present.size(); ++i) {
      col.rank[present[i]] = ranks[i];
      ranks_by_method[present[i]].push_back(ranks[i]);
    }
    report.columns.push_back(std::move(col));
  }
  for (const auto& [m, r] : ranks_by_method) {
    double total = 0.0;
    for (double x : r) total += x;
    report.average_rank[m] = total / static_cast<double>(r.size());
  }
  return report;
}

std::string render_report_text(const Report& report) {
  const std::size_t first = 11;
  std::vector<std::size_t> widths;
  for (const auto& c : report.columns) widths.push_back(std::max<std::size_t>(c.label().size() + 2, 20));

  std::string out = "Scores (mean +/- stderr)\n" + pad("method", first);
  for (std::size_t i = 0; i < report.columns.size(); ++i) out += pad(report.columns[i].label(), widths[i]);
  out += "\n";
  for (auto m : kAllMethods) {
    if (!report.average_rank.count(m)) continue;
    out += pad(std::string(to_string(m)), first);
    for (std::size_t i = 0; i < report.columns.size(); ++i) {
      const auto& col = report.columns[i];
      auto it = col.by_method.find(m);
      std::string cell = "-";
      if (it != col.by_method.end()) {
        cell = fixed(it->second.mean, 4) + " +/- " + (it->second.stderr_ ? fixed(*it->second.stderr_, 4) : "n/a");
      }
      out += pad(cell, widths[i]);
    }
    out += "\n";
  }

  out += "\nRank summary (1 = best)\n" + pad("method", first);
  for (std::size_t i = 0; i < report.columns.size(); ++i) out += pad(report.columns[i].label(), widths[i]);
  out += "avg\n";
  for (auto m : kAllMethods) {
    auto avg = report.average_rank.find(m);
    if (avg == report.average_rank.end()) continue;
    out += pad(std::string(to_string(m)), first);
    for (std::size_t i = 0; i < report.columns.size(); ++i) {
      auto it = report.columns[i].rank.find(m);
      out += pad(it == report.columns[i].rank.end() ? "-" : format_rank(it->second), widths[i]);
    }
    out += fixed(avg->second, 2) + "\n";
  }
  return out;
}

json report_to_json(const Report& report) {
  json cols = json::array();
  for (const auto& c : report.columns) {
    json methods = json::object();
    for (const auto& [m, s] : c.by_method) {
      methods[std::string(to_string(m))] = {{"mean", s.mean},
                                            {"stderr", s.stderr_ ? json(*s.stderr_) : json(nullptr)},
                                            {"n", s.n},
                                            {"rank", c.rank.at(m)}};
    }
    cols.push_back({{"subset", c.subset}, {"metric", to_string(c.metric)}, {"label", c.label()}, {"methods", methods}});
  }
  json avg = json::object();
  for (const auto& [m, r] : report.average_rank) avg[std::string(to_string(m))] = r;
  return {{"columns", cols}, {"average_rank", avg}};
}

Report run_report(const std::vector<fs::path>& score_files, const fs::path& out_prefix) {
  std::vector<ScoreReport> all;
  for (const auto& f : score_files) {
    auto s = read_scores(f);
    all.insert(all.end(), s.begin(), s.end());
  }
  Report report = build_report(all);
  if (out_prefix.has_parent_path()) fs::create_directories(out_prefix.parent_path());
  write_text_file(fs::path(out_prefix.string() + ".txt"), render_report_text(report));
  write_text_file(fs::path(out_prefix.string() + ".json"), report_to_json(report).dump(2) + "\n");
  return report;
}

// ---- efficiency and cost ----

EfficiencyTable measure_efficiency(const std::vector<NeuronRecord>& records,
                                   const std::vector<PromptMethod>& methods,
                                   const prompts::FewShotSet& few_shot, double quantile,
                                   const prompts::TokenCounter& counter, std::size_t n) {
  if (methods.empty()) throw UsageError("no prompt methods selected");
  if (records.empty()) throw EmptyGroup("no neurons to measure");
  const std::size_t used = std::min(n, records.size());
  EfficiencyTable t;
  t.neurons = used;
  t.counter = counter.name();
  const bool has_original = std::find(methods.begin(), methods.end(), PromptMethod::Original) != methods.end();
  t.ratio_column = has_original && methods.size() > 1;
  for (auto m : methods) {
    double total = 0.0;
    for (std::size_t i = 0; i < used; ++i) {
      total += static_cast<double>(prompts::build_prompt(records[i], m, few_shot, quantile, counter).token_count);
    }
    t.rows.push_back({m, total / static_cast<double>(used), std::nullopt});
  }
  if (t.ratio_column) {
    double original = 0.0;
    for (const auto& r : t.rows) {
      if (r.method == PromptMethod::Original) original = r.mean_tokens;
    }
    for (auto& r : t.rows) {
      if (r.method != PromptMethod::Original) r.improvement = original / r.mean_tokens;
    }
  }
  return t;
}

std::string render_efficiency_text(const EfficiencyTable& table) {
  std::string out = "Prompt tokens per neuron (" + std::to_string(table.neurons) + " neurons, counter " +
                    table.counter + ")\n" + pad("method", 11) + pad("tokens", 10);
  if (table.ratio_column) out += "improvement";
  out += "\n";
  for (const auto& r : table.rows) {
    std::string line = pad(std::string(to_string(r.method)), 11) + pad(fixed(r.mean_tokens, 1), 10);
    if (table.ratio_column) line += r.improvement ? fixed(*r.improvement, 2) + "x" : "-";
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
  }
  return out;
}

json efficiency_to_json(const EfficiencyTable& table) {
  json rows = json::array();
  for (const auto& r : table.rows) {
    json row = {{"method", to_string(r.method)}, {"mean_tokens", r.mean_tokens}};
    if (table.ratio_column) row["improvement"] = r.improvement ? json(*r.improvement) : json(nullptr);
    rows.push_back(row);
  }
  return {{"neurons", table.neurons}, {"counter", table.counter}, {"rows", rows}};
}

CostEstimate estimate_explain_cost(const EfficiencyTable& table, std::size_t neurons,
                                   const prompts::Pricing& pricing, int completion_tokens) {
  if (completion_tokens < 0) throw UsageError("completion tokens must be >= 0");
  CostEstimate c;
  c.neurons = neurons;
  for (const auto& r : table.rows) {
    double per_call = prompts::estimate_cost(static_cast<std::int64_t>(std::llround(r.mean_tokens)),
                                             completion_tokens, pricing);
    c.per_method[r.method] = per_call * static_cast<double>(neurons);
    c.total += c.per_method[r.method];
  }
  return c;
}

std::string render_cost_text(const CostEstimate& estimate, const prompts::Pricing& pricing) {
  std::string out = "Explanation cost for " + std::to_string(estimate.neurons) + " neurons (in " +
                    fixed(pricing.rate_in_per_1k, 4) + " / out " + fixed(pricing.rate_out_per_1k, 4) +
                    " per 1k tokens)\n";
  for (auto m : kAllMethods) {
    auto it = estimate.per_method.find(m);
    if (it != estimate.per_method.end()) out += pad(std::string(to_string(m)), 11) + fixed(it->second, 2) + "\n";
  }
  out += pad("total", 11) + fixed(estimate.total, 2) + "\n";
  return out;
}

}  // namespace neuronlens::orchestrator
