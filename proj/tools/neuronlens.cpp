#include <csignal>
#include <cstdlib>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "neuronlens/core/jsonl.hpp"
#include "neuronlens/evalservice/server.hpp"
#include "neuronlens/orchestrator/pipeline.hpp"

namespace nl = neuronlens;
namespace orch = neuronlens::orchestrator;
namespace fs = std::filesystem;
namespace evalservice = neuronlens::evalservice;
using nlohmann::json;

namespace {

// Flags shared by every config-driven command. Set values win over the file.
struct Overrides {
  fs::path config;
  std::optional<fs::path> dataset, output_dir, cassette;
  std::optional<std::string> mode, methods, strategy, subset, upstream;
  std::optional<std::int64_t> seed;
  std::optional<std::size_t> k;
  std::optional<double> threshold, quantile;
  std::optional<int> workers;
  bool strict = false;
  bool lenient = false;
};

void add_common(CLI::App& cmd, Overrides& o) {
  cmd.add_option("-c,--config", o.config, "experiment config file")->required()->check(CLI::ExistingFile);
  cmd.add_option("--dataset", o.dataset, "neuron records JSONL");
  cmd.add_option("--output-dir", o.output_dir);
  cmd.add_option("--cassette", o.cassette);
  cmd.add_option("--mode", o.mode, "live, record or replay");
  cmd.add_option("--upstream", o.upstream, "http or synthetic");
  cmd.add_option("--methods", o.methods, "comma-separated prompt methods");
  cmd.add_option("--strategy", o.strategy, "all, random, random-interpretable, top-per-layer, top-n");
  cmd.add_option("--k", o.k);
  cmd.add_option("--threshold", o.threshold);
  cmd.add_option("--seed", o.seed);
  cmd.add_option("--quantile", o.quantile);
  cmd.add_option("--subset", o.subset);
  cmd.add_option("--workers", o.workers);
  cmd.add_flag("--strict", o.strict, "stop at the first failure");
  cmd.add_flag("--lenient-ingest", o.lenient, "skip malformed dataset lines");
}

orch::ExperimentConfig resolve(const Overrides& o) {
  auto c = orch::ExperimentConfig::load(o.config);
  try {
    if (o.dataset) c.dataset_path = *o.dataset;
    if (o.output_dir) c.output_dir = *o.output_dir;
    if (o.cassette) c.cassette = *o.cassette;
    if (o.mode) c.mode = nl::gateway::parse_mode(*o.mode);
    if (o.upstream) c.upstream = *o.upstream;
    if (o.methods) c.methods = orch::parse_method_list(*o.methods);
    if (o.strategy) c.selection.strategy = *o.strategy;
    if (o.k) c.selection.k = *o.k;
    if (o.threshold) c.selection.threshold = *o.threshold;
    if (o.seed) {
      c.seed = *o.seed;
      c.selection.seed = static_cast<std::uint64_t>(*o.seed);
    }
    if (o.quantile) c.quantile = *o.quantile;
    if (o.subset) c.subset = *o.subset;
    if (o.workers) c.workers = *o.workers;
    if (o.strict) c.strict = true;
    if (o.lenient) c.schema.strict = false;
  } catch (const orch::UsageError&) {
    throw;
  } catch (const nl::Error& e) {
    throw orch::UsageError(e.what());
  }
  c.validate();
  return c;
}

int finish(const orch::RunSummary& s, spdlog::logger& log, std::string_view what) {
  log.info("{}: {} written, {} already present, {} ineligible, {} failed", what, s.written, s.skipped_existing,
           s.skipped_ineligible, s.failed);
  return s.exit_code;
}

using Runner = orch::RunSummary (*)(const orch::ExperimentConfig&, nl::gateway::Gateway&, spdlog::logger&);

int run_stage(const Overrides& o, Runner runner, std::string_view what) {
  auto config = resolve(o);
  auto log = orch::make_logger(config);
  auto gateway = orch::make_gateway(config);
  return finish(runner(config, *gateway, *log), *log, what);
}

evalservice::EvalServer* g_server = nullptr;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"neuronlens: explain and evaluate LLM neurons"};
  app.require_subcommand(1);
  app.set_version_flag("--version", NEURONLENS_VERSION);

  Overrides o;
  int rc = orch::kExitOk;

  auto* ingest = app.add_subcommand("ingest", "validate a dataset and report counts");
  add_common(*ingest, o);
  std::optional<fs::path> ingest_out;
  ingest->add_option("--out", ingest_out, "write the normalized records here");

  auto* select = app.add_subcommand("select", "apply the selection strategy; prints ids and a per-layer histogram");
  add_common(*select, o);
  std::optional<fs::path> select_out;
  select->add_option("--out", select_out, "write the selected records here");

  auto* explain = app.add_subcommand("explain", "generate explanations");
  add_common(*explain, o);
  auto* simscore = app.add_subcommand("simscore", "simulation-correlation scoring");
  add_common(*simscore, o);
  auto* adacs = app.add_subcommand("adacs", "embedding similarity to the baseline explanation");
  add_common(*adacs, o);
  auto* puzzles = app.add_subcommand("puzzles", "explain and score the puzzle set");
  add_common(*puzzles, o);
  auto* judge = app.add_subcommand("judge", "judge-model comparison and controversial neurons");
  add_common(*judge, o);

  auto* efficiency = app.add_subcommand("efficiency", "mean prompt tokens per method");
  add_common(*efficiency, o);
  std::optional<std::size_t> eff_neurons;
  efficiency->add_option("--neurons", eff_neurons, "number of records to average over");

  auto* report = app.add_subcommand("report", "aggregate score files into tables");
  std::vector<fs::path> score_files;
  fs::path report_out = "report";
  report->add_option("scores", score_files, "scores JSONL files")->required()->check(CLI::ExistingFile);
  report->add_option("-o,--out", report_out, "output prefix; writes .txt and .json");

  auto* serve = app.add_subcommand("serve-eval", "serve the blind rating study");
  add_common(*serve, o);
  std::string host = "127.0.0.1";
  int port = 8080;
  std::optional<fs::path> ratings_path;
  std::string admin_token;
  std::size_t per_layer = 1;
  int layer_count = 48;
  std::string explainer_tag;
  serve->add_option("--host", host);
  serve->add_option("--port", port);
  serve->add_option("--ratings", ratings_path, "ratings store (default <output_dir>/ratings.jsonl)");
  serve->add_option("--admin-token", admin_token, "defaults to $NEURONLENS_ADMIN_TOKEN");
  serve->add_option("--neurons-per-layer", per_layer);
  serve->add_option("--layers", layer_count);
  serve->add_option("--explainer-tag", explainer_tag);

  auto* cost = app.add_subcommand("estimate-cost", "projected explanation cost");
  add_common(*cost, o);
  std::size_t cost_neurons = 1000;
  cost->add_option("--neurons", cost_neurons, "neurons to price");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? orch::kExitOk : orch::kExitUsage;
  }

  try {
    if (ingest->parsed()) {
      auto config = resolve(o);
      auto result = nl::ingest_neurons(config.dataset_path, config.schema);
      for (const auto& p : result.problems) std::cerr << fmt::format("line {}: {}: {}\n", p.line, p.field, p.message);
      std::cout << fmt::format("{} neurons, {} clamped activations, {} skipped lines\n", result.records.size(),
                               result.clamped_activations, result.problems.size());
      if (ingest_out) nl::write_text_file(*ingest_out, nl::serialize_neurons(result.records));
    } else if (select->parsed()) {
      auto config = resolve(o);
      auto log = orch::make_logger(config);
      auto records = orch::load_selected(config, *log);
      std::vector<nl::NeuronId> ids;
      for (const auto& r : records) {
        ids.push_back(r.id);
        std::cout << fmt::format("{}\t{}\n", r.id.layer, r.id.neuron);
      }
      for (const auto& [layer, n] : nl::layer_histogram(ids)) std::cerr << fmt::format("layer {:>3}  {}\n", layer, n);
      if (select_out) nl::write_text_file(*select_out, nl::serialize_neurons(records));
    } else if (explain->parsed()) {
      rc = run_stage(o, &orch::run_explain, "explain");
    } else if (simscore->parsed()) {
      rc = run_stage(o, &orch::run_simscore, "simscore");
    } else if (adacs->parsed()) {
      rc = run_stage(o, &orch::run_adacs, "adacs");
    } else if (puzzles->parsed()) {
      rc = run_stage(o, &orch::run_puzzles, "puzzles");
    } else if (judge->parsed()) {
      rc = run_stage(o, &orch::run_judge, "judge");
    } else if (efficiency->parsed() || cost->parsed()) {
      auto config = resolve(o);
      auto records = nl::ingest_neurons(config.dataset_path, config.schema).records;
      auto few_shot = nl::prompts::FewShotSet::load(config.few_shot_path);
      auto counter = orch::make_counter(config);
      std::size_t n = eff_neurons.value_or(config.efficiency_neurons);
      auto table = orch::measure_efficiency(records, config.methods, few_shot, config.quantile, *counter, n);
      if (efficiency->parsed()) {
        std::cout << orch::render_efficiency_text(table);
        fs::create_directories(config.output_dir);
        nl::write_text_file(config.output_dir / "efficiency.json", orch::efficiency_to_json(table).dump(2) + "\n");
      } else {
        auto estimate = orch::estimate_explain_cost(table, cost_neurons, config.pricing, config.completion_tokens_per_call);
        std::cout << orch::render_cost_text(estimate, config.pricing);
      }
    } else if (report->parsed()) {
      auto r = orch::run_report(score_files, report_out);
      std::cout << orch::render_report_text(r);
    } else if (serve->parsed()) {
      auto config = resolve(o);
      if (admin_token.empty()) {
        if (const char* env = std::getenv("NEURONLENS_ADMIN_TOKEN")) admin_token = env;
      }
      auto records = nl::ingest_neurons(config.dataset_path, config.schema).records;
      auto explanations = nl::read_explanations(config.output_dir / orch::kExplanationsFile);
      evalservice::StudyConfig study;
      study.layer_count = layer_count;
      study.neurons_per_layer = per_layer;
      study.explainer_tag = explainer_tag;
      auto store = std::make_shared<evalservice::RatingsStore>(ratings_path.value_or(config.output_dir / "ratings.jsonl"));
      auto service = std::make_shared<evalservice::StudyService>(std::move(records), explanations, study, store);
      evalservice::EvalServer server(service, admin_token);
      int bound = server.bind(host, port);
      if (admin_token.empty()) spdlog::warn("no admin token set; /study/results is disabled");
      spdlog::info("serving on http://{}:{}", host, bound);
      g_server = &server;
      std::signal(SIGINT, [](int) {
        if (g_server) g_server->stop();
      });
      std::signal(SIGTERM, [](int) {
        if (g_server) g_server->stop();
      });
      server.listen();
      g_server = nullptr;
    }
  } catch (const orch::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return orch::kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return orch::kExitFatal;
  }
  return rc;
}
