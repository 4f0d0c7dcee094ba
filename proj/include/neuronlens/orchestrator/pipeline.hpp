#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <spdlog/logger.h>

#include "neuronlens/orchestrator/config.hpp"
#include "neuronlens/prompts/builder.hpp"

namespace neuronlens::orchestrator {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitPartial = 2, kExitFatal = 3 };

struct RunSummary {
  std::size_t written = 0;
  std::size_t skipped_existing = 0;
  std::size_t skipped_ineligible = 0;
  std::size_t failed = 0;
  std::vector<std::string> failures;
  int exit_code = kExitOk;
};

/// File names inside `output_dir`.
inline constexpr std::string_view kExplanationsFile = "explanations.jsonl";
inline constexpr std::string_view kScoresFile = "scores.jsonl";
inline constexpr std::string_view kJudgmentsFile = "judgments.jsonl";
inline constexpr std::string_view kControversialFile = "controversial.json";

/// stderr logger whose output has the values of every configured API-key
/// variable replaced before it is written.
std::shared_ptr<spdlog::logger> make_logger(const ExperimentConfig& config);

/// Gateway for the config's mode. Replay never constructs an HTTP client.
std::shared_ptr<gateway::Gateway> make_gateway(const ExperimentConfig& config);

std::unique_ptr<prompts::TokenCounter> make_counter(const ExperimentConfig& config);

/// Ingests the dataset and applies the configured selection strategy.
std::vector<NeuronRecord> load_selected(const ExperimentConfig& config, spdlog::logger& log);

/// Writes `manifest.<command>.json` next to the outputs: config hash, code
/// version, seed, mode and run counts. Contains no wall-clock data.
void write_manifest(const ExperimentConfig& config, const std::string& command,
                    const nlohmann::json& extra);

/// Explains every selected neuron with every configured method. Keys already
/// present in the explanations file are skipped. Failures are logged and
/// skipped (exit 2) unless `strict`, where the first one stops the run (exit 3).
RunSummary run_explain(const ExperimentConfig& config, gateway::Gateway& gateway, spdlog::logger& log);

/// Simulation-correlation scores for every persisted explanation of a dataset neuron.
RunSummary run_simscore(const ExperimentConfig& config, gateway::Gateway& gateway, spdlog::logger& log);

/// Embedding similarity of each neuron's explanations to its baseline explanation.
RunSummary run_adacs(const ExperimentConfig& config, gateway::Gateway& gateway, spdlog::logger& log);

/// Ground-truth similarity on the puzzle directory, one report per (puzzle, method).
RunSummary run_puzzles(const ExperimentConfig& config, gateway::Gateway& gateway, spdlog::logger& log);

/// Judges (baseline, generated) pairs and writes the controversial-neuron list.
RunSummary run_judge(const ExperimentConfig& config, gateway::Gateway& gateway, spdlog::logger& log);

// ---- reports (pure) ----

struct ReportColumn {
  std::string subset;
  Metric metric = Metric::SimulationCorrelation;
  std::map<PromptMethod, simscore::MeanAndError> by_method;
  /// 1 = highest mean. Tied means share the average of their positions.
  std::map<PromptMethod, double> rank;
  [[nodiscard]] std::string label() const;
};

struct Report {
  std::vector<ReportColumn> columns;  // first-appearance order of (subset, metric)
  std::map<PromptMethod, double> average_rank;
};

/// Ranks 1..n by descending value; equal values share their mean position.
std::vector<double> rank_descending(const std::vector<double>& values);

/// Throws EmptyGroup for no scores.
Report build_report(const std::vector<ScoreReport>& scores);
std::string render_report_text(const Report& report);
nlohmann::json report_to_json(const Report& report);

/// Reads every scores file, writes `<out_prefix>.txt` and `<out_prefix>.json`.
Report run_report(const std::vector<std::filesystem::path>& score_files,
                  const std::filesystem::path& out_prefix);

// ---- efficiency and cost ----

struct EfficiencyRow {
  PromptMethod method = PromptMethod::Original;
  double mean_tokens = 0.0;
  /// Original / this method; absent for Original itself and when Original is not measured.
  std::optional<double> improvement;
};

struct EfficiencyTable {
  std::vector<EfficiencyRow> rows;
  std::size_t neurons = 0;
  std::string counter;
  bool ratio_column = false;
};

/// Mean prompt tokens per method over the first `n` records (all if fewer).
/// Throws UsageError for an empty method list.
EfficiencyTable measure_efficiency(const std::vector<NeuronRecord>& records,
                                   const std::vector<PromptMethod>& methods,
                                   const prompts::FewShotSet& few_shot, double quantile,
                                   const prompts::TokenCounter& counter, std::size_t n);
std::string render_efficiency_text(const EfficiencyTable& table);
nlohmann::json efficiency_to_json(const EfficiencyTable& table);

struct CostEstimate {
  std::size_t neurons = 0;
  std::map<PromptMethod, double> per_method;
  double total = 0.0;
};

/// Explanation cost for `neurons` neurons: one call per method with the
/// table's mean prompt length and `completion_tokens` output tokens.
CostEstimate estimate_explain_cost(const EfficiencyTable& table, std::size_t neurons,
                                   const prompts::Pricing& pricing, int completion_tokens);
std::string render_cost_text(const CostEstimate& estimate, const prompts::Pricing& pricing);

}  // namespace neuronlens::orchestrator
