#include "support/test_support.hpp"

#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

#include "neuronlens/core/dataset.hpp"

namespace nltest {

using namespace neuronlens;

fs::path source_path(const std::string& relative) { return fs::path(NL_SOURCE_DIR) / relative; }

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  path_ = fs::temp_directory_path() /
          ("nltest-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

ActivationRecord record(std::vector<std::string> tokens, std::vector<double> activations) {
  return ActivationRecord::make(std::move(tokens), std::move(activations));
}

NeuronRecord neuron(int layer, int index, std::optional<double> score, std::optional<std::string> baseline) {
  NeuronRecord n;
  n.id = {layer, index};
  n.top_excerpts.push_back(record({"It", " will", " rain", " today"}, {0.0, 0.1, 4.0, 0.5}));
  n.random_excerpts.push_back(record({" dry", " air"}, {0.0, 0.2}));
  n.baseline_explanation = std::move(baseline);
  n.baseline_score = score;
  return n;
}

const prompts::FewShotSet& few_shot() {
  static const auto set = prompts::FewShotSet::load(source_path("data/few_shot.json"));
  return set;
}

std::vector<NeuronRecord> corpus_50() {
  static const auto records = ingest_neurons(source_path("fixtures/neurons_50.jsonl")).records;
  return records;
}

orchestrator::ExperimentConfig pipeline_config(const fs::path& output_dir) {
  auto c = orchestrator::ExperimentConfig::load(source_path("fixtures/pipeline_10.conf"));
  c.output_dir = output_dir;
  return c;
}

double oracle_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    syy += y[i] * y[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
}

double oracle_sem(const std::vector<double>& v) {
  double mean = 0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1)) / std::sqrt(static_cast<double>(v.size()));
}

bool mentions_method_name(const std::string& text) {
  for (auto m : kAllMethods) {
    if (text.find(std::string(to_string(m))) != std::string::npos) return true;
  }
  return false;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string tree_digest(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::string out;
  for (const auto& f : files) {
    out += "== " + fs::relative(f, dir).string() + "\n";
    out += read_file(f);
  }
  return out;
}

CliResult run_cli(const std::string& args) {
  CliResult r;
  std::string cmd = std::string(NL_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  while (std::size_t n = std::fread(buf.data(), 1, buf.size(), pipe)) r.output.append(buf.data(), n);
  int status = ::pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

}  // namespace nltest
