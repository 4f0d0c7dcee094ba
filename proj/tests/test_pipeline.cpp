#include <gtest/gtest.h>

#include <atomic>
#include <fstream>
#include <numeric>

#include "neuronlens/core/dataset.hpp"
#include "neuronlens/core/jsonl.hpp"
#include "neuronlens/orchestrator/pipeline.hpp"
#include "support/test_support.hpp"

using namespace neuronlens;
using namespace neuronlens::orchestrator;
namespace gw = neuronlens::gateway;
using nlohmann::json;

namespace {

struct Counted {
  std::shared_ptr<std::atomic<int>> calls = std::make_shared<std::atomic<int>>(0);
  std::shared_ptr<gw::Gateway> gateway;
};

// Replay gateway over `cassette` that counts every request it is asked for.
Counted counted_replay(const std::filesystem::path& cassette) {
  Counted c;
  auto replay = std::make_shared<gw::ReplayTransport>(std::make_shared<gw::Cassette>(cassette));
  auto calls = c.calls;
  c.gateway = std::make_shared<gw::Gateway>(std::make_shared<gw::FunctionTransport>([replay, calls](const gw::ApiRequest& r) {
    ++*calls;
    return replay->send(r);
  }));
  return c;
}

void run_full(const ExperimentConfig& config) {
  auto log = make_logger(config);
  auto gateway = make_gateway(config);
  ASSERT_EQ(run_explain(config, *gateway, *log).exit_code, kExitOk);
  ASSERT_EQ(run_simscore(config, *gateway, *log).exit_code, kExitOk);
  ASSERT_EQ(run_adacs(config, *gateway, *log).exit_code, kExitOk);
  run_report({config.output_dir / kScoresFile}, config.output_dir / "report");
}

std::size_t count_lines(const std::filesystem::path& p) {
  std::size_t n = 0;
  for_each_jsonl(p, [&](std::size_t, const json&) { ++n; });
  return n;
}

}  // namespace

TEST(Pipeline, ReplayTwiceIsByteIdenticalWithoutNetwork) {
  nltest::TempDir a, b;
  const auto live_before = gw::HttpTransport::live_request_count();
  run_full(nltest::pipeline_config(a.path()));
  run_full(nltest::pipeline_config(b.path()));
  EXPECT_EQ(gw::HttpTransport::live_request_count(), live_before);
  EXPECT_EQ(live_before, 0u);

  EXPECT_EQ(count_lines(a / "explanations.jsonl"), 50u);
  EXPECT_EQ(count_lines(a / "scores.jsonl"), 100u);
  for (const char* f : {"explanations.jsonl", "scores.jsonl", "report.txt", "report.json", "manifest.explain.json",
                        "manifest.simscore.json", "manifest.adacs.json"}) {
    ASSERT_TRUE(std::filesystem::exists(a / f)) << f;
    EXPECT_EQ(nltest::read_file(a / f), nltest::read_file(b / f)) << f;
  }
  EXPECT_EQ(nltest::tree_digest(a.path()), nltest::tree_digest(b.path()));
}

TEST(Pipeline, ExplanationsCarryTokenCountsAndNoWallClock) {
  nltest::TempDir dir;
  auto config = nltest::pipeline_config(dir.path());
  auto log = make_logger(config);
  auto gateway = make_gateway(config);
  run_explain(config, *gateway, *log);
  std::set<std::pair<std::string, std::string>> keys;
  for_each_jsonl(dir / "explanations.jsonl", [&](std::size_t, const json& j) {
    auto e = explanation_from_json(j);
    EXPECT_GT(e.prompt_token_count, 0);
    EXPECT_FALSE(e.text.empty());
    // Timestamps come from the response, not the local clock.
    EXPECT_EQ(e.created_at, utc_timestamp_from_unix(1'700'000'000));
    keys.insert({to_string(e.neuron), std::string(to_string(e.method))});
  });
  EXPECT_EQ(keys.size(), 50u);
}

TEST(Pipeline, ResumeMakesNoNewCalls) {
  nltest::TempDir dir;
  auto config = nltest::pipeline_config(dir.path());
  auto log = make_logger(config);
  auto c = counted_replay(config.cassette);

  auto first = run_explain(config, *c.gateway, *log);
  EXPECT_EQ(first.written, 50u);
  EXPECT_EQ(c.calls->load(), 50);
  auto sim1 = run_simscore(config, *c.gateway, *log);
  EXPECT_EQ(sim1.written, 50u);
  const int after_first = c.calls->load();

  auto again = run_explain(config, *c.gateway, *log);
  auto sim2 = run_simscore(config, *c.gateway, *log);
  EXPECT_EQ(c.calls->load(), after_first);
  EXPECT_EQ(again.written, 0u);
  EXPECT_EQ(again.skipped_existing, 50u);
  EXPECT_EQ(sim2.skipped_existing, 50u);
  EXPECT_EQ(count_lines(dir / "explanations.jsonl"), 50u);
}

class MissingEntry : public ::testing::Test {
 protected:
  void SetUp() override {
    cassette_ = dir_ / "cassette.jsonl";
    std::ifstream in(nltest::source_path("fixtures/cassettes/pipeline_10.jsonl"));
    std::ofstream out(cassette_);
    std::string line;
    bool dropped = false;
    while (std::getline(in, line)) {
      auto j = json::parse(line);
      if (!dropped && j["request_summary"]["model"] == "synthetic-explainer") {
        dropped = true;
        continue;
      }
      out << line << '\n';
    }
    ASSERT_TRUE(dropped);
  }
  ExperimentConfig config(bool strict) {
    auto c = nltest::pipeline_config(dir_ / (strict ? "strict" : "lenient"));
    c.cassette = cassette_;
    c.strict = strict;
    return c;
  }
  nltest::TempDir dir_;
  std::filesystem::path cassette_;
};

TEST_F(MissingEntry, LenientRunSkipsOneAndExitsPartial) {
  auto c = config(false);
  auto log = make_logger(c);
  auto gateway = make_gateway(c);
  auto sum = run_explain(c, *gateway, *log);
  EXPECT_EQ(sum.written, 49u);
  EXPECT_EQ(sum.failed, 1u);
  ASSERT_EQ(sum.failures.size(), 1u);
  EXPECT_EQ(sum.exit_code, kExitPartial);
  EXPECT_EQ(count_lines(c.output_dir / "explanations.jsonl"), 49u);
  auto manifest = json::parse(nltest::read_file(c.output_dir / "manifest.explain.json"));
  EXPECT_EQ(manifest["results"]["failed"], 1);
}

TEST_F(MissingEntry, StrictRunStopsFatally) {
  auto c = config(true);
  auto log = make_logger(c);
  auto gateway = make_gateway(c);
  auto sum = run_explain(c, *gateway, *log);
  EXPECT_EQ(sum.exit_code, kExitFatal);
  EXPECT_GE(sum.failed, 1u);
  EXPECT_LT(sum.written, 50u);
}

TEST(Pipeline, JudgeAndPuzzlesReplay) {
  nltest::TempDir dir;
  auto config = nltest::pipeline_config(dir.path());
  auto log = make_logger(config);
  auto gateway = make_gateway(config);
  ASSERT_EQ(run_explain(config, *gateway, *log).exit_code, kExitOk);
  auto judged = run_judge(config, *gateway, *log);
  EXPECT_EQ(judged.exit_code, kExitOk);
  EXPECT_EQ(count_lines(dir / "judgments.jsonl"), 50u);
  for_each_jsonl(dir / "judgments.jsonl", [&](std::size_t, const json& j) {
    EXPECT_TRUE(j.contains("neuron"));
    EXPECT_TRUE(j.contains("method"));
    EXPECT_EQ(j["strategy"], "AccumulatingFewShot");
    double s = j["score"];
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 10.0);
  });
  auto controversial = json::parse(nltest::read_file(dir / "controversial.json"));
  EXPECT_TRUE(controversial["controversial"].is_array());

  auto puzzles = run_puzzles(config, *gateway, *log);
  EXPECT_EQ(puzzles.exit_code, kExitOk);
  EXPECT_EQ(puzzles.written, 5u * 3u);
}

TEST(Pipeline, ScoreSourceSimulationSelection) {
  nltest::TempDir dir;
  auto config = nltest::pipeline_config(dir.path());
  auto log = make_logger(config);
  auto gateway = make_gateway(config);
  run_explain(config, *gateway, *log);
  run_simscore(config, *gateway, *log);

  auto sel = config;
  sel.selection.strategy = "top-n";
  sel.selection.k = 3;
  sel.selection.score_source = ScoreSource::Simulation;
  sel.selection.score_file = dir / "scores.jsonl";
  auto chosen = load_selected(sel, *log);
  EXPECT_EQ(chosen.size(), 3u);

  // Ranked by each neuron's mean simulation score over its methods.
  std::map<std::string, std::vector<double>> values;
  for_each_jsonl(dir / "scores.jsonl", [&](std::size_t, const json& j) {
    auto s = score_report_from_json(j);
    values[to_string(*s.subject.neuron)].push_back(s.value);
  });
  std::map<std::string, double> best;
  for (const auto& [id, v] : values) best[id] = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double worst_chosen = 2.0;
  std::set<std::string> ids;
  for (const auto& n : chosen) {
    ids.insert(to_string(n.id));
    worst_chosen = std::min(worst_chosen, best.at(to_string(n.id)));
  }
  for (const auto& [id, v] : best) {
    if (!ids.count(id)) EXPECT_LE(v, worst_chosen) << id;
  }
}
