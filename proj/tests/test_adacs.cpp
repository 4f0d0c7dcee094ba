#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "neuronlens/adacs/similarity.hpp"
#include "neuronlens/core/dataset.hpp"
#include "neuronlens/core/jsonl.hpp"
#include "neuronlens/orchestrator/pipeline.hpp"
#include "neuronlens/synthetic/model.hpp"
#include "support/test_support.hpp"

using namespace neuronlens;
using namespace neuronlens::adacs;
namespace gw = neuronlens::gateway;
using nlohmann::json;

namespace {

double oracle_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / std::sqrt(na * nb);
}

gw::ModelEndpoint embedder() {
  gw::ModelEndpoint e;
  e.name = "emb";
  e.base_url = "http://fake.invalid/v1";
  e.model_name = "fake-embed";
  e.kind = gw::EndpointKind::Embedding;
  return e;
}

gw::ModelEndpoint explainer() {
  gw::ModelEndpoint e = embedder();
  e.name = "explainer";
  e.kind = gw::EndpointKind::Chat;
  return e;
}

Explanation expl(PromptMethod m, std::string text) {
  Explanation e;
  e.neuron = {3, 7};
  e.method = m;
  e.text = std::move(text);
  return e;
}

}  // namespace

TEST(Cosine, Examples) {
  std::vector<double> a{1, 0}, b{0, 1}, c{1, 2}, d{2, 1};
  EXPECT_NEAR(cosine_similarity(a, a), 1.0, 1e-12);
  EXPECT_NEAR(cosine_similarity(a, b), 0.0, 1e-12);
  EXPECT_NEAR(cosine_similarity(c, d), 4.0 / (std::sqrt(5.0) * std::sqrt(5.0)), 1e-12);
}

TEST(Cosine, Errors) {
  std::vector<double> a{1, 0}, b{1, 0, 0}, z{0, 0}, empty;
  EXPECT_THROW(cosine_similarity(a, b), DimensionMismatch);
  EXPECT_THROW(cosine_similarity(a, z), ZeroVector);
  EXPECT_THROW(cosine_similarity(empty, empty), DimensionMismatch);
}

TEST(Cosine, RandomPropertiesAgainstOracle) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> val(-3.0, 3.0);
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t n = 1 + static_cast<std::size_t>(trial % 64);
    std::vector<double> a(n), b(n), neg(n), sa(n), sb(n);
    double k = scale(gen);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = val(gen);
      b[i] = val(gen);
      neg[i] = -a[i];
      sa[i] = k * a[i];
      sb[i] = k * b[i];
    }
    double c = cosine_similarity(a, b);
    EXPECT_NEAR(c, oracle_cosine(a, b), 1e-12);
    EXPECT_NEAR(cosine_similarity(sa, sb), c, 1e-12);
    EXPECT_NEAR(cosine_similarity(a, a), 1.0, 1e-12);
    EXPECT_NEAR(cosine_similarity(a, neg), -1.0, 1e-12);
  }
}

TEST(Normalize, CollapsesAndTrims) {
  EXPECT_EQ(normalize_for_embedding("  the\n\tword   rain  "), "the word rain");
  EXPECT_EQ(normalize_for_embedding(""), "");
}

TEST(Ranking, ScalingLeavesOrderUnchanged) {
  std::vector<PromptMethod> methods{kAllMethods.begin(), kAllMethods.end()};
  std::vector<std::vector<double>> vecs{{1, 0.2}, {0.9, 0.5}, {0.1, 1}, {1, 1}, {0.5, 0.0}};
  std::vector<double> ref{1, 0.3};
  auto base = rank_against_reference(methods, vecs, ref, "n", ReferenceKind::Baseline);
  for (auto& v : vecs) {
    for (auto& x : v) x *= 7.5;
  }
  auto scaled = rank_against_reference(methods, vecs, ref, "n", ReferenceKind::Baseline);
  ASSERT_EQ(base.size(), scaled.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    EXPECT_EQ(base[i].method, scaled[i].method);
    EXPECT_NEAR(base[i].cosine, scaled[i].cosine, 1e-12);
    EXPECT_EQ(base[i].rank, i + 1);
  }
}

TEST(Ranking, TiesBrokenByMethodOrderAndFlagged) {
  std::vector<PromptMethod> methods{PromptMethod::HS, PromptMethod::Summary, PromptMethod::Original};
  std::vector<std::vector<double>> vecs{{1, 0}, {1, 0}, {0, 1}};
  auto r = rank_against_reference(methods, vecs, {1, 0}, "n", ReferenceKind::Baseline);
  EXPECT_EQ(r[0].method, PromptMethod::Summary);
  EXPECT_EQ(r[1].method, PromptMethod::HS);
  EXPECT_TRUE(r[0].tied);
  EXPECT_TRUE(r[1].tied);
  EXPECT_FALSE(r[2].tied);
  EXPECT_EQ(r[2].rank, 3u);
}

TEST(Ranking, InputPermutationGivesSameResults) {
  std::vector<PromptMethod> methods{kAllMethods.begin(), kAllMethods.end()};
  std::vector<std::vector<double>> vecs{{1, 0.2, 0}, {0.9, 0.5, 1}, {0.1, 1, 2}, {1, 1, 1}, {0.5, 0.0, 3}};
  std::vector<double> ref{1, 0.3, 0.5};
  auto a = rank_against_reference(methods, vecs, ref, "n", ReferenceKind::Baseline);
  std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  std::vector<PromptMethod> pm;
  std::vector<std::vector<double>> pv;
  for (auto i : perm) {
    pm.push_back(methods[i]);
    pv.push_back(vecs[i]);
  }
  auto b = rank_against_reference(pm, pv, ref, "n", ReferenceKind::Baseline);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].method, b[i].method);
    EXPECT_EQ(a[i].cosine, b[i].cosine);
  }
}

TEST(CompareToBaseline, IdenticalTextRanksFirstWithCosineOne) {
  int calls = 0;
  auto t = std::make_shared<gw::FunctionTransport>([&](const gw::ApiRequest& r) {
    ++calls;
    return synthetic::respond(r);
  });
  gw::Gateway g(t);
  std::vector<Explanation> ex{expl(PromptMethod::Original, "prices and money."),
                              expl(PromptMethod::Summary, "rain  and\nstorms."),
                              expl(PromptMethod::HS, "tokens after a comma.")};
  auto r = compare_to_baseline(ex, " rain and storms. ", g, embedder());
  EXPECT_EQ(calls, 1);
  ASSERT_EQ(r.size(), 3u);
  EXPECT_EQ(r[0].method, PromptMethod::Summary);
  EXPECT_NEAR(r[0].cosine, 1.0, 1e-12);
  EXPECT_EQ(r[0].subject, "3:7");
  EXPECT_EQ(r[0].reference_kind, ReferenceKind::Baseline);
  EXPECT_THROW(compare_to_baseline(ex, "  ", g, embedder()), MissingBaseline);
}

TEST(Puzzles, BundledFixturesLoadSorted) {
  auto p = load_puzzles(nltest::source_path("fixtures/puzzles"));
  ASSERT_EQ(p.size(), 3u);
  EXPECT_EQ(p[0].name, "a_rhymes_with_cat");
  EXPECT_EQ(p[2].name, "c_repeated_word");
  for (const auto& q : p) {
    EXPECT_FALSE(q.ground_truth.empty());
    EXPECT_FALSE(q.excerpts.empty());
  }
  EXPECT_THROW(load_puzzles(nltest::source_path("no/such/dir")), MissingFile);
  EXPECT_THROW(NeuronPuzzle::from_json(json{{"name", "x"}, {"ground_truth", "y"}, {"excerpts", json::array()}}),
               InvalidArgument);
}

TEST(Puzzles, VerbatimExplainerScoresOne) {
  auto puzzles = load_puzzles(nltest::source_path("fixtures/puzzles"));
  std::vector<std::string> truths;
  for (const auto& p : puzzles) truths.push_back(p.ground_truth);
  std::size_t chat_calls = 0;
  auto t = std::make_shared<gw::FunctionTransport>([&](const gw::ApiRequest& r) {
    if (r.kind == gw::EndpointKind::Embedding) return synthetic::respond(r);
    // Answer each puzzle with its own ground truth, in puzzle order.
    const auto& text = truths[chat_calls++ / 3];
    json body{{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}}}}}};
    return gw::ApiResponse{200, body.dump(), std::nullopt};
  });
  gw::Gateway g(t);
  auto counter = prompts::make_default_counter();
  PuzzleRun run;
  run.few_shot = &nltest::few_shot();
  run.counter = counter.get();
  auto score = score_puzzles(puzzles, PromptMethod::Summary, g, explainer(), embedder(), run);
  EXPECT_EQ(chat_calls, 9u);
  EXPECT_EQ(score.samples.size(), 9u);
  EXPECT_EQ(score.summary.n, 9u);
  EXPECT_NEAR(score.summary.mean, 1.0, 1e-12);
  for (const auto& s : score.samples) EXPECT_EQ(s.reference_kind, ReferenceKind::GroundTruth);
}

TEST(Puzzles, SampleCountFeedsMean) {
  auto puzzles = load_puzzles(nltest::source_path("fixtures/puzzles"));
  gw::Gateway g(synthetic::make_transport());
  auto counter = prompts::make_default_counter();
  PuzzleRun run;
  run.few_shot = &nltest::few_shot();
  run.counter = counter.get();
  run.samples_per_puzzle = 2;
  auto score = score_puzzles(puzzles, PromptMethod::HS, g, explainer(), embedder(), run);
  EXPECT_EQ(score.samples.size(), puzzles.size() * 2);
  run.samples_per_puzzle = 0;
  EXPECT_THROW(score_puzzles(puzzles, PromptMethod::HS, g, explainer(), embedder(), run), InvalidArgument);
}

// Replays explain, adacs and puzzles from the bundled cassette. Baseline
// cosines are recomputed from the offline model's embeddings with the oracle;
// every value is also pinned by a golden captured from the cassette.
TEST(Replay, SimilaritiesMatchOracleAndGolden) {
  nltest::TempDir dir;
  auto config = nltest::pipeline_config(dir.path());
  auto log = orchestrator::make_logger(config);
  auto gateway = orchestrator::make_gateway(config);
  ASSERT_EQ(orchestrator::run_explain(config, *gateway, *log).exit_code, 0);
  ASSERT_EQ(orchestrator::run_adacs(config, *gateway, *log).exit_code, 0);
  ASSERT_EQ(orchestrator::run_puzzles(config, *gateway, *log).exit_code, 0);

  std::map<std::string, std::string> text_of;
  for_each_jsonl(dir / "explanations.jsonl", [&](std::size_t, const json& j) {
    auto e = explanation_from_json(j);
    text_of[to_string(e.neuron) + "/" + std::string(to_string(e.method))] = e.text;
  });
  std::map<std::string, std::string> baseline_of;
  for (const auto& r : ingest_neurons(config.dataset_path).records) {
    baseline_of[to_string(r.id)] = r.baseline_explanation.value_or("");
  }

  const auto golden_path = nltest::source_path("tests/golden/adacs_replay.json");
  const bool update = std::getenv("NEURONLENS_UPDATE_GOLDENS") != nullptr;
  json golden = update ? json::object() : json::parse(nltest::read_file(golden_path));

  std::size_t baseline_rows = 0, puzzle_rows = 0;
  std::map<std::string, std::vector<std::pair<double, std::size_t>>> ranks_by_neuron;
  for_each_jsonl(dir / "scores.jsonl", [&](std::size_t, const json& j) {
    auto s = score_report_from_json(j);
    std::string key;
    if (s.subject.neuron) {
      const auto id = to_string(*s.subject.neuron);
      key = id + "/" + std::string(to_string(s.method));
      auto a = synthetic::embed_text(normalize_for_embedding(baseline_of.at(id)));
      auto b = synthetic::embed_text(normalize_for_embedding(text_of.at(key)));
      EXPECT_NEAR(s.value, oracle_cosine(a, b), 1e-9) << key;
      ranks_by_neuron[id].push_back({s.value, s.detail.at("rank").get<std::size_t>()});
      ++baseline_rows;
    } else {
      key = "puzzle/" + *s.subject.puzzle + "/" + std::string(to_string(s.method));
      EXPECT_EQ(s.detail.at("samples").size(), 3u);
      ++puzzle_rows;
    }
    if (update) {
      golden[key] = s.value;
    } else {
      ASSERT_TRUE(golden.contains(key)) << key;
      EXPECT_NEAR(s.value, golden[key].get<double>(), 1e-9) << key;
    }
  });
  EXPECT_EQ(baseline_rows, 50u);
  EXPECT_EQ(puzzle_rows, 15u);
  // Higher cosine never ranks below a lower one.
  for (const auto& [id, rows] : ranks_by_neuron) {
    for (const auto& a : rows) {
      for (const auto& b : rows) {
        if (a.first > b.first) EXPECT_LT(a.second, b.second) << id;
      }
    }
  }
  if (update) write_text_file(golden_path, golden.dump(2) + "\n");
}
