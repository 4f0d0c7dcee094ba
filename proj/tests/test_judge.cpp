#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "neuronlens/judge/judge.hpp"
#include "support/test_support.hpp"

using namespace neuronlens;
using namespace neuronlens::judge;
namespace gw = neuronlens::gateway;
using nlohmann::json;

namespace {

gw::ModelEndpoint judge_endpoint() {
  gw::ModelEndpoint e;
  e.name = "judge";
  e.base_url = "http://fake.invalid/v1";
  e.model_name = "fake-judge";
  return e;
}

std::shared_ptr<gw::FunctionTransport> replying(std::function<std::string(const std::string&)> reply) {
  return std::make_shared<gw::FunctionTransport>([reply](const gw::ApiRequest& r) {
    const std::string prompt = r.body.at("messages").back().at("content");
    json body{{"choices", {{{"message", {{"role", "assistant"}, {"content", reply(prompt)}}}}}}};
    return gw::ApiResponse{200, body.dump(), std::nullopt};
  });
}

std::map<PromptMethod, ExplanationPair> five_pairs() {
  std::map<PromptMethod, ExplanationPair> p;
  for (auto m : kAllMethods) p[m] = {"baseline text", "generated by " + std::string(short_label(m))};
  return p;
}

}  // namespace

TEST(ParseScore, Examples) {
  EXPECT_EQ(parse_score("8"), 8.0);
  EXPECT_EQ(parse_score("The rating is 7.5"), 7.5);
  EXPECT_EQ(parse_score("0.0"), 0.0);
  EXPECT_EQ(parse_score("10"), 10.0);
  EXPECT_EQ(parse_score("I would say 6 out of 10"), 6.0);
  EXPECT_EQ(parse_score("Score: 9/10"), 9.0);
  EXPECT_EQ(parse_score("first 3, then on reflection 4"), 4.0);
}

TEST(ParseScore, Rejections) {
  for (std::string bad : {"eleven", "", "11", "-2", "7.25", "10.5", "score x7", "no digits here"}) {
    EXPECT_THROW(parse_score(bad), UnparseableScore) << bad;
  }
  try {
    parse_score("eleven");
  } catch (const UnparseableScore& e) {
    EXPECT_EQ(e.raw_text(), "eleven");
  }
}

TEST(ParseScore, TotalOnRandomStrings) {
  std::mt19937_64 gen(3);
  const std::string alphabet = "0123456789./-: abcoutfOSHAV\n\t'\"x";
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  std::uniform_int_distribution<int> len(0, 40);
  for (int trial = 0; trial < 5000; ++trial) {
    std::string s;
    for (int i = len(gen); i > 0; --i) s.push_back(alphabet[pick(gen)]);
    try {
      double v = parse_score(s);
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 10.0);
    } catch (const UnparseableScore&) {
    }
    try {
      auto m = parse_labeled_scores(s);
      EXPECT_EQ(m.size(), 5u);
    } catch (const UnparseableScore&) {
    } catch (const WrongCount&) {
    }
  }
}

TEST(ParseLabeled, BracketedListFormat) {
  auto m = parse_labeled_scores("['S: 10.0', 'AVHS: 9.0', 'HS: 8.0', 'H: 6.0', 'O: 0.0']");
  EXPECT_EQ(m.at(PromptMethod::Summary), 10.0);
  EXPECT_EQ(m.at(PromptMethod::AVHS), 9.0);
  EXPECT_EQ(m.at(PromptMethod::HS), 8.0);
  EXPECT_EQ(m.at(PromptMethod::Highlight), 6.0);
  EXPECT_EQ(m.at(PromptMethod::Original), 0.0);
}

TEST(ParseLabeled, OrderDoesNotMatter) {
  auto a = parse_labeled_scores("S: 9.5, H: 8.5, AVHS: 8.5, HS: 7.5, O: 2.5");
  auto b = parse_labeled_scores("O: 2.5\nHS: 7.5\nAVHS: 8.5\nH: 8.5\nS: 9.5");
  EXPECT_EQ(a, b);
}

TEST(ParseLabeled, CountAndRangeErrors) {
  EXPECT_THROW(parse_labeled_scores("S: 10.0, AVHS: 9.0, HS: 8.0, H: 6.0"), WrongCount);
  EXPECT_THROW(parse_labeled_scores("S: 1, S: 2, AVHS: 9.0, HS: 8.0, H: 6.0, O: 0"), WrongCount);
  EXPECT_THROW(parse_labeled_scores("S: 12, AVHS: 9.0, HS: 8.0, H: 6.0, O: 0"), UnparseableScore);
}

TEST(JudgeBatch, FiveRankingsFromOneCall) {
  int calls = 0;
  auto t = replying([&](const std::string&) {
    ++calls;
    return "S: 10.0, AVHS: 9.0, HS: 8.0, H: 6.0, O: 0.0";
  });
  gw::Gateway g(t);
  auto r = judge_batch(five_pairs(), g, judge_endpoint());
  EXPECT_EQ(calls, 1);
  ASSERT_EQ(r.size(), 5u);
  EXPECT_EQ(r.at(PromptMethod::Summary).score, 10.0);
  EXPECT_EQ(r.at(PromptMethod::Original).score, 0.0);
  EXPECT_EQ(r.at(PromptMethod::HS).pair.second, "generated by HS");
  for (const auto& [m, x] : r) {
    EXPECT_EQ(x.strategy, Strategy::BatchedPairs);
    EXPECT_FALSE(x.rationale);
  }
}

TEST(JudgeBatch, PartialReplyRejectedAndWrongPairCount) {
  gw::Gateway g(replying([](const std::string&) { return "S: 10.0, AVHS: 9.0, HS: 8.0, H: 6.0"; }));
  EXPECT_THROW(judge_batch(five_pairs(), g, judge_endpoint()), WrongCount);
  auto four = five_pairs();
  four.erase(PromptMethod::AVHS);
  EXPECT_THROW(judge_batch(four, g, judge_endpoint()), WrongCount);
}

TEST(JudgePair, ParsesAndRejects) {
  gw::Gateway g(replying([](const std::string&) { return "The rating is 7.5"; }));
  JudgeState state;
  auto r = judge_pair({"a", "b"}, Strategy::AccumulatingFewShot, g, judge_endpoint(), state);
  EXPECT_EQ(r.score, 7.5);
  EXPECT_FALSE(r.rationale);

  gw::Gateway bad(replying([](const std::string&) { return "eleven"; }));
  EXPECT_THROW(judge_pair({"a", "b"}, Strategy::AccumulatingFewShot, bad, judge_endpoint(), state), UnparseableScore);
  EXPECT_THROW(judge_pair({"", "b"}, Strategy::AccumulatingFewShot, g, judge_endpoint(), state), InvalidArgument);
}

TEST(JudgePair, AccumulatingContextIsBoundedFifo) {
  std::vector<std::string> prompts_seen;
  int n = 0;
  gw::Gateway g(replying([&](const std::string& p) {
    prompts_seen.push_back(p);
    return std::to_string(n++ % 11);
  }));
  JudgeState state;
  state.accumulating = AccumulatingContext(3);
  for (int i = 0; i < 6; ++i) {
    judge_pair({"ref", "gen " + std::to_string(i)}, Strategy::AccumulatingFewShot, g, judge_endpoint(), state);
    EXPECT_LE(state.accumulating.entries().size(), 3u);
  }
  const auto& entries = state.accumulating.entries();
  ASSERT_EQ(entries.size(), 3u);
  EXPECT_EQ(entries.front().first.second, "gen 3");
  EXPECT_EQ(entries.back().first.second, "gen 5");
  EXPECT_EQ(entries.back().second, 5.0);
  // The sixth prompt carries judgments 2..4 as examples and not 0 or 1.
  const auto& last = prompts_seen.back();
  EXPECT_EQ(last.find("gen 1\n"), std::string::npos);
  EXPECT_NE(last.find("gen 2\n"), std::string::npos);
  EXPECT_NE(last.find("gen 4\n"), std::string::npos);
}

TEST(JudgePair, ChainOfThoughtKeepsRationale) {
  gw::Gateway g(replying([](const std::string&) {
    return "reasoning: both talk about rain but one adds storms.\nrating: 8.5";
  }));
  JudgeState state;
  state.cot_exemplars = load_cot_exemplars(nltest::source_path("data/cot_exemplars.json"));
  ASSERT_EQ(state.cot_exemplars.size(), 3u);
  auto prompt = build_pair_prompt({"a", "b"}, Strategy::ChainOfThought, state);
  for (const auto& ex : state.cot_exemplars) EXPECT_NE(prompt.find(ex.rationale), std::string::npos);

  auto r = judge_pair({"rain", "rain and storms"}, Strategy::ChainOfThought, g, judge_endpoint(), state);
  EXPECT_EQ(r.score, 8.5);
  ASSERT_TRUE(r.rationale);
  EXPECT_EQ(*r.rationale, "both talk about rain but one adds storms.");
  EXPECT_TRUE(state.accumulating.entries().empty());
}

TEST(Controversial, ReferenceAndBoundaryGroups) {
  std::vector<std::pair<NeuronId, std::vector<double>>> groups{
      {{0, 1}, {8, 8, 8, 8, 8}},
      {{0, 2}, {9.5, 8.5, 8.5, 7.5, 2.5}},
      {{0, 3}, {5, 8, 6, 7, 8}},
      {{0, 4}, {10.0, 9.0, 8.0, 6.0, 0.0}},
  };
  auto out = select_controversial(groups, 3.0);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0], (NeuronId{0, 2}));
  EXPECT_EQ(out[1], (NeuronId{0, 4}));
  EXPECT_EQ(select_controversial(groups).size(), 2u);
  EXPECT_THROW(select_controversial({{{0, 9}, {1, 2, 3}}}), WrongGroupSize);
}

TEST(Controversial, MonotoneInThreshold) {
  std::mt19937_64 gen(1000);
  std::uniform_int_distribution<int> half(0, 20);
  std::vector<std::pair<NeuronId, std::vector<double>>> groups;
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> s(5);
    for (auto& x : s) x = half(gen) / 2.0;
    groups.push_back({{i / 100, i}, s});
  }
  std::size_t previous = groups.size() + 1;
  for (double t = 0.0; t <= 10.0; t += 0.5) {
    auto sel = select_controversial(groups, t);
    EXPECT_LE(sel.size(), previous) << "threshold " << t;
    // Everything chosen at a higher threshold was chosen at every lower one.
    auto lower = select_controversial(groups, std::max(0.0, t - 0.5));
    for (const auto& id : sel) EXPECT_NE(std::find(lower.begin(), lower.end(), id), lower.end());
    previous = sel.size();
  }
}

TEST(Strategy, ParseNames) {
  EXPECT_EQ(parse_strategy("v4"), Strategy::AccumulatingFewShot);
  EXPECT_EQ(parse_strategy("v5"), Strategy::BatchedPairs);
  EXPECT_EQ(parse_strategy("ChainOfThought"), Strategy::ChainOfThought);
  EXPECT_THROW(parse_strategy("v3"), InvalidArgument);
}
