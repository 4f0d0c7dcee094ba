// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
#include <httplib.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "neuronlens/evalservice/server.hpp"
#include "neuronlens/evalservice/study.hpp"
#include "neuronlens/gateway/gateway.hpp"
#include "neuronlens/judge/judge.hpp"
#include "neuronlens/orchestrator/pipeline.hpp"
#include "neuronlens/prompts/activation.hpp"
#include "neuronlens/prompts/builder.hpp"
#include "neuronlens/prompts/token_counter.hpp"
#include "neuronlens/simscore/simulation.hpp"
#include "neuronlens/simscore/stats.hpp"
#include "support/test_support.hpp"

using namespace neuronlens;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Collects failed expectations for one criterion.
struct Check {
  std::vector<std::string> failures;
  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
  void near(double got, double want, double tol, const std::string& what) {
    if (!(std::abs(got - want) <= tol)) {
      std::ostringstream s;
      s.precision(17);
      s << what << ": got " << got << ", want " << want << " +/- " << tol;
      failures.push_back(s.str());
    }
  }
};

std::string printf_str(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---------------------------------------------------------------- prompts

ActivationRecord random_record(std::mt19937_64& gen) {
  static const std::vector<std::string> pieces{"the", "rain", "storm", "ing", "ed", "cat", "s",  "12", ",",
                                               ".",   "!",    "'",     "(",   ")",  "é",   "Zeta", "over"};
  std::uniform_int_distribution<std::size_t> len(1, 40), pick(0, pieces.size() - 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t n = len(gen);
  std::vector<std::string> tokens;
  std::vector<double> acts;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = u(gen);
    std::string t = pieces[pick(gen)];
    if (r < 0.55) t = " " + t;
    else if (r < 0.6) t = "\n";
    tokens.push_back(t);
    const double a = u(gen);
    acts.push_back(a < 0.5 ? 0.0 : std::round(a * 100.0) / 10.0);
  }
  acts[std::uniform_int_distribution<std::size_t>(0, n - 1)(gen)] = 9.5;
  return ActivationRecord::make(tokens, acts);
}

std::set<std::string> summary_items(const std::string& line) {
  std::set<std::string> out;
  const std::string prefix = "Activating tokens:";
  if (line.rfind(prefix, 0) != 0) return {"<bad prefix>"};
  std::string rest = line.substr(prefix.size());
  if (rest.empty()) return out;
  rest = rest.substr(1);
  for (std::size_t pos = 0;;) {
    auto next = rest.find(", ", pos);
    out.insert(rest.substr(pos, next - pos));
    if (next == std::string::npos) break;
    pos = next + 2;
  }
  return out;
}

void prompt_goldens(Check& c) {
  const prompts::WhitespacePunctuationCounter counter;
  auto corpus = nltest::corpus_50();
  const auto dir = nltest::source_path("tests/golden/prompts");
  for (std::size_t i = 0; i < 5; ++i) {
    for (auto m : kAllMethods) {
      auto text = prompts::render_transcript(prompts::build_prompt(corpus[i], m, nltest::few_shot(), 0.9, counter));
      const auto name = std::to_string(corpus[i].id.layer) + "_" + std::to_string(corpus[i].id.neuron) + "_" +
                        std::string(to_string(m)) + ".txt";
      c.expect(fs::exists(dir / name) && nltest::read_file(dir / name) == text, "golden " + name);
    }
  }
  std::mt19937_64 gen(2024);
  for (int trial = 0; trial < 200; ++trial) {
    auto r = random_record(gen);
    const double q = 0.9;
    std::string hl = prompts::render_highlight(r, q);
    const std::string with_brackets = hl;
    std::erase(hl, '[');
    std::erase(hl, ']');
    c.expect(hl == prompts::render_raw_text(r), "highlight strip, trial " + std::to_string(trial));
    c.expect(prompts::render_excerpt(PromptMethod::HS, r, q, r.max_activation()) ==
                 with_brackets + "\n" + prompts::render_summary_line(r, q),
             "HS concatenation, trial " + std::to_string(trial));
    std::set<std::string> cores;
    for (auto i : prompts::highly_activating_positions(r, q)) {
      cores.insert(std::string(prompts::split_token(r.tokens[i]).core));
    }
    c.expect(summary_items(prompts::render_summary_line(r, q)) == cores,
             "summary token set, trial " + std::to_string(trial));
  }
}

// ------------------------------------------------------------- efficiency

void efficiency(Check& c) {
  auto counter = prompts::make_default_counter();
  auto t = orchestrator::measure_efficiency(nltest::corpus_50(), {kAllMethods.begin(), kAllMethods.end()},
                                            nltest::few_shot(), 0.9, *counter, 50);
  std::map<PromptMethod, double> m;
  for (const auto& row : t.rows) m[row.method] = row.mean_tokens;
  using P = PromptMethod;
  for (auto x : {P::Summary, P::Highlight, P::HS, P::AVHS}) {
    c.expect(m[P::Original] > m[x], "Original above " + std::string(to_string(x)));
  }
  for (auto x : {P::Summary, P::HS, P::AVHS}) {
    c.expect(m[P::Highlight] < m[x], "Highlight below " + std::string(to_string(x)));
  }
  c.expect(m[P::AVHS] > m[P::HS], "AVHS above HS");
  c.expect(m[P::HS] > m[P::Summary], "HS above Summary");
  c.expect(m[P::Original] / m[P::Highlight] >= 1.7,
           "Original/Highlight ratio " + printf_str("%.3f", m[P::Original] / m[P::Highlight]));
}

// ------------------------------------------------------------ correlation

void correlation(Check& c) {
  std::mt19937_64 gen(2024);
  std::uniform_int_distribution<int> len(2, 50);
  std::uniform_real_distribution<double> val(-10.0, 10.0), scale(0.1, 5.0);
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = static_cast<std::size_t>(len(gen));
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = val(gen);
      y[i] = 0.3 * x[i] + val(gen);
    }
    const double r = simscore::pearson_correlation(x, y).r;
    const std::string t = "trial " + std::to_string(trial);
    c.near(r, nltest::oracle_pearson(x, y), 1e-9, "oracle " + t);
    c.near(simscore::pearson_correlation(y, x).r, r, 1e-12, "symmetry " + t);
    const double a = scale(gen), b = val(gen);
    std::vector<double> ax(n);
    for (std::size_t i = 0; i < n; ++i) ax[i] = a * x[i] + b;
    c.near(simscore::pearson_correlation(ax, y).r, r, 1e-12, "affine " + t);
  }
}

// ----------------------------------------------------- expected activation

void expected_activation(Check& c) {
  auto e = simscore::expected_activation({{"0", std::log(0.5)}, {"10", std::log(0.5)}});
  c.expect(e && *e == 5.0, "symmetric {0,10} is exactly 5.0");
  for (int v = 0; v <= 10; ++v) {
    auto p = simscore::expected_activation({{std::to_string(v), 0.0}});
    c.expect(p && *p == static_cast<double>(v), "point mass " + std::to_string(v));
  }
  auto w = simscore::expected_activation({{"2", std::log(0.2)}, {"4", std::log(0.6)}, {"7", std::log(0.2)}});
  c.expect(w.has_value(), "weighted example decodes");
  if (w) c.near(*w, 0.2 * 2 + 0.6 * 4 + 0.2 * 7, 1e-12, "weighted example");
  if (w) c.near(*w, 4.2, 1e-12, "weighted example is 4.2");
}

// ------------------------------------------------------ replay determinism

void replay_determinism(Check& c) {
  const auto before = gateway::HttpTransport::live_request_count();
  nltest::TempDir a, b;
  for (const auto* dir : {&a, &b}) {
    auto config = nltest::pipeline_config(dir->path());
    auto log = orchestrator::make_logger(config);
    auto gw = orchestrator::make_gateway(config);
    c.expect(orchestrator::run_explain(config, *gw, *log).exit_code == orchestrator::kExitOk, "explain ok");
    c.expect(orchestrator::run_simscore(config, *gw, *log).exit_code == orchestrator::kExitOk, "simscore ok");
    c.expect(orchestrator::run_adacs(config, *gw, *log).exit_code == orchestrator::kExitOk, "adacs ok");
    orchestrator::run_report({config.output_dir / orchestrator::kScoresFile}, config.output_dir / "report");
  }
  for (const char* f : {"explanations.jsonl", "scores.jsonl", "report.txt", "report.json"}) {
    c.expect(fs::exists(a / f), std::string(f) + " written");
  }
  c.expect(nltest::tree_digest(a.path()) == nltest::tree_digest(b.path()), "output trees byte-identical");
  c.expect(gateway::HttpTransport::live_request_count() == before && before == 0, "zero live network calls");
}

// ----------------------------------------------------------- rank summary

void rank_summary(Check& c) {
  nltest::TempDir dir;
  auto r = orchestrator::run_report({nltest::source_path("fixtures/rank_summary_scores.jsonl")}, dir / "rs");
  const std::string text = nltest::read_file(dir / "rs.txt");
  for (auto [name, avg] : std::vector<std::pair<std::string, std::string>>{
           {"Original", "3.86"}, {"Summary", "1.43"}, {"Highlight", "3.86"}, {"HS", "2.43"}, {"AVHS", "3.43"}}) {
    const auto m = parse_method(name);
    c.expect(printf_str("%.2f", r.average_rank.at(m)) == avg, name + " average rank " + printf_str("%.4f", r.average_rank.at(m)));
    auto start = text.find("\n" + name + " ", text.find("Rank summary"));
    c.expect(start != std::string::npos, name + " row rendered");
    if (start == std::string::npos) continue;
    auto line = text.substr(start + 1, text.find('\n', start + 1) - start - 1);
    c.expect(line.size() >= avg.size() && line.substr(line.size() - avg.size()) == avg, "rendered row: " + line);
  }
}

// ------------------------------------------------------------ controversial

void controversial(Check& c) {
  std::vector<std::pair<NeuronId, std::vector<double>>> groups{
      {{0, 1}, {8, 8, 8, 8, 8}},
      {{0, 2}, {9.5, 8.5, 8.5, 7.5, 2.5}},
      {{0, 3}, {5, 8, 6, 7, 8}},
      {{0, 4}, {10.0, 9.0, 8.0, 6.0, 0.0}},
  };
  auto sel = judge::select_controversial(groups, 3.0);
  c.expect(sel == std::vector<NeuronId>{{0, 2}, {0, 4}}, "fixture groups classify (range 7.0 in, range 3.0 out)");
  bool threw = false;
  try {
    judge::select_controversial({{{0, 9}, {1, 2, 3}}});
  } catch (const judge::WrongGroupSize&) {
    threw = true;
  }
  c.expect(threw, "wrong group size rejected");

  std::mt19937_64 gen(1000);
  std::uniform_int_distribution<int> half(0, 20);
  std::vector<std::pair<NeuronId, std::vector<double>>> random_groups;
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> s(5);
    for (auto& x : s) x = half(gen) / 2.0;
    random_groups.push_back({{i / 100, i}, s});
  }
  std::vector<NeuronId> lower = judge::select_controversial(random_groups, 0.0);
  for (double t = 0.5; t <= 10.0; t += 0.5) {
    auto higher = judge::select_controversial(random_groups, t);
    for (const auto& id : higher) {
      c.expect(std::find(lower.begin(), lower.end(), id) != lower.end(), "monotone at threshold " + printf_str("%.1f", t));
    }
    lower = std::move(higher);
  }
}

// ----------------------------------------------------------------- blinding

void blinding_and_study(Check& c) {
  nltest::TempDir dir;
  std::vector<NeuronRecord> neurons;
  std::vector<Explanation> texts;
  for (int layer = 0; layer < 48; ++layer) {
    neurons.push_back(nltest::neuron(layer, 0, 0.6));
    int k = 0;
    for (auto m : kAllMethods) {
      texts.push_back({{layer, 0}, m, "rain words, variant " + std::to_string(k++), "gpt-3.5-turbo", 0, ""});
    }
  }
  auto service = std::make_shared<evalservice::StudyService>(
      neurons, texts, evalservice::StudyConfig{}, std::make_shared<evalservice::RatingsStore>(dir / "ratings.jsonl"));
  evalservice::EvalServer server(service, "admin");
  const int port = server.start("127.0.0.1", 0);
  httplib::Client client("127.0.0.1", port);
  std::size_t responses = 0;
  auto sweep = [&](const httplib::Result& r, int status, const std::string& what) {
    ++responses;
    c.expect(static_cast<bool>(r) && r->status == status, what + " status");
    if (r) c.expect(!nltest::mentions_method_name(r->body), what + " names a method: " + r->body.substr(0, 200));
  };
  for (int session = 0; session < 3; ++session) {
    auto created = client.Post("/sessions", json{{"rater_id", "rater" + std::to_string(session)}}.dump(),
                               "application/json");
    sweep(created, 201, "create");
    if (!created || created->status != 201) continue;
    const std::string id = json::parse(created->body)["session_id"];
    for (int step = 0; step < 48; ++step) {
      auto task = client.Get("/sessions/" + id + "/task");
      sweep(task, 200, "task");
      if (!task || task->status != 200) break;
      json body{{"neuron", json::parse(task->body)["neuron"]}, {"slot_ratings", {1, 2, 3, 4, 5}}, {"best_slot", step % 5}};
      if (step == 0) {
        auto invalid = body;
        invalid["slot_ratings"] = {1, 2, 3, 4, 9};
        sweep(client.Post("/sessions/" + id + "/ratings", invalid.dump(), "application/json"), 400, "invalid rating");
      }
      sweep(client.Post("/sessions/" + id + "/ratings", body.dump(), "application/json"), 200, "rating");
    }
    sweep(client.Get("/sessions/" + id + "/task"), 409, "complete");
  }
  server.stop();
  c.expect(responses == 3 * (1 + 48 * 2 + 1 + 1), "swept " + std::to_string(responses) + " responses");

  std::vector<evalservice::StoredRating> gpt35;
  std::ifstream in(nltest::source_path("fixtures/user_study_ratings.jsonl"));
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    auto r = evalservice::stored_rating_from_json(json::parse(line));
    if (r.explainer_tag == "gpt-3.5-turbo") gpt35.push_back(r);
  }
  auto res = evalservice::aggregate_study(gpt35);
  for (const auto& m : res.methods) {
    if (m.method != PromptMethod::Summary) continue;
    c.expect(printf_str("%.3f", m.rating.mean) == "4.308", "Summary mean " + printf_str("%.6f", m.rating.mean));
    c.expect(m.rating.stderr_ && printf_str("%.3f", *m.rating.stderr_) == "0.048", "Summary SEM");
    c.expect(printf_str("%.2f", m.best_fraction * 100.0) == "32.50", "Summary best " + printf_str("%.4f", m.best_fraction * 100.0));
  }
  const auto text = evalservice::render_study_text(res);
  c.expect(text.find("4.308 +/- 0.048") != std::string::npos && text.find("32.50%") != std::string::npos,
           "rendered study line");
}

// ---------------------------------------------------------------------- SEM

void sem(Check& c) {
  const std::vector<double> v{1, 2, 3};
  auto r = simscore::mean_and_stderr(v);
  c.expect(r.stderr_.has_value(), "stderr present");
  if (r.stderr_) c.near(*r.stderr_, 0.57735, 1e-5, "stderr of [1,2,3]");
  c.near(r.mean, 2.0, 0.0, "mean of [1,2,3]");
}

struct Criterion {
  std::string name;
  std::function<void(Check&)> run;
  double max_seconds = 0.0;  // 0 = no bound
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"prompt golden suite and randomized properties", prompt_goldens, 5.0},
      {"efficiency ordering and Original/Highlight >= 1.7", efficiency},
      {"correlation oracle, symmetry and affine invariance", correlation, 1.0},
      {"expected-activation decoding", expected_activation},
      {"replay determinism with zero live calls", replay_determinism, 30.0},
      {"rank summary averages", rank_summary},
      {"controversial selection and monotonicity", controversial},
      {"eval-service blinding and study aggregation", blinding_and_study},
      {"SEM of [1,2,3]", sem},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Check c;
    const auto start = std::chrono::steady_clock::now();
    try {
      criteria[i].run(c);
    } catch (const std::exception& e) {
      c.failures.push_back(std::string("threw: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (criteria[i].max_seconds > 0 && secs > criteria[i].max_seconds) {
      c.failures.push_back("took " + printf_str("%.2f", secs) + " s, limit " + printf_str("%.0f", criteria[i].max_seconds) + " s");
    }
    const bool ok = c.failures.empty();
    failed += ok ? 0 : 1;
    std::cout << (ok ? "PASS" : "FAIL") << "  [" << i + 1 << "] " << criteria[i].name << "  (" << printf_str("%.2f", secs)
              << " s)\n";
    for (std::size_t k = 0; k < c.failures.size() && k < 10; ++k) std::cout << "        - " << c.failures[k] << "\n";
    if (c.failures.size() > 10) std::cout << "        ... " << c.failures.size() - 10 << " more\n";
  }
  std::cout << (failed == 0 ? "ALL PASS" : std::to_string(failed) + " FAILED") << " (" << criteria.size()
            << " criteria)\n";
  return failed == 0 ? 0 : 1;
}
