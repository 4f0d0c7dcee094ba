#include "neuronlens/adacs/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "neuronlens/core/dataset.hpp"
#include "neuronlens/core/jsonl.hpp"

namespace neuronlens::adacs {

using nlohmann::json;

std::string_view to_string(ReferenceKind k) {
  return k == ReferenceKind::Baseline ? "baseline" : "ground-truth";
}

namespace {

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

std::size_t method_order(PromptMethod m) {
  return static_cast<std::size_t>(std::find(kAllMethods.begin(), kAllMethods.end(), m) - kAllMethods.begin());
}

}  // namespace

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionMismatch("vectors differ in dimension: " + std::to_string(a.size()) + " vs " +
                            std::to_string(b.size()));
  }
  if (a.empty()) throw DimensionMismatch("vectors must have dimension >= 1");
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) throw ZeroVector();
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += (a[i] / na) * (b[i] / nb);
  return std::clamp(dot, -1.0, 1.0);
}

std::string normalize_for_embedding(std::string_view text) {
  std::string out;
  bool pending = false;
  for (char c : text) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
      pending = !out.empty();
      continue;
    }
    if (pending) out.push_back(' ');
    pending = false;
    out.push_back(c);
  }
  return out;
}

std::vector<SimilarityResult> rank_against_reference(
    const std::vector<PromptMethod>& methods, std::span<const std::vector<double>> method_vectors,
    const std::vector<double>& reference, const std::string& subject, ReferenceKind kind) {
  if (methods.size() != method_vectors.size()) throw InvalidArgument("one vector per method required");
  std::vector<SimilarityResult> out;
  for (std::size_t i = 0; i < methods.size(); ++i) {
    SimilarityResult r;
    r.subject = subject;
    r.method = methods[i];
    r.cosine = cosine_similarity(method_vectors[i], reference);
    r.reference_kind = kind;
    r.embedding_norm = norm(method_vectors[i]);
    out.push_back(r);
  }
  std::stable_sort(out.begin(), out.end(), [](const SimilarityResult& a, const SimilarityResult& b) {
    if (a.cosine != b.cosine) return a.cosine > b.cosine;
    return method_order(a.method) < method_order(b.method);
  });
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].rank = i + 1;
    out[i].tied = (i > 0 && out[i - 1].cosine == out[i].cosine) ||
                  (i + 1 < out.size() && out[i + 1].cosine == out[i].cosine);
  }
  return out;
}

std::vector<SimilarityResult> compare_to_baseline(const std::vector<Explanation>& explanations,
                                                  const std::string& baseline,
                                                  gateway::Gateway& gateway,
                                                  const gateway::ModelEndpoint& embedder) {
  std::string reference = normalize_for_embedding(baseline);
  if (reference.empty()) throw MissingBaseline();
  if (explanations.empty()) throw InvalidArgument("no explanations to compare");

  std::vector<std::string> batch{reference};
  std::vector<PromptMethod> methods;
  for (const auto& e : explanations) {
    batch.push_back(normalize_for_embedding(e.text));
    methods.push_back(e.method);
  }
  auto vectors = gateway.embed(embedder, batch);
  return rank_against_reference(methods, std::span(vectors).subspan(1), vectors.front(),
                                to_string(explanations.front().neuron), ReferenceKind::Baseline);
}

NeuronPuzzle NeuronPuzzle::from_json(const json& j) {
  NeuronPuzzle p;
  p.name = j.at("name").get<std::string>();
  p.ground_truth = normalize_explanation_text(j.at("ground_truth").get<std::string>());
  std::size_t i = 0;
  for (const auto& r : j.at("excerpts")) {
    p.excerpts.push_back(activation_record_from_json(r, 0, "excerpts[" + std::to_string(i++) + "]"));
  }
  double m = 0.0;
  for (const auto& r : p.excerpts) m = std::max(m, r.max_activation());
  if (p.excerpts.empty() || !(m > 0.0)) {
    throw InvalidArgument("puzzle " + p.name + " needs excerpts with a positive activation");
  }
  return p;
}

NeuronPuzzle NeuronPuzzle::load(const std::filesystem::path& path) {
  try {
    return from_json(json::parse(read_text_file(path)));
  } catch (const json::exception& e) {
    throw InvalidArgument("puzzle file " + path.string() + ": " + e.what());
  }
}

std::vector<NeuronPuzzle> load_puzzles(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw MissingFile(dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<NeuronPuzzle> out;
  for (const auto& f : files) out.push_back(NeuronPuzzle::load(f));
  return out;
}

PuzzleScore score_puzzles(const std::vector<NeuronPuzzle>& puzzles, PromptMethod method,
                          gateway::Gateway& gateway, const gateway::ModelEndpoint& explainer,
                          const gateway::ModelEndpoint& embedder, const PuzzleRun& run) {
  if (run.samples_per_puzzle < 1) throw InvalidArgument("samples_per_puzzle must be >= 1");
  if (run.few_shot == nullptr || run.counter == nullptr) throw InvalidArgument("puzzle run needs few-shot data and a counter");
  if (puzzles.empty()) throw EmptyGroup("no puzzles to score");

  PuzzleScore out;
  std::vector<double> cosines;
  for (const auto& puzzle : puzzles) {
    auto prompt = prompts::build_prompt(std::span<const ActivationRecord>(puzzle.excerpts), method,
                                        *run.few_shot, run.quantile, *run.counter);
    std::vector<std::string> batch{normalize_for_embedding(puzzle.ground_truth)};
    for (int s = 0; s < run.samples_per_puzzle; ++s) {
      auto params = gateway::explainer_defaults();
      params.seed = run.base_seed + s;
      auto completion = gateway.complete(explainer, prompt, params);
      batch.push_back(normalize_for_embedding(normalize_explanation_text(completion.text)));
    }
    auto vectors = gateway.embed(embedder, batch);
    for (std::size_t s = 1; s < vectors.size(); ++s) {
      SimilarityResult r;
      r.subject = puzzle.name;
      r.method = method;
      r.cosine = cosine_similarity(vectors[s], vectors[0]);
      r.reference_kind = ReferenceKind::GroundTruth;
      r.embedding_norm = norm(vectors[s]);
      cosines.push_back(r.cosine);
      out.samples.push_back(r);
    }
  }
  out.summary = simscore::mean_and_stderr(cosines);
  return out;
}

}  // namespace neuronlens::adacs
