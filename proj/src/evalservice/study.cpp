#include "neuronlens/evalservice/study.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <cstdio>
#include <random>

#include "neuronlens/core/jsonl.hpp"
#include "neuronlens/core/rng.hpp"

namespace neuronlens::evalservice {

using nlohmann::json;

namespace {

std::string random_token() {
  std::random_device rd;
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (int i = 0; i < 8; ++i) {
    auto v = rd();
    for (int k = 0; k < 4; ++k) {
      out.push_back(hex[(v >> (8 * k + 4)) & 0xF]);
      out.push_back(hex[(v >> (8 * k)) & 0xF]);
    }
  }
  return out;
}

std::uint64_t random_seed() {
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

std::string iso_utc(std::chrono::system_clock::time_point t) {
  return utc_timestamp_from_unix(std::chrono::duration_cast<std::chrono::seconds>(t.time_since_epoch()).count());
}

// RAII exclusive flock on an open descriptor.
class FileLock {
 public:
  explicit FileLock(const std::filesystem::path& path) {
    fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd_ < 0) throw Error("cannot open ratings file " + path.string());
    if (::flock(fd_, LOCK_EX) != 0) {
      ::close(fd_);
      throw Error("cannot lock ratings file " + path.string());
    }
  }
  ~FileLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;
  [[nodiscard]] int fd() const { return fd_; }

 private:
  int fd_ = -1;
};

}  // namespace

json to_json(const StoredRating& r) {
  json methods = json::array();
  for (auto m : r.slot_methods) methods.push_back(to_string(m));
  return {{"session_id", r.session_id},
          {"rater_id", r.rater_id},
          {"explainer_tag", r.explainer_tag},
          {"layer", r.neuron.layer},
          {"neuron", r.neuron.neuron},
          {"slot_ratings", r.slot_ratings},
          {"best_slot", r.best_slot},
          {"slot_methods", methods},
          {"submitted_at", r.submitted_at}};
}

StoredRating stored_rating_from_json(const json& j) {
  StoredRating r;
  r.session_id = j.at("session_id").get<std::string>();
  r.rater_id = j.value("rater_id", std::string());
  r.explainer_tag = j.value("explainer_tag", std::string());
  r.neuron = {j.at("layer").get<int>(), j.at("neuron").get<int>()};
  auto ratings = j.at("slot_ratings").get<std::vector<int>>();
  auto methods = j.at("slot_methods").get<std::vector<std::string>>();
  if (ratings.size() != kSlots || methods.size() != kSlots) throw InvalidArgument("stored rating needs 5 slots");
  for (std::size_t i = 0; i < kSlots; ++i) {
    r.slot_ratings[i] = ratings[i];
    r.slot_methods[i] = parse_method(methods[i]);
  }
  r.best_slot = j.at("best_slot").get<int>();
  if (r.best_slot < 0 || r.best_slot >= static_cast<int>(kSlots)) throw InvalidArgument("stored best_slot out of range");
  r.submitted_at = j.value("submitted_at", std::string());
  return r;
}

RatingsStore::RatingsStore(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
}

void RatingsStore::append(const StoredRating& r) {
  std::string line = to_json(r).dump(-1, ' ', false, json::error_handler_t::replace) + "\n";
  std::lock_guard lock(mu_);
  FileLock file(path_);
  const char* p = line.data();
  std::size_t left = line.size();
  while (left > 0) {
    auto n = ::write(file.fd(), p, left);
    if (n < 0) throw Error("write to ratings file failed");
    p += n;
    left -= static_cast<std::size_t>(n);
  }
}

std::vector<StoredRating> RatingsStore::read_all() const {
  std::lock_guard lock(mu_);
  std::vector<StoredRating> out;
  if (!std::filesystem::exists(path_)) return out;
  for_each_jsonl(path_, [&](std::size_t, const json& j) { out.push_back(stored_rating_from_json(j)); });
  return out;
}

StudyResults aggregate_study(const std::vector<StoredRating>& ratings) {
  if (ratings.empty()) throw EmptyStore();
  std::map<PromptMethod, std::vector<double>> values;
  std::map<PromptMethod, std::size_t> best;
  for (const auto& r : ratings) {
    for (std::size_t s = 0; s < kSlots; ++s) values[r.slot_methods[s]].push_back(r.slot_ratings[s]);
    ++best[r.slot_methods[static_cast<std::size_t>(r.best_slot)]];
  }
  StudyResults out;
  out.submissions = ratings.size();
  for (auto m : kAllMethods) {
    if (!values.count(m)) continue;
    MethodResult mr;
    mr.method = m;
    mr.rating = simscore::mean_and_stderr(values[m]);
    mr.best_count = best[m];
    mr.best_fraction = static_cast<double>(mr.best_count) / static_cast<double>(ratings.size());
    out.methods.push_back(mr);
  }
  return out;
}

json to_json(const StudyResults& r) {
  json methods = json::array();
  for (const auto& m : r.methods) {
    methods.push_back({{"method", to_string(m.method)},
                       {"avg_rating", m.rating.mean},
                       {"stderr", m.rating.stderr_ ? json(*m.rating.stderr_) : json(nullptr)},
                       {"ratings", m.rating.n},
                       {"best_count", m.best_count},
                       {"best_fraction", m.best_fraction}});
  }
  return {{"submissions", r.submissions}, {"methods", methods}};
}

std::string render_study_text(const StudyResults& r) {
  std::string out = "method     avg rating         % chosen best\n";
  char buf[128];
  for (const auto& m : r.methods) {
    std::string err = "n/a";
    if (m.rating.stderr_) {
      std::snprintf(buf, sizeof buf, "%.3f", *m.rating.stderr_);
      err = buf;
    }
    std::snprintf(buf, sizeof buf, "%-10s %.3f +/- %-8s %.2f%%\n", std::string(to_string(m.method)).c_str(),
                  m.rating.mean, err.c_str(), m.best_fraction * 100.0);
    out += buf;
  }
  return out;
}

StudyService::StudyService(std::vector<NeuronRecord> neurons, const std::vector<Explanation>& explanations,
                           StudyConfig defaults, std::shared_ptr<RatingsStore> store, Clock clock)
    : defaults_(std::move(defaults)), store_(std::move(store)), clock_(std::move(clock)) {
  if (!clock_) clock_ = [] { return std::chrono::system_clock::now(); };
  for (auto& n : neurons) neurons_.emplace(n.id, std::move(n));
  // later lines win, so a re-explained neuron shows its newest text
  for (const auto& e : explanations) {
    texts_by_tag_[""][e.neuron][e.method] = e.text;
    texts_by_tag_[e.explainer_model][e.neuron][e.method] = e.text;
  }
}

const std::map<PromptMethod, std::string>* StudyService::texts_for(const NeuronId& id, const std::string& tag) const {
  auto t = texts_by_tag_.find(tag);
  if (t == texts_by_tag_.end()) return nullptr;
  auto n = t->second.find(id);
  if (n == t->second.end() || n->second.size() != kAllMethods.size()) return nullptr;
  return &n->second;
}

EvalSession StudyService::create_session(const std::string& rater_id, const StudyConfig& config) {
  if (rater_id.empty()) throw InvalidArgument("rater_id is required");
  if (config.neurons_per_layer < 1) throw InvalidArgument("neurons_per_layer must be >= 1");
  EvalSession s;
  s.rater_id = rater_id;
  s.explainer_tag = config.explainer_tag;
  s.seed = config.seed ? *config.seed : random_seed();
  SeededRng rng(s.seed);

  for (int layer = 0; layer < config.layer_count; ++layer) {
    std::vector<NeuronId> qualifying;
    for (const auto& [id, rec] : neurons_) {
      if (id.layer != layer) continue;
      if (!rec.baseline_score || !(*rec.baseline_score > config.score_threshold)) continue;
      if (texts_for(id, config.explainer_tag) == nullptr) continue;
      qualifying.push_back(id);
    }
    if (qualifying.size() < config.neurons_per_layer) {
      throw InsufficientExplainedNeurons(layer, config.neurons_per_layer, qualifying.size());
    }
    rng.shuffle(std::span(qualifying));
    qualifying.resize(config.neurons_per_layer);
    std::sort(qualifying.begin(), qualifying.end());
    for (const auto& id : qualifying) {
      std::vector<PromptMethod> order(kAllMethods.begin(), kAllMethods.end());
      rng.shuffle(std::span(order));
      Assignment a;
      a.neuron = id;
      std::copy(order.begin(), order.end(), a.slot_methods.begin());
      s.assignment.push_back(a);
    }
  }
  if (s.assignment.empty()) throw InvalidArgument("study covers no layers");

  auto entry = std::make_shared<Entry>();
  std::lock_guard lock(mu_);
  do {
    s.session_id = random_token();
  } while (sessions_.count(s.session_id));
  entry->session = s;
  entry->last_active = clock_();
  sessions_[s.session_id] = entry;
  return s;
}

std::shared_ptr<StudyService::Entry> StudyService::find(const std::string& session_id) {
  std::lock_guard lock(mu_);
  auto now = clock_();
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    if (now - it->second->last_active > defaults_.idle_timeout) {
      it = sessions_.erase(it);  // stored ratings stay in the store
    } else {
      ++it;
    }
  }
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw UnknownSession(session_id);
  it->second->last_active = now;
  return it->second;
}

std::optional<EvalSession> StudyService::session(const std::string& session_id) const {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) return std::nullopt;
  std::lock_guard inner(it->second->mu);
  return it->second->session;
}

json StudyService::get_task(const std::string& session_id) {
  auto entry = find(session_id);
  std::lock_guard lock(entry->mu);
  const auto& s = entry->session;
  if (s.cursor >= s.assignment.size()) throw SessionComplete();
  const auto& a = s.assignment[s.cursor];
  const auto& rec = neurons_.at(a.neuron);
  const double max = rec.neuron_max();

  json excerpts = json::array();
  for (const auto& r : rec.top_excerpts) {
    json intensities = json::array();
    for (double v : r.activations) intensities.push_back(std::clamp(v / max, 0.0, 1.0));
    excerpts.push_back({{"tokens", r.tokens}, {"intensities", intensities}});
  }
  const auto* texts = texts_for(a.neuron, s.explainer_tag);
  json slots = json::array();
  for (std::size_t i = 0; i < kSlots; ++i) slots.push_back({{"slot", i}, {"text", texts->at(a.slot_methods[i])}});
  return {{"session_id", s.session_id},
          {"progress", {{"index", s.cursor}, {"total", s.assignment.size()}}},
          {"neuron", {{"layer", a.neuron.layer}, {"neuron", a.neuron.neuron}}},
          {"excerpts", excerpts},
          {"slots", slots}};
}

json StudyService::submit_rating(const RatingSubmission& sub) {
  auto entry = find(sub.session_id);
  std::lock_guard lock(entry->mu);
  auto& s = entry->session;
  for (std::size_t i = 0; i < s.cursor && i < s.assignment.size(); ++i) {
    if (s.assignment[i].neuron == sub.neuron) {
      throw DuplicateSubmission("neuron " + to_string(sub.neuron) + " was already rated in this session");
    }
  }
  if (s.cursor >= s.assignment.size()) throw SessionComplete();
  if (s.assignment[s.cursor].neuron != sub.neuron) {
    throw WrongNeuron("expected a rating for neuron " + to_string(s.assignment[s.cursor].neuron) + ", got " +
                      to_string(sub.neuron));
  }
  if (sub.slot_ratings.size() != kSlots) throw InvalidRating("all 5 slots must be rated");
  StoredRating r;
  for (const auto& [slot, rating] : sub.slot_ratings) {
    if (slot < 0 || slot >= static_cast<int>(kSlots)) throw InvalidRating("slot " + std::to_string(slot) + " does not exist");
    if (rating < 1 || rating > 5) throw InvalidRating("rating " + std::to_string(rating) + " is outside 1-5");
    r.slot_ratings[static_cast<std::size_t>(slot)] = rating;
  }
  if (sub.best_slot < 0 || sub.best_slot >= static_cast<int>(kSlots)) throw InvalidRating("best_slot must be one of 0-4");

  r.session_id = s.session_id;
  r.rater_id = s.rater_id;
  r.explainer_tag = s.explainer_tag;
  r.neuron = sub.neuron;
  r.best_slot = sub.best_slot;
  r.slot_methods = s.assignment[s.cursor].slot_methods;
  r.submitted_at = iso_utc(clock_());
  store_->append(r);
  ++s.cursor;
  return {{"accepted", true},
          {"progress", {{"index", s.cursor}, {"total", s.assignment.size()}}},
          {"complete", s.cursor == s.assignment.size()}};
}

StudyResults StudyService::results() const { return aggregate_study(store_->read_all()); }

}  // namespace neuronlens::evalservice
