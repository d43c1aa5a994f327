#ifndef TOMALIGN_PIPELINE_HPP
#define TOMALIGN_PIPELINE_HPP

// Event-driven report generation and the editor-facing operations on the
// generated content: edits, regeneration through the aligner, publishing.

#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tomalign/aligner.hpp"
#include "tomalign/error.hpp"
#include "tomalign/gateway.hpp"
#include "tomalign/judgement.hpp"
#include "tomalign/metaprompt.hpp"
#include "tomalign/profiles.hpp"
#include "tomalign/store.hpp"
#include "tomalign/worker_pool.hpp"

namespace tomalign {

namespace detail {

template <class T>
void put_optional(nlohmann::json& j, const char* key, const std::optional<T>& value) {
  j[key] = value ? nlohmann::json(*value) : nlohmann::json(nullptr);
}

template <class T>
void get_optional(const nlohmann::json& j, const char* key, std::optional<T>& out) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) {
    out.reset();
  } else {
    out = it->get<T>();
  }
}

inline std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Events
// ---------------------------------------------------------------------------

enum class EventKind { pre_match, post_match };

NLOHMANN_JSON_SERIALIZE_ENUM(EventKind, {
                                            {EventKind::pre_match, "pre_match"},
                                            {EventKind::post_match, "post_match"},
                                        })

struct MatchEvent {
  std::string event_id;
  std::string match_id;
  EventKind kind = EventKind::post_match;
  /// Fact bullets, statistics and any other match data, free-form.
  nlohmann::json payload = nlohmann::json::object();
  int partition = 0;

  void validate() const {
    if (event_id.empty()) throw ValidationError("event is missing event_id");
    if (event_id.find('/') != std::string::npos || !valid_store_key(event_id)) {
      throw ValidationError("event_id '" + event_id +
                            "' may only hold letters, digits, '.', '_' and '-'");
    }
    if (match_id.empty()) throw ValidationError("event '" + event_id + "' is missing match_id");
    if (!payload.is_object()) throw ValidationError("event '" + event_id + "' payload must be an object");
    if (partition < 0) throw ValidationError("event '" + event_id + "' has a negative partition");
  }

  friend bool operator==(const MatchEvent&, const MatchEvent&) = default;
};

inline void to_json(nlohmann::json& j, const MatchEvent& e) {
  j = {{"event_id", e.event_id},
       {"match_id", e.match_id},
       {"kind", e.kind},
       {"payload", e.payload},
       {"partition", e.partition}};
}

/// Strict reader: wrong types or unknown kinds are ValidationErrors.
inline void from_json(const nlohmann::json& j, MatchEvent& e) {
  if (!j.is_object()) throw ValidationError("event must be a JSON object");
  auto text = [&](const char* key) -> std::string {
    const auto it = j.find(key);
    if (it == j.end() || it->is_null()) return {};
    if (!it->is_string()) throw ValidationError(std::string("event field '") + key + "' must be a string");
    return it->get<std::string>();
  };
  e.event_id = text("event_id");
  e.match_id = text("match_id");
  const auto kind = text("kind");
  if (kind == "pre_match") {
    e.kind = EventKind::pre_match;
  } else if (kind == "post_match") {
    e.kind = EventKind::post_match;
  } else {
    throw ValidationError("event kind must be pre_match or post_match, got '" + kind + "'");
  }
  e.payload = j.value("payload", nlohmann::json::object());
  const auto p = j.find("partition");
  if (p != j.end() && !p->is_number_integer()) throw ValidationError("partition must be an integer");
  e.partition = p == j.end() ? 0 : p->get<int>();
  e.validate();
}

/// One MatchEvent per line; blank lines are skipped.
inline std::vector<MatchEvent> read_event_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IOError("cannot read event log '" + path.string() + "'");
  std::vector<MatchEvent> events;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      events.push_back(nlohmann::json::parse(line).get<MatchEvent>());
    } catch (const nlohmann::json::exception& e) {
      throw IOError(path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw IOError(path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return events;
}

inline void write_event_log(const std::filesystem::path& path, const std::vector<MatchEvent>& events) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IOError("cannot write event log '" + path.string() + "'");
  for (const auto& e : events) out << nlohmann::json(e).dump() << '\n';
  if (!out.flush()) throw IOError("cannot write event log '" + path.string() + "'");
}

/// Source of events; a broker client would implement this.
class EventSource {
 public:
  virtual ~EventSource() = default;
  virtual std::optional<MatchEvent> poll() = 0;
};

/// In-process topic. Order is kept within a partition; poll() visits
/// partitions round-robin.
class PartitionedQueue : public EventSource {
 public:
  explicit PartitionedQueue(std::size_t partitions = 1) : partitions_(partitions) {
    if (partitions == 0) throw ConfigError("queue needs at least one partition");
  }

  void push(MatchEvent event) {
    event.validate();
    std::lock_guard lock(mutex_);
    partitions_[static_cast<std::size_t>(event.partition) % partitions_.size()].push_back(
        std::move(event));
  }

  std::optional<MatchEvent> poll() override {
    std::lock_guard lock(mutex_);
    for (std::size_t i = 0; i < partitions_.size(); ++i) {
      auto& p = partitions_[(next_ + i) % partitions_.size()];
      if (p.empty()) continue;
      next_ = (next_ + i + 1) % partitions_.size();
      auto e = std::move(p.front());
      p.pop_front();
      return e;
    }
    return std::nullopt;
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    std::size_t n = 0;
    for (const auto& p : partitions_) n += p.size();
    return n;
  }

  std::size_t partition_count() const noexcept { return partitions_.size(); }

 private:
  mutable std::mutex mutex_;
  std::vector<std::deque<MatchEvent>> partitions_;
  std::size_t next_ = 0;
};

// ---------------------------------------------------------------------------
// Content
// ---------------------------------------------------------------------------

enum class ContentStatus { draft, in_review, edited, published };

NLOHMANN_JSON_SERIALIZE_ENUM(ContentStatus, {
                                                {ContentStatus::draft, "draft"},
                                                {ContentStatus::in_review, "in_review"},
                                                {ContentStatus::edited, "edited"},
                                                {ContentStatus::published, "published"},
                                            })

inline const char* status_name(ContentStatus s) {
  switch (s) {
    case ContentStatus::draft: return "draft";
    case ContentStatus::in_review: return "in_review";
    case ContentStatus::edited: return "edited";
    case ContentStatus::published: return "published";
  }
  return "unknown";
}

/// draft -> in_review -> edited -> published, with edited skippable.
inline bool transition_allowed(ContentStatus from, ContentStatus to) {
  using S = ContentStatus;
  return (from == S::draft && to == S::in_review) || (from == S::in_review && to == S::edited) ||
         (from == S::in_review && to == S::published) || (from == S::edited && to == S::published);
}

inline std::vector<std::string> section_names(EventKind kind) {
  if (kind == EventKind::pre_match) return {"introduction"};
  return {"introduction", "action", "closing"};
}

struct SectionAlignment {
  std::string editor_id;
  AlignmentStatus status = AlignmentStatus::budget_exhausted;
  std::size_t iterations = 0;
  std::size_t best_index = 0;
  double best_loss = 0.0;

  friend bool operator==(const SectionAlignment&, const SectionAlignment&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SectionAlignment, editor_id, status, iterations, best_index,
                                   best_loss)

struct Section {
  std::string name;
  /// Bullets from the facts model; the context for judging and rewriting.
  std::string facts;
  std::string text;
  std::optional<JudgeResult> judge_result;
  /// Text saved but not yet judged (judge was unavailable).
  bool scores_pending = false;
  /// Set when generation failed; the section needs a manual retry.
  std::optional<std::string> failure;
  std::optional<SectionAlignment> alignment;

  friend bool operator==(const Section&, const Section&) = default;
};

inline void to_json(nlohmann::json& j, const Section& s) {
  j = {{"name", s.name}, {"facts", s.facts}, {"text", s.text}, {"scores_pending", s.scores_pending}};
  detail::put_optional(j, "judge_result", s.judge_result);
  detail::put_optional(j, "failure", s.failure);
  detail::put_optional(j, "alignment", s.alignment);
}

inline void from_json(const nlohmann::json& j, Section& s) {
  j.at("name").get_to(s.name);
  s.facts = j.value("facts", "");
  s.text = j.value("text", "");
  s.scores_pending = j.value("scores_pending", false);
  detail::get_optional(j, "judge_result", s.judge_result);
  detail::get_optional(j, "failure", s.failure);
  detail::get_optional(j, "alignment", s.alignment);
}

struct ContentItem {
  std::string content_id;
  std::string event_id;
  std::string match_id;
  EventKind kind = EventKind::post_match;
  /// Match data the sections were generated from.
  std::string context;
  std::vector<Section> sections;
  ContentStatus status = ContentStatus::draft;
  /// Every status the item has held, oldest first.
  std::vector<ContentStatus> status_history{ContentStatus::draft};
  std::optional<std::string> editor_id;
  std::int64_t created_ms = 0;
  std::int64_t updated_ms = 0;
  /// Store revision; not part of the document body.
  std::uint64_t revision = 0;

  Section& section(const std::string& name) {
    for (auto& s : sections) {
      if (s.name == name) return s;
    }
    throw NotFound("content '" + content_id + "' has no section '" + name + "'");
  }

  const Section& section(const std::string& name) const {
    return const_cast<ContentItem&>(*this).section(name);
  }

  void transition(ContentStatus to) {
    if (to == status) return;
    if (!transition_allowed(status, to)) {
      throw StateError(std::string("content '") + content_id + "' cannot go from " +
                       status_name(status) + " to " + status_name(to));
    }
    status = to;
    status_history.push_back(to);
  }

  /// Like transition(), but a draft first passes through in_review.
  void advance_to(ContentStatus to) {
    if (status == ContentStatus::draft && to != ContentStatus::draft) {
      transition(ContentStatus::in_review);
    }
    transition(to);
  }

  friend bool operator==(const ContentItem&, const ContentItem&) = default;
};

inline void to_json(nlohmann::json& j, const ContentItem& c) {
  j = {{"content_id", c.content_id},   {"event_id", c.event_id},
       {"match_id", c.match_id},       {"kind", c.kind},
       {"context", c.context},         {"sections", c.sections},
       {"status", c.status},           {"status_history", c.status_history},
       {"created_ms", c.created_ms},   {"updated_ms", c.updated_ms}};
  detail::put_optional(j, "editor_id", c.editor_id);
}

inline void from_json(const nlohmann::json& j, ContentItem& c) {
  j.at("content_id").get_to(c.content_id);
  c.event_id = j.value("event_id", "");
  j.at("match_id").get_to(c.match_id);
  j.at("kind").get_to(c.kind);
  c.context = j.value("context", "");
  j.at("sections").get_to(c.sections);
  j.at("status").get_to(c.status);
  c.status_history = j.value("status_history", std::vector<ContentStatus>{c.status});
  detail::get_optional(j, "editor_id", c.editor_id);
  c.created_ms = j.value("created_ms", std::int64_t{0});
  c.updated_ms = j.value("updated_ms", std::int64_t{0});
}

inline std::string content_id_for(const std::string& event_id) { return "c-" + event_id; }
inline std::string content_key(const std::string& content_id) { return "content/" + content_id; }

/// Writes `item` against its own revision; returns it with the new revision.
inline ContentItem save_content(DocumentStore& store, ContentItem item) {
  const auto record = store.put(content_key(item.content_id), item, item.revision);
  item.revision = record.revision;
  return item;
}

inline ContentItem load_content(const DocumentStore& store, const std::string& content_id) {
  if (!valid_store_key(content_id) || content_id.find('/') != std::string::npos) {
    throw NotFound("no content '" + content_id + "'");
  }
  const auto record = store.find(content_key(content_id));
  if (!record) throw NotFound("no content '" + content_id + "'");
  auto item = record->value.get<ContentItem>();
  item.revision = record->revision;
  return item;
}

/// A regeneration session as persisted for audit and the history endpoint.
struct SessionHistory {
  std::string editor_id;
  /// "converged", "budget_exhausted" or "aborted".
  std::string status;
  std::vector<IterationRecord> records;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SessionHistory, editor_id, status, records)

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

struct PipelineConfig {
  std::size_t pool_size = WorkerPool::kDefaultSize;
  Budget budget;
  SearchPolicy policy;
  JudgeConfig judge;
  GenerationParams facts_params{"", 0.3, 0.9, 50, 512};
  GenerationParams writer_params;
  /// Run the aligner for every new section before anyone sees it.
  bool eager_alignment = false;
  /// Editor whose profile eager alignment targets.
  std::optional<std::string> review_editor_id;
  std::string system_prompt{kEditorSystemPrompt};

  void validate() const {
    if (pool_size == 0) throw ConfigError("pool size must be positive");
    budget.validate();
    policy.validate();
    validate_dimensions(judge.dimensions);
    if (eager_alignment && !review_editor_id) {
      throw ConfigError("eager alignment needs a review editor");
    }
  }
};

struct EditOutcome {
  ContentItem item;
  EditorProfile profile;
  std::optional<JudgeResult> scores;
  std::vector<DimensionDelta> deltas;
};

struct Submission {
  std::string content_id;
  bool duplicate = false;
  std::shared_future<ContentItem> item;
};

inline std::string facts_prompt(const std::string& section, const std::string& match_data) {
  static const std::map<std::string, std::string> focus{
      {"introduction", "who played, where, and what was at stake"},
      {"action", "how the match unfolded: breaks, momentum swings, key statistics"},
      {"closing", "the result, its significance and what comes next for both players"},
  };
  const auto it = focus.find(section);
  std::ostringstream out;
  out << "List the facts needed for the " << section << " section of a tennis match report";
  if (it != focus.end()) out << ", focusing on " << it->second;
  out << ". Use short bullet points and only the match data below.\n\nMatch data:\n"
      << match_data << "\n\nBullets:\n";
  return out.str();
}

inline std::string writer_prompt(const std::string& section, const std::string& facts) {
  return "Write the " + section +
         " paragraph of a tennis match report. Use only these facts and do not add "
         "statistics that are not listed.\n\nFacts:\n" +
         facts + "\n\nParagraph:\n";
}

/// Match data shown to the facts model: the payload minus simulation hints.
inline std::string match_data(const nlohmann::json& payload) {
  auto shown = payload;
  if (shown.is_object()) shown.erase("simulation");
  return shown.dump(2);
}

class Pipeline {
 public:
  Pipeline(std::shared_ptr<DocumentStore> store, Gateways gateways, PipelineConfig config = {})
      : store_(std::move(store)), gateways_(std::move(gateways)), config_(std::move(config)) {
    if (!store_) throw ConfigError("pipeline needs a store");
    gateways_.validate();
    config_.validate();
    pool_ = std::make_unique<WorkerPool>(config_.pool_size);
  }

  ~Pipeline() { pool_.reset(); }

  const PipelineConfig& config() const noexcept { return config_; }
  DocumentStore& store() noexcept { return *store_; }

  /// Enqueues report generation unless the event was seen before. `then`
  /// runs on the worker right after the report is persisted.
  Submission consume_event(const MatchEvent& event,
                           std::function<void(const ContentItem&)> then = {}) {
    event.validate();
    const auto id = content_id_for(event.event_id);
    std::lock_guard lock(inflight_mutex_);
    if (auto it = inflight_.find(event.event_id); it != inflight_.end()) {
      return {id, true, it->second};
    }
    if (store_->find(content_key(id))) {
      std::promise<ContentItem> ready;
      ready.set_value(load_content(*store_, id));
      auto f = ready.get_future().share();
      inflight_.emplace(event.event_id, f);
      return {id, true, f};
    }
    auto f = pool_
                 ->submit([this, event, then = std::move(then)] {
                   auto item = generate_report(event);
                   if (then) then(item);
                   return item;
                 })
                 .share();
    inflight_.emplace(event.event_id, f);
    return {id, false, f};
  }

  void wait_idle() { pool_->wait_idle(); }
  std::size_t peak_concurrency() const { return pool_->peak_concurrency(); }

  /// Generates every section concurrently, judges them and persists a draft.
  ContentItem generate_report(const MatchEvent& event) {
    event.validate();
    ContentItem item;
    item.content_id = content_id_for(event.event_id);
    item.event_id = event.event_id;
    item.match_id = event.match_id;
    item.kind = event.kind;
    item.context = match_data(event.payload);
    item.created_ms = item.updated_ms = detail::now_ms();

    std::vector<std::future<Section>> pending;
    for (const auto& name : section_names(event.kind)) {
      pending.push_back(std::async(std::launch::async, [this, name, &item] {
        auto s = generate_section(name, item.context);
        if (config_.eager_alignment && !s.failure && s.judge_result) {
          align_section(item.content_id, s, *config_.review_editor_id, std::nullopt);
        }
        return s;
      }));
    }
    for (auto& f : pending) item.sections.push_back(f.get());
    if (config_.eager_alignment) item.editor_id = config_.review_editor_id;
    return save_content(*store_, std::move(item));
  }

  ContentItem load(const std::string& content_id) const { return load_content(*store_, content_id); }

  std::vector<ContentItem> list_content() const {
    std::vector<ContentItem> out;
    for (const auto& record : store_->list("content/")) {
      auto item = record.value.get<ContentItem>();
      item.revision = record.revision;
      out.push_back(std::move(item));
    }
    return out;
  }

  /// Re-judges the edited text, stores it and feeds the scores into the
  /// editor's profile. `expected_revision` guards against stale clients.
  EditOutcome handle_edit_submission(const std::string& content_id, const std::string& section,
                                     const std::string& new_text, const std::string& editor_id,
                                     std::optional<std::uint64_t> expected_revision = std::nullopt) {
    if (new_text.find_first_not_of(" \t\r\n") == std::string::npos) {
      throw ValidationError("edited text is empty");
    }
    check_editor_id(editor_id);
    auto item = load(content_id);
    if (expected_revision && *expected_revision != item.revision) {
      throw ConflictError("content '" + content_id + "' is at revision " +
                          std::to_string(item.revision) + ", edit was based on " +
                          std::to_string(*expected_revision));
    }
    if (item.status == ContentStatus::published) {
      throw StateError("content '" + content_id + "' is published");
    }
    auto& s = item.section(section);
    const auto before = s.text;

    std::optional<JudgeResult> scores;
    try {
      scores = judge_content(*gateways_.judge, new_text, s.facts, config_.judge);
    } catch (const BackendError&) {
    } catch (const JudgeUnparseable&) {
    }

    s.text = new_text;
    s.failure.reset();
    s.judge_result = scores;
    s.scores_pending = !scores;
    item.advance_to(ContentStatus::edited);
    item.editor_id = editor_id;
    item.updated_ms = detail::now_ms();
    item = save_content(*store_, std::move(item));

    EditOutcome out{std::move(item), {}, scores, {}};
    auto lock = lock_editor(editor_id);
    auto [profile, revision] = load_profile(editor_id);
    if (scores) {
      profile = record_edit(std::move(profile),
                            {editor_id, content_id, before, new_text, *scores, detail::now_ms()});
      store_->put(profile_key(editor_id), profile, revision);
      out.deltas = compute_deltas(*scores, profile.targets, config_.judge.dimensions);
    }
    out.profile = std::move(profile);
    return out;
  }

  /// Runs the aligner on one section against the editor's profile and
  /// persists the best rewrite plus the full history. `backends` replaces
  /// the pipeline's judge and editor for this session.
  AlignmentOutcome handle_regenerate(const std::string& content_id, const std::string& section,
                                     const std::string& editor_id,
                                     std::optional<AlignerBackends> backends = std::nullopt) {
    check_editor_id(editor_id);
    auto item = load(content_id);
    if (item.status == ContentStatus::published) {
      throw StateError("content '" + content_id + "' is published");
    }
    auto& s = item.section(section);
    if (s.failure || s.text.empty()) {
      auto fresh = generate_section(section, item.context);
      if (fresh.failure) throw BackendError("regenerating '" + section + "' failed: " + *fresh.failure);
      s = std::move(fresh);
    }
    auto outcome = align_section(content_id, s, editor_id, std::move(backends));
    if (item.status == ContentStatus::draft) item.transition(ContentStatus::in_review);
    item.editor_id = editor_id;
    item.updated_ms = detail::now_ms();
    save_content(*store_, std::move(item));
    return outcome;
  }

  ContentItem publish(const std::string& content_id) {
    auto item = load(content_id);
    if (item.status == ContentStatus::published) {
      throw StateError("content '" + content_id + "' is already published");
    }
    for (const auto& s : item.sections) {
      if (s.failure || !s.judge_result) {
        throw StateError("section '" + s.name + "' of '" + content_id + "' has no scores yet");
      }
    }
    item.advance_to(ContentStatus::published);
    item.updated_ms = detail::now_ms();
    return save_content(*store_, std::move(item));
  }

  SessionHistory history(const std::string& content_id, const std::string& section) const {
    load(content_id).section(section);
    const auto record = store_->find(history_key(content_id, section));
    if (!record) throw NotFound("no regeneration history for '" + content_id + "/" + section + "'");
    return record->value.get<SessionHistory>();
  }

  /// The editor's stored profile, or a cold start.
  EditorProfile profile(const std::string& editor_id) const {
    check_editor_id(editor_id);
    return load_profile(editor_id).first;
  }

  bool has_profile(const std::string& editor_id) const {
    check_editor_id(editor_id);
    return store_->find(profile_key(editor_id)).has_value();
  }

  /// Replaces the stored profile.
  void put_profile(const EditorProfile& profile) {
    check_editor_id(profile.editor_id);
    if (profile.dimension_count() != config_.judge.dimensions.size()) {
      throw ShapeError("profile '" + profile.editor_id + "' does not match the judge dimensions");
    }
    auto lock = lock_editor(profile.editor_id);
    const auto revision = load_profile(profile.editor_id).second;
    store_->put(profile_key(profile.editor_id), profile, revision);
  }

 private:
  static std::string profile_key(const std::string& editor_id) { return "profiles/" + editor_id; }
  static std::string history_key(const std::string& content_id, const std::string& section) {
    return "history/" + content_id + "/" + section;
  }

  static void check_editor_id(const std::string& editor_id) {
    if (editor_id.find('/') != std::string::npos || !valid_store_key(editor_id)) {
      throw ValidationError("invalid editor id '" + editor_id + "'");
    }
  }

  std::pair<EditorProfile, std::uint64_t> load_profile(const std::string& editor_id) const {
    if (auto record = store_->find(profile_key(editor_id))) {
      return {record->value.get<EditorProfile>(), record->revision};
    }
    return {EditorProfile::cold_start(editor_id, config_.judge.dimensions), 0};
  }

  std::unique_lock<std::mutex> lock_editor(const std::string& editor_id) {
    std::lock_guard guard(editor_locks_mutex_);
    auto& m = editor_locks_[editor_id];
    if (!m) m = std::make_unique<std::mutex>();
    return std::unique_lock(*m);
  }

  Section generate_section(const std::string& name, const std::string& context) const {
    Section s;
    s.name = name;
    try {
      s.facts = gateways_.facts->generate(facts_prompt(name, context), config_.facts_params);
      s.text = gateways_.writer->generate(writer_prompt(name, s.facts), config_.writer_params);
    } catch (const BackendError& e) {
      s.failure = e.what();
      return s;
    }
    try {
      s.judge_result = judge_content(*gateways_.judge, s.text, s.facts, config_.judge);
    } catch (const BackendError&) {
      s.scores_pending = true;
    } catch (const JudgeUnparseable&) {
      s.scores_pending = true;
    }
    return s;
  }

  AlignmentOutcome align_section(const std::string& content_id, Section& s,
                                 const std::string& editor_id,
                                 std::optional<AlignerBackends> backends) {
    const auto target = profile(editor_id);
    AlignerConfig aligner;
    aligner.judge = config_.judge;
    aligner.context = s.facts;
    aligner.initial_params = config_.writer_params;
    aligner.system_prompt = config_.system_prompt;
    if (!backends) backends = AlignerBackends{gateways_.judge, gateways_.editor};

    AlignmentOutcome outcome;
    try {
      outcome = run_alignment(s.text, target, config_.budget, config_.policy, aligner, *backends);
    } catch (const AlignmentAborted& e) {
      save_history(content_id, s.name, {editor_id, "aborted", e.history()});
      throw;
    }
    save_history(content_id, s.name,
                 {editor_id, nlohmann::json(outcome.status).get<std::string>(), outcome.history});
    s.text = outcome.best.content;
    s.judge_result = outcome.best.judge_result;
    s.scores_pending = false;
    s.failure.reset();
    s.alignment = SectionAlignment{editor_id, outcome.status, outcome.history.size(),
                                   outcome.best.index, outcome.best.metrics.loss};
    return outcome;
  }

  void save_history(const std::string& content_id, const std::string& section,
                    const SessionHistory& history) {
    const auto key = history_key(content_id, section);
    std::lock_guard lock(history_mutex_);
    const auto existing = store_->find(key);
    store_->put(key, history, existing ? existing->revision : 0);
  }

  std::shared_ptr<DocumentStore> store_;
  Gateways gateways_;
  PipelineConfig config_;
  std::mutex inflight_mutex_;
  std::map<std::string, std::shared_future<ContentItem>> inflight_;
  std::mutex editor_locks_mutex_;
  std::map<std::string, std::unique_ptr<std::mutex>> editor_locks_;
  std::mutex history_mutex_;
  std::unique_ptr<WorkerPool> pool_;
};

}  // namespace tomalign

#endif  // TOMALIGN_PIPELINE_HPP
