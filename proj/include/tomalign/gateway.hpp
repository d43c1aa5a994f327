#ifndef TOMALIGN_GATEWAY_HPP
#define TOMALIGN_GATEWAY_HPP

// Generation backends. A Backend turns (prompt, params) into text; Gateway
// adds the retry/backoff contract on top. The scripted MockBackend drives
// tests and the simulated-editor harness; the HTTP backend lives in
// http_backend.hpp so that only its users pay for cpp-httplib.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <memory>
#include <mutex>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tomalign/error.hpp"
#include "tomalign/generation_params.hpp"
#include "tomalign/geometry.hpp"

namespace tomalign {

// ---------------------------------------------------------------------------
// Sampling math (temperature softmax, top-k / top-p filtering)
// ---------------------------------------------------------------------------

/// p_w = exp(y_w / t) / sum_k exp(y_k / t), shifted by max(y) for stability.
inline std::vector<double> softmax_probabilities(std::span<const double> logits,
                                                 double temperature) {
  if (!(temperature > 0.0)) throw RangeError("temperature must be > 0");
  if (logits.empty()) throw EmptyInput("softmax of an empty logit vector");
  const double peak = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p;
  p.reserve(logits.size());
  for (double y : logits) p.push_back(std::exp((y - peak) / temperature));
  const double total = std::accumulate(p.begin(), p.end(), 0.0);
  for (double& v : p) v /= total;
  return p;
}

/// Keeps the `top_k` most probable entries, renormalizes, then keeps the
/// shortest descending prefix whose mass reaches `top_p` and renormalizes
/// again. Filtered entries are zero; ties keep the lower index.
inline std::vector<double> apply_top_p_top_k(std::span<const double> probs, double top_p,
                                             int top_k) {
  if (!(top_p > 0.0 && top_p <= 1.0)) throw RangeError("top_p must lie in (0,1]");
  if (top_k < 1) throw RangeError("top_k must be >= 1");
  if (probs.empty()) throw EmptyInput("empty probability vector");

  std::vector<std::size_t> order(probs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
  order.resize(std::min(order.size(), static_cast<std::size_t>(top_k)));

  double kept_mass = 0.0;
  for (std::size_t i : order) kept_mass += probs[i];
  if (!(kept_mass > 0.0)) throw RangeError("probability vector has no mass");

  std::size_t cutoff = order.size();
  double cumulative = 0.0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    cumulative += probs[order[rank]] / kept_mass;
    if (cumulative >= top_p - 1e-12) {
      cutoff = rank + 1;
      break;
    }
  }
  order.resize(cutoff);

  double survivor_mass = 0.0;
  for (std::size_t i : order) survivor_mass += probs[i];
  std::vector<double> out(probs.size(), 0.0);
  for (std::size_t i : order) out[i] = probs[i] / survivor_mass;
  return out;
}

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

/// Retryable failure (timeout, 5xx, scripted fault). Anything else a
/// backend throws is final.
class TransientBackendFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string complete(const std::string& prompt, const GenerationParams& params) = 0;
};

enum class BackendKind { http, mock };

NLOHMANN_JSON_SERIALIZE_ENUM(BackendKind, {
                                              {BackendKind::http, "http"},
                                              {BackendKind::mock, "mock"},
                                          })

struct BackendConfig {
  BackendKind kind = BackendKind::mock;
  std::string endpoint_url;
  std::string model_id;
  /// Name of the environment variable that holds the bearer token. Empty
  /// means the endpoint is called without credentials.
  std::string auth_token_env_var;
  std::chrono::milliseconds timeout{30000};
  int retries = 2;
  std::chrono::milliseconds backoff{500};

  void validate() const {
    if (retries < 0) throw ConfigError("retries must be >= 0");
    if (timeout.count() <= 0) throw ConfigError("timeout must be positive");
    if (kind == BackendKind::http) {
      if (endpoint_url.empty()) throw ConfigError("http backend requires endpoint_url");
      if (model_id.empty()) throw ConfigError("http backend requires model_id");
    }
  }
};

// ---------------------------------------------------------------------------
// Mock backend
// ---------------------------------------------------------------------------

struct MockResponse {
  std::string text;
  /// Non-empty: the call fails transiently with this reason instead.
  std::string failure;

  static MockResponse fail(std::string reason = "timeout") { return {{}, std::move(reason)}; }
  friend bool operator==(const MockResponse&, const MockResponse&) = default;
};

struct ContractionScript {
  std::vector<double> targets;
  double lambda = 0.5;
  std::vector<double> initial;
  /// Judge JSON field names; defaults to the default dimension keys.
  std::vector<std::string> keys;
};

/// Scripted behaviour of a MockBackend.
///
/// replay: returns `replay_responses` in order; once exhausted it repeats
/// the last entry, cycles, or fails, per `on_exhausted`.
///
/// contraction: call n (1-based) answers with judge JSON whose scores are
/// target - (1-lambda)^n * (target - initial), i.e. every call moves the
/// synthetic scores a fraction lambda closer to the targets.
struct MockScript {
  enum class Mode { replay, contraction };
  enum class Exhausted { repeat_last, cycle, fail };

  Mode mode = Mode::replay;
  std::vector<MockResponse> replay_responses;
  Exhausted on_exhausted = Exhausted::repeat_last;
  ContractionScript contraction;

  static MockScript replay(std::vector<std::string> texts) {
    MockScript s;
    for (auto& t : texts) s.replay_responses.push_back({std::move(t), {}});
    return s;
  }

  static MockScript contract(std::vector<double> initial, std::vector<double> targets,
                             double lambda, std::vector<std::string> keys = {}) {
    MockScript s;
    s.mode = Mode::contraction;
    s.contraction = {std::move(targets), lambda, std::move(initial), std::move(keys)};
    s.validate();
    return s;
  }

  void validate() {
    if (mode == Mode::replay) {
      if (replay_responses.empty()) throw ConfigError("replay mock needs at least one response");
      return;
    }
    auto& c = contraction;
    if (!(c.lambda > 0.0 && c.lambda < 1.0)) throw ConfigError("lambda must lie in (0,1)");
    if (c.targets.empty() || c.targets.size() != c.initial.size()) {
      throw ConfigError("contraction targets and initial scores must have equal, non-zero length");
    }
    if (c.keys.empty()) {
      for (const auto& d : default_dimensions()) c.keys.push_back(d.key());
    }
    if (c.keys.size() != c.targets.size()) {
      throw ConfigError("contraction needs one judge key per target");
    }
  }
};

NLOHMANN_JSON_SERIALIZE_ENUM(MockScript::Mode, {
                                                   {MockScript::Mode::replay, "replay"},
                                                   {MockScript::Mode::contraction, "contraction"},
                                               })
NLOHMANN_JSON_SERIALIZE_ENUM(MockScript::Exhausted,
                             {
                                 {MockScript::Exhausted::repeat_last, "repeat_last"},
                                 {MockScript::Exhausted::cycle, "cycle"},
                                 {MockScript::Exhausted::fail, "fail"},
                             })

inline void to_json(nlohmann::json& j, const MockScript& s) {
  j = {{"mode", s.mode}};
  if (s.mode == MockScript::Mode::replay) {
    auto responses = nlohmann::json::array();
    for (const auto& r : s.replay_responses) {
      if (r.failure.empty()) {
        responses.push_back(r.text);
      } else {
        responses.push_back({{"error", r.failure}});
      }
    }
    j["replay_responses"] = responses;
    j["on_exhausted"] = s.on_exhausted;
  } else {
    j["contraction"] = {{"targets", s.contraction.targets},
                        {"lambda", s.contraction.lambda},
                        {"initial", s.contraction.initial},
                        {"keys", s.contraction.keys}};
  }
}

inline void from_json(const nlohmann::json& j, MockScript& s) {
  s = MockScript{};
  s.mode = j.value("mode", MockScript::Mode::replay);
  if (s.mode == MockScript::Mode::replay) {
    for (const auto& entry : j.at("replay_responses")) {
      if (entry.is_string()) {
        s.replay_responses.push_back({entry.get<std::string>(), {}});
      } else {
        s.replay_responses.push_back(MockResponse::fail(entry.value("error", "timeout")));
      }
    }
    s.on_exhausted = j.value("on_exhausted", MockScript::Exhausted::repeat_last);
  } else {
    const auto& c = j.at("contraction");
    s.contraction.targets = c.at("targets").get<std::vector<double>>();
    s.contraction.lambda = c.at("lambda").get<double>();
    s.contraction.initial = c.at("initial").get<std::vector<double>>();
    s.contraction.keys = c.value("keys", std::vector<std::string>{});
  }
  s.validate();
}

inline MockScript load_mock_script(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IOError("cannot open mock script '" + path + "'");
  try {
    return nlohmann::json::parse(in).get<MockScript>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("invalid mock script '" + path + "': " + e.what());
  }
}

/// Deterministic scripted backend. The cursor is guarded, so concurrent
/// callers consume distinct responses in script order.
class MockBackend : public Backend {
 public:
  explicit MockBackend(MockScript script) : script_(std::move(script)) { script_.validate(); }

  std::string complete(const std::string& prompt, const GenerationParams& params) override {
    std::lock_guard lock(mutex_);
    prompts_.push_back(prompt);
    last_params_ = params;
    const std::size_t call = calls_++;
    if (script_.mode == MockScript::Mode::contraction) return contraction_response(call + 1);

    const auto& responses = script_.replay_responses;
    std::size_t index = call;
    if (index >= responses.size()) {
      switch (script_.on_exhausted) {
        case MockScript::Exhausted::repeat_last: index = responses.size() - 1; break;
        case MockScript::Exhausted::cycle: index = call % responses.size(); break;
        case MockScript::Exhausted::fail:
          throw BackendError("mock script exhausted after " + std::to_string(responses.size()) +
                             " responses");
      }
    }
    const auto& r = responses[index];
    if (!r.failure.empty()) throw TransientBackendFailure("mock " + r.failure);
    return r.text;
  }

  /// Scores the contraction script emits on call n (1-based).
  std::vector<double> contraction_scores(std::size_t n) const {
    const auto& c = script_.contraction;
    const double shrink = std::pow(1.0 - c.lambda, static_cast<double>(n));
    std::vector<double> out;
    for (std::size_t i = 0; i < c.targets.size(); ++i) {
      out.push_back(c.targets[i] - shrink * (c.targets[i] - c.initial[i]));
    }
    return out;
  }

  std::size_t calls() const {
    std::lock_guard lock(mutex_);
    return calls_;
  }

  std::vector<std::string> prompts() const {
    std::lock_guard lock(mutex_);
    return prompts_;
  }

  GenerationParams last_params() const {
    std::lock_guard lock(mutex_);
    return last_params_;
  }

 private:
  std::string contraction_response(std::size_t n) const {
    const auto scores = contraction_scores(n);
    nlohmann::json j = nlohmann::json::object();
    for (std::size_t i = 0; i < scores.size(); ++i) j[script_.contraction.keys[i]] = scores[i];
    return j.dump();
  }

  MockScript script_;
  mutable std::mutex mutex_;
  std::size_t calls_ = 0;
  std::vector<std::string> prompts_;
  GenerationParams last_params_;
};

// ---------------------------------------------------------------------------
// Gateway
// ---------------------------------------------------------------------------

struct RetryPolicy {
  int retries = 2;
  std::chrono::milliseconds backoff{500};
};

/// Backend handle with retries and exponential backoff on transient
/// failures. Shareable across threads when the backend is.
class Gateway {
 public:
  explicit Gateway(std::shared_ptr<Backend> backend, RetryPolicy retry = {})
      : backend_(std::move(backend)), retry_(retry) {
    if (!backend_) throw ConfigError("gateway needs a backend");
    if (retry_.retries < 0) throw ConfigError("retries must be >= 0");
  }

  std::string generate(const std::string& prompt, const GenerationParams& params) const {
    params.validate();
    auto delay = retry_.backoff;
    std::string last_cause;
    for (int attempt = 0; attempt <= retry_.retries; ++attempt) {
      if (attempt > 0 && delay.count() > 0) {
        std::this_thread::sleep_for(delay);
        delay *= 2;
      }
      try {
        return backend_->complete(prompt, params);
      } catch (const TransientBackendFailure& e) {
        last_cause = e.what();
      }
    }
    throw BackendError("generation failed after " + std::to_string(retry_.retries + 1) +
                       " attempts: " + last_cause);
  }

  Backend& backend() const noexcept { return *backend_; }
  const RetryPolicy& retry_policy() const noexcept { return retry_; }

 private:
  std::shared_ptr<Backend> backend_;
  RetryPolicy retry_;
};

inline std::shared_ptr<Gateway> make_mock_gateway(MockScript script, RetryPolicy retry = {2, {}}) {
  return std::make_shared<Gateway>(std::make_shared<MockBackend>(std::move(script)), retry);
}

/// One gateway per role. The fact-bullet and prose writers may use
/// different models; judge and editor likewise.
struct Gateways {
  std::shared_ptr<Gateway> facts;
  std::shared_ptr<Gateway> writer;
  std::shared_ptr<Gateway> judge;
  std::shared_ptr<Gateway> editor;

  static Gateways uniform(std::shared_ptr<Gateway> g) { return {g, g, g, g}; }

  void validate() const {
    if (!facts || !writer || !judge || !editor) {
      throw ConfigError("every role (facts, writer, judge, editor) needs a gateway");
    }
  }
};

}  // namespace tomalign

#endif  // TOMALIGN_GATEWAY_HPP
