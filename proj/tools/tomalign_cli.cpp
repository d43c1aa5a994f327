// tomalign: replay event logs, synthesize test logs, ingest events and
// serve the review API.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "tomalign/tomalign.hpp"

namespace {

using namespace tomalign;

struct BackendFlags {
  std::string backend = "mock";
  std::string mock_script;
  std::string endpoint;
  std::string model;
  std::string auth_env;
  int timeout_ms = 30000;
  int retries = 2;

  void add(CLI::App& app) {
    app.add_option("--backend", backend, "Model backend")->check(CLI::IsMember({"http", "mock"}));
    app.add_option("--mock-script", mock_script, "Mock script JSON file")->check(CLI::ExistingFile);
    app.add_option("--endpoint", endpoint, "Completion endpoint URL (http backend)");
    app.add_option("--model", model, "Model id (http backend)");
    app.add_option("--auth-env", auth_env, "Environment variable holding the bearer token");
    app.add_option("--timeout-ms", timeout_ms, "Per-request timeout")->check(CLI::PositiveNumber);
    app.add_option("--retries", retries, "Retries on timeouts and 5xx")->check(CLI::NonNegativeNumber);
  }

  BackendKind kind() const { return backend == "http" ? BackendKind::http : BackendKind::mock; }

  BackendConfig http() const {
    BackendConfig c;
    c.kind = BackendKind::http;
    c.endpoint_url = endpoint;
    c.model_id = model;
    c.auth_token_env_var = auth_env;
    c.timeout = std::chrono::milliseconds(timeout_ms);
    c.retries = retries;
    return c;
  }

  std::optional<MockScript> script() const {
    if (mock_script.empty()) return std::nullopt;
    return load_mock_script(mock_script);
  }

  /// Every role for the long-running commands. Mock mode answers with
  /// canned text and judges with the mock script (or fixed scores).
  Gateways gateways(const JudgeConfig& judge) const {
    if (kind() == BackendKind::http) return Gateways::uniform(make_gateway(http()));
    Gateways g;
    g.facts = make_mock_gateway(detail::canned_text("- Match facts as listed"));
    g.writer = make_mock_gateway(detail::canned_text("Generated paragraph."));
    g.editor = make_mock_gateway(detail::canned_text("Rewritten paragraph."));
    if (auto s = script()) {
      g.judge = make_mock_gateway(*s);
    } else {
      const std::vector<double> raw{75, 35, 5, 80};
      g.judge = make_mock_gateway(detail::canned_text(detail::scores_json(judge.dimensions, raw)));
    }
    return g;
  }
};

struct RunFlags {
  std::size_t pool_size = WorkerPool::kDefaultSize;
  std::size_t budget_iterations = 21;
  double budget_seconds = 120.0;

  void add(CLI::App& app) {
    app.add_option("--pool-size", pool_size, "Parallel generation jobs")->check(CLI::PositiveNumber);
    app.add_option("--budget-iterations", budget_iterations, "Judge calls per alignment session")
        ->check(CLI::PositiveNumber);
    app.add_option("--budget-seconds", budget_seconds, "Wall time per alignment session")
        ->check(CLI::PositiveNumber);
  }

  Budget budget() const {
    return {budget_iterations, std::chrono::duration_cast<std::chrono::milliseconds>(
                                   std::chrono::duration<double>(budget_seconds))};
  }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out || !(out << text) || !out.flush()) throw IOError("cannot write '" + path + "'");
}

ApiServer* running_server = nullptr;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Alignment engine for generated match reports"};
  app.require_subcommand(1);

  // replay
  auto* replay = app.add_subcommand("replay", "Replay an event log with simulated editors");
  std::string events_path;
  std::string out_path;
  std::string replay_store;
  double default_lambda = 0.5;
  BackendFlags replay_backend;
  RunFlags replay_run;
  replay->add_option("--events", events_path, "Event log (JSON lines)")->required();
  replay->add_option("--out", out_path, "Write metrics JSON here");
  replay->add_option("--store", replay_store, "Store directory (default: a temporary one)");
  replay->add_option("--default-lambda", default_lambda, "Lambda for events without one")
      ->check(CLI::Range(0.0, 1.0));
  replay_backend.add(*replay);
  replay_run.add(*replay);

  // synth-log
  auto* synth = app.add_subcommand("synth-log", "Write a synthetic event log");
  std::string synth_out;
  SynthOptions synth_options;
  synth->add_option("--out", synth_out, "Output path")->required();
  synth->add_option("--count", synth_options.count, "Number of events");
  synth->add_option("--lambdas", synth_options.lambdas, "Contraction rates to cycle through");
  synth->add_option("--seed", synth_options.seed, "Random seed");
  synth->add_option("--pre-match-every", synth_options.pre_match_every,
                    "Every n-th event is pre-match (0: none)");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Generate draft reports for an event log");
  std::string ingest_events;
  std::string ingest_store;
  std::string eager_editor;
  BackendFlags ingest_backend;
  RunFlags ingest_run;
  ingest->add_option("--events", ingest_events, "Event log (JSON lines)")->required();
  ingest->add_option("--store", ingest_store, "Store directory")->required();
  ingest->add_option("--eager-editor", eager_editor, "Align every section for this editor");
  ingest_backend.add(*ingest);
  ingest_run.add(*ingest);

  // serve
  auto* serve = app.add_subcommand("serve", "Serve the review API");
  std::string serve_store;
  std::string host = "127.0.0.1";
  int port = 8080;
  BackendFlags serve_backend;
  RunFlags serve_run;
  serve->add_option("--store", serve_store, "Store directory")->required();
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port")->check(CLI::Range(0, 65535));
  serve_backend.add(*serve);
  serve_run.add(*serve);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*replay) {
      ReplayConfig config;
      config.backend = replay_backend.kind();
      config.mock_script = replay_backend.script();
      if (config.backend == BackendKind::http) config.http = replay_backend.http();
      config.pool_size = replay_run.pool_size;
      config.budget = replay_run.budget();
      config.default_lambda = default_lambda;
      config.store_dir = replay_store;
      const auto metrics = cli_replay(std::filesystem::path(events_path), config);
      std::cout << render_table(metrics);
      std::cout << "events " << metrics.events << ", duplicates " << metrics.duplicates
                << ", failed sessions " << metrics.failures << ", " << metrics.elapsed_seconds
                << " s\n";
      if (!out_path.empty()) write_text(out_path, nlohmann::json(metrics).dump(2) + "\n");
    } else if (*synth) {
      write_event_log(synth_out, synthesize_event_log(synth_options));
      std::cout << "wrote " << synth_options.count << " events to " << synth_out << "\n";
    } else if (*ingest) {
      PipelineConfig config;
      config.pool_size = ingest_run.pool_size;
      config.budget = ingest_run.budget();
      if (!eager_editor.empty()) {
        config.eager_alignment = true;
        config.review_editor_id = eager_editor;
      }
      Pipeline pipeline(std::make_shared<DocumentStore>(ingest_store),
                        ingest_backend.gateways(config.judge), config);
      std::vector<Submission> submissions;
      for (const auto& event : read_event_log(ingest_events)) {
        submissions.push_back(pipeline.consume_event(event));
      }
      for (auto& s : submissions) {
        const auto item = s.item.get();
        std::size_t failed = 0;
        for (const auto& section : item.sections) failed += section.failure.has_value();
        std::cout << s.content_id << (s.duplicate ? " duplicate" : " draft") << ", "
                  << item.sections.size() << " sections";
        if (failed) std::cout << ", " << failed << " failed";
        std::cout << "\n";
      }
    } else if (*serve) {
      PipelineConfig config;
      config.pool_size = serve_run.pool_size;
      config.budget = serve_run.budget();
      Pipeline pipeline(std::make_shared<DocumentStore>(serve_store),
                        serve_backend.gateways(config.judge), config);
      ApiServer server(pipeline);
      running_server = &server;
      std::signal(SIGINT, [](int) {
        if (running_server) running_server->stop();
      });
      std::signal(SIGTERM, [](int) {
        if (running_server) running_server->stop();
      });
      std::cout << "listening on " << host << ":" << port << std::endl;
      if (!server.listen(host, port)) throw IOError("cannot listen on " + host + ":" + std::to_string(port));
    }
  } catch (const Error& e) {
    std::cerr << "error: " << kind_name(e.kind()) << ": " << e.what() << "\n";
    return 1;
  }
  return 0;
}
