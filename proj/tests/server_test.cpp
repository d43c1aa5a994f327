#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "test_support.hpp"
#include "tomalign/server.hpp"

using namespace tomalign;
using tomalign::testing::mock_gateways;
using tomalign::testing::post_match;
using tomalign::testing::TempDir;

namespace {

const std::string kPerfect =
    R"({"factualness":100,"novelty":50,"repetitiveness":0,"topic_alignment":100})";

class ApiTest : public ::testing::Test {
 protected:
  void start(std::optional<std::string> token = std::string{}, const std::string& judge = kPerfect) {
    store_ = std::make_shared<DocumentStore>(dir_.path());
    pipeline_ = std::make_unique<Pipeline>(store_, mock_gateways(judge));
    pipeline_->generate_report(post_match("api"));
    server_ = std::make_unique<ApiServer>(*pipeline_, token);
    port_ = server_->bind_to_any_port();
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
  }

  void TearDown() override {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
  }

  static nlohmann::json body(const httplib::Result& r) { return nlohmann::json::parse(r->body); }

  httplib::Result post(const std::string& path, const nlohmann::json& j) {
    return client_->Post(path, j.dump(), "application/json");
  }

  TempDir dir_;
  std::shared_ptr<DocumentStore> store_;
  std::unique_ptr<Pipeline> pipeline_;
  std::unique_ptr<ApiServer> server_;
  std::unique_ptr<httplib::Client> client_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace

TEST(HttpStatus, ErrorKindsMapToStatusCodes) {
  EXPECT_EQ(http_status_for(ErrorKind::validation), 400);
  EXPECT_EQ(http_status_for(ErrorKind::range), 400);
  EXPECT_EQ(http_status_for(ErrorKind::not_found), 404);
  EXPECT_EQ(http_status_for(ErrorKind::conflict), 409);
  EXPECT_EQ(http_status_for(ErrorKind::state), 409);
  EXPECT_EQ(http_status_for(ErrorKind::degenerate_area), 422);
  EXPECT_EQ(http_status_for(ErrorKind::backend), 502);
  EXPECT_EQ(http_status_for(ErrorKind::io), 500);
}

TEST_F(ApiTest, ListAndGetContent) {
  start();
  auto r = client_->Get("/content");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(r->get_header_value("Content-Type"), "application/json");
  const auto items = body(r)["items"];
  ASSERT_EQ(items.size(), 1u);
  EXPECT_EQ(items[0]["content_id"], "c-api");
  EXPECT_EQ(items[0]["revision"], 1);

  r = client_->Get("/content/c-api");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  const auto j = body(r);
  EXPECT_EQ(j["status"], "draft");
  EXPECT_EQ(j["sections"].size(), 3u);
  auto item = j.get<ContentItem>();
  item.revision = j["revision"].get<std::uint64_t>();
  EXPECT_EQ(item, pipeline_->load("c-api"));

  r = client_->Get("/content/c-missing");
  EXPECT_EQ(r->status, 404);
  EXPECT_EQ(body(r)["error"], "NotFound");
}

TEST_F(ApiTest, EditUpdatesContentAndProfile) {
  start();
  auto r = post("/content/c-api/sections/action/edit",
                {{"text", "Sharper prose."}, {"editor_id", "ed-1"}, {"revision", 1}});
  ASSERT_TRUE(r);
  ASSERT_EQ(r->status, 200) << r->body;
  const auto j = body(r);
  EXPECT_EQ(j["item"]["status"], "edited");
  EXPECT_EQ(j["item"]["revision"], 2);
  EXPECT_EQ(j["profile"]["sample_count"], 1);
  EXPECT_EQ(j["scores_pending"], false);
  EXPECT_EQ(j["deltas"].size(), 4u);

  // Stale revision.
  r = post("/content/c-api/sections/action/edit",
           {{"text", "Again."}, {"editor_id", "ed-1"}, {"revision", 1}});
  EXPECT_EQ(r->status, 409);
  EXPECT_EQ(body(r)["error"], "ConflictError");

  r = client_->Get("/profiles/ed-1");
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(body(r)["exists"], true);
  EXPECT_EQ(body(r)["profile"]["targets"], (std::vector<double>{100, 50, 0, 100}));
  EXPECT_TRUE(body(r).contains("graph"));

  r = client_->Get("/profiles/nobody");
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(body(r)["exists"], false);
  EXPECT_EQ(body(r)["profile"]["sample_count"], 0);
}

TEST_F(ApiTest, BadRequestsAre400) {
  start();
  EXPECT_EQ(post("/content/c-api/sections/action/edit", {{"editor_id", "e"}})->status, 400);
  EXPECT_EQ(post("/content/c-api/sections/action/edit", {{"text", 5}, {"editor_id", "e"}})->status,
            400);
  EXPECT_EQ(post("/content/c-api/sections/action/edit", {{"text", " "}, {"editor_id", "e"}})->status,
            400);
  auto r = client_->Post("/content/c-api/sections/action/edit", "{oops", "application/json");
  EXPECT_EQ(r->status, 400);
  EXPECT_EQ(body(r)["error"], "ValidationError");
  EXPECT_EQ(post("/content/c-api/sections/nope/edit", {{"text", "x"}, {"editor_id", "e"}})->status,
            404);
}

TEST_F(ApiTest, RegenerateHistoryAndPublish) {
  start();
  auto r = post("/content/c-api/sections/closing/regenerate", {{"editor_id", "ed-2"}});
  ASSERT_EQ(r->status, 200) << r->body;
  auto j = body(r);
  EXPECT_EQ(j["status"], "converged");
  EXPECT_EQ(j["iterations"], 1);
  EXPECT_EQ(j["item"]["status"], "in_review");

  r = client_->Get("/content/c-api/sections/closing/history");
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(body(r)["records"].size(), 1u);
  EXPECT_EQ(client_->Get("/content/c-api/sections/action/history")->status, 404);

  r = client_->Post("/content/c-api/publish");
  ASSERT_EQ(r->status, 200) << r->body;
  EXPECT_EQ(body(r)["status"], "published");

  r = client_->Post("/content/c-api/publish");
  EXPECT_EQ(r->status, 409);
  EXPECT_EQ(body(r)["error"], "StateError");
  EXPECT_EQ(post("/content/c-api/sections/action/edit", {{"text", "x"}, {"editor_id", "e"}})->status,
            409);
}

TEST_F(ApiTest, TokenIsRequiredWhenConfigured) {
  start(std::string("s3cret"));
  auto r = client_->Get("/content");
  EXPECT_EQ(r->status, 401);
  EXPECT_EQ(body(r)["error"], "Unauthorized");
  client_->set_bearer_token_auth("wrong");
  EXPECT_EQ(client_->Get("/content")->status, 401);
  client_->set_bearer_token_auth("s3cret");
  EXPECT_EQ(client_->Get("/content")->status, 200);
}

TEST_F(ApiTest, UnscoredContentCannotBePublished) {
  start(std::string{}, "the judge is confused");
  auto r = client_->Post("/content/c-api/publish");
  EXPECT_EQ(r->status, 409);
  auto regen = post("/content/c-api/sections/action/regenerate", {{"editor_id", "e"}});
  EXPECT_EQ(regen->status, 502);
  EXPECT_EQ(body(regen)["error"], "BackendError");
}

// ---------------------------------------------------------------------------
// CLI
// ---------------------------------------------------------------------------

namespace {

struct CommandResult {
  int exit_code;
  std::string output;
};

CommandResult run(const std::string& args) {
  const std::string command = std::string(TOMALIGN_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(command.c_str(), "r");
  if (!pipe) return {-1, {}};
  std::string out;
  char buffer[4096];
  while (std::size_t n = std::fread(buffer, 1, sizeof buffer, pipe)) out.append(buffer, n);
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

}  // namespace

TEST(Cli, SynthLogThenReplay) {
  TempDir dir;
  const auto log = (dir.path() / "events.jsonl").string();
  const auto metrics = (dir.path() / "metrics.json").string();
  auto r = run("synth-log --out " + log + " --count 14");
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_EQ(read_event_log(log).size(), 14u);

  r = run("replay --events " + log + " --out " + metrics + " --store " +
          (dir.path() / "store").string());
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_NE(r.output.find("Convergence %"), std::string::npos);
  EXPECT_NE(r.output.find("All"), std::string::npos);
  std::ifstream in(metrics);
  const auto j = nlohmann::json::parse(in);
  EXPECT_EQ(j["events"], 14);
  EXPECT_EQ(j["overall"]["Number of Samples"], 40);
  EXPECT_EQ(j["overall"]["Convergence %"], 100.0);
}

TEST(Cli, IngestIsIdempotent) {
  TempDir dir;
  const auto log = (dir.path() / "events.jsonl").string();
  const auto store = (dir.path() / "store").string();
  ASSERT_EQ(run("synth-log --out " + log + " --count 3").exit_code, 0);
  auto r = run("ingest --events " + log + " --store " + store);
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_NE(r.output.find("c-ev-0001 draft, 3 sections"), std::string::npos) << r.output;
  r = run("ingest --events " + log + " --store " + store);
  EXPECT_NE(r.output.find("c-ev-0001 duplicate"), std::string::npos) << r.output;
}

TEST(Cli, ErrorsExitNonZero) {
  TempDir dir;
  const auto bad = (dir.path() / "bad.jsonl").string();
  std::ofstream(bad) << "not json\n";
  auto r = run("replay --events " + bad);
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.output.find("IOError"), std::string::npos) << r.output;
  EXPECT_NE(run("replay").exit_code, 0);
  EXPECT_NE(run("replay --events x --backend carrier-pigeon").exit_code, 0);
  const auto good = (dir.path() / "good.jsonl").string();
  ASSERT_EQ(run("synth-log --out " + good + " --count 1").exit_code, 0);
  r = run("replay --events " + good + " --backend http --endpoint http://127.0.0.1:1/v1");
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.output.find("ConfigError"), std::string::npos) << r.output;
}
