#ifndef TOMALIGN_SERVER_HPP
#define TOMALIGN_SERVER_HPP

// REST/JSON API over a Pipeline for the review UI.
//
//   GET  /content
//   GET  /content/{id}
//   POST /content/{id}/sections/{name}/edit        {"text", "editor_id", "revision"?}
//   POST /content/{id}/sections/{name}/regenerate  {"editor_id"}
//   POST /content/{id}/publish
//   GET  /profiles/{editor_id}
//   GET  /content/{id}/sections/{name}/history
//
// Errors come back as {"error": <kind>, "message": <text>}.

#include <cstdlib>
#include <optional>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "tomalign/error.hpp"
#include "tomalign/pipeline.hpp"

namespace tomalign {

inline constexpr const char* kApiTokenEnvVar = "TOMALIGN_API_TOKEN";

inline int http_status_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::range:
    case ErrorKind::empty_input:
    case ErrorKind::shape:
    case ErrorKind::parse:
    case ErrorKind::missing_dimension:
    case ErrorKind::validation: return 400;
    case ErrorKind::not_found: return 404;
    case ErrorKind::conflict:
    case ErrorKind::state: return 409;
    case ErrorKind::degenerate_area: return 422;
    case ErrorKind::backend:
    case ErrorKind::judge_unparseable: return 502;
    case ErrorKind::config:
    case ErrorKind::io: return 500;
  }
  return 500;
}

inline nlohmann::json item_json(const ContentItem& item) {
  nlohmann::json j = item;
  j["revision"] = item.revision;
  return j;
}

class ApiServer {
 public:
  /// `token` empty: no authentication. Defaults to $TOMALIGN_API_TOKEN.
  explicit ApiServer(Pipeline& pipeline, std::optional<std::string> token = std::nullopt)
      : pipeline_(pipeline) {
    if (token) {
      token_ = *token;
    } else if (const char* env = std::getenv(kApiTokenEnvVar)) {
      token_ = env;
    }
    routes();
  }

  /// Binds to a free port and returns it; serve with listen_after_bind().
  int bind_to_any_port(const std::string& host = "127.0.0.1") {
    const int port = server_.bind_to_any_port(host);
    if (port < 0) throw IOError("cannot bind to " + host);
    return port;
  }

  bool listen_after_bind() { return server_.listen_after_bind(); }

  bool listen(const std::string& host, int port) { return server_.listen(host, port); }

  void wait_until_ready() const { server_.wait_until_ready(); }
  void stop() { server_.stop(); }

 private:
  using Handler = std::function<nlohmann::json(const httplib::Request&)>;

  void routes() {
    server_.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
      if (token_.empty() || req.get_header_value("Authorization") == "Bearer " + token_) {
        return httplib::Server::HandlerResponse::Unhandled;
      }
      res.status = 401;
      res.set_content(nlohmann::json{{"error", "Unauthorized"}, {"message", "missing or wrong API token"}}.dump(),
                      "application/json");
      return httplib::Server::HandlerResponse::Handled;
    });

    const std::string id = "([A-Za-z0-9._-]+)";
    get("/content", [this](const auto&) {
      nlohmann::json items = nlohmann::json::array();
      for (const auto& item : pipeline_.list_content()) items.push_back(item_json(item));
      return nlohmann::json{{"items", items}};
    });
    get("/content/" + id, [this](const auto& req) { return item_json(pipeline_.load(req.matches[1])); });
    post("/content/" + id + "/sections/" + id + "/edit", [this](const auto& req) {
      const auto body = json_body(req);
      std::optional<std::uint64_t> revision;
      if (body.contains("revision") && !body["revision"].is_null()) {
        revision = field<std::uint64_t>(body, "revision");
      }
      const auto out = pipeline_.handle_edit_submission(
          req.matches[1], req.matches[2], field<std::string>(body, "text"),
          field<std::string>(body, "editor_id"), revision);
      nlohmann::json j{{"item", item_json(out.item)},
                       {"profile", out.profile},
                       {"deltas", out.deltas},
                       {"scores_pending", !out.scores}};
      detail::put_optional(j, "scores", out.scores);
      return j;
    });
    post("/content/" + id + "/sections/" + id + "/regenerate", [this](const auto& req) {
      const auto body = json_body(req);
      const auto outcome = pipeline_.handle_regenerate(req.matches[1], req.matches[2],
                                                       field<std::string>(body, "editor_id"));
      return nlohmann::json{{"status", outcome.status},
                            {"iterations", outcome.history.size()},
                            {"best", outcome.best},
                            {"item", item_json(pipeline_.load(req.matches[1]))}};
    });
    post("/content/" + id + "/publish",
         [this](const auto& req) { return item_json(pipeline_.publish(req.matches[1])); });
    get("/profiles/" + id, [this](const auto& req) {
      const std::string editor = req.matches[1];
      const auto profile = pipeline_.profile(editor);
      return nlohmann::json{{"profile", profile},
                            {"exists", pipeline_.has_profile(editor)},
                            {"graph", profile_graph(profile)}};
    });
    get("/content/" + id + "/sections/" + id + "/history",
        [this](const auto& req) { return nlohmann::json(pipeline_.history(req.matches[1], req.matches[2])); });
  }

  static nlohmann::json json_body(const httplib::Request& req) {
    if (req.body.empty()) return nlohmann::json::object();
    auto j = nlohmann::json::parse(req.body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw ValidationError("request body must be a JSON object");
    return j;
  }

  template <class T>
  static T field(const nlohmann::json& body, const char* key) {
    const auto it = body.find(key);
    if (it == body.end()) throw ValidationError(std::string("missing field '") + key + "'");
    try {
      return it->get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ValidationError(std::string("field '") + key + "' has the wrong type");
    }
  }

  static void respond(httplib::Response& res, const Handler& handler, const httplib::Request& req) {
    try {
      res.set_content(handler(req).dump(), "application/json");
    } catch (const Error& e) {
      res.status = http_status_for(e.kind());
      res.set_content(nlohmann::json{{"error", kind_name(e.kind())}, {"message", e.what()}}.dump(),
                      "application/json");
    } catch (const std::exception& e) {
      res.status = 500;
      res.set_content(nlohmann::json{{"error", "InternalError"}, {"message", e.what()}}.dump(),
                      "application/json");
    }
  }

  void get(const std::string& pattern, Handler handler) {
    server_.Get(pattern, [h = std::move(handler)](const httplib::Request& req, httplib::Response& res) {
      respond(res, h, req);
    });
  }

  void post(const std::string& pattern, Handler handler) {
    server_.Post(pattern, [h = std::move(handler)](const httplib::Request& req, httplib::Response& res) {
      respond(res, h, req);
    });
  }

  Pipeline& pipeline_;
  std::string token_;
  httplib::Server server_;
};

}  // namespace tomalign

#endif  // TOMALIGN_SERVER_HPP
