#ifndef TOMALIGN_HTTP_BACKEND_HPP
#define TOMALIGN_HTTP_BACKEND_HPP

#include <cstdlib>
#include <memory>
#include <optional>
#include <string>
#include <utility>

#include <httplib.h>
#include <json.hpp>

#include "tomalign/error.hpp"
#include "tomalign/gateway.hpp"

namespace tomalign {

/// Request body sent to the completion endpoint.
inline nlohmann::json completion_request(const std::string& model, const std::string& prompt,
                                         const GenerationParams& params) {
  return {{"model", model},
          {"prompt", prompt},
          {"temperature", params.temperature},
          {"top_p", params.top_p},
          {"top_k", params.top_k},
          {"max_tokens", params.max_tokens}};
}

/// Pulls the completion text out of the response. Accepts the native
/// {"text": ...} shape, choices[].text, choices[].message.content and
/// results[].generated_text.
inline std::optional<std::string> completion_text(const nlohmann::json& body) {
  if (!body.is_object()) return std::nullopt;
  if (auto it = body.find("text"); it != body.end() && it->is_string()) {
    return it->get<std::string>();
  }
  if (auto it = body.find("choices"); it != body.end() && it->is_array() && !it->empty()) {
    const auto& first = it->front();
    if (first.contains("text") && first["text"].is_string()) return first["text"].get<std::string>();
    if (first.contains("message") && first["message"].contains("content") &&
        first["message"]["content"].is_string()) {
      return first["message"]["content"].get<std::string>();
    }
  }
  if (auto it = body.find("results"); it != body.end() && it->is_array() && !it->empty()) {
    const auto& first = it->front();
    if (first.contains("generated_text") && first["generated_text"].is_string()) {
      return first["generated_text"].get<std::string>();
    }
  }
  return std::nullopt;
}

class HttpBackend : public Backend {
 public:
  explicit HttpBackend(BackendConfig config) : config_(std::move(config)) {
    config_.kind = BackendKind::http;
    config_.validate();
    if (!config_.auth_token_env_var.empty()) {
      const char* token = std::getenv(config_.auth_token_env_var.c_str());
      if (token == nullptr || *token == '\0') {
        throw ConfigError("credential environment variable '" + config_.auth_token_env_var +
                          "' is not set");
      }
      token_ = token;
    }
    split_url(config_.endpoint_url);
  }

  std::string complete(const std::string& prompt, const GenerationParams& params) override {
    httplib::Client client(base_);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    httplib::Headers headers;
    if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);

    const auto body = completion_request(config_.model_id, prompt, params).dump();
    auto res = client.Post(path_, headers, body, "application/json");
    if (!res) {
      throw TransientBackendFailure("request to " + config_.endpoint_url +
                                    " failed: " + httplib::to_string(res.error()));
    }
    if (res->status >= 500 || res->status == 429) {
      throw TransientBackendFailure("endpoint returned HTTP " + std::to_string(res->status));
    }
    if (res->status < 200 || res->status >= 300) {
      throw BackendError("endpoint returned HTTP " + std::to_string(res->status) + ": " +
                         res->body.substr(0, 200));
    }
    nlohmann::json parsed = nlohmann::json::parse(res->body, nullptr, false);
    if (parsed.is_discarded()) throw BackendError("endpoint returned a non-JSON body");
    auto text = completion_text(parsed);
    if (!text) throw BackendError("endpoint response has no completion text");
    return *text;
  }

  const BackendConfig& config() const noexcept { return config_; }

 private:
  void split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
      throw ConfigError("endpoint_url must include a scheme: '" + url + "'");
    }
    const auto path_start = url.find('/', scheme_end + 3);
    base_ = url.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : url.substr(path_start);
  }

  BackendConfig config_;
  std::string token_;
  std::string base_;
  std::string path_;
};

/// Builds a gateway for `config`; mock kinds require a script.
inline std::shared_ptr<Gateway> make_gateway(const BackendConfig& config,
                                             const std::optional<MockScript>& script = {}) {
  config.validate();
  const RetryPolicy retry{config.retries, config.backoff};
  if (config.kind == BackendKind::mock) {
    if (!script) throw ConfigError("mock backend requires a mock script");
    return std::make_shared<Gateway>(std::make_shared<MockBackend>(*script), retry);
  }
  return std::make_shared<Gateway>(std::make_shared<HttpBackend>(config), retry);
}

}  // namespace tomalign

#endif  // TOMALIGN_HTTP_BACKEND_HPP
