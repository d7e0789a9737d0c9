#pragma once

#include <string>

#include "promptcanary/model.hpp"

namespace canary {

/// Where the remote completion endpoint lives and how to authenticate.
/// `endpoint_url` carries scheme, host, port, and path in one string, e.g.
/// "http://127.0.0.1:8080/v1/generate". The bearer token is read from the
/// environment variable named by `auth_token_env` at request time (empty
/// means no Authorization header); the token itself never sits in config.
struct RemoteModelConfig {
  std::string endpoint_url;
  std::string auth_token_env;
  double request_timeout_seconds = 30.0;
  std::string model_id = "remote";
};

/// Generation-only adapter for a chat-completion style HTTP service.
/// Request body: {"prompt", "max_tokens", "temperature", "seed"};
/// expected response: {"text"}. Loss, gradients, and training are
/// deliberately not claimed, so gradient-based attacks fail fast
/// with CapabilityError instead of silently degrading.
class RemoteModel : public GenerativeModel {
public:
  explicit RemoteModel(RemoteModelConfig cfg);

  std::string model_id() const override { return cfg_.model_id; }
  Capabilities capabilities() const override { return {.generate = true}; }

  /// POSTs the prompt and returns the completion. Connection failures map to
  /// TransportError with status 0, HTTP errors to TransportError with the
  /// response status, and a 200 whose body is not the documented shape to
  /// SchemaError.
  std::string generate(std::string_view prompt, const GenerationConfig& cfg) const override;

  const RemoteModelConfig& config() const { return cfg_; }

private:
  RemoteModelConfig cfg_;
  std::string host_;  // scheme://authority, e.g. "http://127.0.0.1:8080"
  std::string path_;  // leading-slash request path, "/" when the URL has none
};

}  // namespace canary
