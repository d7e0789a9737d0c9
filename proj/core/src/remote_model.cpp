#include "promptcanary/remote_model.hpp"

#include <cmath>
#include <cstdlib>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "promptcanary/errors.hpp"

namespace canary {

namespace {

using nlohmann::json;

// "http://host:port/some/path" -> {"http://host:port", "/some/path"}.
std::pair<std::string, std::string> split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos)
    throw InvalidArgumentError("endpoint url must include a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

RemoteModel::RemoteModel(RemoteModelConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.endpoint_url.empty()) throw InvalidArgumentError("endpoint url is empty");
  if (!(cfg_.request_timeout_seconds > 0))
    throw InvalidArgumentError("request timeout must be positive");
  std::tie(host_, path_) = split_url(cfg_.endpoint_url);
}

std::string RemoteModel::generate(std::string_view prompt, const GenerationConfig& cfg) const {
  if (prompt.empty()) throw InvalidArgumentError("prompt is empty");
  if (cfg.max_tokens < 0) throw InvalidArgumentError("max_tokens must be >= 0");
  if (cfg.temperature < 0) throw InvalidArgumentError("temperature must be >= 0");

  httplib::Client client(host_);
  const auto whole = static_cast<time_t>(cfg_.request_timeout_seconds);
  const auto usec =
      static_cast<time_t>((cfg_.request_timeout_seconds - static_cast<double>(whole)) * 1e6);
  client.set_connection_timeout(whole, usec);
  client.set_read_timeout(whole, usec);
  client.set_write_timeout(whole, usec);

  httplib::Headers headers;
  if (!cfg_.auth_token_env.empty()) {
    const char* token = std::getenv(cfg_.auth_token_env.c_str());
    if (token == nullptr || *token == '\0')
      throw InvalidArgumentError("environment variable " + cfg_.auth_token_env +
                                 " is not set but auth is configured");
    headers.emplace("Authorization", std::string("Bearer ") + token);
  }

  const json body = {{"prompt", std::string(prompt)},
                     {"max_tokens", cfg.max_tokens},
                     {"temperature", cfg.temperature},
                     {"seed", cfg.seed}};
  auto res = client.Post(path_, headers, body.dump(), "application/json");
  if (!res)
    throw TransportError("cannot reach " + cfg_.endpoint_url + ": " + httplib::to_string(res.error()),
                         0);
  if (res->status != 200)
    throw TransportError("generate request to " + cfg_.endpoint_url + " failed", res->status);

  json parsed;
  try {
    parsed = json::parse(res->body);
  } catch (const json::exception&) {
    throw SchemaError("response from " + cfg_.endpoint_url + " is not json");
  }
  if (!parsed.is_object() || !parsed.contains("text") || !parsed["text"].is_string())
    throw SchemaError("response from " + cfg_.endpoint_url + " lacks a string \"text\" field");
  return parsed["text"].get<std::string>();
}

}  // namespace canary
