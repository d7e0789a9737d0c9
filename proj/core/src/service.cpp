#include "promptcanary/service.hpp"

#include <chrono>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "promptcanary/errors.hpp"

namespace canary {

namespace {

using nlohmann::json;

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

}  // namespace

struct DetectService::Impl {
  DetectorProfile profile;
  ServiceConfig cfg;
  httplib::Server server;

  Impl(const DetectorProfile& p, ServiceConfig c) : profile(p), cfg(std::move(c)) {
    server.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
      if (profile.model == nullptr) {
        send_json(res, 503, {{"status", "unavailable"}, {"model_id", nullptr}});
        return;
      }
      send_json(res, 200, {{"status", "ok"}, {"model_id", profile.model->model_id()}});
    });

    server.Post("/v1/detect", [this](const httplib::Request& req, httplib::Response& res) {
      if (!cfg.auth_token.empty()) {
        const auto header = req.get_header_value("Authorization");
        if (header != "Bearer " + cfg.auth_token) {
          send_json(res, 401, {{"error", "missing or invalid bearer token"}});
          return;
        }
      }
      if (profile.model == nullptr) {
        send_json(res, 503, {{"error", "no model loaded"}});
        return;
      }
      json body;
      try {
        body = json::parse(req.body);
      } catch (const json::exception&) {
        send_json(res, 400, {{"error", "body is not json"}});
        return;
      }
      if (!body.is_object() || !body.contains("text") || !body["text"].is_string()) {
        send_json(res, 400, {{"error", "body must be an object with a string \"text\" field"}});
        return;
      }
      const auto started = std::chrono::steady_clock::now();
      DetectResult result;
      try {
        result = detect(profile, body["text"].get<std::string>());
      } catch (const std::exception& e) {
        send_json(res, 503, {{"error", redact_key(profile.key, e.what())}});
        return;
      }
      const double latency_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started)
              .count();
      send_json(res, 200,
                {{"verdict", to_string(result.verdict)},
                 {"raw_output", redact_key(profile.key, result.raw_output)},
                 {"latency_ms", latency_ms},
                 {"model_id", profile.model->model_id()},
                 {"key_fingerprint", key_fingerprint(profile.key)}});
    });
  }
};

DetectService::DetectService(const DetectorProfile& profile, ServiceConfig cfg)
    : impl_(std::make_unique<Impl>(profile, std::move(cfg))) {}

DetectService::~DetectService() { stop(); }

int DetectService::start() {
  int port = impl_->cfg.port;
  if (port == 0) {
    port = impl_->server.bind_to_any_port(impl_->cfg.bind_address);
    if (port < 0) throw TransportError("cannot bind " + impl_->cfg.bind_address, 0);
  } else if (!impl_->server.bind_to_port(impl_->cfg.bind_address, port)) {
    throw TransportError(
        "cannot bind " + impl_->cfg.bind_address + ":" + std::to_string(port), 0);
  }
  thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port;
}

void DetectService::run() {
  const int port = impl_->cfg.port;
  if (port == 0) throw InvalidArgumentError("run() needs an explicit port");
  if (!impl_->server.bind_to_port(impl_->cfg.bind_address, port))
    throw TransportError(
        "cannot bind " + impl_->cfg.bind_address + ":" + std::to_string(port), 0);
  impl_->server.listen_after_bind();
}

void DetectService::stop() {
  if (impl_) impl_->server.stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace canary
