#pragma once

#include <memory>
#include <string>
#include <thread>

#include "promptcanary/detector.hpp"

namespace canary {

struct ServiceConfig {
  std::string bind_address = "127.0.0.1";
  int port = 0;            // 0 picks a free port; start() returns the real one
  std::string auth_token;  // empty serves unauthenticated
};

/// Minimal HTTP front end for one DetectorProfile.
///
///   POST /v1/detect  {"text": str} ->
///     {"verdict", "raw_output", "latency_ms", "model_id", "key_fingerprint"}
///   GET  /v1/health  -> {"status", "model_id"}
///
/// The key itself never appears in a response: raw_output is passed through
/// redact_key and the fingerprint is a one-way hash. Errors: 400 malformed
/// body, 401 bad or missing bearer token when auth is on, 503 when the
/// profile has no model. Requests run on httplib's worker pool, so the
/// profile's model must tolerate concurrent read-only use (TinyLm does).
class DetectService {
public:
  DetectService(const DetectorProfile& profile, ServiceConfig cfg);
  ~DetectService();

  DetectService(const DetectService&) = delete;
  DetectService& operator=(const DetectService&) = delete;

  /// Binds, spawns the serving thread, and returns the bound port.
  int start();

  /// Stops serving and joins the thread. Idempotent.
  void stop();

  /// Serves on the calling thread until stop() arrives from elsewhere.
  void run();

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::thread thread_;
};

}  // namespace canary
