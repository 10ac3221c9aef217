#pragma once

// Local HTTP/JSON service over immutable model snapshots.
//
//   GET  /models                 -> [ModelHandle]
//   POST /generate               {model, latent | seed}            -> {image, latent}
//   POST /sweep                  {model, latent, t, p_values}      -> {images, latents, variance_image, variance}
//   POST /fuse                   {model, a, b, take_from_a}        -> {image, latent}
//   POST /candidates             {model, fixed, t, count, seed}    -> {candidates: [{image, latent}]}
//   POST /edit                   {model, constraints, config, seed} -> JobTicket
//   GET  /jobs/{id}              -> JobTicket
//
// Images travel as base64 PNG. /generate and /candidates answer with a raw
// PNG (the latents go into the X-Latent / X-Latents header) when the request
// sends "Accept: image/png".

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "branchgan/networks.hpp"

namespace branchgan {

struct ModelHandle {
  std::string id;
  std::filesystem::path checkpoint;
  int stage = 0;
  Resolution resolution;
  std::vector<int> dims;
  bool has_encoder = false;
};

void to_json(nlohmann::json& j, const ModelHandle& h);

struct ServiceModelEntry {
  std::string id;
  std::filesystem::path checkpoint;
};

struct ServiceConfig {
  std::vector<ServiceModelEntry> models;
  /// Edit jobs waiting to run; submissions beyond this are refused with 503.
  std::size_t max_queued_jobs = 16;
};

/// {"models": [{"id": ..., "checkpoint": ...}], "max_queued_jobs": n}.
/// Relative checkpoint paths resolve against the config file's directory.
ServiceConfig load_service_config(const std::filesystem::path& path);

/// HTTP-level failure with its status code.
class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, const std::string& what) : std::runtime_error(what), status_(status) {}
  [[nodiscard]] int status() const { return status_; }

 private:
  int status_;
};

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws ConfigError on malformed input.
std::vector<std::uint8_t> base64_decode(const std::string& text);

class Service {
 public:
  /// Loads every checkpoint; throws DataError/ConfigError on failure.
  explicit Service(const ServiceConfig& config);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  [[nodiscard]] std::vector<ModelHandle> models() const;

  // Endpoint handlers on parsed JSON bodies; they throw ServiceError.
  [[nodiscard]] nlohmann::json generate(const nlohmann::json& body) const;
  [[nodiscard]] nlohmann::json sweep(const nlohmann::json& body) const;
  [[nodiscard]] nlohmann::json fuse(const nlohmann::json& body) const;
  [[nodiscard]] nlohmann::json candidates(const nlohmann::json& body) const;
  /// Queues an edit job and returns its ticket.
  nlohmann::json submit_edit(const nlohmann::json& body);
  /// Ticket of a job; terminal tickets are returned byte-identically.
  [[nodiscard]] std::string job(const std::string& id) const;

  /// Binds and serves on a background thread. Port 0 picks a free port; the
  /// bound port is returned.
  int start(const std::string& host, int port);
  /// Serves on the calling thread until stop().
  void listen(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace branchgan
