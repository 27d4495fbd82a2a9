#pragma once

// REST service over a file-backed store. Routes:
//
//   GET    /schema
//   GET    /videos                         POST /videos
//   GET    /videos/{id}                    PUT, DELETE /videos/{id}
//   GET    /videos/{id}/players            PUT (4 profiles)
//   GET    /videos/{id}/annotations        PUT (COCO document)
//   GET    /videos/{id}/net                PUT
//   GET    /videos/{id}/rallies            POST
//   GET    /videos/{id}/rallies/{rid}      PUT, DELETE
//   POST   /videos/{id}/rallies/{rid}/hits
//   DELETE /videos/{id}/rallies/{rid}/hits/{n}
//   PUT    /videos/{id}/rallies/{rid}/hits/{n}/label
//   GET    /videos/{id}/labels
//   POST   /videos/{id}/labels/generate    -> 202 job
//   GET    /videos/{id}/validate
//   GET    /videos/{id}/metrics?task=...
//   GET    /videos/{id}/frames/{index}.jpg
//   POST   /validate/shot
//   POST   /models/gcn/train               -> 202 job
//   GET    /models
//   GET    /jobs                           GET /jobs/{job_id}
//
// Hit indices {n} are 0-based positions in frame order. Errors are
// {"code", "message", "detail"?} with the status from http_status_for.

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "json.hpp"
#include "tennis/jobs.hpp"
#include "tennis/labelgen.hpp"
#include "tennis/rallystore.hpp"

namespace tennis::service {

struct ServiceConfig {
  std::filesystem::path data_dir;
  // Empty: <data_dir>/models.
  std::filesystem::path models_dir;
  std::optional<labelgen::RemoteConfig> remote;
  jobs::RunnerLimits limits;
};

// 404 unknown-*, 409 conflicts, 422 validation, 400 malformed requests,
// 503 queue-full, 502 remote-*, 500 otherwise.
int http_status_for(std::string_view code);

// JSON Schema of every request and response body, plus the route table.
nlohmann::json schema_document();

class Service {
 public:
  explicit Service(ServiceConfig config);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Port 0 picks a free port. Returns the bound port. Error "io".
  int bind(const std::string& host, int port);
  // Serves until stop().
  void run();
  // Blocks until run() is accepting connections.
  void wait_until_ready();
  void stop();

  rallystore::Store& store();
  jobs::JobRunner& jobs();
  const std::filesystem::path& models_dir() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace tennis::service
