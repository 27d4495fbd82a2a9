#include "tennis/labelgen.hpp"

#include <chrono>

#include "tennis/error.hpp"
// After Eigen: <resolv.h> defines a `_res` macro that clashes with Eigen.
#include "httplib.h"

namespace tennis::labelgen {

namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;    // base path without trailing slash
};

Endpoint split_endpoint(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos || url.compare(0, scheme, "http") != 0) {
    throw Error("invalid-argument", "remote endpoint must be an http:// URL: " + url);
  }
  const auto slash = url.find('/', scheme + 3);
  Endpoint ep;
  ep.origin = url.substr(0, slash);
  if (slash != std::string::npos) ep.path = url.substr(slash);
  while (!ep.path.empty() && ep.path.back() == '/') ep.path.pop_back();
  return ep;
}

nlohmann::json pose_json(const ingest::PoseMatrix& pose) {
  return std::vector<double>(pose.data(), pose.data() + pose.size());
}

}  // namespace

RemotePredictor::RemotePredictor(RemoteConfig config) : config_(std::move(config)) {
  split_endpoint(config_.endpoint);
  if (config_.retries < 0) throw Error("invalid-argument", "retries must be non-negative");
  if (config_.payload_kind != "crop_ref" && config_.payload_kind != "pose") {
    throw Error("invalid-argument", "payload kind must be crop_ref or pose");
  }
}

PoseNeed RemotePredictor::pose_need() const {
  return config_.payload_kind == "pose" ? PoseNeed::Single : PoseNeed::None;
}

nlohmann::json RemotePredictor::request_body(const PredictionRequest& request,
                                             const std::string& payload_kind) {
  nlohmann::json roles = nlohmann::json::array();
  for (auto r : request.roles) roles.push_back(taxonomy::to_token(r));
  nlohmann::json body{{"task", to_token(request.task)},
                      {"video_id", request.video_id},
                      {"frame_index", request.frame_index},
                      {"roles", std::move(roles)},
                      {"payload_kind", payload_kind},
                      {"legal", request.legal}};
  if (request.future_frame_index) body["future_frame_index"] = *request.future_frame_index;
  if (payload_kind == "pose") {
    nlohmann::json poses = nlohmann::json::array();
    if (request.pose_a) poses.push_back(pose_json(*request.pose_a));
    if (request.pose_b) poses.push_back(pose_json(*request.pose_b));
    body["poses"] = std::move(poses);
  }
  return body;
}

Prediction RemotePredictor::predict(const PredictionRequest& request) {
  if (config_.payload_kind == "pose" && !request.pose_a) {
    throw Error("missing-detection", "remote pose payload needs the hitter's pose");
  }
  const Endpoint ep = split_endpoint(config_.endpoint);
  const std::string body = request_body(request, config_.payload_kind).dump();
  const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout);

  std::string last_code;
  std::string last_message;
  for (int attempt = 0; attempt <= config_.retries; ++attempt) {
    httplib::Client client(ep.origin);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);

    const auto started = std::chrono::steady_clock::now();
    auto res = client.Post(ep.path + "/predict", body, "application/json");
    if (!res) {
      const auto elapsed = std::chrono::steady_clock::now() - started;
      const auto err = res.error();
      const bool timed_out = err == httplib::Error::ConnectionTimeout ||
                             ((err == httplib::Error::Read || err == httplib::Error::Write) &&
                              elapsed >= timeout);
      last_code = timed_out ? "remote-timeout" : "remote-unreachable";
      last_message = "remote predictor at " + config_.endpoint + ": " + httplib::to_string(err);
      continue;
    }
    if (res->status >= 500) {
      last_code = "remote-status";
      last_message = "remote predictor answered HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      throw Error("remote-status", "remote predictor answered HTTP " + std::to_string(res->status));
    }

    nlohmann::json reply;
    try {
      reply = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw Error("remote-schema", std::string("reply is not JSON: ") + e.what());
    }
    if (!reply.is_object() || !reply.contains("value") || !reply["value"].is_string() ||
        !reply.contains("confidence") || !reply["confidence"].is_number()) {
      throw Error("remote-schema", "reply must be {\"value\": string, \"confidence\": number}");
    }
    const auto value = reply["value"].get<std::string>();
    const double confidence = reply["confidence"].get<double>();
    if (!(confidence >= 0.0 && confidence <= 1.0)) {
      throw Error("remote-schema", "confidence outside [0, 1]");
    }
    const auto vocab = task_vocabulary(request.task);
    if (std::find(vocab.begin(), vocab.end(), value) == vocab.end()) {
      throw Error("remote-schema", "'" + value + "' is not a " +
                                       std::string(to_token(request.task)) + " value");
    }

    Prediction out{value, confidence, name(), std::nullopt};
    if (std::find(request.legal.begin(), request.legal.end(), value) == request.legal.end()) {
      // Only one value comes back, so every legal value carries zero mass and
      // the projection falls to the first legal value.
      const std::vector<double> probs{confidence};
      const std::vector<std::string> names{value};
      auto [projected, mass] = project_to_legal(names, probs, request.legal);
      out.value = projected;
      out.confidence = mass;
      out.projected_from = value;
    }
    return out;
  }
  throw Error(last_code, last_message);
}

}  // namespace tennis::labelgen
