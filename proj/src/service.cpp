#include "tennis/service.hpp"

#include <map>
#include <set>

#include "tennis/courtgeom.hpp"
#include "tennis/error.hpp"
#include "tennis/fileio.hpp"
#include "tennis/ingest.hpp"
#include "tennis/workflow.hpp"
// After Eigen: <resolv.h> defines a `_res` macro that clashes with Eigen.
#include "httplib.h"

namespace tennis::service {

namespace tx = taxonomy;
namespace rs = rallystore;
using json = nlohmann::json;
using labelgen::PredictorKind;
using labelgen::Task;

int http_status_for(std::string_view code) {
  static const std::set<std::string_view> conflict{
      "overlap",        "duplicate-hit",       "duplicate-id",    "duplicate-role",
      "duplicate-frame", "duplicate-detection", "confirmed-label", "video-exists",
      "stale-generation"};
  static const std::set<std::string_view> bad_request{"malformed-json", "bad-request"};
  static const std::set<std::string_view> not_found{"no-model", "missing-checkpoint"};
  if (code.starts_with("unknown-") && code != "unknown-value") return 404;
  if (not_found.count(code)) return 404;
  if (conflict.count(code)) return 409;
  if (bad_request.count(code)) return 400;
  if (code == "queue-full") return 503;
  if (code.starts_with("remote-")) return 502;
  if (code == "internal" || code == "io" || code == "corrupt-store" ||
      code == "corrupt-checkpoint" || code == "non-finite-loss") {
    return 500;
  }
  // Everything else is a rule or schema violation by the caller.
  return 422;
}

namespace {

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) throw Error("bad-request", "request body must be a JSON document");
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    throw Error("malformed-json", std::string("request body: ") + e.what());
  }
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code,
                const std::string& message, const json& detail = nullptr) {
  json body{{"code", code}, {"message", message}};
  if (!detail.is_null()) body["detail"] = detail;
  send_json(res, status, body);
}

std::int64_t int_param(const httplib::Request& req, std::size_t i) {
  try {
    return std::stoll(req.matches[static_cast<int>(i)].str());
  } catch (const std::exception&) {
    throw Error("bad-request", "path segment is not an integer");
  }
}

std::string str_param(const httplib::Request& req, std::size_t i) {
  return req.matches[static_cast<int>(i)].str();
}

json video_summary(const rs::VideoRecord& v) {
  std::size_t hits = 0;
  for (const auto& r : v.rallies) hits += r.hits.size();
  return {{"id", v.id},
          {"title", v.title},
          {"source", rs::to_token(v.source)},
          {"frame_count", v.frame_count},
          {"rallies", v.rallies.size()},
          {"hits", hits}};
}

std::vector<tx::PlayerProfile> profiles_from_json(const json& body) {
  const json& arr = body.is_object() && body.contains("players") ? body["players"] : body;
  if (!arr.is_array()) throw Error("schema", "players must be an array of four profiles");
  std::vector<tx::PlayerProfile> out;
  for (const auto& p : arr) out.push_back(tx::profile_from_json(p));
  return out;
}

json players_json(const rs::VideoRecord& v) {
  auto out = json::array();
  for (const auto& p : v.players) out.push_back(tx::to_json(p));
  return out;
}

std::optional<std::int64_t> optional_int(const json& body, const char* key) {
  if (!body.contains(key) || body[key].is_null()) return std::nullopt;
  if (!body[key].is_number_integer()) {
    throw Error("schema", std::string(key) + " must be an integer");
  }
  return body[key].get<std::int64_t>();
}

std::optional<courtgeom::Point> optional_point(const json& body, const char* key) {
  if (!body.contains(key) || body[key].is_null()) return std::nullopt;
  return courtgeom::point_from_json(body[key]);
}

json annotation_summary(const ingest::AnnotationSet& set) {
  const auto index = ingest::FrameIndex::build(set);
  json coverage = json::object();
  for (auto role : tx::kPlayerRoles) coverage[std::string(tx::to_token(role))] = index.coverage(role);
  return {{"images", set.images.size()},
          {"categories", set.categories.size()},
          {"annotations", set.annotations.size()},
          {"frames", index.frame_count()},
          {"coverage", std::move(coverage)}};
}

posegcn::OptimizerKind optimizer_from_token(const std::string& t) {
  if (t == "sgd") return posegcn::OptimizerKind::SgdMomentum;
  if (t == "adamw") return posegcn::OptimizerKind::AdamW;
  throw Error("unknown-value", "optimizer must be sgd or adamw");
}

}  // namespace

struct Service::Impl {
  ServiceConfig config;
  rs::Store store;
  jobs::JobRunner runner;
  httplib::Server server;
  std::string host;
  int port = 0;

  std::mutex registry_mutex;
  // Hot model cache, keyed by predictor kind and fallback flag. Dropped
  // wholesale when a new checkpoint is trained.
  std::map<std::pair<PredictorKind, bool>, std::shared_ptr<labelgen::ModelRegistry>> registries;

  explicit Impl(ServiceConfig c)
      : config(std::move(c)), store(config.data_dir), runner(config.limits) {
    if (config.models_dir.empty()) config.models_dir = config.data_dir / "models";
    routes();
  }

  std::shared_ptr<labelgen::ModelRegistry> registry(PredictorKind kind, bool fallback) {
    std::lock_guard lock(registry_mutex);
    auto& slot = registries[{kind, fallback}];
    if (!slot) {
      labelgen::RegistryOptions opts;
      opts.kind = kind;
      opts.models_dir = config.models_dir;
      opts.remote = config.remote;
      opts.fallback = fallback;
      auto reg = std::make_shared<labelgen::ModelRegistry>();
      labelgen::configure_registry(*reg, opts);
      slot = std::move(reg);
    }
    return slot;
  }

  void drop_registries() {
    std::lock_guard lock(registry_mutex);
    // Random predictors never change; everything else may read checkpoints.
    for (auto it = registries.begin(); it != registries.end();) {
      it = it->first.first == PredictorKind::Random ? std::next(it) : registries.erase(it);
    }
  }

  template <typename F>
  httplib::Server::Handler wrap(F f) {
    return [f = std::move(f)](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const tx::ValidationError& e) {
        send_error(res, 422, e.code(), e.what(), tx::to_json(e.report()));
      } catch (const Error& e) {
        send_error(res, http_status_for(e.code()), e.code(), e.what());
      } catch (const json::exception& e) {
        send_error(res, 400, "bad-request", e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, "internal", e.what());
      }
    };
  }

  void routes();
  void video_routes();
  void rally_routes();
  void label_routes();
  void model_routes();
};

void Service::Impl::routes() {
  server.Get("/schema", wrap([](const httplib::Request&, httplib::Response& res) {
               send_json(res, 200, schema_document());
             }));
  server.Get("/jobs", wrap([this](const httplib::Request&, httplib::Response& res) {
               auto out = json::array();
               for (const auto& s : runner.list()) out.push_back(jobs::to_json(s));
               send_json(res, 200, out);
             }));
  server.Get(R"(/jobs/([^/]+))", wrap([this](const httplib::Request& req, httplib::Response& res) {
               send_json(res, 200, jobs::to_json(runner.status(str_param(req, 1))));
             }));
  video_routes();
  rally_routes();
  label_routes();
  model_routes();
}

void Service::Impl::video_routes() {
  server.Get("/videos", wrap([this](const httplib::Request&, httplib::Response& res) {
               auto out = json::array();
               for (const auto& id : store.list_videos()) {
                 out.push_back(video_summary(store.load_video(id)));
               }
               send_json(res, 200, out);
             }));

  server.Post("/videos", wrap([this](const httplib::Request& req, httplib::Response& res) {
                const json body = parse_body(req);
                if (!body.is_object()) throw Error("schema", "video must be a JSON object");
                const auto title = body.at("title").get<std::string>();
                std::string id;
                if (body.contains("id")) {
                  id = body["id"].get<std::string>();
                } else {
                  id = store.allocate_id(title);
                }
                auto video = rs::make_video(
                    id, title, rs::video_source_from_token(body.value("source", "other")),
                    body.at("frame_count").get<std::int64_t>(),
                    body.value("frame_directory", ""));
                std::lock_guard lock(store.video_mutex(id));
                if (store.exists(id)) throw Error("video-exists", "video '" + id + "' exists");
                store.save_video(video);
                send_json(res, 201, rs::to_json(video));
              }));

  server.Get(R"(/videos/([^/]+))", wrap([this](const httplib::Request& req, httplib::Response& res) {
               send_json(res, 200, rs::to_json(store.load_video(str_param(req, 1))));
             }));

  server.Put(R"(/videos/([^/]+))", wrap([this](const httplib::Request& req, httplib::Response& res) {
               const json body = parse_body(req);
               const auto video = store.mutate(str_param(req, 1), [&](rs::VideoRecord& v) {
                 if (body.contains("title")) v.title = body["title"].get<std::string>();
                 if (body.contains("source")) {
                   v.source = rs::video_source_from_token(body["source"].get<std::string>());
                 }
                 if (body.contains("frame_directory")) {
                   v.frame_directory = body["frame_directory"].get<std::string>();
                 }
                 if (body.contains("frame_count")) {
                   const auto n = body["frame_count"].get<std::int64_t>();
                   for (const auto& r : v.rallies) {
                     const auto last = r.end_frame.value_or(r.start_frame);
                     if (n <= last) {
                       throw Error("frame-range", "rally " + std::to_string(r.id) +
                                                      " extends past the new frame count");
                     }
                   }
                   if (n <= 0) throw Error("invalid-video", "frame count must be positive");
                   v.frame_count = n;
                 }
               });
               send_json(res, 200, rs::to_json(video));
             }));

  server.Delete(R"(/videos/([^/]+))",
                wrap([this](const httplib::Request& req, httplib::Response& res) {
                  const auto id = str_param(req, 1);
                  std::lock_guard lock(store.video_mutex(id));
                  store.remove_video(id);
                  res.status = 204;
                }));

  server.Get(R"(/videos/([^/]+)/players)",
             wrap([this](const httplib::Request& req, httplib::Response& res) {
               send_json(res, 200, players_json(store.load_video(str_param(req, 1))));
             }));

  server.Put(R"(/videos/([^/]+)/players)",
             wrap([this](const httplib::Request& req, httplib::Response& res) {
               const auto profiles = profiles_from_json(parse_body(req));
               const auto video = store.mutate(
                   str_param(req, 1), [&](rs::VideoRecord& v) { rs::set_players(v, profiles); });
               send_json(res, 200, players_json(video));
             }));

  server.Get(R"(/videos/([^/]+)/annotations)",
             wrap([this](const httplib::Request& req, httplib::Response& res) {
               const auto id = str_param(req, 1);
               store.load_video(id);
               const auto set = store.load_annotations(id);
               if (!set) throw Error("unknown-annotations", "no annotations stored for " + id);
               send_json(res, 200, ingest::to_json(*set));
             }));

  server.Put(R"(/videos/([^/]+)/annotations)",
             wrap([this](const httplib::Request& req, httplib::Response& res) {
               const auto id = str_param(req, 1);
               auto set = ingest::coco_from_json(parse_body(req));
               const auto summary = annotation_summary(set);
               std::lock_guard lock(store.video_mutex(id));
               store.load_video(id);
               store.save_annotations(id, set);
               send_json(res, 200, summary);
             }));

  server.Get(R"(/videos/([^/]+)/net)",
             wrap([this](const httplib::Request& req, httplib::Response& res) {
               const auto video = store.load_video(str_param(req, 1));
               if (!video.net) throw Error("unknown-net", "net position is not set");
               send_json(res, 200, courtgeom::to_json(*video.net));
             }));

  server.Put(R"(/videos/([^/]+)/net)",
             wrap([this](const httplib::Request& req, httplib::Response& res) {
               const auto id = str_param(req, 1);
               const auto net = courtgeom::net_config_from_json(parse_body(req));
               if (const auto set = store.load_annotations(id); set && !set->images.empty()) {
                 net.net.check_within(set->images.front().width, set->images.front().height);
               }
               const auto video = store.mutate(id, [&](rs::VideoRecord& v) { v.net = net; });
               send_json(res, 200, courtgeom::to_json(*video.net));
             }));

  server.Get(R"(/videos/([^/]+)/frames/(\d+)\.jpg)",
             wrap([this](const httplib::Request& req, httplib::Response& res) {
               const auto id = str_param(req, 1);
               const auto frame = int_param(req, 2);
               const auto video = store.load_video(id);
               if (frame < 0 || frame >= video.frame_count) {
                 throw Error("unknown-frame", "frame " + std::to_string(frame) + " out of range");
               }
               const auto name = rs::Store::frame_file_name(frame);
               std::filesystem::path path = store.frames_dir(id) / name;
               if (!video.frame_directory.empty()) {
                 std::filesystem::path dir = video.frame_directory;
                 if (dir.is_relative()) dir = store.data_dir() / dir;
                 if (std::filesystem::exists(dir / name)) path = dir / name;
               }
               if (!std::filesystem::exists(path)) {
                 throw Error("unknown-frame", "no image for frame " + std::to_string(frame));
               }
               res.status = 200;
               res.set_content(read_file(path), "image/jpeg");
             }));

  server.Get(R"(/videos/([^/]+)/validate)",
             wrap([this](const httplib::Request& req, httplib::Response& res) {
               const auto video = store.load_video(str_param(req, 1));
               send_json(res, 200, workflow::to_json(workflow::validate_video(video)));
             }));
}

void Service::Impl::rally_routes() {
  server.Get(R"(/videos/([^/]+)/rallies)",
             wrap([this](const httplib::Request& req, httplib::Response& res) {
               const auto video = store.load_video(str_param(req, 1));
               auto out = json::array();
               for (const auto& r : video.rallies) out.push_back(rs::to_json(r));
               send_json(res, 200, out);
             }));

  server.Post(R"(/videos/([^/]+)/rallies)",
              wrap([this](const httplib::Request& req, httplib::Response& res) {
                const json body = parse_body(req);
                const auto start = body.at("start_frame").get<std::int64_t>();
                const auto end = optional_int(body, "end_frame");
                const auto ball = optional_point(body, "end_ball_position");
                std::int64_t rid = 0;
                const auto video = store.mutate(str_param(req, 1), [&](rs::VideoRecord& v) {
                  auto& r = rs::create_rally(v, start);
                  rid = r.id;
                  if (end) rs::end_rally(v, rid, *end, ball);
                });
                send_json(res, 201, rs::to_json(video.rally(rid)));
              }));

  server.Get(R"(/videos/([^/]+)/rallies/(\d+))",
             wrap([this](const httplib::Request& req, httplib::Response& res) {
               const auto video = store.load_video(str_param(req, 1));
               send_json(res, 200, rs::to_json(video.rally(int_param(req, 2))));
             }));

  server.Put(R"(/videos/([^/]+)/rallies/(\d+))",
             wrap([this](const httplib::Request& req, httplib::Response& res) {
               const json body = parse_body(req);
               const auto rid = int_param(req, 2);
               const auto video = store.mutate(str_param(req, 1), [&](rs::VideoRecord& v) {
                 const auto& current = v.rally(rid);
                 const auto start = body.contains("start_frame")
                                        ? body["start_frame"].get<std::int64_t>()
                                        : current.start_frame;
                 const auto end = body.contains("end_frame") ? optional_int(body, "end_frame")
                                                             : current.end_frame;
                 const auto ball = body.contains("end_ball_position")
                                       ? optional_point(body, "end_ball_position")
                                       : current.end_ball_position;
                 rs::update_rally_span(v, rid, start, end, ball);
               });
               send_json(res, 200, rs::to_json(video.rally(rid)));
             }));

  server.Delete(R"(/videos/([^/]+)/rallies/(\d+))",
                wrap([this](const httplib::Request& req, httplib::Response& res) {
                  const auto rid = int_param(req, 2);
                  store.mutate(str_param(req, 1),
                               [&](rs::VideoRecord& v) { rs::delete_rally(v, rid); });
                  res.status = 204;
                }));

  server.Post(R"(/videos/([^/]+)/rallies/(\d+)/hits)",
              wrap([this](const httplib::Request& req, httplib::Response& res) {
                const auto id = str_param(req, 1);
                const auto rid = int_param(req, 2);
                const json body = parse_body(req);
                const auto frame = body.at("frame").get<std::int64_t>();
                const auto hitter =
                    tx::parse_token<tx::PlayerRole>(body.at("hitter").get<std::string>(), "hitter");

                std::optional<courtgeom::AnchorPoint> anchor = optional_point(body, "anchor");
                if (!anchor && body.contains("bbox")) {
                  anchor = courtgeom::anchor_point(courtgeom::bbox_from_json(body["bbox"]));
                }
                if (!anchor) {
                  if (const auto set = store.load_annotations(id)) {
                    const auto index = ingest::FrameIndex::build(*set);
                    if (auto box = ingest::detection_box(*set, index, frame, hitter)) {
                      anchor = courtgeom::anchor_point(*box);
                    }
                  }
                }
                if (!anchor) {
                  throw Error("missing-anchor",
                              "no anchor or bbox given and no detection of the hitter in frame");
                }

                tx::ValidationReport warnings;
                const auto video = store.mutate(id, [&](rs::VideoRecord& v) {
                  warnings = rs::add_hitting_moment(v, v.rally(rid), frame, hitter, *anchor);
                });
                const auto& hits = video.rally(rid).hits;
                const auto it = std::find_if(hits.begin(), hits.end(),
                                             [&](const auto& h) { return h.frame == frame; });
                json out = rs::to_json(*it);
                out["index"] = it - hits.begin();
                out["warnings"] = tx::to_json(warnings);
                send_json(res, 201, out);
              }));

  server.Delete(R"(/videos/([^/]+)/rallies/(\d+)/hits/(\d+))",
                wrap([this](const httplib::Request& req, httplib::Response& res) {
                  const auto rid = int_param(req, 2);
                  const auto n = int_param(req, 3);
                  store.mutate(str_param(req, 1), [&](rs::VideoRecord& v) {
                    auto& hits = v.rally(rid).hits;
                    if (n < 0 || n >= static_cast<std::int64_t>(hits.size())) {
                      throw Error("unknown-hit", "rally has no hit " + std::to_string(n));
                    }
                    hits.erase(hits.begin() + n);
                  });
                  res.status = 204;
                }));
}

void Service::Impl::label_routes() {
  server.Put(R"(/videos/([^/]+)/rallies/(\d+)/hits/(\d+)/label)",
             wrap([this](const httplib::Request& req, httplib::Response& res) {
               const auto rid = int_param(req, 2);
               const auto n = int_param(req, 3);
               json body = parse_body(req);
               if (body.is_object() && body.contains("label")) body = body["label"];
               if (body.is_string()) {
                 body = tx::to_json(tx::parse_event_token(body.get<std::string>()));
                 body.erase("hitter");
               }
               if (!body.is_object()) throw Error("schema", "label must be an object or token");

               tx::ValidationReport report;
               json hit_json;
               store.mutate(str_param(req, 1), [&](rs::VideoRecord& v) {
                 auto& hits = v.rally(rid).hits;
                 if (n < 0 || n >= static_cast<std::int64_t>(hits.size())) {
                   throw Error("unknown-hit", "rally has no hit " + std::to_string(n));
                 }
                 auto& hit = hits[static_cast<std::size_t>(n)];
                 json full = body;
                 if (!full.contains("hitter")) full["hitter"] = tx::to_token(hit.hitter);
                 const auto label = tx::label_from_json(full);
                 report = tx::validate_shot(label, v.profile(hit.hitter),
                                            static_cast<std::size_t>(n) + 1,
                                            static_cast<std::size_t>(n) + 1 == hits.size());
                 if (!report.valid()) throw tx::ValidationError(report);
                 rs::set_label(hit, label, rs::LabelSource::Confirmed);
                 hit_json = rs::to_json(hit);
               });
               hit_json["index"] = n;
               hit_json["report"] = tx::to_json(report);
               send_json(res, 200, hit_json);
             }));

  server.Get(R"(/videos/([^/]+)/labels)",
             wrap([this](const httplib::Request& req, httplib::Response& res) {
               const auto video = store.load_video(str_param(req, 1));
               auto rallies = json::array();
               for (const auto& r : video.rallies) {
                 auto hits = json::array();
                 for (std::size_t i = 0; i < r.hits.size(); ++i) {
                   auto h = rs::to_json(r.hits[i]);
                   h["index"] = i;
                   h["event"] =
                       r.hits[i].label ? json(tx::format_event_token(*r.hits[i].label)) : json();
                   hits.push_back(std::move(h));
                 }
                 rallies.push_back({{"rally_id", r.id},
                                    {"hits", std::move(hits)},
                                    {"report", tx::to_json(rs::validate_rally(r, video.players))}});
               }
               send_json(res, 200, {{"video_id", video.id}, {"rallies", std::move(rallies)}});
             }));

  server.Post(R"(/videos/([^/]+)/labels/generate)",
              wrap([this](const httplib::Request& req, httplib::Response& res) {
                const auto id = str_param(req, 1);
                const json body = req.body.empty() ? json::object() : parse_body(req);
                const auto kind =
                    labelgen::predictor_kind_from_token(body.value("model", std::string("random")));
                if (kind == PredictorKind::Remote && !config.remote) {
                  throw Error("no-remote-endpoint", "service has no remote predictor configured");
                }
                workflow::GenerateOptions opts;
                opts.seed = body.value("seed", std::uint64_t{0});
                if (body.contains("rally_ids")) {
                  opts.rally_ids = body["rally_ids"].get<std::vector<std::int64_t>>();
                }
                const bool fallback = body.value("fallback", false);
                // Fail fast on what can be checked synchronously.
                const auto video = store.load_video(id);
                if (!video.net) throw Error("missing-net", "net position is not set for " + id);

                auto reg = registry(kind, fallback);
                const auto status = runner.submit(
                    jobs::JobKind::Generate, "generate " + id,
                    [this, id, opts, reg](const jobs::JobRunner::ProgressFn& progress) {
                      return workflow::to_json(
                          workflow::generate_video_labels(store, id, *reg, opts, progress));
                    });
                send_json(res, 202, jobs::to_json(status));
              }));

  server.Get(R"(/videos/([^/]+)/metrics)",
             wrap([this](const httplib::Request& req, httplib::Response& res) {
               if (!req.has_param("task")) throw Error("bad-request", "task query parameter required");
               const auto task = labelgen::task_from_token(req.get_param_value("task"));
               const auto video = store.load_video(str_param(req, 1));
               send_json(res, 200, evalkit::to_json(workflow::video_metrics(video, task)));
             }));

  server.Post("/validate/shot", wrap([](const httplib::Request& req, httplib::Response& res) {
                const json body = parse_body(req);
                const auto label = tx::label_from_json(body.at("label"));
                tx::PlayerProfile profile{label.hitter, "unspecified", tx::Handedness::Unknown};
                if (body.contains("profile")) profile = tx::profile_from_json(body["profile"]);
                const auto ordinal = body.value("ordinal", std::size_t{1});
                const bool is_last = body.value("is_last", false);
                const auto report = tx::validate_shot(label, profile, ordinal, is_last);

                // Options for each field given the rest of the label, so an
                // editor can disable illegal choices.
                auto tokens = [](auto set) {
                  auto out = json::array();
                  for (auto v : set.values()) out.push_back(tx::to_token(v));
                  return out;
                };
                json out = tx::to_json(report);
                out["options"] = {
                    {"shot_type", tokens(tx::legal_shot_types(ordinal))},
                    {"formation", tokens(tx::legal_formations(label.shot_type))},
                    {"direction", tokens(tx::legal_directions(label.shot_type, profile.handedness,
                                                              label.court, label.side))}};
                send_json(res, 200, out);
              }));
}

void Service::Impl::model_routes() {
  server.Post("/models/gcn/train", wrap([this](const httplib::Request& req, httplib::Response& res) {
                const json body = parse_body(req);
                workflow::TrainRequest tr;
                tr.task = labelgen::task_from_token(body.at("task").get<std::string>());
                tr.models_dir = config.models_dir;
                const json cfg = body.value("config", json::object());
                tr.variant = posegcn::variant_from_token(cfg.value("variant", "single_pose"));
                tr.hidden_dims = cfg.value("hidden_dims", std::vector<int>{64, 64});
                tr.train.learning_rate = cfg.value("learning_rate", tr.train.learning_rate);
                tr.train.epochs_max = cfg.value("epochs_max", tr.train.epochs_max);
                tr.train.batch_size = cfg.value("batch_size", tr.train.batch_size);
                tr.train.early_stop_patience = cfg.value("patience", tr.train.early_stop_patience);
                tr.train.seed = cfg.value("seed", tr.train.seed);
                tr.train.optimizer = optimizer_from_token(cfg.value("optimizer", "sgd"));
                tr.train.weight_decay = cfg.value("weight_decay", tr.train.weight_decay);
                tr.split_ratio = cfg.value("split_ratio", tr.split_ratio);
                tr.split_seed = cfg.value("split_seed", tr.train.seed);
                tr.holdout_video_ids =
                    cfg.value("holdout_video_ids", std::vector<std::string>{});
                tr.video_ids = cfg.value("video_ids", std::vector<std::string>{});

                const auto status = runner.submit(
                    jobs::JobKind::Train, "train " + std::string(labelgen::to_token(tr.task)),
                    [this, tr](const jobs::JobRunner::ProgressFn& progress) {
                      auto outcome = workflow::train_task_model(store, tr, progress);
                      drop_registries();
                      return workflow::to_json(outcome);
                    });
                send_json(res, 202, jobs::to_json(status));
              }));

  server.Get("/models", wrap([this](const httplib::Request&, httplib::Response& res) {
               std::shared_ptr<labelgen::ModelRegistry> resident;
               {
                 std::lock_guard lock(registry_mutex);
                 if (auto it = registries.find({PredictorKind::PoseGcn, false});
                     it != registries.end()) {
                   resident = it->second;
                 }
               }
               auto out = json::array();
               for (Task task : labelgen::kTasks) {
                 const auto path = labelgen::checkpoint_path(config.models_dir, task);
                 json entry{{"task", labelgen::to_token(task)},
                            {"checkpoint", path.string()},
                            {"available", std::filesystem::exists(path)},
                            {"load_count", resident ? resident->load_count(task) : 0}};
                 if (std::filesystem::exists(path)) {
                   try {
                     const auto doc = json::parse(read_file(path));
                     entry["variant"] = doc.value("variant", "");
                     entry["class_names"] = doc.value("class_names", json::array());
                     entry["epochs"] = doc.value("history", json::array()).size();
                   } catch (const json::exception&) {
                     entry["available"] = false;
                   }
                 }
                 out.push_back(std::move(entry));
               }
               send_json(res, 200, out);
             }));
}

Service::Service(ServiceConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

Service::~Service() {
  stop();
  impl_->runner.shutdown();
}

int Service::bind(const std::string& host, int port) {
  impl_->host = host;
  if (port == 0) {
    impl_->port = impl_->server.bind_to_any_port(host);
  } else {
    impl_->port = impl_->server.bind_to_port(host, port) ? port : -1;
  }
  if (impl_->port < 0) {
    throw Error("io", "cannot bind " + host + ":" + std::to_string(port));
  }
  return impl_->port;
}

void Service::run() { impl_->server.listen_after_bind(); }

void Service::wait_until_ready() { impl_->server.wait_until_ready(); }

void Service::stop() {
  if (impl_->server.is_running()) impl_->server.stop();
}

rallystore::Store& Service::store() { return impl_->store; }
jobs::JobRunner& Service::jobs() { return impl_->runner; }
const std::filesystem::path& Service::models_dir() const { return impl_->config.models_dir; }

}  // namespace tennis::service
