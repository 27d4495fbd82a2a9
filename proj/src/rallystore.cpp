#include "tennis/rallystore.hpp"

#include "tennis/fileio.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

namespace tennis::rallystore {

namespace {

using nlohmann::json;
using taxonomy::Severity;

constexpr int kRecordVersion = 1;

// Span a rally currently occupies; an open rally reaches up to its last hit.
std::pair<std::int64_t, std::int64_t> occupied(const Rally& r) {
  std::int64_t end = r.end_frame.value_or(r.start_frame);
  if (!r.hits.empty()) end = std::max(end, r.hits.back().frame);
  return {r.start_frame, end};
}

void check_frame(const VideoRecord& video, std::int64_t frame) {
  if (frame < 0 || frame >= video.frame_count) {
    throw Error("frame-range", "frame " + std::to_string(frame) + " outside video range [0, " +
                                   std::to_string(video.frame_count) + ")");
  }
}

void check_overlap(const VideoRecord& video, std::int64_t rally_id, std::int64_t start,
                   std::int64_t end) {
  for (const auto& other : video.rallies) {
    if (other.id == rally_id) continue;
    const auto [os, oe] = occupied(other);
    if (start <= oe && os <= end) {
      throw Error("overlap", "frames [" + std::to_string(start) + ", " + std::to_string(end) +
                                 "] overlap rally " + std::to_string(other.id) + " [" +
                                 std::to_string(os) + ", " + std::to_string(oe) + "]");
    }
  }
}

void check_hits_in_span(const Rally& rally) {
  for (const auto& hit : rally.hits) {
    if (hit.frame < rally.start_frame || (rally.end_frame && hit.frame > *rally.end_frame)) {
      throw Error("hit-out-of-span", "hit at frame " + std::to_string(hit.frame) +
                                         " falls outside the rally span");
    }
  }
}

json provenance_to_json(const Provenance& p) {
  json out = json::object();
  for (const auto& [field, prov] : p) {
    out[field] = {{"predictor", prov.predictor}, {"confidence", prov.confidence}};
  }
  return out;
}

Provenance provenance_from_json(const json& j) {
  Provenance p;
  if (j.is_null()) return p;
  for (auto it = j.begin(); it != j.end(); ++it) {
    p[it.key()] = {it.value().at("predictor").get<std::string>(),
                   it.value().at("confidence").get<double>()};
  }
  return p;
}

HittingMoment hit_from_json(const json& j) {
  HittingMoment h;
  h.frame = j.at("frame").get<std::int64_t>();
  h.hitter = taxonomy::parse_token<PlayerRole>(j.at("hitter").get<std::string>(), "player role");
  h.anchor = courtgeom::point_from_json(j.at("anchor"));
  if (j.contains("label") && !j.at("label").is_null()) {
    h.label = taxonomy::label_from_json(j.at("label"));
  }
  const auto source = j.at("label_source").get<std::string>();
  if (source == "generated") {
    h.label_source = LabelSource::Generated;
  } else if (source == "confirmed") {
    h.label_source = LabelSource::Confirmed;
  } else {
    throw Error("schema", "unknown label_source '" + source + "'");
  }
  if (j.contains("generated_label") && !j.at("generated_label").is_null()) {
    h.generated = taxonomy::label_from_json(j.at("generated_label"));
  }
  if (j.contains("provenance")) h.provenance = provenance_from_json(j.at("provenance"));
  return h;
}

Rally rally_from_json(const json& j) {
  Rally r;
  r.id = j.at("id").get<std::int64_t>();
  r.start_frame = j.at("start_frame").get<std::int64_t>();
  if (!j.at("end_frame").is_null()) r.end_frame = j.at("end_frame").get<std::int64_t>();
  if (j.contains("end_ball_position") && !j.at("end_ball_position").is_null()) {
    r.end_ball_position = courtgeom::point_from_json(j.at("end_ball_position"));
  }
  for (const auto& h : j.at("hits")) r.hits.push_back(hit_from_json(h));
  return r;
}

}  // namespace

Rally& VideoRecord::rally(std::int64_t rally_id) {
  for (auto& r : rallies) {
    if (r.id == rally_id) return r;
  }
  throw Error("unknown-rally", "video " + id + " has no rally " + std::to_string(rally_id));
}

const Rally& VideoRecord::rally(std::int64_t rally_id) const {
  return const_cast<VideoRecord*>(this)->rally(rally_id);
}

const PlayerProfile& VideoRecord::profile(PlayerRole role) const {
  return players[static_cast<std::size_t>(role)];
}

bool is_valid_video_id(std::string_view id) {
  if (id.empty() || id.size() > 64) return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
           c == '-' || c == '_';
  });
}

VideoRecord make_video(std::string id, std::string title, VideoSource source,
                       std::int64_t frame_count, std::string frame_directory) {
  if (!is_valid_video_id(id)) throw Error("invalid-video", "invalid video id '" + id + "'");
  if (frame_count <= 0) throw Error("invalid-video", "frame_count must be positive");
  VideoRecord v;
  v.id = std::move(id);
  v.title = std::move(title);
  v.source = source;
  v.frame_count = frame_count;
  v.frame_directory = std::move(frame_directory);
  for (auto role : taxonomy::kPlayerRoles) {
    const auto i = static_cast<std::size_t>(role);
    v.players[i] = {role, "Player " + std::to_string(i + 1), taxonomy::Handedness::Unknown};
  }
  return v;
}

void set_players(VideoRecord& video, const std::vector<PlayerProfile>& profiles) {
  if (profiles.size() != 4) throw Error("invalid-players", "exactly four players are required");
  std::array<bool, 4> seen{};
  std::array<PlayerProfile, 4> next;
  for (const auto& p : profiles) {
    const auto i = static_cast<std::size_t>(p.role);
    if (seen[i]) {
      throw Error("invalid-players",
                  "duplicate profile for " + std::string(taxonomy::to_token(p.role)));
    }
    if (p.description.empty()) throw Error("invalid-players", "player description is empty");
    seen[i] = true;
    next[i] = p;
  }
  video.players = next;
}

Rally& create_rally(VideoRecord& video, std::int64_t start_frame) {
  check_frame(video, start_frame);
  check_overlap(video, -1, start_frame, start_frame);
  Rally r;
  r.id = video.next_rally_id++;
  r.start_frame = start_frame;
  video.rallies.push_back(std::move(r));
  std::sort(video.rallies.begin(), video.rallies.end(),
            [](const Rally& a, const Rally& b) { return a.start_frame < b.start_frame; });
  return video.rally(video.next_rally_id - 1);
}

Rally& update_rally_span(VideoRecord& video, std::int64_t rally_id, std::int64_t start_frame,
                         std::optional<std::int64_t> end_frame,
                         std::optional<courtgeom::Point> ball_position) {
  Rally& r = video.rally(rally_id);
  check_frame(video, start_frame);
  if (end_frame) {
    check_frame(video, *end_frame);
    if (*end_frame <= start_frame) {
      throw Error("invalid-span", "rally end frame must come after its start frame");
    }
  }
  Rally next = r;
  next.start_frame = start_frame;
  next.end_frame = end_frame;
  next.end_ball_position = ball_position;
  check_hits_in_span(next);
  const auto [s, e] = occupied(next);
  check_overlap(video, rally_id, s, e);
  r = std::move(next);
  std::sort(video.rallies.begin(), video.rallies.end(),
            [](const Rally& a, const Rally& b) { return a.start_frame < b.start_frame; });
  return video.rally(rally_id);
}

Rally& end_rally(VideoRecord& video, std::int64_t rally_id, std::int64_t end_frame,
                 std::optional<courtgeom::Point> ball_position) {
  const auto start = video.rally(rally_id).start_frame;
  return update_rally_span(video, rally_id, start, end_frame, ball_position);
}

void delete_rally(VideoRecord& video, std::int64_t rally_id) {
  video.rally(rally_id);
  std::erase_if(video.rallies, [&](const Rally& r) { return r.id == rally_id; });
}

ValidationReport check_alternation(const Rally& rally) {
  ValidationReport report;
  for (std::size_t i = 1; i < rally.hits.size(); ++i) {
    const auto prev = rally.hits[i - 1].hitter;
    const auto cur = rally.hits[i].hitter;
    if (taxonomy::team_of(prev) == taxonomy::team_of(cur)) {
      report.add(Severity::Warning, "team-alternation",
                 "consecutive hits by " + std::string(taxonomy::to_token(prev)) + " and " +
                     std::string(taxonomy::to_token(cur)) + " come from the same team",
                 "hitter", i);
    }
  }
  return report;
}

ValidationReport add_hitting_moment(VideoRecord& video, Rally& rally, std::int64_t frame,
                                    PlayerRole hitter, courtgeom::AnchorPoint anchor) {
  check_frame(video, frame);
  if (frame < rally.start_frame || (rally.end_frame && frame > *rally.end_frame)) {
    throw Error("hit-out-of-span", "hit at frame " + std::to_string(frame) +
                                       " falls outside rally " + std::to_string(rally.id));
  }
  auto pos = std::lower_bound(rally.hits.begin(), rally.hits.end(), frame,
                              [](const HittingMoment& h, std::int64_t f) { return h.frame < f; });
  if (pos != rally.hits.end() && pos->frame == frame) {
    throw Error("duplicate-hit", "frame " + std::to_string(frame) + " is already a hit");
  }
  if (!rally.end_frame) {
    // Open rallies grow forward; the extension must not run into a later one.
    check_overlap(video, rally.id, rally.start_frame, std::max(frame, occupied(rally).second));
  }
  HittingMoment hit;
  hit.frame = frame;
  hit.hitter = hitter;
  hit.anchor = anchor;
  rally.hits.insert(pos, std::move(hit));
  return check_alternation(rally);
}

ValidationReport validate_rally(const Rally& rally,
                                const std::array<PlayerProfile, 4>& profiles) {
  ValidationReport report;
  if (!rally.end_frame) {
    report.add(Severity::Error, "rally-open", "rally has no end frame");
  } else if (*rally.end_frame <= rally.start_frame) {
    report.add(Severity::Error, "invalid-span", "rally end frame must follow its start frame");
  }
  if (rally.hits.empty()) {
    report.add(Severity::Error, "no-hits", "rally has no hitting moments");
  }
  for (std::size_t i = 0; i < rally.hits.size(); ++i) {
    const auto& hit = rally.hits[i];
    if (i > 0 && hit.frame <= rally.hits[i - 1].frame) {
      report.add(Severity::Error, "hit-order", "hits must be strictly increasing by frame",
                 std::nullopt, i);
    }
    if (hit.frame < rally.start_frame || (rally.end_frame && hit.frame > *rally.end_frame)) {
      report.add(Severity::Error, "hit-out-of-span", "hit lies outside the rally span",
                 std::nullopt, i);
    }
  }
  report.merge(check_alternation(rally));
  for (std::size_t i = 0; i < rally.hits.size(); ++i) {
    const auto& hit = rally.hits[i];
    if (!hit.label) {
      report.add(Severity::Warning, "unlabelled-hit", "hit has no label yet", std::nullopt, i);
      continue;
    }
    const auto& profile = profiles[static_cast<std::size_t>(hit.hitter)];
    if (hit.label->hitter != hit.hitter) {
      report.add(Severity::Error, std::string(taxonomy::codes::kHitterMismatch),
                 "label hitter differs from the marked hitter", "hitter", i);
    }
    report.merge(taxonomy::validate_shot(*hit.label, profile, i + 1, i + 1 == rally.hits.size()),
                 i);
  }
  return report;
}

void set_label(HittingMoment& hit, const ShotLabel& label, LabelSource source,
               Provenance provenance) {
  if (source == LabelSource::Generated) {
    if (hit.label && hit.label_source == LabelSource::Confirmed) {
      throw Error("confirmed-label", "a confirmed label cannot be replaced by a generated one");
    }
    hit.generated = label;
    hit.provenance = std::move(provenance);
  }
  hit.label = label;
  hit.label_source = source;
}

void record_generated(HittingMoment& hit, const ShotLabel& label, Provenance provenance) {
  hit.generated = label;
  hit.provenance = std::move(provenance);
  if (!hit.label || hit.label_source == LabelSource::Generated) {
    hit.label = label;
    hit.label_source = LabelSource::Generated;
  }
}

std::string_view to_token(VideoSource source) {
  switch (source) {
    case VideoSource::Professional: return "professional";
    case VideoSource::NCAA: return "ncaa";
    case VideoSource::Other: return "other";
  }
  return "other";
}

std::string_view to_token(LabelSource source) {
  return source == LabelSource::Generated ? "generated" : "confirmed";
}

VideoSource video_source_from_token(std::string_view token) {
  if (token == "professional") return VideoSource::Professional;
  if (token == "ncaa") return VideoSource::NCAA;
  if (token == "other") return VideoSource::Other;
  throw Error("unknown-value", "unknown video source '" + std::string(token) + "'");
}

json to_json(const HittingMoment& hit) {
  return {{"frame", hit.frame},
          {"hitter", taxonomy::to_token(hit.hitter)},
          {"anchor", courtgeom::to_json(hit.anchor)},
          {"label", hit.label ? taxonomy::to_json(*hit.label) : json(nullptr)},
          {"label_source", to_token(hit.label_source)},
          {"generated_label", hit.generated ? taxonomy::to_json(*hit.generated) : json(nullptr)},
          {"provenance", provenance_to_json(hit.provenance)}};
}

json to_json(const Rally& rally) {
  auto hits = json::array();
  for (const auto& h : rally.hits) hits.push_back(to_json(h));
  return {{"id", rally.id},
          {"start_frame", rally.start_frame},
          {"end_frame", rally.end_frame ? json(*rally.end_frame) : json(nullptr)},
          {"end_ball_position",
           rally.end_ball_position ? courtgeom::to_json(*rally.end_ball_position) : json(nullptr)},
          {"hits", std::move(hits)}};
}

json to_json(const VideoRecord& video) {
  auto players = json::array();
  for (const auto& p : video.players) players.push_back(taxonomy::to_json(p));
  auto rallies = json::array();
  for (const auto& r : video.rallies) rallies.push_back(to_json(r));
  return {{"format", "tennis-video"},
          {"version", kRecordVersion},
          {"id", video.id},
          {"title", video.title},
          {"source", to_token(video.source)},
          {"frame_count", video.frame_count},
          {"frame_directory", video.frame_directory},
          {"players", std::move(players)},
          {"net", video.net ? courtgeom::to_json(*video.net) : json(nullptr)},
          {"next_rally_id", video.next_rally_id},
          {"rallies", std::move(rallies)}};
}

VideoRecord video_from_json(const json& j) {
  if (!j.is_object() || j.value("format", "") != "tennis-video") {
    throw Error("schema", "not a video record");
  }
  if (j.at("version").get<int>() != kRecordVersion) {
    throw Error("schema", "unsupported video record version");
  }
  VideoRecord v = make_video(j.at("id").get<std::string>(), j.at("title").get<std::string>(),
                             video_source_from_token(j.at("source").get<std::string>()),
                             j.at("frame_count").get<std::int64_t>(),
                             j.at("frame_directory").get<std::string>());
  std::vector<PlayerProfile> players;
  for (const auto& p : j.at("players")) players.push_back(taxonomy::profile_from_json(p));
  set_players(v, players);
  if (!j.at("net").is_null()) v.net = courtgeom::net_config_from_json(j.at("net"));
  v.next_rally_id = j.at("next_rally_id").get<std::int64_t>();
  for (const auto& r : j.at("rallies")) v.rallies.push_back(rally_from_json(r));
  return v;
}

Store::Store(std::filesystem::path data_dir) : data_dir_(std::move(data_dir)) {
  std::error_code ec;
  std::filesystem::create_directories(data_dir_, ec);
  if (ec) throw Error("io", "cannot create data directory " + data_dir_.string());
}

std::filesystem::path Store::video_dir(const std::string& id) const {
  if (!is_valid_video_id(id)) throw Error("unknown-video", "invalid video id '" + id + "'");
  return data_dir_ / id;
}

std::filesystem::path Store::record_path(const std::string& id) const {
  return video_dir(id) / "record.json";
}

std::filesystem::path Store::coco_path(const std::string& id) const {
  return video_dir(id) / "coco.json";
}

std::filesystem::path Store::frames_dir(const std::string& id) const {
  return video_dir(id) / "frames";
}

std::string Store::frame_file_name(std::int64_t frame_index) {
  std::ostringstream ss;
  ss << std::setw(6) << std::setfill('0') << frame_index << ".jpg";
  return ss.str();
}

std::vector<std::string> Store::list_videos() const {
  std::vector<std::string> ids;
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator(data_dir_, ec)) {
    const auto name = entry.path().filename().string();
    if (entry.is_directory() && is_valid_video_id(name) &&
        std::filesystem::exists(entry.path() / "record.json")) {
      ids.push_back(name);
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

bool Store::exists(const std::string& id) const {
  return is_valid_video_id(id) && std::filesystem::exists(record_path(id));
}

std::string Store::allocate_id(const std::string& title) const {
  std::string base;
  for (char c : title) {
    if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) {
      base += c;
    } else if (c >= 'A' && c <= 'Z') {
      base += static_cast<char>(c - 'A' + 'a');
    } else if (!base.empty() && base.back() != '-') {
      base += '-';
    }
  }
  while (!base.empty() && base.back() == '-') base.pop_back();
  if (base.size() > 48) base.resize(48);
  if (base.empty()) base = "video";
  std::string id = base;
  for (int n = 2; exists(id) || std::filesystem::exists(data_dir_ / id); ++n) {
    id = base + "-" + std::to_string(n);
  }
  return id;
}

VideoRecord Store::load_video(const std::string& id) const {
  if (!exists(id)) throw Error("unknown-video", "no video '" + id + "'");
  const auto path = record_path(id);
  const auto text = read_file(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error("corrupt-store", path.string() + " at byte " + std::to_string(e.byte) + ": " +
                                     e.what());
  }
  try {
    return video_from_json(doc);
  } catch (const json::exception& e) {
    throw Error("corrupt-store", path.string() + ": " + e.what());
  } catch (const Error& e) {
    throw Error("corrupt-store", path.string() + ": " + e.what());
  }
}

void Store::save_video(const VideoRecord& video) {
  const auto dir = video_dir(video.id);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("io", "cannot create " + dir.string());
  write_file_atomic(record_path(video.id), to_json(video).dump(2) + "\n");
}

void Store::remove_video(const std::string& id) {
  if (!exists(id)) throw Error("unknown-video", "no video '" + id + "'");
  // Drop the record first so a half-finished removal no longer lists.
  std::error_code ec;
  std::filesystem::remove(record_path(id), ec);
  if (!ec) std::filesystem::remove_all(video_dir(id), ec);
  if (ec) throw Error("io", "cannot remove " + video_dir(id).string() + ": " + ec.message());
}

std::optional<ingest::AnnotationSet> Store::load_annotations(const std::string& id) const {
  const auto path = coco_path(id);
  if (!std::filesystem::exists(path)) return std::nullopt;
  try {
    return ingest::parse_coco(read_file(path));
  } catch (const Error& e) {
    if (e.code() == "io") throw;
    throw Error("corrupt-store", path.string() + ": " + e.what());
  }
}

void Store::save_annotations(const std::string& id, const ingest::AnnotationSet& set) {
  const auto dir = video_dir(id);
  std::filesystem::create_directories(dir);
  write_file_atomic(coco_path(id), ingest::serialize_coco(set) + "\n");
}

std::mutex& Store::video_mutex(const std::string& id) {
  std::lock_guard lock(map_mutex_);
  auto& slot = video_mutexes_[id];
  if (!slot) slot = std::make_unique<std::mutex>();
  return *slot;
}

}  // namespace tennis::rallystore
