#pragma once

// Rally data model and the file-backed per-video store.
//
// Layout under the data directory:
//   <data_dir>/<video_id>/record.json   VideoRecord with rallies and labels
//   <data_dir>/<video_id>/coco.json     detector annotations
//   <data_dir>/<video_id>/frames/       frame images named by zero-padded index
// Every write goes through write-then-rename, so a reader never observes a
// partially written document.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "tennis/courtgeom.hpp"
#include "tennis/ingest.hpp"
#include "tennis/taxonomy.hpp"

namespace tennis::rallystore {

using taxonomy::PlayerProfile;
using taxonomy::PlayerRole;
using taxonomy::ShotLabel;
using taxonomy::ValidationReport;

enum class VideoSource { Professional, NCAA, Other };
enum class LabelSource { Generated, Confirmed };

struct FieldProvenance {
  std::string predictor;  // random, posegcn, remote, rule, geometry, annotator
  double confidence = 1.0;
  bool operator==(const FieldProvenance&) const = default;
};

// Keyed by label field name (court, side, shot_type, ...).
using Provenance = std::map<std::string, FieldProvenance>;

struct HittingMoment {
  std::int64_t frame = 0;
  PlayerRole hitter = PlayerRole::P1;
  courtgeom::AnchorPoint anchor;
  std::optional<ShotLabel> label;
  LabelSource label_source = LabelSource::Generated;
  // Last machine-generated label, kept after confirmation for evaluation.
  std::optional<ShotLabel> generated;
  Provenance provenance;
  bool operator==(const HittingMoment&) const = default;
};

struct Rally {
  std::int64_t id = 0;
  std::int64_t start_frame = 0;
  std::optional<std::int64_t> end_frame;
  std::vector<HittingMoment> hits;
  std::optional<courtgeom::Point> end_ball_position;

  bool ended() const { return end_frame.has_value(); }
  bool operator==(const Rally&) const = default;
};

struct VideoRecord {
  std::string id;
  std::string title;
  VideoSource source = VideoSource::Other;
  std::int64_t frame_count = 0;
  std::string frame_directory;
  std::array<PlayerProfile, 4> players;
  std::optional<courtgeom::NetConfig> net;
  std::vector<Rally> rallies;
  std::int64_t next_rally_id = 1;

  Rally& rally(std::int64_t rally_id);
  const Rally& rally(std::int64_t rally_id) const;
  const PlayerProfile& profile(PlayerRole role) const;

  bool operator==(const VideoRecord&) const = default;
};

// New record with four placeholder profiles ("Player 1".."Player 4").
// Throws Error("invalid-video") unless frame_count > 0 and the id is a safe
// path component.
VideoRecord make_video(std::string id, std::string title, VideoSource source,
                       std::int64_t frame_count, std::string frame_directory);

// Requires exactly one profile per role with a non-empty description.
void set_players(VideoRecord& video, const std::vector<PlayerProfile>& profiles);

// Errors: "frame-range", "overlap".
Rally& create_rally(VideoRecord& video, std::int64_t start_frame);
// Errors: "unknown-rally", "invalid-span", "frame-range", "overlap",
// "hit-out-of-span".
Rally& end_rally(VideoRecord& video, std::int64_t rally_id, std::int64_t end_frame,
                 std::optional<courtgeom::Point> ball_position = std::nullopt);
// Replaces a rally's span; same errors as end_rally.
Rally& update_rally_span(VideoRecord& video, std::int64_t rally_id, std::int64_t start_frame,
                         std::optional<std::int64_t> end_frame,
                         std::optional<courtgeom::Point> ball_position);
void delete_rally(VideoRecord& video, std::int64_t rally_id);

// Inserts the hit in frame order. Errors: "hit-out-of-span", "duplicate-hit".
// The returned report carries "team-alternation" warnings.
ValidationReport add_hitting_moment(VideoRecord& video, Rally& rally, std::int64_t frame,
                                    PlayerRole hitter, courtgeom::AnchorPoint anchor);

// Warnings for consecutive hits by the same team.
ValidationReport check_alternation(const Rally& rally);

// Structural checks plus validate_shot for every labelled hit.
ValidationReport validate_rally(const Rally& rally, const std::array<PlayerProfile, 4>& profiles);

// Records a label on a hit. A confirmed label is never replaced by a
// generated one (Error "confirmed-label"). Provenance describes generated
// labels and is ignored for confirmed ones.
void set_label(HittingMoment& hit, const ShotLabel& label, LabelSource source,
               Provenance provenance = {});

// Stores a fresh prediction. It becomes the hit's label unless the hit is
// already confirmed; the prediction itself is always kept for evaluation.
void record_generated(HittingMoment& hit, const ShotLabel& label, Provenance provenance);

std::string_view to_token(VideoSource source);
std::string_view to_token(LabelSource source);
VideoSource video_source_from_token(std::string_view token);

nlohmann::json to_json(const VideoRecord& video);
VideoRecord video_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Rally& rally);
nlohmann::json to_json(const HittingMoment& hit);

bool is_valid_video_id(std::string_view id);

class Store {
 public:
  explicit Store(std::filesystem::path data_dir);

  const std::filesystem::path& data_dir() const { return data_dir_; }
  std::filesystem::path video_dir(const std::string& id) const;
  std::filesystem::path record_path(const std::string& id) const;
  std::filesystem::path coco_path(const std::string& id) const;
  std::filesystem::path frames_dir(const std::string& id) const;
  static std::string frame_file_name(std::int64_t frame_index);

  std::vector<std::string> list_videos() const;
  bool exists(const std::string& id) const;
  // Unused id derived from the title.
  std::string allocate_id(const std::string& title) const;

  // Errors: "unknown-video", "corrupt-store", "io".
  VideoRecord load_video(const std::string& id) const;
  void save_video(const VideoRecord& video);
  // Deletes the video directory with everything in it. Error "unknown-video".
  void remove_video(const std::string& id);

  std::optional<ingest::AnnotationSet> load_annotations(const std::string& id) const;
  void save_annotations(const std::string& id, const ingest::AnnotationSet& set);

  // Serialised read-modify-write of one video. The callback edits a copy; if
  // it throws, nothing is written.
  template <typename F>
  VideoRecord mutate(const std::string& id, F&& fn) {
    std::lock_guard lock(video_mutex(id));
    VideoRecord video = load_video(id);
    fn(video);
    save_video(video);
    return video;
  }

  // Exclusive lock used by mutate; exposed for callers that touch several
  // files of one video at once.
  std::mutex& video_mutex(const std::string& id);

 private:
  std::filesystem::path data_dir_;
  std::mutex map_mutex_;
  std::unordered_map<std::string, std::unique_ptr<std::mutex>> video_mutexes_;
};

}  // namespace tennis::rallystore
