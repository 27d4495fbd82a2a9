#pragma once

// COCO-style detector output: player boxes and 17-keypoint poses per frame,
// plus the per-frame/per-player index the rest of the engine reads from.

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "tennis/courtgeom.hpp"
#include "tennis/taxonomy.hpp"

namespace tennis::ingest {

using taxonomy::Handedness;
using taxonomy::PlayerRole;

inline constexpr int kNumKeypoints = 17;
inline constexpr int kKeypointValues = kNumKeypoints * 3;

// COCO keypoint order.
enum Keypoint : int {
  kNose = 0,
  kLeftEye,
  kRightEye,
  kLeftEar,
  kRightEar,
  kLeftShoulder,
  kRightShoulder,
  kLeftElbow,
  kRightElbow,
  kLeftWrist,
  kRightWrist,
  kLeftHip,
  kRightHip,
  kLeftKnee,
  kRightKnee,
  kLeftAnkle,
  kRightAnkle,
};

struct Image {
  std::int64_t id = 0;
  std::string file_name;
  int width = 0;
  int height = 0;
  std::int64_t frame_index = 0;
  nlohmann::json extra = nlohmann::json::object();
  bool operator==(const Image&) const = default;
};

// One category per player, named by the annotator's visual description.
struct Category {
  std::int64_t id = 0;
  std::string name;
  std::optional<PlayerRole> role;
  Handedness handedness = Handedness::Unknown;
  nlohmann::json extra = nlohmann::json::object();
  bool operator==(const Category&) const = default;
};

struct Annotation {
  std::int64_t id = 0;
  std::int64_t image_id = 0;
  std::int64_t category_id = 0;
  courtgeom::BBox bbox;
  // 17 x (x, y, confidence) when present.
  std::optional<std::vector<double>> keypoints;
  std::optional<double> score;
  nlohmann::json extra = nlohmann::json::object();
  bool operator==(const Annotation&) const = default;
};

struct AnnotationSet {
  std::vector<Image> images;
  std::vector<Category> categories;
  std::vector<Annotation> annotations;
  // Top-level keys other than images/categories/annotations.
  nlohmann::json extra = nlohmann::json::object();

  const Image* find_image(std::int64_t id) const;
  const Category* find_category(std::int64_t id) const;
  const Annotation* find_annotation(std::int64_t id) const;
  std::optional<Category> category_for(PlayerRole role) const;

  bool operator==(const AnnotationSet&) const = default;
};

// Error codes: "malformed-json", "schema", "dangling-reference",
// "keypoint-arity", "keypoint-range", "duplicate-id", "duplicate-role",
// "degenerate-box".
AnnotationSet parse_coco(std::string_view document);
AnnotationSet coco_from_json(const nlohmann::json& document);
nlohmann::json to_json(const AnnotationSet& set);
std::string serialize_coco(const AnnotationSet& set);

// Sidecar players.json: [{"category_id", "role", "description", "handedness"}].
// Assigns roles/handedness to categories and renames them by description.
void apply_players(AnnotationSet& set, const nlohmann::json& players);

// Parses independent per-frame COCO documents on `threads` workers and merges
// them. The result does not depend on the number of threads or on document
// order.
AnnotationSet ingest_frame_documents(std::span<const std::string> documents,
                                     unsigned threads);

class FrameIndex {
 public:
  using Slots = std::array<std::optional<std::int64_t>, 4>;  // annotation id per role

  // Throws Error("duplicate-detection") when a role appears twice in one frame
  // and Error("duplicate-frame") when two images share a frame index.
  static FrameIndex build(const AnnotationSet& set);

  std::size_t frame_count() const { return frames_.size(); }
  bool has_frame(std::int64_t frame) const { return frames_.count(frame) != 0; }
  std::optional<std::int64_t> find(std::int64_t frame, PlayerRole role) const;
  double coverage(PlayerRole role) const;
  std::vector<std::int64_t> missing(PlayerRole role) const;
  const std::map<std::int64_t, Slots>& frames() const { return frames_; }

  bool operator==(const FrameIndex&) const = default;

 private:
  std::map<std::int64_t, Slots> frames_;
};

struct FrameSize {
  int width = 0;
  int height = 0;
};

// Enlarged crop region around a player. Consumers resize the crop to
// resize_width x resize_height.
struct CropRegion {
  courtgeom::BBox box;
  int resize_width = 224;
  int resize_height = 224;
};

CropRegion crop_with_margin(const courtgeom::BBox& bbox, FrameSize frame, double factor = 2.0);

using PoseMatrix = Eigen::Matrix<double, kNumKeypoints, 3, Eigen::RowMajor>;

struct PoseFeatures {
  PoseMatrix values = PoseMatrix::Zero();
  // Set when the detection had no keypoints; values are then all zero.
  bool keypoints_missing = false;
};

// Throws Error("missing-detection") when the role has no annotation in frame.
PoseFeatures pose_features(const AnnotationSet& set, const FrameIndex& index,
                           std::int64_t frame, PlayerRole role);

// Box of the role's detection in a frame, if any.
std::optional<courtgeom::BBox> detection_box(const AnnotationSet& set, const FrameIndex& index,
                                             std::int64_t frame, PlayerRole role);

}  // namespace tennis::ingest
