#include "tennis/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <thread>
#include <unordered_set>

namespace tennis::ingest {

namespace {

using nlohmann::json;

const json& require(const json& obj, const char* key, const char* where) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw Error("schema", std::string(where) + " is missing '" + key + "'");
  }
  return obj.at(key);
}

std::int64_t require_int(const json& obj, const char* key, const char* where) {
  const auto& v = require(obj, key, where);
  if (!v.is_number_integer()) {
    throw Error("schema", std::string(where) + "." + key + " must be an integer");
  }
  return v.get<std::int64_t>();
}

json extras(const json& obj, std::initializer_list<const char*> known) {
  json out = json::object();
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find_if(known.begin(), known.end(), [&](const char* k) { return it.key() == k; }) ==
        known.end()) {
      out[it.key()] = it.value();
    }
  }
  return out;
}

void put_extras(json& out, const json& extra) {
  for (auto it = extra.begin(); it != extra.end(); ++it) out[it.key()] = it.value();
}

Image parse_image(const json& j) {
  if (!j.is_object()) throw Error("schema", "image entries must be objects");
  Image img;
  img.id = require_int(j, "id", "image");
  const auto& name = require(j, "file_name", "image");
  if (!name.is_string()) throw Error("schema", "image.file_name must be a string");
  img.file_name = name.get<std::string>();
  img.width = static_cast<int>(require_int(j, "width", "image"));
  img.height = static_cast<int>(require_int(j, "height", "image"));
  if (img.width <= 0 || img.height <= 0) {
    throw Error("schema", "image " + std::to_string(img.id) + " needs positive dimensions");
  }
  img.frame_index = j.contains("frame_index") ? require_int(j, "frame_index", "image") : img.id;
  img.extra = extras(j, {"id", "file_name", "width", "height", "frame_index"});
  return img;
}

Category parse_category(const json& j) {
  if (!j.is_object()) throw Error("schema", "category entries must be objects");
  Category c;
  c.id = require_int(j, "id", "category");
  const auto& name = require(j, "name", "category");
  if (!name.is_string()) throw Error("schema", "category.name must be a string");
  c.name = name.get<std::string>();
  if (j.contains("role") && !j.at("role").is_null()) {
    if (!j.at("role").is_string()) throw Error("schema", "category.role must be a string");
    c.role = taxonomy::parse_token<PlayerRole>(j.at("role").get<std::string>(), "player role");
  }
  if (j.contains("handedness")) {
    if (!j.at("handedness").is_string()) {
      throw Error("schema", "category.handedness must be a string");
    }
    c.handedness =
        taxonomy::parse_token<Handedness>(j.at("handedness").get<std::string>(), "handedness");
  }
  c.extra = extras(j, {"id", "name", "role", "handedness"});
  return c;
}

Annotation parse_annotation(const json& j) {
  if (!j.is_object()) throw Error("schema", "annotation entries must be objects");
  Annotation a;
  a.id = require_int(j, "id", "annotation");
  a.image_id = require_int(j, "image_id", "annotation");
  a.category_id = require_int(j, "category_id", "annotation");
  a.bbox = courtgeom::bbox_from_json(require(j, "bbox", "annotation"));
  if (j.contains("keypoints") && !j.at("keypoints").is_null()) {
    const auto& kp = j.at("keypoints");
    if (!kp.is_array()) throw Error("schema", "annotation.keypoints must be an array");
    if (kp.size() != kKeypointValues) {
      throw Error("keypoint-arity", "annotation " + std::to_string(a.id) + " has " +
                                        std::to_string(kp.size()) + " keypoint numbers, expected " +
                                        std::to_string(kKeypointValues));
    }
    std::vector<double> values;
    values.reserve(kKeypointValues);
    for (const auto& v : kp) {
      if (!v.is_number()) throw Error("schema", "keypoints must be numbers");
      values.push_back(v.get<double>());
    }
    for (int k = 0; k < kNumKeypoints; ++k) {
      const double conf = values[k * 3 + 2];
      if (!(conf >= 0.0 && conf <= 1.0)) {
        throw Error("keypoint-range", "annotation " + std::to_string(a.id) +
                                          " has keypoint confidence outside [0, 1]");
      }
    }
    a.keypoints = std::move(values);
  }
  if (j.contains("score") && !j.at("score").is_null()) {
    if (!j.at("score").is_number()) throw Error("schema", "annotation.score must be a number");
    const double s = j.at("score").get<double>();
    if (!(s >= 0.0 && s <= 1.0)) {
      throw Error("schema", "annotation " + std::to_string(a.id) + " score outside [0, 1]");
    }
    a.score = s;
  }
  a.extra = extras(j, {"id", "image_id", "category_id", "bbox", "keypoints", "score"});
  return a;
}

template <typename T>
void check_unique_ids(const std::vector<T>& items, const char* what) {
  std::unordered_set<std::int64_t> seen;
  for (const auto& item : items) {
    if (!seen.insert(item.id).second) {
      throw Error("duplicate-id", std::string("duplicate ") + what + " id " +
                                      std::to_string(item.id));
    }
  }
}

// Reference checks, bbox clamping and role uniqueness.
void finalize(AnnotationSet& set) {
  check_unique_ids(set.images, "image");
  check_unique_ids(set.categories, "category");
  check_unique_ids(set.annotations, "annotation");

  std::set<PlayerRole> roles;
  for (const auto& c : set.categories) {
    if (c.role && !roles.insert(*c.role).second) {
      throw Error("duplicate-role", "two categories claim role " +
                                        std::string(taxonomy::to_token(*c.role)));
    }
  }

  std::unordered_map<std::int64_t, const Image*> images;
  for (const auto& img : set.images) images[img.id] = &img;
  std::unordered_set<std::int64_t> categories;
  for (const auto& c : set.categories) categories.insert(c.id);

  for (auto& a : set.annotations) {
    auto img = images.find(a.image_id);
    if (img == images.end()) {
      throw Error("dangling-reference", "annotation " + std::to_string(a.id) +
                                            " references missing image " +
                                            std::to_string(a.image_id));
    }
    if (!categories.count(a.category_id)) {
      throw Error("dangling-reference", "annotation " + std::to_string(a.id) +
                                            " references missing category " +
                                            std::to_string(a.category_id));
    }
    const double w = img->second->width;
    const double h = img->second->height;
    const double x0 = std::clamp(a.bbox.x, 0.0, w);
    const double y0 = std::clamp(a.bbox.y, 0.0, h);
    const double x1 = std::clamp(a.bbox.x + a.bbox.w, 0.0, w);
    const double y1 = std::clamp(a.bbox.y + a.bbox.h, 0.0, h);
    if (!(x1 > x0) || !(y1 > y0)) {
      throw Error("degenerate-box",
                  "annotation " + std::to_string(a.id) + " box is empty inside its image");
    }
    // Boxes already inside the image keep their exact values.
    if (x0 != a.bbox.x || x1 != a.bbox.x + a.bbox.w) {
      a.bbox.x = x0;
      a.bbox.w = x1 - x0;
    }
    if (y0 != a.bbox.y || y1 != a.bbox.y + a.bbox.h) {
      a.bbox.y = y0;
      a.bbox.h = y1 - y0;
    }
  }
}

template <typename T, typename F>
std::vector<T> parse_list(const json& doc, const char* key, F parse) {
  std::vector<T> out;
  if (!doc.contains(key)) return out;
  const auto& arr = doc.at(key);
  if (!arr.is_array()) throw Error("schema", std::string("'") + key + "' must be an array");
  out.reserve(arr.size());
  for (const auto& item : arr) out.push_back(parse(item));
  return out;
}

}  // namespace

const Image* AnnotationSet::find_image(std::int64_t id) const {
  for (const auto& img : images) {
    if (img.id == id) return &img;
  }
  return nullptr;
}

const Category* AnnotationSet::find_category(std::int64_t id) const {
  for (const auto& c : categories) {
    if (c.id == id) return &c;
  }
  return nullptr;
}

const Annotation* AnnotationSet::find_annotation(std::int64_t id) const {
  auto it = std::lower_bound(annotations.begin(), annotations.end(), id,
                             [](const Annotation& a, std::int64_t v) { return a.id < v; });
  if (it != annotations.end() && it->id == id) return &*it;
  // Not sorted by id; fall back to a scan.
  for (const auto& a : annotations) {
    if (a.id == id) return &a;
  }
  return nullptr;
}

std::optional<Category> AnnotationSet::category_for(PlayerRole role) const {
  for (const auto& c : categories) {
    if (c.role == role) return c;
  }
  return std::nullopt;
}

AnnotationSet coco_from_json(const json& doc) {
  if (!doc.is_object()) throw Error("schema", "COCO document must be a JSON object");
  AnnotationSet set;
  set.images = parse_list<Image>(doc, "images", parse_image);
  set.categories = parse_list<Category>(doc, "categories", parse_category);
  set.annotations = parse_list<Annotation>(doc, "annotations", parse_annotation);
  set.extra = extras(doc, {"images", "categories", "annotations"});
  finalize(set);
  return set;
}

AnnotationSet parse_coco(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw Error("malformed-json", std::string("COCO document: ") + e.what());
  }
  return coco_from_json(doc);
}

json to_json(const AnnotationSet& set) {
  json doc = json::object();
  put_extras(doc, set.extra);
  auto images = json::array();
  for (const auto& img : set.images) {
    json j = json::object();
    put_extras(j, img.extra);
    j["id"] = img.id;
    j["file_name"] = img.file_name;
    j["width"] = img.width;
    j["height"] = img.height;
    j["frame_index"] = img.frame_index;
    images.push_back(std::move(j));
  }
  auto categories = json::array();
  for (const auto& c : set.categories) {
    json j = json::object();
    put_extras(j, c.extra);
    j["id"] = c.id;
    j["name"] = c.name;
    if (c.role) j["role"] = taxonomy::to_token(*c.role);
    j["handedness"] = taxonomy::to_token(c.handedness);
    categories.push_back(std::move(j));
  }
  auto annotations = json::array();
  for (const auto& a : set.annotations) {
    json j = json::object();
    put_extras(j, a.extra);
    j["id"] = a.id;
    j["image_id"] = a.image_id;
    j["category_id"] = a.category_id;
    j["bbox"] = courtgeom::to_json(a.bbox);
    if (a.keypoints) j["keypoints"] = *a.keypoints;
    if (a.score) j["score"] = *a.score;
    annotations.push_back(std::move(j));
  }
  doc["images"] = std::move(images);
  doc["categories"] = std::move(categories);
  doc["annotations"] = std::move(annotations);
  return doc;
}

std::string serialize_coco(const AnnotationSet& set) { return to_json(set).dump(2); }

void apply_players(AnnotationSet& set, const json& players) {
  if (!players.is_array()) throw Error("schema", "players sidecar must be an array");
  for (const auto& entry : players) {
    const auto id = require_int(entry, "category_id", "player");
    auto profile = taxonomy::profile_from_json(entry);
    auto it = std::find_if(set.categories.begin(), set.categories.end(),
                           [&](const Category& c) { return c.id == id; });
    if (it == set.categories.end()) {
      throw Error("dangling-reference",
                  "players sidecar references missing category " + std::to_string(id));
    }
    it->role = profile.role;
    it->handedness = profile.handedness;
    it->name = profile.description;
  }
  std::set<PlayerRole> roles;
  for (const auto& c : set.categories) {
    if (c.role && !roles.insert(*c.role).second) {
      throw Error("duplicate-role", "two categories claim role " +
                                        std::string(taxonomy::to_token(*c.role)));
    }
  }
}

AnnotationSet ingest_frame_documents(std::span<const std::string> documents, unsigned threads) {
  threads = std::max(1u, threads);
  std::vector<std::optional<AnnotationSet>> parsed(documents.size());
  std::vector<std::exception_ptr> failures(documents.size());
  {
    std::vector<std::jthread> workers;
    for (unsigned t = 0; t < threads; ++t) {
      workers.emplace_back([&, t] {
        for (std::size_t i = t; i < documents.size(); i += threads) {
          try {
            parsed[i] = parse_coco(documents[i]);
          } catch (...) {
            failures[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }

  AnnotationSet merged;
  std::map<std::int64_t, Category> categories;
  for (auto& part : parsed) {
    for (auto& c : part->categories) {
      auto [it, inserted] = categories.emplace(c.id, c);
      if (!inserted && !(it->second == c)) {
        throw Error("schema", "frame documents disagree on category " + std::to_string(c.id));
      }
    }
    for (auto it = part->extra.begin(); it != part->extra.end(); ++it) {
      if (merged.extra.contains(it.key()) && merged.extra[it.key()] != it.value()) {
        throw Error("schema", "frame documents disagree on top-level key '" + it.key() + "'");
      }
      merged.extra[it.key()] = it.value();
    }
    std::move(part->images.begin(), part->images.end(), std::back_inserter(merged.images));
    std::move(part->annotations.begin(), part->annotations.end(),
              std::back_inserter(merged.annotations));
  }
  for (auto& [id, c] : categories) merged.categories.push_back(std::move(c));
  std::sort(merged.images.begin(), merged.images.end(),
            [](const Image& a, const Image& b) { return a.id < b.id; });
  std::sort(merged.annotations.begin(), merged.annotations.end(),
            [](const Annotation& a, const Annotation& b) { return a.id < b.id; });
  finalize(merged);
  return merged;
}

FrameIndex FrameIndex::build(const AnnotationSet& set) {
  FrameIndex index;
  std::unordered_map<std::int64_t, std::int64_t> frame_of_image;
  for (const auto& img : set.images) {
    if (!index.frames_.emplace(img.frame_index, Slots{}).second) {
      throw Error("duplicate-frame",
                  "two images share frame index " + std::to_string(img.frame_index));
    }
    frame_of_image[img.id] = img.frame_index;
  }
  std::unordered_map<std::int64_t, PlayerRole> role_of_category;
  for (const auto& c : set.categories) {
    if (c.role) role_of_category[c.id] = *c.role;
  }
  for (const auto& a : set.annotations) {
    auto role = role_of_category.find(a.category_id);
    if (role == role_of_category.end()) continue;
    auto frame = frame_of_image.find(a.image_id);
    if (frame == frame_of_image.end()) {
      throw Error("dangling-reference", "annotation " + std::to_string(a.id) +
                                            " references missing image " +
                                            std::to_string(a.image_id));
    }
    auto& slot = index.frames_[frame->second][static_cast<std::size_t>(role->second)];
    if (slot) {
      throw Error("duplicate-detection",
                  "frame " + std::to_string(frame->second) + " has two detections for " +
                      std::string(taxonomy::to_token(role->second)));
    }
    slot = a.id;
  }
  return index;
}

std::optional<std::int64_t> FrameIndex::find(std::int64_t frame, PlayerRole role) const {
  auto it = frames_.find(frame);
  if (it == frames_.end()) return std::nullopt;
  return it->second[static_cast<std::size_t>(role)];
}

double FrameIndex::coverage(PlayerRole role) const {
  if (frames_.empty()) return 0.0;
  std::size_t present = 0;
  for (const auto& [frame, slots] : frames_) present += slots[static_cast<std::size_t>(role)].has_value();
  return static_cast<double>(present) / static_cast<double>(frames_.size());
}

std::vector<std::int64_t> FrameIndex::missing(PlayerRole role) const {
  std::vector<std::int64_t> out;
  for (const auto& [frame, slots] : frames_) {
    if (!slots[static_cast<std::size_t>(role)]) out.push_back(frame);
  }
  return out;
}

CropRegion crop_with_margin(const courtgeom::BBox& bbox, FrameSize frame, double factor) {
  if (!(factor >= 1.0)) throw Error("invalid-argument", "crop margin factor must be >= 1");
  if (!(bbox.w > 0) || !(bbox.h > 0)) {
    throw Error("degenerate-box", "bounding box needs positive width and height");
  }
  const double cx = bbox.x + bbox.w / 2.0;
  const double cy = bbox.y + bbox.h / 2.0;
  const double w = bbox.w * factor;
  const double h = bbox.h * factor;
  const double x0 = std::clamp(cx - w / 2.0, 0.0, static_cast<double>(frame.width));
  const double y0 = std::clamp(cy - h / 2.0, 0.0, static_cast<double>(frame.height));
  const double x1 = std::clamp(cx + w / 2.0, 0.0, static_cast<double>(frame.width));
  const double y1 = std::clamp(cy + h / 2.0, 0.0, static_cast<double>(frame.height));
  return {{x0, y0, x1 - x0, y1 - y0}};
}

PoseFeatures pose_features(const AnnotationSet& set, const FrameIndex& index, std::int64_t frame,
                           PlayerRole role) {
  const auto id = index.find(frame, role);
  if (!id) {
    throw Error("missing-detection", "no detection of " + std::string(taxonomy::to_token(role)) +
                                         " in frame " + std::to_string(frame));
  }
  const Annotation* a = set.find_annotation(*id);
  if (a == nullptr) throw Error("dangling-reference", "index refers to a missing annotation");
  PoseFeatures out;
  if (!a->keypoints) {
    out.keypoints_missing = true;
    return out;
  }
  for (int k = 0; k < kNumKeypoints; ++k) {
    for (int c = 0; c < 3; ++c) out.values(k, c) = (*a->keypoints)[k * 3 + c];
  }
  return out;
}

std::optional<courtgeom::BBox> detection_box(const AnnotationSet& set, const FrameIndex& index,
                                             std::int64_t frame, PlayerRole role) {
  const auto id = index.find(frame, role);
  if (!id) return std::nullopt;
  const Annotation* a = set.find_annotation(*id);
  if (a == nullptr) return std::nullopt;
  return a->bbox;
}

}  // namespace tennis::ingest
