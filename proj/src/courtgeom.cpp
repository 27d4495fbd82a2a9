#include "tennis/courtgeom.hpp"

#include <cmath>
#include <string>

namespace tennis::courtgeom {

NetGeometry::NetGeometry(Point left_end, Point right_end) : left_(left_end), right_(right_end) {
  if (!std::isfinite(left_.x) || !std::isfinite(left_.y) || !std::isfinite(right_.x) ||
      !std::isfinite(right_.y)) {
    throw Error("invalid-net", "net endpoints must be finite");
  }
  if (!(left_.x < right_.x)) {
    throw Error("invalid-net", "net left end must lie left of the right end");
  }
}

Point NetGeometry::center() const {
  return {(left_.x + right_.x) / 2.0, (left_.y + right_.y) / 2.0};
}

double NetGeometry::line_y_at(double x) const {
  const double t = (x - left_.x) / (right_.x - left_.x);
  return left_.y + t * (right_.y - left_.y);
}

void NetGeometry::check_within(double frame_width, double frame_height) const {
  auto inside = [&](const Point& p) {
    return p.x >= 0 && p.y >= 0 && p.x <= frame_width && p.y <= frame_height;
  };
  if (!inside(left_) || !inside(right_)) {
    throw Error("invalid-net", "net endpoints must lie within the frame");
  }
}

AnchorPoint anchor_point(const BBox& bbox) {
  if (!(bbox.w > 0) || !(bbox.h > 0)) {
    throw Error("degenerate-box", "bounding box needs positive width and height");
  }
  return {bbox.x + bbox.w / 2.0, bbox.y + bbox.h};
}

bool is_near_side(const AnchorPoint& p, const NetGeometry& net) {
  return p.y >= net.line_y_at(p.x);
}

taxonomy::CourtPosition court_position(const AnchorPoint& p, const NetGeometry& net,
                                       const CameraOrientation& cam) {
  const bool near = is_near_side(p, net);
  const double cx = net.center().x;
  // Seen from the camera, the near deuce court and far deuce court sit on
  // opposite image halves. Ties on the centre line resolve to deuce.
  const bool near_deuce_right = cam.near_deuce_side == DeuceSide::CameraRight;
  const bool deuce_on_right = near ? near_deuce_right : !near_deuce_right;
  const bool deuce = p.x == cx || ((p.x > cx) == deuce_on_right);
  return taxonomy::make_court(near, deuce);
}

nlohmann::json to_json(const Point& p) { return nlohmann::json::array({p.x, p.y}); }

Point point_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw Error("schema", "point must be a [x, y] number pair");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

nlohmann::json to_json(const BBox& b) { return nlohmann::json::array({b.x, b.y, b.w, b.h}); }

BBox bbox_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4) throw Error("schema", "bbox must be [x, y, w, h]");
  for (const auto& v : j) {
    if (!v.is_number()) throw Error("schema", "bbox must be [x, y, w, h]");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

nlohmann::json to_json(const NetConfig& config) {
  return {{"left", to_json(config.net.left_end())},
          {"right", to_json(config.net.right_end())},
          {"near_deuce_side", config.orientation.near_deuce_side == DeuceSide::CameraRight
                                  ? "camera_right"
                                  : "camera_left"}};
}

NetConfig net_config_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("left") || !j.contains("right")) {
    throw Error("schema", "net needs 'left' and 'right' endpoints");
  }
  CameraOrientation cam;
  if (j.contains("near_deuce_side")) {
    const auto& side = j.at("near_deuce_side");
    if (side == "camera_right") {
      cam.near_deuce_side = DeuceSide::CameraRight;
    } else if (side == "camera_left") {
      cam.near_deuce_side = DeuceSide::CameraLeft;
    } else {
      throw Error("schema", "near_deuce_side must be camera_right or camera_left");
    }
  }
  return {NetGeometry(point_from_json(j.at("left")), point_from_json(j.at("right"))), cam};
}

}  // namespace tennis::courtgeom
