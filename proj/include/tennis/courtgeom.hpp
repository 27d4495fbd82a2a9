#pragma once

#include <optional>

#include "json.hpp"
#include "tennis/taxonomy.hpp"

namespace tennis::courtgeom {

// Image-space point in pixels; y grows downward.
struct Point {
  double x = 0;
  double y = 0;
  bool operator==(const Point&) const = default;
};

using AnchorPoint = Point;

// Axis-aligned box in image pixels, COCO convention (top-left corner + size).
struct BBox {
  double x = 0;
  double y = 0;
  double w = 0;
  double h = 0;
  bool operator==(const BBox&) const = default;
};

enum class DeuceSide { CameraRight, CameraLeft };

// Which image half holds the near team's deuce court. The far team's deuce
// court is always on the opposite half.
struct CameraOrientation {
  DeuceSide near_deuce_side = DeuceSide::CameraRight;
  bool operator==(const CameraOrientation&) const = default;
};

// Net as marked by the annotator: a segment between its two posts, so tilted
// broadcast angles are handled by interpolation.
class NetGeometry {
 public:
  // Throws Error("invalid-net") unless left.x < right.x.
  NetGeometry(Point left_end, Point right_end);

  const Point& left_end() const { return left_; }
  const Point& right_end() const { return right_; }
  Point center() const;
  double line_y_at(double x) const;
  // Throws Error("invalid-net") when an endpoint lies outside the frame.
  void check_within(double frame_width, double frame_height) const;

  bool operator==(const NetGeometry&) const = default;

 private:
  Point left_;
  Point right_;
};

// Bottom-centre of the box, used as the player's foot position.
AnchorPoint anchor_point(const BBox& bbox);

bool is_near_side(const AnchorPoint& p, const NetGeometry& net);

taxonomy::CourtPosition court_position(const AnchorPoint& p, const NetGeometry& net,
                                       const CameraOrientation& cam = {});

// Persisted form: {"left": [x, y], "right": [x, y], "near_deuce_side": "camera_right"}.
struct NetConfig {
  NetGeometry net;
  CameraOrientation orientation;
  bool operator==(const NetConfig&) const = default;
};

nlohmann::json to_json(const NetConfig& config);
NetConfig net_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Point& p);
Point point_from_json(const nlohmann::json& j);
nlohmann::json to_json(const BBox& b);
BBox bbox_from_json(const nlohmann::json& j);

}  // namespace tennis::courtgeom
