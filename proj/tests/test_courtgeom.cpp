#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "tennis/courtgeom.hpp"

using namespace tennis;
using namespace tennis::courtgeom;
using taxonomy::CourtPosition;

namespace {

std::string code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

}  // namespace

TEST(CourtGeom, AnchorIsBottomCentre) {
  EXPECT_EQ(anchor_point({100, 100, 50, 80}), (Point{125, 180}));
  EXPECT_EQ(anchor_point({0, 0, 2, 2}), (Point{1, 2}));
  EXPECT_EQ(code_of([] { anchor_point({10, 10, 0, 5}); }), "degenerate-box");
  EXPECT_EQ(code_of([] { anchor_point({10, 10, 5, -1}); }), "degenerate-box");
}

TEST(CourtGeom, NetLine) {
  NetGeometry net({100, 300}, {1180, 320});
  EXPECT_EQ(net.center(), (Point{640, 310}));
  EXPECT_DOUBLE_EQ(net.line_y_at(100), 300);
  EXPECT_DOUBLE_EQ(net.line_y_at(640), 310);
  EXPECT_DOUBLE_EQ(net.line_y_at(1180), 320);
  EXPECT_EQ(code_of([] { NetGeometry({500, 300}, {400, 300}); }), "invalid-net");
  EXPECT_EQ(code_of([] { NetGeometry({500, 300}, {500, 310}); }), "invalid-net");
  EXPECT_EQ(code_of([&] { net.check_within(1000, 720); }), "invalid-net");
  EXPECT_NO_THROW(net.check_within(1280, 720));
}

TEST(CourtGeom, Quadrants) {
  NetGeometry net({100, 300}, {1180, 320});
  EXPECT_EQ(court_position({900, 600}, net), CourtPosition::NearDeuce);
  EXPECT_EQ(court_position({400, 150}, net), CourtPosition::FarDeuce);
  EXPECT_EQ(court_position({400, 600}, net), CourtPosition::NearAdvantage);
  EXPECT_EQ(court_position({900, 150}, net), CourtPosition::FarAdvantage);
  EXPECT_EQ(court_position(net.center(), net), CourtPosition::NearDeuce);

  const CameraOrientation flipped{DeuceSide::CameraLeft};
  EXPECT_EQ(court_position({900, 600}, net, flipped), CourtPosition::NearAdvantage);
  EXPECT_EQ(court_position({400, 150}, net, flipped), CourtPosition::FarAdvantage);
}

TEST(CourtGeom, NearSideTieBreak) {
  NetGeometry net({0, 400}, {1000, 400});
  EXPECT_TRUE(is_near_side({300, 401}, net));
  EXPECT_FALSE(is_near_side({300, 399}, net));
  EXPECT_TRUE(is_near_side({300, 400}, net));
  // Tilted net: the comparison follows the segment, not a horizontal line.
  NetGeometry tilted({0, 300}, {1000, 500});
  EXPECT_FALSE(is_near_side({900, 470}, tilted));
  EXPECT_TRUE(is_near_side({100, 330}, tilted));
}

TEST(CourtGeom, Properties) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0, 1000);
  std::uniform_real_distribution<double> scale(0.25, 8);
  for (int i = 0; i < 2000; ++i) {
    const double lx = u(rng), rx = lx + 1 + u(rng);
    NetGeometry net({lx, u(rng)}, {rx, u(rng)});
    const Point p{u(rng) * 2, u(rng)};
    const auto c = court_position(p, net);
    EXPECT_EQ(taxonomy::is_near(c), is_near_side(p, net));

    const auto flipped = court_position(p, net, {DeuceSide::CameraLeft});
    EXPECT_EQ(taxonomy::is_near(flipped), taxonomy::is_near(c));
    if (p.x != net.center().x) {
      EXPECT_NE(taxonomy::is_deuce(flipped), taxonomy::is_deuce(c));
    }

    // Powers of two keep the scaled comparisons exact.
    const double s = std::ldexp(1.0, static_cast<int>(std::floor(std::log2(scale(rng)))));
    NetGeometry scaled({net.left_end().x * s, net.left_end().y * s},
                       {net.right_end().x * s, net.right_end().y * s});
    EXPECT_EQ(court_position({p.x * s, p.y * s}, scaled), c);
  }
}

TEST(CourtGeom, JsonRoundTrip) {
  NetConfig cfg{NetGeometry({12.5, 300}, {1180, 321.25}), {DeuceSide::CameraLeft}};
  const auto j = to_json(cfg);
  EXPECT_EQ(j.at("near_deuce_side"), "camera_left");
  EXPECT_EQ(net_config_from_json(j), cfg);
  EXPECT_EQ(code_of([] { point_from_json(nlohmann::json::array({1})); }), "schema");
  EXPECT_EQ(bbox_from_json(to_json(BBox{1, 2, 3, 4})), (BBox{1, 2, 3, 4}));
}
