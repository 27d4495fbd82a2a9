#pragma once

// Fixtures shared by the unit tests and the acceptance runner.

#include <cstdint>
#include <filesystem>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "tennis/evalkit.hpp"
#include "tennis/ingest.hpp"
#include "tennis/posegcn.hpp"
#include "tennis/rallystore.hpp"
#include "tennis/taxonomy.hpp"

namespace tennis::fixtures {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "tennis");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// Rule oracle written straight from the annotation guide, sharing nothing
// with the library except the enum types it is fed.
namespace oracle {

// Groundstroke directions for a non-serve; `hand` is "left", "right" or
// "unknown".
std::set<std::string> rally_directions(const std::string& hand, bool deuce, bool forehand);
std::set<std::string> directions(taxonomy::ShotType type, taxonomy::Handedness hand,
                                 taxonomy::CourtPosition court, taxonomy::ShotSide side);
std::set<std::string> formations(taxonomy::ShotType type);
// True iff the label has no rule violation at this ordinal.
bool label_ok(const taxonomy::ShotLabel& label, taxonomy::Handedness hand, std::size_t ordinal,
              bool is_last);
// Independent token spelling of every field.
std::string token(const taxonomy::ShotLabel& label);

}  // namespace oracle

// Every ShotLabel in the cross product of court, side, type, direction,
// formation and outcome (4704 labels), hitter P1.
std::vector<taxonomy::ShotLabel> all_labels();

// Plausible standing pose inside the box, keypoints as 51 numbers.
std::vector<double> synthetic_keypoints(const courtgeom::BBox& box, std::mt19937_64& rng);

// Net across a 1280x720 frame at y = 360; near players stand below it.
courtgeom::NetConfig standard_net();

struct SyntheticVideo {
  rallystore::VideoRecord record;
  ingest::AnnotationSet annotations;
};

struct SyntheticOptions {
  int rallies = 3;
  int min_hits = 1;
  int max_hits = 6;
  // Probability that a detection is dropped from a frame.
  double dropout = 0.0;
  bool with_net = true;
};

// Ended rallies with alternating-team hitters, detections of all four players
// on every frame of every rally, random handedness.
SyntheticVideo synthetic_video(const std::string& id, std::uint64_t seed,
                               const SyntheticOptions& options = {});

// Same, returning the record only and writing both files into the store.
rallystore::VideoRecord install_synthetic(rallystore::Store& store, const std::string& id,
                                          std::uint64_t seed,
                                          const SyntheticOptions& options = {});

// Assigns a legal label to every hit and marks it confirmed. Labels are
// drawn with the oracle so the fixture does not lean on the library rules.
void confirm_legal_labels(rallystore::VideoRecord& video, std::uint64_t seed);

// Record exercising every persisted field: open and ended rallies, ball
// positions, confirmed and generated labels with provenance.
rallystore::VideoRecord random_record(std::uint64_t seed);

// Two-class pose set. Class 1 raises the right wrist above the head; class 0
// keeps it at the hip. Labels alternate 0, 1, 0, ...
posegcn::Sample separable_sample(std::mt19937_64& rng, int label, bool two_poses);
std::vector<posegcn::Sample> separable_set(std::uint64_t seed, int n, bool two_poses);

// Rosenblatt perceptron on the raw keypoint numbers; converging to zero
// mistakes certifies the set is linearly separable.
bool perceptron_separates(const std::vector<posegcn::Sample>& set, int max_passes = 1000);

// One pose-graph checkpoint per labelling task under `models_dir`, trained
// for a few epochs on confirmed synthetic labels. Formation and direction
// use two poses.
void write_task_checkpoints(const std::filesystem::path& models_dir);

struct LayoutVideo {
  std::string id;
  std::string source;  // "professional" or "ncaa"
  bool held_out = false;
  int events = 0;
};

// The published dataset: three professional and three NCAA train/val videos
// plus one held-out test video per source.
const std::vector<LayoutVideo>& eight_video_layout();
std::vector<evalkit::EventRef> layout_events();
std::vector<std::string> layout_holdouts();

}  // namespace tennis::fixtures
