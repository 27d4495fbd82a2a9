#include "support.hpp"

#include <stdlib.h>

#include <algorithm>
#include <array>
#include <map>
#include <stdexcept>

#include "tennis/courtgeom.hpp"
#include "tennis/labelgen.hpp"

namespace tennis::fixtures {

namespace fs = std::filesystem;
using namespace taxonomy;

TempDir::TempDir(const std::string& tag) {
  std::string pattern = (fs::temp_directory_path() / (tag + "-XXXXXX")).string();
  if (::mkdtemp(pattern.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
  path_ = pattern;
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

namespace oracle {

std::set<std::string> rally_directions(const std::string& hand, bool deuce, bool forehand) {
  if (hand == "unknown") {
    auto out = rally_directions("left", deuce, forehand);
    auto right = rally_directions("right", deuce, forehand);
    out.insert(right.begin(), right.end());
    return out;
  }
  // Right-handed: advantage backhand CC/DL, forehand II/IO; deuce forehand
  // CC/DL, backhand II/IO. Left-handed: the same with the sides swapped.
  const bool crosscourt_forehand = hand == "right" ? deuce : !deuce;
  if (forehand == crosscourt_forehand) return {"cc", "dl"};
  return {"ii", "io"};
}

namespace {

std::string hand_name(Handedness h) {
  switch (h) {
    case Handedness::Left: return "left";
    case Handedness::Right: return "right";
    case Handedness::Unknown: return "unknown";
  }
  return "?";
}

bool serve_family(ShotType t) { return t == ShotType::Serve || t == ShotType::SecondServe; }

std::string direction_name(ShotDirection d) {
  static const char* names[] = {"t", "b", "w", "cc", "dl", "ii", "io"};
  return names[static_cast<int>(d)];
}

std::string formation_name(Formation f) {
  static const char* names[] = {"conventional", "i-formation", "australian", "non-serve"};
  return names[static_cast<int>(f)];
}

}  // namespace

std::set<std::string> directions(ShotType type, Handedness hand, CourtPosition court,
                                 ShotSide side) {
  if (serve_family(type)) return {"t", "b", "w"};
  const bool deuce = court == CourtPosition::NearDeuce || court == CourtPosition::FarDeuce;
  return rally_directions(hand_name(hand), deuce, side == ShotSide::Forehand);
}

std::set<std::string> formations(ShotType type) {
  if (serve_family(type)) return {"conventional", "i-formation", "australian"};
  return {"non-serve"};
}

bool label_ok(const ShotLabel& label, Handedness hand, std::size_t ordinal, bool is_last) {
  if (!directions(label.shot_type, hand, label.court, label.side)
           .count(direction_name(label.direction))) {
    return false;
  }
  if (!formations(label.shot_type).count(formation_name(label.formation))) return false;
  if (ordinal == 1 && !serve_family(label.shot_type)) return false;
  if (ordinal == 2 && label.shot_type != ShotType::Return) return false;
  if (ordinal >= 3 && (serve_family(label.shot_type) || label.shot_type == ShotType::Return)) {
    return false;
  }
  if (!is_last && label.outcome != Outcome::In) return false;
  return true;
}

std::string token(const ShotLabel& label) {
  static const char* courts[] = {"far_deuce", "far_ad", "near_deuce", "near_ad"};
  static const char* sides[] = {"forehand", "backhand"};
  static const char* types[] = {"serve", "second-serve", "return", "volley",
                                "lob",   "smash",        "swing"};
  static const char* outcomes[] = {"in", "win", "err"};
  return std::string(courts[static_cast<int>(label.court)]) + "_" +
         sides[static_cast<int>(label.side)] + "_" + types[static_cast<int>(label.shot_type)] +
         "_" + direction_name(label.direction) + "_" + formation_name(label.formation) + "_" +
         outcomes[static_cast<int>(label.outcome)];
}

}  // namespace oracle

std::vector<ShotLabel> all_labels() {
  std::vector<ShotLabel> out;
  out.reserve(4704);
  for (auto c : kCourtPositions)
    for (auto s : kShotSides)
      for (auto t : kShotTypes)
        for (auto d : kShotDirections)
          for (auto f : kFormations)
            for (auto o : kOutcomes) out.push_back({c, s, t, d, f, o, PlayerRole::P1});
  return out;
}

std::vector<double> synthetic_keypoints(const courtgeom::BBox& box, std::mt19937_64& rng) {
  // Rough standing figure in box-relative coordinates, COCO order.
  static const double base[17][2] = {
      {0.50, 0.08}, {0.46, 0.06}, {0.54, 0.06}, {0.42, 0.08}, {0.58, 0.08}, {0.35, 0.22},
      {0.65, 0.22}, {0.28, 0.38}, {0.72, 0.38}, {0.25, 0.52}, {0.75, 0.52}, {0.40, 0.55},
      {0.60, 0.55}, {0.40, 0.75}, {0.60, 0.75}, {0.40, 0.97}, {0.60, 0.97}};
  std::uniform_real_distribution<double> jitter(-0.04, 0.04);
  std::uniform_real_distribution<double> conf(0.5, 1.0);
  std::vector<double> kp;
  kp.reserve(51);
  for (const auto& p : base) {
    kp.push_back(box.x + (p[0] + jitter(rng)) * box.w);
    kp.push_back(box.y + (p[1] + jitter(rng)) * box.h);
    kp.push_back(conf(rng));
  }
  return kp;
}

courtgeom::NetConfig standard_net() {
  return {courtgeom::NetGeometry({0, 360}, {1280, 360}), {}};
}

namespace {

courtgeom::BBox player_box(bool near, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> x(80, 1140);
  if (near) {
    std::uniform_real_distribution<double> bottom(420, 700);
    const double b = bottom(rng);
    return {x(rng), b - 140, 60, 140};
  }
  std::uniform_real_distribution<double> bottom(150, 340);
  const double b = bottom(rng);
  return {x(rng), b - 80, 36, 80};
}

}  // namespace

SyntheticVideo synthetic_video(const std::string& id, std::uint64_t seed,
                               const SyntheticOptions& options) {
  std::mt19937_64 rng(seed);
  SyntheticVideo out;
  auto& set = out.annotations;

  std::vector<PlayerProfile> profiles;
  for (auto role : kPlayerRoles) {
    const auto r = static_cast<int>(role);
    const Handedness hand = kHandedness[std::uniform_int_distribution<int>(0, 2)(rng)];
    profiles.push_back({role, "player " + std::to_string(r + 1) + " description", hand});
    ingest::Category cat;
    cat.id = r + 1;
    cat.name = profiles.back().description;
    cat.role = role;
    cat.handedness = hand;
    set.categories.push_back(cat);
  }

  struct PlannedRally {
    std::int64_t start, end;
    std::vector<std::pair<std::int64_t, PlayerRole>> hits;
  };
  std::vector<PlannedRally> plan;
  std::int64_t cursor = 5;
  std::uniform_int_distribution<int> hit_count(options.min_hits, options.max_hits);
  std::uniform_int_distribution<int> gap(6, 20);
  std::uniform_int_distribution<int> tail(0, 14);
  std::uniform_int_distribution<int> coin(0, 1);
  for (int r = 0; r < options.rallies; ++r) {
    PlannedRally pr;
    pr.start = cursor;
    std::int64_t frame = cursor + std::uniform_int_distribution<int>(0, 4)(rng);
    bool near_team = coin(rng) == 1;
    const int n = hit_count(rng);
    for (int h = 0; h < n; ++h) {
      const int member = coin(rng);
      const PlayerRole hitter = near_team ? (member ? PlayerRole::P1 : PlayerRole::P2)
                                          : (member ? PlayerRole::P3 : PlayerRole::P4);
      pr.hits.emplace_back(frame, hitter);
      near_team = !near_team;
      if (h + 1 < n) frame += gap(rng);
    }
    pr.end = frame + tail(rng);
    if (pr.end == pr.start) ++pr.end;
    cursor = pr.end + 10;
    plan.push_back(pr);
  }
  const std::int64_t frame_count = cursor + 5;

  std::bernoulli_distribution drop(options.dropout);
  std::int64_t ann_id = 1;
  std::map<std::pair<std::int64_t, int>, courtgeom::BBox> boxes;
  for (const auto& pr : plan) {
    std::array<courtgeom::BBox, 4> base;
    for (int r = 0; r < 4; ++r) base[r] = player_box(r < 2, rng);
    std::uniform_real_distribution<double> step(-2, 2);
    for (std::int64_t f = pr.start; f <= pr.end; ++f) {
      ingest::Image img;
      img.id = f + 1;
      img.file_name = rallystore::Store::frame_file_name(f);
      img.width = 1280;
      img.height = 720;
      img.frame_index = f;
      set.images.push_back(img);
      for (int r = 0; r < 4; ++r) {
        base[r].x = std::clamp(base[r].x + step(rng), 10.0, 1200.0);
        const bool is_hit_frame = std::any_of(pr.hits.begin(), pr.hits.end(), [&](auto& h) {
          return h.first == f && static_cast<int>(h.second) == r;
        });
        boxes[{f, r}] = base[r];
        if (!is_hit_frame && drop(rng)) continue;
        ingest::Annotation a;
        a.id = ann_id++;
        a.image_id = img.id;
        a.category_id = r + 1;
        a.bbox = base[r];
        a.keypoints = synthetic_keypoints(base[r], rng);
        a.score = 0.9;
        set.annotations.push_back(std::move(a));
      }
    }
  }

  auto& video = out.record;
  video = rallystore::make_video(id, "Synthetic " + id, rallystore::VideoSource::Professional,
                                 frame_count, "frames");
  rallystore::set_players(video, profiles);
  if (options.with_net) video.net = standard_net();
  for (const auto& pr : plan) {
    auto& rally = rallystore::create_rally(video, pr.start);
    const auto rid = rally.id;
    for (const auto& [frame, hitter] : pr.hits) {
      const auto anchor = courtgeom::anchor_point(boxes.at({frame, static_cast<int>(hitter)}));
      rallystore::add_hitting_moment(video, video.rally(rid), frame, hitter, anchor);
    }
    rallystore::end_rally(video, rid, pr.end);
  }
  return out;
}

rallystore::VideoRecord install_synthetic(rallystore::Store& store, const std::string& id,
                                          std::uint64_t seed, const SyntheticOptions& options) {
  auto sv = synthetic_video(id, seed, options);
  store.save_video(sv.record);
  store.save_annotations(id, sv.annotations);
  return sv.record;
}

void confirm_legal_labels(rallystore::VideoRecord& video, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto pick = [&](const auto& values) {
    std::vector<typename std::decay_t<decltype(values)>::value_type> v(values.begin(),
                                                                        values.end());
    return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
  };
  const auto net = video.net ? video.net->net : standard_net().net;
  for (auto& rally : video.rallies) {
    for (std::size_t i = 0; i < rally.hits.size(); ++i) {
      auto& hit = rally.hits[i];
      const bool last = i + 1 == rally.hits.size();
      ShotLabel l;
      l.hitter = hit.hitter;
      l.court = courtgeom::court_position(hit.anchor, net);
      l.side = pick(kShotSides);
      if (i == 0) {
        l.shot_type = ShotType::Serve;
      } else if (i == 1) {
        l.shot_type = ShotType::Return;
      } else {
        l.shot_type = pick(std::vector{ShotType::Volley, ShotType::Lob, ShotType::Smash,
                                       ShotType::Swing});
      }
      const auto hand = video.profile(hit.hitter).handedness;
      const auto dirs = oracle::directions(l.shot_type, hand, l.court, l.side);
      const auto dir = pick(dirs);
      for (auto d : kShotDirections) {
        if (to_token(d) == dir) l.direction = d;
      }
      const auto forms = oracle::formations(l.shot_type);
      const auto form = pick(forms);
      for (auto f : kFormations) {
        if (to_token(f) == form) l.formation = f;
      }
      l.outcome = last ? pick(kOutcomes) : Outcome::In;
      rallystore::set_label(hit, l, rallystore::LabelSource::Confirmed);
    }
  }
}

const std::vector<LayoutVideo>& eight_video_layout() {
  static const std::vector<LayoutVideo> layout{
      {"granollers-zeballos-vs-arevalo-rojer-toronto-2023", "professional", false, 101},
      {"kyrgios-kokkinakis-vs-sock-isner-indian-wells-2022", "professional", false, 110},
      {"ram-salisbury-vs-puetz-venus-cincinnati-2022", "professional", false, 141},
      {"salisbury-ram-vs-krawietz-puetz-toronto-2023", "professional", true, 88},
      {"an7MXASRyI0", "ncaa", false, 251},
      {"eGFJAG-2jM8", "ncaa", false, 247},
      {"EMBw_kXc574", "ncaa", false, 243},
      {"VUPKfQgXy8g", "ncaa", true, 177},
  };
  return layout;
}

std::vector<evalkit::EventRef> layout_events() {
  std::vector<evalkit::EventRef> out;
  for (const auto& v : eight_video_layout()) {
    for (int e = 0; e < v.events; ++e) out.push_back({v.id + "/" + std::to_string(e), v.id});
  }
  return out;
}

std::vector<std::string> layout_holdouts() {
  std::vector<std::string> out;
  for (const auto& v : eight_video_layout()) {
    if (v.held_out) out.push_back(v.id);
  }
  return out;
}

rallystore::VideoRecord random_record(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  SyntheticOptions opt;
  opt.rallies = std::uniform_int_distribution<int>(0, 8)(rng);
  opt.with_net = std::bernoulli_distribution(0.8)(rng);
  auto v = synthetic_video("vid_" + std::to_string(seed), seed, opt).record;
  v.title = "Ünïcode \"title\" " + std::to_string(seed);
  v.source = static_cast<rallystore::VideoSource>(seed % 3);
  if (v.net) {
    v.net->orientation.near_deuce_side =
        seed % 2 ? courtgeom::DeuceSide::CameraLeft : courtgeom::DeuceSide::CameraRight;
  }
  std::uniform_real_distribution<double> u(0, 1);
  if (v.net) confirm_legal_labels(v, seed);
  for (auto& r : v.rallies) {
    if (u(rng) < 0.5) r.end_ball_position = courtgeom::Point{u(rng) * 1280, u(rng) * 720};
    for (auto& h : r.hits) {
      if (!h.label) continue;
      const double roll = u(rng);
      if (roll < 0.3) {
        h.label.reset();
      } else if (roll < 0.6) {
        // Machine label with per-field provenance.
        h.label_source = rallystore::LabelSource::Generated;
        h.generated = h.label;
        h.provenance["direction"] = {"posegcn", u(rng)};
        h.provenance["court"] = {"geometry", 1.0};
      } else if (roll < 0.8) {
        h.generated = h.label;
        h.generated->outcome = taxonomy::Outcome::In;
      }
    }
  }
  if (u(rng) < 0.3 && !v.rallies.empty()) {
    // Leave the last rally open.
    v.rallies.back().end_frame.reset();
    v.rallies.back().end_ball_position.reset();
  }
  return v;
}

namespace {

ingest::PoseMatrix random_pose(std::mt19937_64& rng) {
  auto kp = synthetic_keypoints({300, 200, 60, 140}, rng);
  ingest::PoseMatrix p;
  for (int k = 0; k < 17; ++k)
    for (int c = 0; c < 3; ++c) p(k, c) = kp[k * 3 + c];
  return p;
}

}  // namespace

posegcn::Sample separable_sample(std::mt19937_64& rng, int label, bool two_poses) {
  posegcn::Sample s;
  s.label = label;
  s.pose_a = random_pose(rng);
  const double lift = label == 1 ? -110.0 : 0.0;
  s.pose_a(ingest::kRightWrist, 1) += lift;
  s.pose_a(ingest::kRightElbow, 1) += lift / 2;
  if (two_poses) {
    s.pose_b = random_pose(rng);
    (*s.pose_b)(ingest::kRightWrist, 1) += lift;
  }
  return s;
}

std::vector<posegcn::Sample> separable_set(std::uint64_t seed, int n, bool two_poses) {
  std::mt19937_64 rng(seed);
  std::vector<posegcn::Sample> out;
  for (int i = 0; i < n; ++i) out.push_back(separable_sample(rng, i % 2, two_poses));
  return out;
}

bool perceptron_separates(const std::vector<posegcn::Sample>& set, int max_passes) {
  const int dim = 51 * (set.front().pose_b ? 2 : 1) + 1;
  std::vector<double> w(dim, 0.0);
  auto features = [&](const posegcn::Sample& s) {
    std::vector<double> x;
    for (int k = 0; k < 17; ++k)
      for (int c = 0; c < 3; ++c) x.push_back(s.pose_a(k, c));
    if (s.pose_b) {
      for (int k = 0; k < 17; ++k)
        for (int c = 0; c < 3; ++c) x.push_back((*s.pose_b)(k, c));
    }
    x.push_back(1.0);
    return x;
  };
  for (int pass = 0; pass < max_passes; ++pass) {
    int mistakes = 0;
    for (const auto& s : set) {
      const auto x = features(s);
      double dot = 0;
      for (int i = 0; i < dim; ++i) dot += w[i] * x[i];
      const double y = s.label == 1 ? 1.0 : -1.0;
      if (y * dot <= 0) {
        ++mistakes;
        for (int i = 0; i < dim; ++i) w[i] += y * x[i];
      }
    }
    if (mistakes == 0) return true;
  }
  return false;
}


void write_task_checkpoints(const std::filesystem::path& models_dir) {
  TempDir data("gcn-data");
  rallystore::Store store(data.path());
  std::vector<std::string> ids;
  for (int v = 0; v < 3; ++v) {
    const std::string id = "train-" + std::to_string(v);
    auto record = install_synthetic(store, id, 100 + v, {.rallies = 6});
    confirm_legal_labels(record, 200 + v);
    store.save_video(record);
    ids.push_back(id);
  }
  for (labelgen::Task task : labelgen::kTasks) {
    const auto variant = task == labelgen::Task::Formation || task == labelgen::Task::Direction
                             ? posegcn::Variant::DoublePose
                             : posegcn::Variant::SinglePose;
    const auto data_set = labelgen::build_task_dataset(store, ids, task, variant);
    if (data_set.samples.empty()) {
      throw std::runtime_error("no training samples for " + std::string(labelgen::to_token(task)));
    }
    posegcn::ModelConfig cfg;
    cfg.variant = variant;
    cfg.hidden_dims = {8, 8};
    cfg.class_names = data_set.class_names;
    cfg.task = std::string(labelgen::to_token(task));
    posegcn::TrainConfig tc;
    tc.epochs_max = 3;
    tc.batch_size = 8;
    tc.learning_rate = 0.01;
    tc.seed = 1;
    auto result = posegcn::train(posegcn::GcnModel(cfg, 7), data_set.samples, data_set.samples, tc);
    posegcn::save_checkpoint(labelgen::checkpoint_path(models_dir, task), result.model, result.history);
  }
}

}  // namespace tennis::fixtures
