#pragma once

// Shot-label generation over a rally. Per hit, in order:
//   1. court position from the hitter's anchor and the net;
//   2. first shot (serve): formation and serve direction;
//   3. later shots: shot type (the second shot is always a return), side and
//      a direction from the legal set;
//   4. outcome for the last shot, In for every other one.
// Each field comes from a predictor looked up per task in a ModelRegistry,
// and raw predictions are projected onto the legal value set, so emitted
// labels always pass taxonomy validation.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tennis/ingest.hpp"
#include "tennis/posegcn.hpp"
#include "tennis/rallystore.hpp"
#include "tennis/taxonomy.hpp"

namespace tennis::labelgen {

using taxonomy::PlayerRole;

enum class Task { Side, ShotType, Direction, Formation, Outcome };
inline constexpr std::array kTasks{Task::Side, Task::ShotType, Task::Direction, Task::Formation,
                                   Task::Outcome};

std::string_view to_token(Task task);
// Error "unknown-task".
Task task_from_token(std::string_view token);
// Every value token of the task's label field, in enum order.
std::vector<std::string> task_vocabulary(Task task);
std::string label_field_token(const taxonomy::ShotLabel& label, Task task);
// Name of the ShotLabel field the task fills.
std::string_view label_field_name(Task task);

enum class PredictorKind { Random, PoseGcn, Remote };
std::string_view to_token(PredictorKind kind);
PredictorKind predictor_kind_from_token(std::string_view token);

// Where the second pose of a two-pose model comes from.
enum class SecondPose { Partner, Future };
// Partner for formation; the hitter n frames later for everything else.
SecondPose second_pose_source(Task task);

// min(hit_frame + n, rally_end).
std::int64_t select_future_frame(std::int64_t hit_frame, std::int64_t rally_end, std::int64_t n = 10);

using Rng = std::mt19937_64;

enum class PoseNeed { None, Single, Double };

struct PredictionRequest {
  Task task = Task::Side;
  std::vector<std::string> legal;  // non-empty, vocabulary order
  std::string video_id;
  std::int64_t frame_index = 0;
  std::optional<std::int64_t> future_frame_index;
  std::vector<PlayerRole> roles;  // hitter first, then the second-pose role if any
  std::optional<ingest::PoseMatrix> pose_a;
  std::optional<ingest::PoseMatrix> pose_b;
  Rng* rng = nullptr;
};

struct Prediction {
  std::string value;  // always a member of the request's legal set
  double confidence = 0;
  std::string predictor;
  // Set when the raw prediction was illegal and had to be projected.
  std::optional<std::string> projected_from;
};

class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual PredictorKind kind() const = 0;
  virtual std::string name() const = 0;
  virtual PoseNeed pose_need() const { return PoseNeed::None; }
  virtual Prediction predict(const PredictionRequest& request) = 0;
};

// Uniform draw over the legal set, confidence 1/|legal|. Error "empty-legal-set".
std::pair<std::string, double> random_predict(std::span<const std::string> legal, Rng& rng);

// Picks the legal value with the most probability mass; ties go to the
// earliest value in vocabulary order. `names` labels `probabilities`.
std::pair<std::string, double> project_to_legal(std::span<const std::string> names,
                                                std::span<const double> probabilities,
                                                std::span<const std::string> legal);

class RandomPredictor final : public Predictor {
 public:
  PredictorKind kind() const override { return PredictorKind::Random; }
  std::string name() const override { return "random"; }
  Prediction predict(const PredictionRequest& request) override;
};

class GcnPredictor final : public Predictor {
 public:
  explicit GcnPredictor(posegcn::GcnModel model);
  PredictorKind kind() const override { return PredictorKind::PoseGcn; }
  std::string name() const override { return "posegcn"; }
  PoseNeed pose_need() const override;
  Prediction predict(const PredictionRequest& request) override;
  const posegcn::GcnModel& model() const { return model_; }

 private:
  posegcn::GcnModel model_;
};

struct RemoteConfig {
  // Base URL, e.g. "http://127.0.0.1:8500"; requests go to <base>/predict.
  std::string endpoint;
  std::chrono::milliseconds timeout{30000};
  int retries = 1;
  // "crop_ref": the remote side resolves frames and boxes itself.
  // "pose": keypoints are sent inline.
  std::string payload_kind = "crop_ref";
};

// Wire contract: POST /predict with
//   {task, video_id, frame_index, future_frame_index?, roles, payload_kind,
//    legal, poses?}
// answered by {value, confidence}. Errors: "remote-timeout",
// "remote-unreachable", "remote-status", "remote-schema".
class RemotePredictor final : public Predictor {
 public:
  explicit RemotePredictor(RemoteConfig config);
  PredictorKind kind() const override { return PredictorKind::Remote; }
  std::string name() const override { return "remote"; }
  PoseNeed pose_need() const override;
  Prediction predict(const PredictionRequest& request) override;

  static nlohmann::json request_body(const PredictionRequest& request,
                                     const std::string& payload_kind);

 private:
  RemoteConfig config_;
};

// Tries each predictor in turn, moving on when one fails with an Error.
class FallbackPredictor final : public Predictor {
 public:
  explicit FallbackPredictor(std::vector<std::unique_ptr<Predictor>> chain);
  PredictorKind kind() const override { return chain_.front()->kind(); }
  std::string name() const override;
  PoseNeed pose_need() const override;
  Prediction predict(const PredictionRequest& request) override;
  // Failures swallowed so far, as "<predictor>: <code>".
  std::vector<std::string> failures() const;

 private:
  std::vector<std::unique_ptr<Predictor>> chain_;
  mutable std::mutex mutex_;
  std::vector<std::string> failures_;
};

// Task -> predictor, loaded on first use and kept resident afterwards.
class ModelRegistry {
 public:
  using Loader = std::function<std::unique_ptr<Predictor>()>;

  ModelRegistry() = default;
  ModelRegistry(const ModelRegistry&) = delete;
  ModelRegistry& operator=(const ModelRegistry&) = delete;

  void configure(Task task, Loader loader);
  bool configured(Task task) const;
  // First call runs the loader exactly once even under contention; later
  // calls return the resident instance. Errors: "no-model" plus whatever the
  // loader throws (the next call retries).
  Predictor& get(Task task);
  int load_count(Task task) const;

 private:
  struct Entry {
    Loader loader;
    std::once_flag once;
    std::unique_ptr<Predictor> instance;
    std::atomic<int> loads{0};
  };
  Entry* entry(Task task) const;

  std::array<std::unique_ptr<Entry>, kTasks.size()> entries_;
};

// Loads <path> as a pose-graph checkpoint for `task`. Errors:
// "missing-checkpoint", "corrupt-checkpoint", "checkpoint-mismatch".
std::unique_ptr<Predictor> load_gcn_predictor(const std::filesystem::path& path, Task task);

struct RegistryOptions {
  PredictorKind kind = PredictorKind::Random;
  // Checkpoints live at <models_dir>/<task>.json.
  std::filesystem::path models_dir;
  std::optional<RemoteConfig> remote;
  // Remote -> PoseGcn (when a checkpoint exists) -> Random.
  bool fallback = false;
};

void configure_registry(ModelRegistry& registry, const RegistryOptions& options);
std::filesystem::path checkpoint_path(const std::filesystem::path& models_dir, Task task);

struct GeneratedHit {
  std::size_t hit_index = 0;
  std::int64_t frame = 0;
  std::optional<taxonomy::ShotLabel> label;  // absent when the hit is incomplete
  rallystore::Provenance provenance;
};

struct GeneratedLabelSet {
  std::int64_t rally_id = 0;
  std::vector<GeneratedHit> hits;
  // Incomplete hits ("missing-detection") and projections ("projected").
  taxonomy::ValidationReport notes;
};

// Errors: "missing-net", "rally-open", "no-hits".
GeneratedLabelSet generate_rally_labels(const rallystore::VideoRecord& video,
                                        const rallystore::Rally& rally,
                                        const ingest::AnnotationSet* annotations,
                                        const ingest::FrameIndex* index,
                                        ModelRegistry& registry, std::uint64_t seed);

// Stores generated labels on the video's rally; confirmed labels stay put.
void apply_generated(rallystore::VideoRecord& video, const GeneratedLabelSet& generated);

nlohmann::json to_json(const GeneratedLabelSet& generated);

// Training data from confirmed labels. Event ids are
// "<video_id>/<rally_id>/<hit_frame>".
struct TaskDataset {
  std::vector<posegcn::Sample> samples;
  std::vector<std::string> event_ids;
  std::vector<std::string> video_ids;
  std::vector<std::string> class_names;
};

TaskDataset build_task_dataset(const rallystore::Store& store,
                               std::span<const std::string> video_ids, Task task,
                               posegcn::Variant variant, std::int64_t future_frames = 10);

}  // namespace tennis::labelgen
