#pragma once

// Store-level operations shared by the HTTP service and the command line:
// whole-video validation, label generation, metrics and model training.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tennis/evalkit.hpp"
#include "tennis/labelgen.hpp"
#include "tennis/posegcn.hpp"
#include "tennis/rallystore.hpp"

namespace tennis::workflow {

using Progress = std::function<void(double)>;

struct RallyReport {
  std::int64_t rally_id = 0;
  taxonomy::ValidationReport report;
};

struct VideoReport {
  std::string video_id;
  std::vector<RallyReport> rallies;
  bool valid() const;
  std::size_t error_count() const;
};

VideoReport validate_video(const rallystore::VideoRecord& video);
nlohmann::json to_json(const VideoReport& report);

struct GenerateOptions {
  std::uint64_t seed = 0;
  // Empty: every rally of the video.
  std::vector<std::int64_t> rally_ids;
};

struct GenerateSummary {
  std::string video_id;
  std::vector<labelgen::GeneratedLabelSet> rallies;
  // Rallies left alone because they are still open or have no hits.
  std::vector<std::int64_t> skipped;
};

// Generates labels rally by rally and stores them on the video. Errors:
// "unknown-video", "unknown-rally", "missing-net", plus predictor failures.
GenerateSummary generate_video_labels(rallystore::Store& store, const std::string& video_id,
                                      labelgen::ModelRegistry& registry,
                                      const GenerateOptions& options, const Progress& progress = {});
nlohmann::json to_json(const GenerateSummary& summary);

// Confirmed labels as truth against the stored generated labels. Scores
// give the generated value its recorded confidence and spread the rest of
// the mass evenly over the other classes. Error "empty-input" when no hit
// has both.
evalkit::EvalResult video_metrics(const rallystore::VideoRecord& video, labelgen::Task task);

struct TrainRequest {
  labelgen::Task task = labelgen::Task::Side;
  posegcn::Variant variant = posegcn::Variant::SinglePose;
  std::vector<int> hidden_dims{64, 64};
  posegcn::TrainConfig train;
  double split_ratio = 0.7;
  std::uint64_t split_seed = 0;
  std::vector<std::string> holdout_video_ids;
  // Empty: every video in the store.
  std::vector<std::string> video_ids;
  std::filesystem::path models_dir;
  std::int64_t future_frames = 10;
};

struct TrainOutcome {
  std::filesystem::path checkpoint;
  evalkit::SplitPlan plan;
  std::vector<posegcn::EpochStats> history;
  int best_epoch = 0;
  bool stopped_early = false;
  std::optional<evalkit::EvalResult> test;
};

// Errors: "empty-split" when the store holds too few confirmed samples.
TrainOutcome train_task_model(const rallystore::Store& store, const TrainRequest& request,
                              const Progress& progress = {});
nlohmann::json to_json(const TrainOutcome& outcome);

// One event per confirmed hit, ids as in labelgen::TaskDataset.
std::vector<evalkit::EventRef> confirmed_events(const rallystore::Store& store,
                                                const std::vector<std::string>& video_ids);

}  // namespace tennis::workflow
