#include "tennis/workflow.hpp"

#include <algorithm>
#include <map>

#include "tennis/error.hpp"

namespace tennis::workflow {

namespace tx = taxonomy;
using labelgen::Task;

bool VideoReport::valid() const { return error_count() == 0; }

std::size_t VideoReport::error_count() const {
  std::size_t n = 0;
  for (const auto& r : rallies) n += r.report.error_count();
  return n;
}

VideoReport validate_video(const rallystore::VideoRecord& video) {
  VideoReport out;
  out.video_id = video.id;
  for (const auto& rally : video.rallies) {
    out.rallies.push_back({rally.id, rallystore::validate_rally(rally, video.players)});
  }
  return out;
}

nlohmann::json to_json(const VideoReport& report) {
  auto rallies = nlohmann::json::array();
  for (const auto& r : report.rallies) {
    auto j = tx::to_json(r.report);
    j["rally_id"] = r.rally_id;
    rallies.push_back(std::move(j));
  }
  return {{"video_id", report.video_id},
          {"valid", report.valid()},
          {"error_count", report.error_count()},
          {"rallies", std::move(rallies)}};
}

GenerateSummary generate_video_labels(rallystore::Store& store, const std::string& video_id,
                                      labelgen::ModelRegistry& registry,
                                      const GenerateOptions& options, const Progress& progress) {
  const auto video = store.load_video(video_id);
  if (!video.net) throw Error("missing-net", "net position is not set for " + video_id);
  const auto annotations = store.load_annotations(video_id);
  std::optional<ingest::FrameIndex> index;
  if (annotations) index = ingest::FrameIndex::build(*annotations);

  std::vector<std::int64_t> targets = options.rally_ids;
  if (targets.empty()) {
    for (const auto& r : video.rallies) targets.push_back(r.id);
  } else {
    for (auto id : targets) video.rally(id);
  }

  GenerateSummary out;
  out.video_id = video_id;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& rally = video.rally(targets[i]);
    if (!rally.ended() || rally.hits.empty()) {
      out.skipped.push_back(rally.id);
    } else {
      out.rallies.push_back(labelgen::generate_rally_labels(
          video, rally, annotations ? &*annotations : nullptr, index ? &*index : nullptr, registry,
          options.seed));
    }
    if (progress) progress(static_cast<double>(i + 1) / static_cast<double>(targets.size()));
  }

  store.mutate(video_id, [&](rallystore::VideoRecord& v) {
    for (const auto& set : out.rallies) labelgen::apply_generated(v, set);
  });
  return out;
}

nlohmann::json to_json(const GenerateSummary& summary) {
  auto rallies = nlohmann::json::array();
  for (const auto& r : summary.rallies) rallies.push_back(labelgen::to_json(r));
  return {{"video_id", summary.video_id},
          {"rallies", std::move(rallies)},
          {"skipped", summary.skipped}};
}

evalkit::EvalResult video_metrics(const rallystore::VideoRecord& video, Task task) {
  const auto names = labelgen::task_vocabulary(task);
  const auto k = names.size();
  const auto index_of = [&](const std::string& token) {
    return static_cast<int>(std::find(names.begin(), names.end(), token) - names.begin());
  };
  const std::string field(labelgen::label_field_name(task));

  std::vector<int> truths;
  std::vector<int> preds;
  std::vector<double> scores;
  for (const auto& rally : video.rallies) {
    for (const auto& hit : rally.hits) {
      if (hit.label_source != rallystore::LabelSource::Confirmed || !hit.label || !hit.generated) {
        continue;
      }
      const int t = index_of(labelgen::label_field_token(*hit.label, task));
      const int p = index_of(labelgen::label_field_token(*hit.generated, task));
      double conf = 1.0;
      if (auto it = hit.provenance.find(field); it != hit.provenance.end()) {
        conf = it->second.confidence;
      }
      const double rest = k > 1 ? (1.0 - conf) / static_cast<double>(k - 1) : 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        scores.push_back(static_cast<int>(c) == p ? conf : rest);
      }
      truths.push_back(t);
      preds.push_back(p);
    }
  }
  if (truths.empty()) {
    throw Error("empty-input", "no hit of " + video.id + " has both a confirmed and a generated " +
                                   field + " label");
  }
  return evalkit::evaluate(std::string(labelgen::to_token(task)), names, preds, truths, scores);
}

std::vector<evalkit::EventRef> confirmed_events(const rallystore::Store& store,
                                                const std::vector<std::string>& video_ids) {
  std::vector<evalkit::EventRef> out;
  for (const auto& vid : video_ids.empty() ? store.list_videos() : video_ids) {
    const auto video = store.load_video(vid);
    for (const auto& rally : video.rallies) {
      for (const auto& hit : rally.hits) {
        if (hit.label && hit.label_source == rallystore::LabelSource::Confirmed) {
          out.push_back({vid + "/" + std::to_string(rally.id) + "/" + std::to_string(hit.frame),
                         vid});
        }
      }
    }
  }
  return out;
}

TrainOutcome train_task_model(const rallystore::Store& store, const TrainRequest& request,
                              const Progress& progress) {
  const auto videos = request.video_ids.empty() ? store.list_videos() : request.video_ids;
  const auto data = labelgen::build_task_dataset(store, videos, request.task, request.variant,
                                                 request.future_frames);

  std::vector<evalkit::EventRef> events;
  std::map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    events.push_back({data.event_ids[i], data.video_ids[i]});
    by_id[data.event_ids[i]] = i;
  }
  if (events.empty()) {
    throw Error("empty-split", "no confirmed " + std::string(labelgen::to_token(request.task)) +
                                   " labels with detected poses");
  }

  TrainOutcome out;
  out.plan = evalkit::split_dataset(events, request.split_ratio, request.split_seed,
                                    request.holdout_video_ids);
  const auto pick = [&](const std::vector<std::string>& ids) {
    std::vector<posegcn::Sample> s;
    for (const auto& id : ids) s.push_back(data.samples[by_id.at(id)]);
    return s;
  };
  const auto train_set = pick(out.plan.train_events);
  const auto val_set = pick(out.plan.val_events);
  const auto test_set = pick(out.plan.test_events);

  posegcn::ModelConfig mc;
  mc.variant = request.variant;
  mc.hidden_dims = request.hidden_dims;
  mc.class_names = data.class_names;
  mc.task = std::string(labelgen::to_token(request.task));
  posegcn::GcnModel model(mc, request.train.seed);

  auto tc = request.train;
  const auto user_hook = tc.on_epoch;
  tc.on_epoch = [&](const posegcn::EpochStats& e) {
    if (user_hook) user_hook(e);
    if (progress) progress(static_cast<double>(e.epoch) / static_cast<double>(tc.epochs_max));
  };
  auto result = posegcn::train(std::move(model), train_set, val_set, tc);

  out.checkpoint = labelgen::checkpoint_path(request.models_dir, request.task);
  std::filesystem::create_directories(request.models_dir);
  posegcn::save_checkpoint(out.checkpoint, result.model, result.history);
  out.history = result.history;
  out.best_epoch = result.best_epoch;
  out.stopped_early = result.stopped_early;

  if (!test_set.empty()) {
    std::vector<int> truths;
    std::vector<int> preds;
    std::vector<double> scores;
    for (const auto& s : test_set) {
      const auto p = result.model.forward(s);
      Eigen::Index arg = 0;
      p.maxCoeff(&arg);
      preds.push_back(static_cast<int>(arg));
      truths.push_back(s.label);
      scores.insert(scores.end(), p.data(), p.data() + p.size());
    }
    out.test = evalkit::evaluate(mc.task, mc.class_names, preds, truths, scores);
  }
  if (progress) progress(1.0);
  return out;
}

nlohmann::json to_json(const TrainOutcome& outcome) {
  auto history = nlohmann::json::array();
  for (const auto& e : outcome.history) {
    history.push_back({{"epoch", e.epoch},
                       {"train_loss", e.train_loss},
                       {"train_accuracy", e.train_accuracy},
                       {"val_loss", e.val_loss},
                       {"val_accuracy", e.val_accuracy}});
  }
  return {{"checkpoint", outcome.checkpoint.string()},
          {"split",
           {{"train", outcome.plan.train_events.size()},
            {"val", outcome.plan.val_events.size()},
            {"test", outcome.plan.test_events.size()},
            {"holdout_video_ids", outcome.plan.holdout_video_ids}}},
          {"epochs", outcome.history.size()},
          {"best_epoch", outcome.best_epoch},
          {"stopped_early", outcome.stopped_early},
          {"history", std::move(history)},
          {"test", outcome.test ? evalkit::to_json(*outcome.test) : nlohmann::json(nullptr)}};
}

}  // namespace tennis::workflow
