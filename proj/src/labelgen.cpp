#include "tennis/labelgen.hpp"

#include <algorithm>
#include <set>

#include "tennis/courtgeom.hpp"
#include "tennis/error.hpp"

namespace tennis::labelgen {

namespace tx = taxonomy;
using rallystore::FieldProvenance;

std::string_view to_token(Task task) {
  switch (task) {
    case Task::Side: return "side";
    case Task::ShotType: return "shot_type";
    case Task::Direction: return "direction";
    case Task::Formation: return "formation";
    case Task::Outcome: return "outcome";
  }
  return "?";
}

Task task_from_token(std::string_view token) {
  for (Task t : kTasks) {
    if (to_token(t) == token) return t;
  }
  throw Error("unknown-task", "unknown task '" + std::string(token) + "'");
}

std::string_view label_field_name(Task task) { return to_token(task); }

namespace {

template <typename E, std::size_t N>
std::vector<std::string> tokens_of(const std::array<E, N>& values) {
  std::vector<std::string> out;
  for (E v : values) out.emplace_back(tx::to_token(v));
  return out;
}

template <typename E>
std::vector<std::string> tokens_of(const tx::EnumSet<E>& set) {
  std::vector<std::string> out;
  for (E v : set.values()) out.emplace_back(tx::to_token(v));
  return out;
}

}  // namespace

std::vector<std::string> task_vocabulary(Task task) {
  switch (task) {
    case Task::Side: return tokens_of(tx::kShotSides);
    case Task::ShotType: return tokens_of(tx::kShotTypes);
    case Task::Direction: return tokens_of(tx::kShotDirections);
    case Task::Formation: return tokens_of(tx::kFormations);
    case Task::Outcome: return tokens_of(tx::kOutcomes);
  }
  return {};
}

std::string label_field_token(const tx::ShotLabel& label, Task task) {
  switch (task) {
    case Task::Side: return std::string(tx::to_token(label.side));
    case Task::ShotType: return std::string(tx::to_token(label.shot_type));
    case Task::Direction: return std::string(tx::to_token(label.direction));
    case Task::Formation: return std::string(tx::to_token(label.formation));
    case Task::Outcome: return std::string(tx::to_token(label.outcome));
  }
  return {};
}

std::string_view to_token(PredictorKind kind) {
  switch (kind) {
    case PredictorKind::Random: return "random";
    case PredictorKind::PoseGcn: return "posegcn";
    case PredictorKind::Remote: return "remote";
  }
  return "?";
}

PredictorKind predictor_kind_from_token(std::string_view token) {
  for (auto k : {PredictorKind::Random, PredictorKind::PoseGcn, PredictorKind::Remote}) {
    if (to_token(k) == token) return k;
  }
  throw Error("unknown-value", "unknown predictor '" + std::string(token) + "'");
}

SecondPose second_pose_source(Task task) {
  return task == Task::Formation ? SecondPose::Partner : SecondPose::Future;
}

std::int64_t select_future_frame(std::int64_t hit_frame, std::int64_t rally_end, std::int64_t n) {
  return std::min(hit_frame + n, rally_end);
}

std::pair<std::string, double> random_predict(std::span<const std::string> legal, Rng& rng) {
  if (legal.empty()) throw Error("empty-legal-set", "nothing to choose from");
  std::uniform_int_distribution<std::size_t> pick(0, legal.size() - 1);
  return {legal[pick(rng)], 1.0 / static_cast<double>(legal.size())};
}

std::pair<std::string, double> project_to_legal(std::span<const std::string> names,
                                                std::span<const double> probabilities,
                                                std::span<const std::string> legal) {
  if (legal.empty()) throw Error("empty-legal-set", "nothing to project onto");
  if (names.size() != probabilities.size()) {
    throw Error("length-mismatch", "one probability per class name expected");
  }
  // Legal values are listed in vocabulary order, so a strict comparison keeps
  // the earliest one on ties.
  std::optional<std::pair<std::string, double>> best;
  for (const auto& value : legal) {
    double mass = 0;
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == value) mass = probabilities[i];
    }
    if (!best || mass > best->second) best = {value, mass};
  }
  return *best;
}

Prediction RandomPredictor::predict(const PredictionRequest& request) {
  if (!request.rng) throw Error("invalid-argument", "random predictor needs a generator");
  auto [value, confidence] = random_predict(request.legal, *request.rng);
  return {std::move(value), confidence, name(), std::nullopt};
}

GcnPredictor::GcnPredictor(posegcn::GcnModel model) : model_(std::move(model)) {}

PoseNeed GcnPredictor::pose_need() const {
  return model_.variant() == posegcn::Variant::DoublePose ? PoseNeed::Double : PoseNeed::Single;
}

Prediction GcnPredictor::predict(const PredictionRequest& request) {
  if (!request.pose_a) throw Error("missing-detection", "pose model needs the hitter's pose");
  std::optional<ingest::PoseMatrix> pose_b;
  if (model_.variant() == posegcn::Variant::DoublePose) {
    if (!request.pose_b) throw Error("missing-detection", "two-pose model needs a second pose");
    pose_b = request.pose_b;
  }
  const posegcn::Vector p = model_.forward(*request.pose_a, pose_b);
  const std::vector<double> probs(p.data(), p.data() + p.size());
  const auto& names = model_.config().class_names;
  auto [value, mass] = project_to_legal(names, probs, request.legal);

  Prediction out{value, mass, name(), std::nullopt};
  const auto argmax = static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) -
                                               probs.begin());
  if (names[argmax] != value) out.projected_from = names[argmax];
  return out;
}

FallbackPredictor::FallbackPredictor(std::vector<std::unique_ptr<Predictor>> chain)
    : chain_(std::move(chain)) {
  if (chain_.empty()) throw Error("invalid-argument", "empty predictor chain");
}

std::string FallbackPredictor::name() const {
  std::string out;
  for (const auto& p : chain_) out += (out.empty() ? "" : ">") + p->name();
  return out;
}

PoseNeed FallbackPredictor::pose_need() const {
  PoseNeed need = PoseNeed::None;
  for (const auto& p : chain_) need = std::max(need, p->pose_need());
  return need;
}

Prediction FallbackPredictor::predict(const PredictionRequest& request) {
  for (std::size_t i = 0; i < chain_.size(); ++i) {
    try {
      return chain_[i]->predict(request);
    } catch (const Error& e) {
      if (i + 1 == chain_.size()) throw;
      std::lock_guard lock(mutex_);
      failures_.push_back(chain_[i]->name() + ": " + e.code());
    }
  }
  throw Error("internal", "unreachable");
}

std::vector<std::string> FallbackPredictor::failures() const {
  std::lock_guard lock(mutex_);
  return failures_;
}

ModelRegistry::Entry* ModelRegistry::entry(Task task) const {
  return entries_[static_cast<std::size_t>(task)].get();
}

void ModelRegistry::configure(Task task, Loader loader) {
  auto e = std::make_unique<Entry>();
  e->loader = std::move(loader);
  entries_[static_cast<std::size_t>(task)] = std::move(e);
}

bool ModelRegistry::configured(Task task) const { return entry(task) != nullptr; }

Predictor& ModelRegistry::get(Task task) {
  Entry* e = entry(task);
  if (!e || !e->loader) {
    throw Error("no-model", "no predictor configured for task " + std::string(to_token(task)));
  }
  std::call_once(e->once, [e] {
    e->instance = e->loader();
    e->loads.fetch_add(1);
    if (!e->instance) throw Error("no-model", "loader returned nothing");
  });
  return *e->instance;
}

int ModelRegistry::load_count(Task task) const {
  const Entry* e = entry(task);
  return e ? e->loads.load() : 0;
}

std::unique_ptr<Predictor> load_gcn_predictor(const std::filesystem::path& path, Task task) {
  auto ckpt = posegcn::load_checkpoint(path);
  const auto& cfg = ckpt.model.config();
  if (cfg.task != to_token(task)) {
    throw Error("checkpoint-mismatch", path.string() + " was trained for task '" + cfg.task +
                                           "', not '" + std::string(to_token(task)) + "'");
  }
  const auto vocab = task_vocabulary(task);
  for (const auto& c : cfg.class_names) {
    if (std::find(vocab.begin(), vocab.end(), c) == vocab.end()) {
      throw Error("checkpoint-mismatch", "class '" + c + "' is not a " +
                                             std::string(to_token(task)) + " value");
    }
  }
  return std::make_unique<GcnPredictor>(std::move(ckpt.model));
}

std::filesystem::path checkpoint_path(const std::filesystem::path& models_dir, Task task) {
  return models_dir / (std::string(to_token(task)) + ".json");
}

void configure_registry(ModelRegistry& registry, const RegistryOptions& options) {
  for (Task task : kTasks) {
    const auto path = checkpoint_path(options.models_dir, task);
    ModelRegistry::Loader loader;
    switch (options.kind) {
      case PredictorKind::Random:
        loader = [] { return std::make_unique<RandomPredictor>(); };
        break;
      case PredictorKind::PoseGcn:
        if (options.fallback) {
          loader = [path, task] {
            std::vector<std::unique_ptr<Predictor>> chain;
            if (std::filesystem::exists(path)) chain.push_back(load_gcn_predictor(path, task));
            chain.push_back(std::make_unique<RandomPredictor>());
            return std::make_unique<FallbackPredictor>(std::move(chain));
          };
        } else {
          loader = [path, task] { return load_gcn_predictor(path, task); };
        }
        break;
      case PredictorKind::Remote: {
        if (!options.remote) throw Error("invalid-argument", "remote predictor needs an endpoint");
        const RemoteConfig remote = *options.remote;
        if (options.fallback) {
          loader = [remote, path, task] {
            std::vector<std::unique_ptr<Predictor>> chain;
            chain.push_back(std::make_unique<RemotePredictor>(remote));
            if (std::filesystem::exists(path)) chain.push_back(load_gcn_predictor(path, task));
            chain.push_back(std::make_unique<RandomPredictor>());
            return std::make_unique<FallbackPredictor>(std::move(chain));
          };
        } else {
          loader = [remote] { return std::make_unique<RemotePredictor>(remote); };
        }
        break;
      }
    }
    registry.configure(task, std::move(loader));
  }
}

namespace {

struct HitContext {
  const rallystore::VideoRecord& video;
  const rallystore::Rally& rally;
  const ingest::AnnotationSet* annotations;
  const ingest::FrameIndex* index;
  const rallystore::HittingMoment& hit;
};

// Thrown internally when a pose a predictor needs is not available.
struct Incomplete {
  std::string message;
};

std::optional<ingest::PoseMatrix> fetch_pose(const HitContext& ctx, std::int64_t frame,
                                             PlayerRole role, std::string& missing) {
  if (!ctx.annotations || !ctx.index) {
    missing = "no detector annotations for this video";
    return std::nullopt;
  }
  try {
    return ingest::pose_features(*ctx.annotations, *ctx.index, frame, role).values;
  } catch (const Error& e) {
    if (e.code() != "missing-detection") throw;
    missing = std::string(tx::to_token(role)) + " not detected in frame " + std::to_string(frame);
    return std::nullopt;
  }
}

template <typename E>
E predict_field(Task task, const std::vector<std::string>& legal, const HitContext& ctx,
                ModelRegistry& registry, Rng& rng, rallystore::Provenance& provenance,
                tx::ValidationReport& notes, std::size_t hit_index) {
  Predictor& predictor = registry.get(task);
  PredictionRequest req;
  req.task = task;
  req.legal = legal;
  req.video_id = ctx.video.id;
  req.frame_index = ctx.hit.frame;
  req.roles.push_back(ctx.hit.hitter);
  req.rng = &rng;

  const std::int64_t future = select_future_frame(ctx.hit.frame, *ctx.rally.end_frame);
  if (second_pose_source(task) == SecondPose::Future) {
    req.future_frame_index = future;
  } else {
    req.roles.push_back(tx::partner_of(ctx.hit.hitter));
  }

  // Poses are only looked up for predictors that consume them. A missing one
  // is left for the predictor to reject; a fallback chain then moves on.
  std::string missing;
  const PoseNeed need = predictor.pose_need();
  if (need != PoseNeed::None) {
    req.pose_a = fetch_pose(ctx, ctx.hit.frame, ctx.hit.hitter, missing);
    if (need == PoseNeed::Double) {
      req.pose_b = second_pose_source(task) == SecondPose::Partner
                       ? fetch_pose(ctx, ctx.hit.frame, tx::partner_of(ctx.hit.hitter), missing)
                       : fetch_pose(ctx, future, ctx.hit.hitter, missing);
    }
  }

  Prediction p;
  try {
    p = predictor.predict(req);
  } catch (const Error& e) {
    if (e.code() != "missing-detection") throw;
    throw Incomplete{missing.empty() ? std::string(e.what()) : missing};
  }
  if (std::find(legal.begin(), legal.end(), p.value) == legal.end()) {
    throw Error("internal", predictor.name() + " returned an illegal " +
                                std::string(to_token(task)) + " value '" + p.value + "'");
  }
  if (p.projected_from) {
    notes.add(tx::Severity::Warning, "projected",
              std::string(to_token(task)) + " '" + *p.projected_from + "' is illegal here, used '" +
                  p.value + "'",
              std::string(label_field_name(task)), hit_index);
  }
  provenance[std::string(label_field_name(task))] = {p.predictor, p.confidence};
  return tx::parse_token<E>(p.value, to_token(task));
}

}  // namespace

GeneratedLabelSet generate_rally_labels(const rallystore::VideoRecord& video,
                                        const rallystore::Rally& rally,
                                        const ingest::AnnotationSet* annotations,
                                        const ingest::FrameIndex* index,
                                        ModelRegistry& registry, std::uint64_t seed) {
  if (!video.net) throw Error("missing-net", "net position is not set for " + video.id);
  if (!rally.ended()) {
    throw Error("rally-open", "rally " + std::to_string(rally.id) + " has no end frame");
  }
  if (rally.hits.empty()) {
    throw Error("no-hits", "rally " + std::to_string(rally.id) + " has no hitting moments");
  }

  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(rally.id),
                    static_cast<std::uint32_t>(static_cast<std::uint64_t>(rally.id) >> 32)};
  Rng rng(seq);

  GeneratedLabelSet out;
  out.rally_id = rally.id;
  const auto& net = *video.net;

  for (std::size_t i = 0; i < rally.hits.size(); ++i) {
    const auto& hit = rally.hits[i];
    const std::size_t ordinal = i + 1;
    const bool last = ordinal == rally.hits.size();
    const auto& profile = video.profile(hit.hitter);
    HitContext ctx{video, rally, annotations, index, hit};

    GeneratedHit gen;
    gen.hit_index = i;
    gen.frame = hit.frame;
    auto& prov = gen.provenance;
    auto rule = [&](std::string_view field) { prov[std::string(field)] = {"rule", 1.0}; };

    try {
      tx::ShotLabel label;
      label.hitter = hit.hitter;
      label.court = courtgeom::court_position(hit.anchor, net.net, net.orientation);
      prov["court"] = {"geometry", 1.0};

      if (ordinal == 1) {
        label.shot_type = tx::ShotType::Serve;
        rule("shot_type");
        label.side = tx::ShotSide::Forehand;
        rule("side");
        label.formation = predict_field<tx::Formation>(
            Task::Formation, tokens_of(tx::legal_formations(label.shot_type)), ctx, registry, rng,
            prov, out.notes, i);
        label.direction = predict_field<tx::ShotDirection>(
            Task::Direction,
            tokens_of(tx::legal_directions(label.shot_type, profile.handedness, label.court,
                                           label.side)),
            ctx, registry, rng, prov, out.notes, i);
      } else {
        if (ordinal == 2) {
          label.shot_type = tx::ShotType::Return;
          rule("shot_type");
        } else {
          label.shot_type = predict_field<tx::ShotType>(
              Task::ShotType, tokens_of(tx::legal_shot_types(ordinal)), ctx, registry, rng, prov,
              out.notes, i);
        }
        label.side = predict_field<tx::ShotSide>(Task::Side, tokens_of(tx::kShotSides), ctx,
                                                 registry, rng, prov, out.notes, i);
        label.direction = predict_field<tx::ShotDirection>(
            Task::Direction,
            tokens_of(tx::legal_directions(label.shot_type, profile.handedness, label.court,
                                           label.side)),
            ctx, registry, rng, prov, out.notes, i);
        label.formation = tx::Formation::NonServe;
        rule("formation");
      }

      if (last) {
        label.outcome = predict_field<tx::Outcome>(Task::Outcome, tokens_of(tx::kOutcomes), ctx,
                                                   registry, rng, prov, out.notes, i);
      } else {
        label.outcome = tx::Outcome::In;
        rule("outcome");
      }

      const auto report = tx::validate_shot(label, profile, ordinal, last);
      if (!report.valid()) {
        throw Error("internal", "generated label for hit " + std::to_string(i) +
                                    " failed validation: " + report.first_error_code());
      }
      gen.label = label;
    } catch (const Incomplete& inc) {
      gen.label.reset();
      out.notes.add(tx::Severity::Warning, "missing-detection", inc.message, std::nullopt, i);
    }
    out.hits.push_back(std::move(gen));
  }
  return out;
}

void apply_generated(rallystore::VideoRecord& video, const GeneratedLabelSet& generated) {
  auto& rally = video.rally(generated.rally_id);
  for (const auto& g : generated.hits) {
    if (!g.label) continue;
    if (g.hit_index >= rally.hits.size() || rally.hits[g.hit_index].frame != g.frame) {
      throw Error("stale-generation", "rally " + std::to_string(rally.id) +
                                          " changed since labels were generated");
    }
    rallystore::record_generated(rally.hits[g.hit_index], *g.label, g.provenance);
  }
}

nlohmann::json to_json(const GeneratedLabelSet& generated) {
  auto hits = nlohmann::json::array();
  for (const auto& g : generated.hits) {
    nlohmann::json prov = nlohmann::json::object();
    for (const auto& [field, fp] : g.provenance) {
      prov[field] = {{"predictor", fp.predictor}, {"confidence", fp.confidence}};
    }
    hits.push_back({{"hit_index", g.hit_index},
                    {"frame", g.frame},
                    {"label", g.label ? tx::to_json(*g.label) : nlohmann::json(nullptr)},
                    {"event", g.label ? nlohmann::json(tx::format_event_token(*g.label))
                                      : nlohmann::json(nullptr)},
                    {"provenance", std::move(prov)}});
  }
  return {{"rally_id", generated.rally_id},
          {"hits", std::move(hits)},
          {"notes", tx::to_json(generated.notes)}};
}

TaskDataset build_task_dataset(const rallystore::Store& store,
                               std::span<const std::string> video_ids, Task task,
                               posegcn::Variant variant, std::int64_t future_frames) {
  TaskDataset ds;
  ds.class_names = task_vocabulary(task);
  for (const auto& vid : video_ids) {
    const auto video = store.load_video(vid);
    const auto annotations = store.load_annotations(vid);
    if (!annotations) continue;
    const auto index = ingest::FrameIndex::build(*annotations);
    for (const auto& rally : video.rallies) {
      if (!rally.ended()) continue;
      for (const auto& hit : rally.hits) {
        if (!hit.label || hit.label_source != rallystore::LabelSource::Confirmed) continue;
        const auto token = label_field_token(*hit.label, task);
        const auto cls = std::find(ds.class_names.begin(), ds.class_names.end(), token);
        posegcn::Sample s;
        s.label = static_cast<int>(cls - ds.class_names.begin());
        try {
          s.pose_a = ingest::pose_features(*annotations, index, hit.frame, hit.hitter).values;
          if (variant == posegcn::Variant::DoublePose) {
            s.pose_b = second_pose_source(task) == SecondPose::Partner
                           ? ingest::pose_features(*annotations, index, hit.frame,
                                                   tx::partner_of(hit.hitter))
                                 .values
                           : ingest::pose_features(
                                 *annotations, index,
                                 select_future_frame(hit.frame, *rally.end_frame, future_frames),
                                 hit.hitter)
                                 .values;
          }
        } catch (const Error& e) {
          if (e.code() != "missing-detection") throw;
          continue;
        }
        ds.samples.push_back(std::move(s));
        ds.event_ids.push_back(vid + "/" + std::to_string(rally.id) + "/" +
                               std::to_string(hit.frame));
        ds.video_ids.push_back(vid);
      }
    }
  }
  return ds;
}

}  // namespace tennis::labelgen
