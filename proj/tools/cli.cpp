#include "tennis/cli.hpp"

#include <pthread.h>
#include <signal.h>

#include <CLI11.hpp>
#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <random>
#include <thread>

#include "tennis/error.hpp"
#include "tennis/evalkit.hpp"
#include "tennis/fileio.hpp"
#include "tennis/ingest.hpp"
#include "tennis/labelgen.hpp"
#include "tennis/posegcn.hpp"
#include "tennis/rallystore.hpp"
#include "tennis/service.hpp"
#include "tennis/workflow.hpp"

namespace tennis::cli {

namespace tx = taxonomy;
namespace rs = rallystore;
using json = nlohmann::json;

int exit_code_for(std::string_view code) {
  if (code.starts_with("remote-")) return kExitRemote;
  if (code == "io" || code == "corrupt-store" || code == "unknown-video" ||
      code == "missing-checkpoint" || code == "corrupt-checkpoint") {
    return kExitIo;
  }
  if (code == "usage" || code == "invalid-argument" || code == "unknown-task" ||
      code == "no-remote-endpoint") {
    return kExitUsage;
  }
  return kExitValidation;
}

namespace {

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : std::move(fallback);
}

struct Options {
  std::string data_dir;

  std::string video_id;
  std::vector<std::string> coco_files;
  std::string players_file;
  std::string title;
  std::string source = "other";
  std::int64_t frame_count = 0;
  std::string frame_dir;
  unsigned threads = 1;

  bool as_json = false;

  std::string model = "random";
  std::uint64_t seed = 0;
  std::vector<std::int64_t> rally_ids;
  std::string remote_url;
  int remote_timeout_ms = 30000;
  std::string models_dir;
  bool fallback = false;
  std::string out_file;

  std::string task;
  std::string variant = "single_pose";
  std::vector<int> hidden{64, 64};
  int epochs = 200;
  double lr = 1e-3;
  int batch = 32;
  int patience = 20;
  std::string optimizer = "sgd";
  double ratio = 0.7;
  std::vector<std::string> holdouts;
  std::string events_file;

  std::string gradcheck_variant = "both";
  double eps = 1e-6;
  int classes = 3;

  std::string host = "127.0.0.1";
  int port = 0;
};

std::filesystem::path models_dir_of(const Options& o) {
  return o.models_dir.empty() ? std::filesystem::path(o.data_dir) / "models"
                              : std::filesystem::path(o.models_dir);
}

void emit(const Options& o, std::ostream& out, const std::string& text) {
  if (o.out_file.empty()) {
    out << text;
  } else {
    write_file_atomic(o.out_file, text);
  }
}

void print_report(std::ostream& out, const tx::ValidationReport& report,
                  const std::string& prefix) {
  for (const auto& f : report.findings()) {
    out << prefix << tx::to_token(f.severity) << " " << f.code;
    if (f.hit_index) out << " hit " << *f.hit_index;
    out << ": " << f.message << "\n";
  }
}

int cmd_ingest(const Options& o, std::ostream& out) {
  std::vector<std::string> docs;
  for (const auto& f : o.coco_files) docs.push_back(read_file(f));
  auto set = docs.size() == 1 ? ingest::parse_coco(docs.front())
                              : ingest::ingest_frame_documents(docs, o.threads);
  if (!o.players_file.empty()) {
    json players;
    try {
      players = json::parse(read_file(o.players_file));
    } catch (const json::parse_error& e) {
      throw Error("malformed-json", o.players_file + ": " + e.what());
    }
    ingest::apply_players(set, players);
  }
  const auto index = ingest::FrameIndex::build(set);

  rs::Store store(o.data_dir);
  std::lock_guard lock(store.video_mutex(o.video_id));
  rs::VideoRecord video;
  if (store.exists(o.video_id)) {
    video = store.load_video(o.video_id);
  } else {
    std::int64_t frames = o.frame_count;
    if (frames <= 0) {
      for (const auto& img : set.images) frames = std::max(frames, img.frame_index + 1);
    }
    video = rs::make_video(o.video_id, o.title.empty() ? o.video_id : o.title,
                           rs::video_source_from_token(o.source), frames, o.frame_dir);
  }
  std::vector<tx::PlayerProfile> profiles;
  for (auto role : tx::kPlayerRoles) {
    if (auto c = set.category_for(role)) profiles.push_back({role, c->name, c->handedness});
  }
  if (profiles.size() == 4) rs::set_players(video, profiles);

  store.save_annotations(o.video_id, set);
  store.save_video(video);

  out << "ingested " << set.images.size() << " images, " << set.annotations.size()
      << " detections into " << o.video_id << "\n";
  out << std::fixed << std::setprecision(3);
  for (auto role : tx::kPlayerRoles) {
    out << "  " << tx::to_token(role) << " coverage " << index.coverage(role) << "\n";
  }
  return kExitOk;
}

int cmd_validate(const Options& o, std::ostream& out) {
  rs::Store store(o.data_dir);
  const auto report = workflow::validate_video(store.load_video(o.video_id));
  if (o.as_json) {
    out << workflow::to_json(report).dump(2) << "\n";
  } else {
    for (const auto& r : report.rallies) {
      print_report(out, r.report, "rally " + std::to_string(r.rally_id) + ": ");
    }
    out << (report.valid() ? "valid" : "invalid") << " (" << report.error_count()
        << " errors)\n";
  }
  return report.valid() ? kExitOk : kExitValidation;
}

int cmd_generate(const Options& o, std::ostream& out) {
  rs::Store store(o.data_dir);
  labelgen::RegistryOptions ro;
  ro.kind = labelgen::predictor_kind_from_token(o.model);
  ro.models_dir = models_dir_of(o);
  ro.fallback = o.fallback;
  if (ro.kind == labelgen::PredictorKind::Remote) {
    const auto url = o.remote_url.empty() ? env_or("REMOTE_PREDICTOR_URL", "") : o.remote_url;
    if (url.empty()) throw Error("no-remote-endpoint", "--remote-url or REMOTE_PREDICTOR_URL needed");
    labelgen::RemoteConfig rc;
    rc.endpoint = url;
    rc.timeout = std::chrono::milliseconds(o.remote_timeout_ms);
    ro.remote = rc;
  }
  labelgen::ModelRegistry registry;
  labelgen::configure_registry(registry, ro);

  workflow::GenerateOptions go;
  go.seed = o.seed;
  go.rally_ids = o.rally_ids;
  const auto summary = workflow::generate_video_labels(store, o.video_id, registry, go);
  emit(o, out, workflow::to_json(summary).dump(2) + "\n");
  return kExitOk;
}

posegcn::OptimizerKind optimizer_of(const std::string& t) {
  if (t == "sgd") return posegcn::OptimizerKind::SgdMomentum;
  if (t == "adamw") return posegcn::OptimizerKind::AdamW;
  throw Error("usage", "optimizer must be sgd or adamw");
}

int cmd_gcn_train(const Options& o, std::ostream& out) {
  rs::Store store(o.data_dir);
  workflow::TrainRequest tr;
  tr.task = labelgen::task_from_token(o.task);
  tr.variant = posegcn::variant_from_token(o.variant);
  tr.hidden_dims = o.hidden;
  tr.train.learning_rate = o.lr;
  tr.train.epochs_max = o.epochs;
  tr.train.batch_size = o.batch;
  tr.train.early_stop_patience = o.patience;
  tr.train.seed = o.seed;
  tr.train.optimizer = optimizer_of(o.optimizer);
  tr.split_ratio = o.ratio;
  tr.split_seed = o.seed;
  tr.holdout_video_ids = o.holdouts;
  tr.models_dir = models_dir_of(o);
  tr.train.on_epoch = [&](const posegcn::EpochStats& e) {
    if (o.as_json) return;
    out << "epoch " << e.epoch << std::fixed << std::setprecision(4) << " train_loss "
        << e.train_loss << " train_acc " << e.train_accuracy << " val_loss " << e.val_loss
        << " val_acc " << e.val_accuracy << "\n";
  };
  const auto outcome = workflow::train_task_model(store, tr);
  if (o.as_json) {
    out << workflow::to_json(outcome).dump(2) << "\n";
  } else {
    out << "best epoch " << outcome.best_epoch << (outcome.stopped_early ? " (stopped early)" : "")
        << ", checkpoint " << outcome.checkpoint.string() << "\n";
    if (outcome.test) out << "\n" << evalkit::format_table(*outcome.test);
  }
  return kExitOk;
}

int cmd_gcn_gradcheck(const Options& o, std::ostream& out) {
  std::vector<posegcn::Variant> variants;
  if (o.gradcheck_variant == "both") {
    variants = {posegcn::Variant::SinglePose, posegcn::Variant::DoublePose};
  } else {
    variants = {posegcn::variant_from_token(o.gradcheck_variant)};
  }
  constexpr double kTolerance = 1e-5;
  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> coord(-1.0, 1.0);
  std::uniform_real_distribution<double> conf(0.5, 1.0);
  const auto random_pose = [&] {
    ingest::PoseMatrix p;
    for (int k = 0; k < ingest::kNumKeypoints; ++k) p.row(k) << coord(rng), coord(rng), conf(rng);
    return p;
  };

  bool ok = true;
  for (auto v : variants) {
    posegcn::ModelConfig mc;
    mc.variant = v;
    mc.hidden_dims = o.hidden;
    for (int c = 0; c < o.classes; ++c) mc.class_names.push_back("c" + std::to_string(c));
    mc.task = "gradcheck";
    posegcn::GcnModel model(mc, o.seed);
    posegcn::Sample s;
    s.pose_a = random_pose();
    if (v == posegcn::Variant::DoublePose) s.pose_b = random_pose();
    s.label = static_cast<int>(rng() % static_cast<std::uint64_t>(o.classes));
    const std::vector<double> weights(static_cast<std::size_t>(o.classes), 1.0);
    const auto r = posegcn::gradient_check(model, s, weights, o.eps);
    const bool pass = r.max_relative_error < kTolerance;
    ok = ok && pass;
    out << posegcn::to_token(v) << ": max relative error " << std::scientific
        << std::setprecision(3) << r.max_relative_error << " over " << r.parameters_checked
        << " parameters " << (pass ? "ok" : "FAILED") << "\n";
  }
  return ok ? kExitOk : kExitValidation;
}

int cmd_eval(const Options& o, std::ostream& out) {
  rs::Store store(o.data_dir);
  const auto result =
      workflow::video_metrics(store.load_video(o.video_id), labelgen::task_from_token(o.task));
  emit(o, out, o.as_json ? evalkit::to_json(result).dump(2) + "\n" : evalkit::format_table(result));
  return kExitOk;
}

int cmd_split(const Options& o, std::ostream& out) {
  std::vector<evalkit::EventRef> events;
  if (!o.events_file.empty()) {
    json doc;
    try {
      doc = json::parse(read_file(o.events_file));
    } catch (const json::parse_error& e) {
      throw Error("malformed-json", o.events_file + ": " + e.what());
    }
    for (const auto& e : doc) {
      events.push_back({e.at("id").get<std::string>(), e.at("video_id").get<std::string>()});
    }
  } else {
    rs::Store store(o.data_dir);
    events = workflow::confirmed_events(store, {});
  }
  const auto plan = evalkit::split_dataset(events, o.ratio, o.seed, o.holdouts);
  emit(o, out, evalkit::to_json(plan).dump(2) + "\n");
  return kExitOk;
}

int cmd_serve(const Options& o, std::ostream& out) {
  service::ServiceConfig sc;
  sc.data_dir = o.data_dir;
  sc.models_dir = models_dir_of(o);
  const auto url = o.remote_url.empty() ? env_or("REMOTE_PREDICTOR_URL", "") : o.remote_url;
  if (!url.empty()) {
    labelgen::RemoteConfig rc;
    rc.endpoint = url;
    rc.timeout = std::chrono::milliseconds(o.remote_timeout_ms);
    sc.remote = rc;
  }
  int port = o.port;
  if (port == 0) port = std::stoi(env_or("PORT", "8080"));

  // Block the stop signals before any server thread exists so only the
  // waiting thread below receives them.
  sigset_t stop_signals;
  sigemptyset(&stop_signals);
  sigaddset(&stop_signals, SIGINT);
  sigaddset(&stop_signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);

  service::Service svc(sc);
  const int bound = svc.bind(o.host, port);
  out << "serving " << o.data_dir << " on http://" << o.host << ":" << bound << std::endl;
  std::thread server([&] { svc.run(); });
  svc.wait_until_ready();
  int sig = 0;
  sigwait(&stop_signals, &sig);
  svc.stop();
  server.join();
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  o.data_dir = env_or("DATA_DIR", "data");

  CLI::App app{"Doubles tennis shot annotation and label generation"};
  app.require_subcommand(1);
  // Lets --data-dir follow the subcommand.
  app.fallthrough();
  app.option_defaults()->always_capture_default();
  app.add_option("--data-dir", o.data_dir, "Store directory (env DATA_DIR)");

  auto* ingest = app.add_subcommand("ingest", "Import detector output for a video");
  ingest->add_option("video_id", o.video_id)->required();
  ingest->add_option("--coco", o.coco_files, "COCO file; several are merged as per-frame documents")
      ->required();
  ingest->add_option("--players", o.players_file, "players.json sidecar");
  ingest->add_option("--title", o.title);
  ingest->add_option("--source", o.source)->check(CLI::IsMember({"professional", "ncaa", "other"}));
  ingest->add_option("--frame-count", o.frame_count);
  ingest->add_option("--frame-dir", o.frame_dir);
  ingest->add_option("--threads", o.threads);

  auto* validate = app.add_subcommand("validate", "Check every rally and label of a video");
  validate->add_option("video_id", o.video_id)->required();
  validate->add_flag("--json", o.as_json);

  auto* generate = app.add_subcommand("generate", "Generate shot labels for a video");
  generate->add_option("video_id", o.video_id)->required();
  generate->add_option("--model", o.model)->check(CLI::IsMember({"random", "posegcn", "remote"}));
  generate->add_option("--seed", o.seed);
  generate->add_option("--rally", o.rally_ids, "Restrict to these rallies");
  generate->add_option("--remote-url", o.remote_url, "Remote predictor (env REMOTE_PREDICTOR_URL)");
  generate->add_option("--remote-timeout-ms", o.remote_timeout_ms);
  generate->add_option("--models-dir", o.models_dir);
  generate->add_flag("--fallback", o.fallback, "Fall back to weaker predictors on failure");
  generate->add_option("--out", o.out_file, "Write the generated labels here");

  auto* gcn = app.add_subcommand("gcn", "Pose-graph classifier");
  gcn->require_subcommand(1);
  auto* train = gcn->add_subcommand("train", "Train a classifier on confirmed labels");
  train->add_option("--task", o.task)
      ->required()
      ->check(CLI::IsMember({"side", "shot_type", "direction", "formation", "outcome"}));
  train->add_option("--data", o.data_dir, "Store directory");
  train->add_option("--seed", o.seed);
  train->add_option("--variant", o.variant)->check(CLI::IsMember({"single_pose", "double_pose"}));
  train->add_option("--hidden", o.hidden)->delimiter(',');
  train->add_option("--epochs", o.epochs);
  train->add_option("--lr", o.lr);
  train->add_option("--batch", o.batch);
  train->add_option("--patience", o.patience);
  train->add_option("--optimizer", o.optimizer)->check(CLI::IsMember({"sgd", "adamw"}));
  train->add_option("--ratio", o.ratio);
  train->add_option("--holdout", o.holdouts);
  train->add_option("--models-dir", o.models_dir);
  train->add_flag("--json", o.as_json);

  auto* gradcheck = gcn->add_subcommand("gradcheck", "Finite-difference gradient check");
  gradcheck->add_option("--variant", o.gradcheck_variant)
      ->check(CLI::IsMember({"single_pose", "double_pose", "both"}));
  gradcheck->add_option("--hidden", o.hidden)->delimiter(',')->default_str("8,8");
  gradcheck->add_option("--seed", o.seed);
  gradcheck->add_option("--eps", o.eps);
  gradcheck->add_option("--classes", o.classes);

  auto* eval = app.add_subcommand("eval", "Score generated labels against confirmed ones");
  eval->add_option("video_id", o.video_id)->required();
  eval->add_option("--task", o.task)
      ->required()
      ->check(CLI::IsMember({"side", "shot_type", "direction", "formation", "outcome"}));
  eval->add_flag("--json", o.as_json);
  eval->add_option("--out", o.out_file);

  auto* split = app.add_subcommand("split", "Event-level train/val/test split");
  split->add_option("--ratio", o.ratio);
  split->add_option("--seed", o.seed);
  split->add_option("--holdout", o.holdouts, "Videos whose events all go to test");
  split->add_option("--events", o.events_file, "JSON [{id, video_id}] instead of the store");
  split->add_option("--out", o.out_file);

  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  serve->add_option("--port", o.port, "Port (env PORT, default 8080)");
  serve->add_option("--host", o.host);
  serve->add_option("--data-dir", o.data_dir, "Store directory (env DATA_DIR)");
  serve->add_option("--models-dir", o.models_dir);
  serve->add_option("--remote-url", o.remote_url, "Remote predictor (env REMOTE_PREDICTOR_URL)");
  serve->add_option("--remote-timeout-ms", o.remote_timeout_ms);

  std::vector<const char*> argv{"tennis"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  // gradcheck defaults to a small network.
  if (gradcheck->parsed() && gradcheck->count("--hidden") == 0) o.hidden = {8, 8};

  try {
    if (ingest->parsed()) return cmd_ingest(o, out);
    if (validate->parsed()) return cmd_validate(o, out);
    if (generate->parsed()) return cmd_generate(o, out);
    if (train->parsed()) return cmd_gcn_train(o, out);
    if (gradcheck->parsed()) return cmd_gcn_gradcheck(o, out);
    if (eval->parsed()) return cmd_eval(o, out);
    if (split->parsed()) return cmd_split(o, out);
    if (serve->parsed()) return cmd_serve(o, out);
  } catch (const tx::ValidationError& e) {
    err << "error " << e.code() << ": " << e.what() << "\n";
    print_report(err, e.report(), "  ");
    return kExitValidation;
  } catch (const Error& e) {
    err << "error " << e.code() << ": " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const nlohmann::json::exception& e) {
    err << "error schema: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error io: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitUsage;
}

}  // namespace tennis::cli
