#include "tennis/posegcn.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "tennis/fileio.hpp"

namespace tennis::posegcn {

namespace {

using nlohmann::json;

// COCO 17-keypoint skeleton, 0-based.
constexpr std::array<Edge, 19> kCocoEdges{{
    {15, 13}, {13, 11}, {16, 14}, {14, 12}, {11, 12}, {5, 11}, {6, 12},
    {5, 6},   {5, 7},   {6, 8},   {7, 9},   {8, 10},  {1, 2},  {0, 1},
    {0, 2},   {1, 3},   {2, 4},   {3, 5},   {4, 6},
}};

constexpr int kInputDim = 3;
constexpr int kFormatVersion = 1;

Matrix relu(const Matrix& m) { return m.cwiseMax(0.0); }

// Rows are nodes; node-major flatten matches the classifier's column layout.
Vector flatten(const Matrix& h) {
  Vector out(h.size());
  for (Eigen::Index r = 0; r < h.rows(); ++r) {
    for (Eigen::Index c = 0; c < h.cols(); ++c) out(r * h.cols() + c) = h(r, c);
  }
  return out;
}

Matrix unflatten(const Eigen::Ref<const Vector>& v, Eigen::Index rows, Eigen::Index cols) {
  Matrix out(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) out(r, c) = v(r * cols + c);
  }
  return out;
}

Matrix glorot(int rows, int cols, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix m(rows, cols);
  // Fill row-major so the draw order matches the checkpoint layout.
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = dist(rng);
  }
  return m;
}

json matrix_to_json(const Matrix& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Matrix matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw Error("corrupt-checkpoint", "matrix data does not match its shape");
  }
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[r * cols + c].get<double>();
  }
  return m;
}

}  // namespace

std::span<const Edge> coco_skeleton_edges() { return kCocoEdges; }

Matrix normalized_adjacency(std::span<const Edge> edges, int num_nodes, bool self_loops) {
  if (num_nodes <= 0) throw Error("node-range", "graph needs at least one node");
  Matrix a = Matrix::Zero(num_nodes, num_nodes);
  for (const auto& e : edges) {
    if (e.a < 0 || e.b < 0 || e.a >= num_nodes || e.b >= num_nodes) {
      throw Error("node-range", "edge (" + std::to_string(e.a) + ", " + std::to_string(e.b) +
                                    ") references a node outside [0, " +
                                    std::to_string(num_nodes) + ")");
    }
    if (e.a == e.b) throw Error("self-edge", "edge list contains a self edge");
    a(e.a, e.b) = 1.0;
    a(e.b, e.a) = 1.0;
  }
  if (self_loops) a += Matrix::Identity(num_nodes, num_nodes);
  const Vector degree = a.rowwise().sum();
  // One rounding per entry: a_ij / sqrt(d_i d_j) keeps the result symmetric
  // and exact wherever d_i d_j is a perfect square.
  Matrix out = Matrix::Zero(num_nodes, num_nodes);
  for (int i = 0; i < num_nodes; ++i) {
    for (int j = 0; j < num_nodes; ++j) {
      if (a(i, j) != 0.0) out(i, j) = a(i, j) / std::sqrt(degree(i) * degree(j));
    }
  }
  return out;
}

SkeletonGraph::SkeletonGraph(int num_nodes, std::vector<Edge> edges, bool self_loops)
    : num_nodes_(num_nodes),
      edges_(std::move(edges)),
      normalized_(normalized_adjacency(edges_, num_nodes, self_loops)) {
  adjacency_ = Matrix::Zero(num_nodes, num_nodes);
  for (const auto& e : edges_) {
    adjacency_(e.a, e.b) = 1.0;
    adjacency_(e.b, e.a) = 1.0;
  }
}

SkeletonGraph SkeletonGraph::coco(bool self_loops) {
  return {ingest::kNumKeypoints, {kCocoEdges.begin(), kCocoEdges.end()}, self_loops};
}

Matrix layer_forward(const GcnLayer& layer, const Matrix& a_norm, const Matrix& h) {
  if (a_norm.rows() != a_norm.cols() || a_norm.cols() != h.rows() ||
      h.cols() != layer.weight.rows()) {
    throw Error("dimension-mismatch", "layer input shapes do not chain");
  }
  Matrix z = (a_norm * h) * layer.weight;
  return layer.activation == Activation::ReLU ? relu(z) : z;
}

std::string_view to_token(Variant v) {
  return v == Variant::SinglePose ? "single_pose" : "double_pose";
}

Variant variant_from_token(std::string_view token) {
  if (token == "single_pose") return Variant::SinglePose;
  if (token == "double_pose") return Variant::DoublePose;
  throw Error("unknown-value", "unknown model variant '" + std::string(token) + "'");
}

Matrix prepare_input(const PoseMatrix& pose, bool normalize) {
  Matrix x = pose;
  if (!normalize) return x;
  using namespace ingest;
  const Eigen::RowVector2d hip =
      (pose.block<1, 2>(kLeftHip, 0) + pose.block<1, 2>(kRightHip, 0)) / 2.0;
  const Eigen::RowVector2d shoulder =
      (pose.block<1, 2>(kLeftShoulder, 0) + pose.block<1, 2>(kRightShoulder, 0)) / 2.0;
  const double torso = (shoulder - hip).norm();
  const double scale = torso > 1e-6 ? 1.0 / torso : 1.0;
  for (int k = 0; k < kNumKeypoints; ++k) {
    // Undetected keypoints keep their (0, 0, 0) sentinel.
    if (pose(k, 2) <= 0.0) {
      x.row(k).setZero();
      continue;
    }
    x(k, 0) = (pose(k, 0) - hip(0)) * scale;
    x(k, 1) = (pose(k, 1) - hip(1)) * scale;
  }
  return x;
}

Vector softmax(const Vector& logits) {
  const double m = logits.maxCoeff();
  Vector e = (logits.array() - m).exp().matrix();
  return e / e.sum();
}

LossResult class_weighted_cross_entropy(const Vector& logits, int target,
                                        std::span<const double> weights) {
  const auto k = logits.size();
  if (target < 0 || target >= k) {
    throw Error("invalid-argument", "target class " + std::to_string(target) + " out of range");
  }
  if (static_cast<Eigen::Index>(weights.size()) != k) {
    throw Error("invalid-argument", "one class weight per logit is required");
  }
  const double w = weights[static_cast<std::size_t>(target)];
  if (!(w > 0)) throw Error("invalid-argument", "class weights must be positive");
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  LossResult out;
  out.loss = w * (lse - logits(target));
  out.gradient = softmax(logits);
  out.gradient(target) -= 1.0;
  out.gradient *= w;
  return out;
}

GcnModel::GcnModel(ModelConfig config, std::uint64_t seed)
    : config_(std::move(config)), seed_(seed) {
  if (config_.class_names.size() < 2) {
    throw Error("invalid-argument", "a classifier needs at least two classes");
  }
  if (config_.hidden_dims.empty()) {
    throw Error("invalid-argument", "a backbone needs at least one layer");
  }
  for (int d : config_.hidden_dims) {
    if (d <= 0) throw Error("invalid-argument", "layer widths must be positive");
  }
  a_norm_ = SkeletonGraph::coco(config_.self_loops).normalized();
  std::mt19937_64 rng(seed);
  for (int b = 0; b < num_backbones(); ++b) {
    int in = kInputDim;
    for (int d : config_.hidden_dims) {
      params_.push_back(glorot(in, d, rng));
      in = d;
    }
  }
  const int k = num_classes();
  params_.push_back(glorot(k, feature_dim(), rng));
  params_.push_back(Matrix::Zero(k, 1));
}

int GcnModel::feature_dim() const {
  return num_backbones() * ingest::kNumKeypoints * config_.hidden_dims.back();
}

GcnLayer GcnModel::layer(int backbone, int index) const {
  const auto block = static_cast<std::size_t>(backbone * num_layers() + index);
  return {params_.at(block), index + 1 == num_layers() ? Activation::Identity : Activation::ReLU};
}

Matrix& GcnModel::layer_weight(int backbone, int index) {
  return params_.at(static_cast<std::size_t>(backbone * num_layers() + index));
}

std::size_t GcnModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.size());
  return n;
}

std::vector<Matrix> GcnModel::zero_gradients() const {
  std::vector<Matrix> grads;
  grads.reserve(params_.size());
  for (const auto& p : params_) grads.push_back(Matrix::Zero(p.rows(), p.cols()));
  return grads;
}

void GcnModel::check_arity(const std::optional<PoseMatrix>& pose_b) const {
  if (config_.variant == Variant::SinglePose && pose_b) {
    throw Error("arity-mismatch", "single-pose model takes exactly one pose");
  }
  if (config_.variant == Variant::DoublePose && !pose_b) {
    throw Error("arity-mismatch", "double-pose model needs a second pose");
  }
}

GcnModel::BackboneCache GcnModel::run_backbone(int backbone, const Matrix& input) const {
  BackboneCache cache;
  Matrix h = input;
  for (int l = 0; l < num_layers(); ++l) {
    const Matrix& w = params_[static_cast<std::size_t>(backbone * num_layers() + l)];
    cache.propagated.push_back(a_norm_ * h);
    cache.pre.push_back(cache.propagated.back() * w);
    h = (l + 1 == num_layers()) ? cache.pre.back() : relu(cache.pre.back());
  }
  cache.output = std::move(h);
  return cache;
}

Vector GcnModel::logits(const PoseMatrix& pose_a, const std::optional<PoseMatrix>& pose_b) const {
  check_arity(pose_b);
  Vector features(feature_dim());
  const auto per = features.size() / num_backbones();
  features.head(per) =
      flatten(run_backbone(0, prepare_input(pose_a, config_.normalize_input)).output);
  if (pose_b) {
    features.tail(per) =
        flatten(run_backbone(1, prepare_input(*pose_b, config_.normalize_input)).output);
  }
  return classifier_weight() * features + classifier_bias().col(0);
}

Vector GcnModel::forward(const PoseMatrix& pose_a, const std::optional<PoseMatrix>& pose_b) const {
  return softmax(logits(pose_a, pose_b));
}

double GcnModel::accumulate_gradient(const Sample& sample, std::span<const double> class_weights,
                                     std::vector<Matrix>& grads, double scale) const {
  check_arity(sample.pose_b);
  std::vector<BackboneCache> caches;
  caches.push_back(run_backbone(0, prepare_input(sample.pose_a, config_.normalize_input)));
  if (sample.pose_b) {
    caches.push_back(run_backbone(1, prepare_input(*sample.pose_b, config_.normalize_input)));
  }
  Vector features(feature_dim());
  const auto per = features.size() / num_backbones();
  for (int b = 0; b < num_backbones(); ++b) {
    features.segment(b * per, per) = flatten(caches[static_cast<std::size_t>(b)].output);
  }
  const Vector z = classifier_weight() * features + classifier_bias().col(0);
  const auto loss = class_weighted_cross_entropy(z, sample.label, class_weights);

  const std::size_t wc = params_.size() - 2;
  grads[wc].noalias() += scale * loss.gradient * features.transpose();
  grads[wc + 1].col(0) += scale * loss.gradient;
  const Vector d_features = classifier_weight().transpose() * loss.gradient;

  const auto hidden = config_.hidden_dims.back();
  for (int b = 0; b < num_backbones(); ++b) {
    const auto& cache = caches[static_cast<std::size_t>(b)];
    Matrix d_h = unflatten(d_features.segment(b * per, per), ingest::kNumKeypoints, hidden);
    for (int l = num_layers() - 1; l >= 0; --l) {
      const auto block = static_cast<std::size_t>(b * num_layers() + l);
      Matrix d_z = d_h;
      if (l + 1 != num_layers()) {
        d_z = d_z.cwiseProduct((cache.pre[static_cast<std::size_t>(l)].array() > 0.0)
                                   .cast<double>()
                                   .matrix());
      }
      grads[block].noalias() +=
          scale * cache.propagated[static_cast<std::size_t>(l)].transpose() * d_z;
      if (l > 0) d_h = a_norm_.transpose() * (d_z * params_[block].transpose());
    }
  }
  return loss.loss;
}

double GcnModel::loss(const Sample& sample, std::span<const double> class_weights) const {
  return class_weighted_cross_entropy(logits(sample.pose_a, sample.pose_b), sample.label,
                                      class_weights)
      .loss;
}

EarlyStopping::EarlyStopping(int patience)
    : patience_(patience), best_loss_(std::numeric_limits<double>::infinity()) {
  if (patience < 1) throw Error("invalid-argument", "early-stopping patience must be >= 1");
}

bool EarlyStopping::update(double val_loss) {
  ++epoch_;
  improved_ = val_loss < best_loss_;
  if (improved_) {
    best_loss_ = val_loss;
    best_epoch_ = epoch_;
    since_best_ = 0;
    return false;
  }
  return ++since_best_ >= patience_;
}

std::vector<double> inverse_frequency_weights(std::span<const Sample> samples, int num_classes) {
  std::vector<double> counts(static_cast<std::size_t>(num_classes), 0.0);
  for (const auto& s : samples) {
    if (s.label < 0 || s.label >= num_classes) {
      throw Error("invalid-argument", "sample label out of range");
    }
    counts[static_cast<std::size_t>(s.label)] += 1.0;
  }
  std::vector<double> weights(counts.size(), 0.0);
  double sum = 0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] > 0) {
      weights[c] = 1.0 / counts[c];
      sum += weights[c];
      ++present;
    }
  }
  const double mean = present ? sum / static_cast<double>(present) : 1.0;
  for (auto& w : weights) w = w > 0 ? w / mean : 1.0;
  return weights;
}

EvalStats evaluate(const GcnModel& model, std::span<const Sample> samples,
                   std::span<const double> class_weights) {
  EvalStats stats;
  if (samples.empty()) return stats;
  std::size_t correct = 0;
  for (const auto& s : samples) {
    const Vector z = model.logits(s.pose_a, s.pose_b);
    stats.loss += class_weighted_cross_entropy(z, s.label, class_weights).loss;
    Eigen::Index best = 0;
    z.maxCoeff(&best);
    correct += best == s.label;
  }
  stats.loss /= static_cast<double>(samples.size());
  stats.accuracy = static_cast<double>(correct) / static_cast<double>(samples.size());
  return stats;
}

TrainResult train(GcnModel model, std::span<const Sample> train_set,
                  std::span<const Sample> val_set, const TrainConfig& config) {
  if (train_set.empty() || val_set.empty()) {
    throw Error("empty-split", "training needs non-empty train and validation sets");
  }
  if (config.batch_size < 1 || config.epochs_max < 1 || !(config.learning_rate > 0)) {
    throw Error("invalid-argument", "batch size, epochs and learning rate must be positive");
  }
  const int k = model.num_classes();
  const std::vector<double> weights = config.class_weights.empty()
                                          ? inverse_frequency_weights(train_set, k)
                                          : config.class_weights;
  if (static_cast<int>(weights.size()) != k ||
      std::any_of(weights.begin(), weights.end(), [](double w) { return !(w > 0); })) {
    throw Error("invalid-argument", "class weights must be positive, one per class");
  }

  auto& params = model.parameters();
  std::vector<Matrix> first = model.zero_gradients();   // momentum or Adam m
  std::vector<Matrix> second = model.zero_gradients();  // Adam v
  std::int64_t step = 0;

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  EarlyStopping stopper(config.early_stop_patience);
  TrainResult result{model, {}, 0, false};

  for (int epoch = 1; epoch <= config.epochs_max; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    int batch_no = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size), ++batch_no) {
      const auto end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const double scale = 1.0 / static_cast<double>(end - start);
      auto grads = model.zero_gradients();
      double batch_loss = 0;
      for (auto i = start; i < end; ++i) {
        batch_loss += model.accumulate_gradient(train_set[order[i]], weights, grads, scale);
      }
      if (!std::isfinite(batch_loss)) {
        throw Error("non-finite-loss", "non-finite loss at epoch " + std::to_string(epoch) +
                                           ", batch " + std::to_string(batch_no));
      }
      ++step;
      for (std::size_t b = 0; b < params.size(); ++b) {
        if (config.optimizer == OptimizerKind::SgdMomentum) {
          first[b] = config.momentum * first[b] + grads[b];
          params[b] -= config.learning_rate * first[b];
        } else {
          constexpr double kBeta1 = 0.9;
          constexpr double kBeta2 = 0.999;
          constexpr double kEps = 1e-8;
          const double lr = model.is_backbone_block(b)
                                ? config.learning_rate * config.backbone_lr_scale
                                : config.learning_rate;
          first[b] = kBeta1 * first[b] + (1.0 - kBeta1) * grads[b];
          second[b] = kBeta2 * second[b] + (1.0 - kBeta2) * grads[b].cwiseProduct(grads[b]);
          const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
          const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
          params[b] *= 1.0 - lr * config.weight_decay;
          params[b].array() -=
              lr * (first[b].array() / c1) / ((second[b].array() / c2).sqrt() + kEps);
        }
      }
    }

    const auto tr = evaluate(model, train_set, weights);
    const auto va = evaluate(model, val_set, weights);
    if (!std::isfinite(tr.loss) || !std::isfinite(va.loss)) {
      throw Error("non-finite-loss", "non-finite loss at epoch " + std::to_string(epoch));
    }
    result.history.push_back({epoch, tr.loss, tr.accuracy, va.loss, va.accuracy});
    if (config.on_epoch) config.on_epoch(result.history.back());
    const bool stop = stopper.update(va.loss);
    if (stopper.improved()) {
      result.model = model;
      result.best_epoch = epoch;
    }
    if (stop) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

GradCheckResult gradient_check(const GcnModel& model, const Sample& sample,
                               std::span<const double> class_weights, double epsilon) {
  if (!(epsilon > 0.0 && epsilon <= 1e-2)) {
    throw Error("invalid-argument", "epsilon must lie in (0, 1e-2]");
  }
  auto grads = model.zero_gradients();
  model.accumulate_gradient(sample, class_weights, grads);

  GcnModel probe = model;
  GradCheckResult result;
  for (std::size_t b = 0; b < probe.parameters().size(); ++b) {
    Matrix& p = probe.parameters()[b];
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      double& coeff = p.data()[i];
      const double saved = coeff;
      coeff = saved + epsilon;
      const double up = probe.loss(sample, class_weights);
      coeff = saved - epsilon;
      const double down = probe.loss(sample, class_weights);
      coeff = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double analytic = grads[b].data()[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      result.max_relative_error =
          std::max(result.max_relative_error, std::abs(analytic - numeric) / denom);
      ++result.parameters_checked;
    }
  }
  return result;
}

json to_json(const GcnModel& model, std::span<const EpochStats> history) {
  const auto& cfg = model.config();
  auto blocks = json::array();
  for (const auto& p : model.parameters()) blocks.push_back(matrix_to_json(p));
  auto hist = json::array();
  for (const auto& e : history) {
    hist.push_back({{"epoch", e.epoch},
                    {"train_loss", e.train_loss},
                    {"train_accuracy", e.train_accuracy},
                    {"val_loss", e.val_loss},
                    {"val_accuracy", e.val_accuracy}});
  }
  return {{"format", "tennis-posegcn"},
          {"version", kFormatVersion},
          {"variant", to_token(cfg.variant)},
          {"task", cfg.task},
          {"hidden_dims", cfg.hidden_dims},
          {"class_names", cfg.class_names},
          {"self_loops", cfg.self_loops},
          {"normalize_input", cfg.normalize_input},
          {"seed", model.seed()},
          {"parameters", std::move(blocks)},
          {"history", std::move(hist)}};
}

Checkpoint checkpoint_from_json(const json& j) {
  try {
    if (j.value("format", "") != "tennis-posegcn" || j.at("version").get<int>() != kFormatVersion) {
      throw Error("corrupt-checkpoint", "not a pose-graph checkpoint");
    }
    ModelConfig cfg;
    cfg.variant = variant_from_token(j.at("variant").get<std::string>());
    cfg.task = j.at("task").get<std::string>();
    cfg.hidden_dims = j.at("hidden_dims").get<std::vector<int>>();
    cfg.class_names = j.at("class_names").get<std::vector<std::string>>();
    cfg.self_loops = j.at("self_loops").get<bool>();
    cfg.normalize_input = j.at("normalize_input").get<bool>();
    GcnModel model(cfg, j.at("seed").get<std::uint64_t>());
    const auto& blocks = j.at("parameters");
    if (blocks.size() != model.parameters().size()) {
      throw Error("corrupt-checkpoint", "parameter block count does not match the layer shapes");
    }
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      Matrix m = matrix_from_json(blocks[b]);
      if (m.rows() != model.parameters()[b].rows() || m.cols() != model.parameters()[b].cols()) {
        throw Error("corrupt-checkpoint", "parameter block " + std::to_string(b) +
                                              " has the wrong shape");
      }
      model.parameters()[b] = std::move(m);
    }
    std::vector<EpochStats> history;
    for (const auto& e : j.at("history")) {
      history.push_back({e.at("epoch").get<int>(), e.at("train_loss").get<double>(),
                         e.at("train_accuracy").get<double>(), e.at("val_loss").get<double>(),
                         e.at("val_accuracy").get<double>()});
    }
    return {std::move(model), std::move(history)};
  } catch (const json::exception& e) {
    throw Error("corrupt-checkpoint", e.what());
  } catch (const Error& e) {
    if (e.code() == "corrupt-checkpoint") throw;
    throw Error("corrupt-checkpoint", e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const GcnModel& model,
                     std::span<const EpochStats> history) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_file_atomic(path, to_json(model, history).dump() + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("missing-checkpoint", "no checkpoint at " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error("corrupt-checkpoint", path.string() + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace tennis::posegcn
