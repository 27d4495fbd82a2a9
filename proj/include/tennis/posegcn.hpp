#pragma once

// Skeletal graph convolution classifiers over 17-keypoint poses.
//
// Each backbone layer computes H' = act(A_norm * H * W) with
// A_norm = D^-1/2 (A + I) D^-1/2. Node features of the last layer are
// flattened (and, for the two-pose variant, concatenated across both
// backbones) before an affine classifier produces K logits.

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tennis/ingest.hpp"

namespace tennis::posegcn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using ingest::PoseMatrix;

struct Edge {
  int a = 0;
  int b = 0;
};

// Limb links between COCO keypoints (face, arms, torso, legs).
std::span<const Edge> coco_skeleton_edges();

// D^-1/2 (A + I) D^-1/2, or D^-1/2 A D^-1/2 without self loops (isolated
// nodes then get an all-zero row). Errors: "self-edge", "node-range".
Matrix normalized_adjacency(std::span<const Edge> edges, int num_nodes, bool self_loops = true);

class SkeletonGraph {
 public:
  SkeletonGraph(int num_nodes, std::vector<Edge> edges, bool self_loops = true);
  static SkeletonGraph coco(bool self_loops = true);

  int num_nodes() const { return num_nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  // Binary symmetric adjacency without self loops.
  const Matrix& adjacency() const { return adjacency_; }
  const Matrix& normalized() const { return normalized_; }

 private:
  int num_nodes_;
  std::vector<Edge> edges_;
  Matrix adjacency_;
  Matrix normalized_;
};

enum class Activation { ReLU, Identity };

struct GcnLayer {
  Matrix weight;  // in_dim x out_dim
  Activation activation = Activation::ReLU;
};

// act(a_norm * h * layer.weight). Error "dimension-mismatch".
Matrix layer_forward(const GcnLayer& layer, const Matrix& a_norm, const Matrix& h);

enum class Variant { SinglePose, DoublePose };

std::string_view to_token(Variant v);
Variant variant_from_token(std::string_view token);

struct ModelConfig {
  Variant variant = Variant::SinglePose;
  std::vector<int> hidden_dims{64, 64};
  std::vector<std::string> class_names;
  std::string task;
  bool self_loops = true;
  // Hip-centred, torso-scaled coordinates; confidences pass through.
  bool normalize_input = true;
};

// Pose as fed to the first layer (17 x 3).
Matrix prepare_input(const PoseMatrix& pose, bool normalize);

struct LossResult {
  double loss = 0;
  Vector gradient;  // d loss / d logits
};

// -w[t] * log softmax(logits)[t] and its gradient w[t] * (softmax - onehot).
// Errors: "invalid-argument" (target out of range, non-positive weight).
LossResult class_weighted_cross_entropy(const Vector& logits, int target,
                                        std::span<const double> weights);

Vector softmax(const Vector& logits);

struct Sample {
  PoseMatrix pose_a = PoseMatrix::Zero();
  std::optional<PoseMatrix> pose_b;
  int label = 0;
};

class GcnModel {
 public:
  // Glorot-uniform initialisation from the seeded generator.
  GcnModel(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  Variant variant() const { return config_.variant; }
  int num_classes() const { return static_cast<int>(config_.class_names.size()); }
  int num_backbones() const { return config_.variant == Variant::DoublePose ? 2 : 1; }
  int num_layers() const { return static_cast<int>(config_.hidden_dims.size()); }
  std::uint64_t seed() const { return seed_; }
  const Matrix& adjacency() const { return a_norm_; }

  GcnLayer layer(int backbone, int index) const;
  Matrix& layer_weight(int backbone, int index);
  Matrix& classifier_weight() { return params_[params_.size() - 2]; }
  Matrix& classifier_bias() { return params_.back(); }
  const Matrix& classifier_weight() const { return params_[params_.size() - 2]; }
  const Matrix& classifier_bias() const { return params_.back(); }

  // Parameter blocks: backbone 0 layers, backbone 1 layers, classifier
  // weight (K x F), classifier bias (K x 1).
  std::vector<Matrix>& parameters() { return params_; }
  const std::vector<Matrix>& parameters() const { return params_; }
  bool is_backbone_block(std::size_t block) const { return block + 2 < params_.size(); }
  std::size_t parameter_count() const;

  // Errors: "arity-mismatch" when pose_b presence does not match the variant.
  Vector logits(const PoseMatrix& pose_a, const std::optional<PoseMatrix>& pose_b) const;
  Vector forward(const PoseMatrix& pose_a, const std::optional<PoseMatrix>& pose_b) const;
  Vector forward(const Sample& sample) const { return forward(sample.pose_a, sample.pose_b); }

  // Loss of one sample; adds its parameter gradients into `grads` (same
  // shapes as parameters()) scaled by `scale`.
  double accumulate_gradient(const Sample& sample, std::span<const double> class_weights,
                             std::vector<Matrix>& grads, double scale = 1.0) const;
  double loss(const Sample& sample, std::span<const double> class_weights) const;

  std::vector<Matrix> zero_gradients() const;

 private:
  struct BackboneCache {
    std::vector<Matrix> propagated;  // A_norm * H_l
    std::vector<Matrix> pre;         // Z_l = A_norm * H_l * W_l
    Matrix output;
  };
  BackboneCache run_backbone(int backbone, const Matrix& input) const;
  void check_arity(const std::optional<PoseMatrix>& pose_b) const;
  int feature_dim() const;

  ModelConfig config_;
  std::uint64_t seed_;
  Matrix a_norm_;
  std::vector<Matrix> params_;
};

enum class OptimizerKind { SgdMomentum, AdamW };

struct EpochStats {
  int epoch = 0;
  double train_loss = 0;
  double train_accuracy = 0;
  double val_loss = 0;
  double val_accuracy = 0;
  bool operator==(const EpochStats&) const = default;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs_max = 200;
  int batch_size = 32;
  int early_stop_patience = 20;
  // Empty: inverse class frequency of the training split, mean 1.
  std::vector<double> class_weights;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::SgdMomentum;
  double momentum = 0.9;
  // AdamW only: decoupled weight decay and backbone rate = lr * scale.
  double weight_decay = 0.01;
  double backbone_lr_scale = 0.1;
  // Called after every epoch with that epoch's statistics.
  std::function<void(const EpochStats&)> on_epoch;
};


// Tracks validation loss and signals when `patience` epochs have passed
// without a strict improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience);
  // True when training should stop after this epoch.
  bool update(double val_loss);
  bool improved() const { return improved_; }
  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }

 private:
  int patience_;
  int epoch_ = 0;
  int best_epoch_ = 0;
  int since_best_ = 0;
  bool improved_ = false;
  double best_loss_;
};

struct TrainResult {
  GcnModel model;  // weights from the best validation epoch
  std::vector<EpochStats> history;
  int best_epoch = 0;
  bool stopped_early = false;
};

std::vector<double> inverse_frequency_weights(std::span<const Sample> samples, int num_classes);

// Errors: "empty-split", "invalid-argument", "non-finite-loss".
TrainResult train(GcnModel model, std::span<const Sample> train_set,
                  std::span<const Sample> val_set, const TrainConfig& config);

struct EvalStats {
  double loss = 0;
  double accuracy = 0;
};
EvalStats evaluate(const GcnModel& model, std::span<const Sample> samples,
                   std::span<const double> class_weights);

struct GradCheckResult {
  double max_relative_error = 0;
  std::size_t parameters_checked = 0;
};

// Central finite differences over every parameter; relative error is
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-6). Epsilon must lie in
// (0, 1e-2].
GradCheckResult gradient_check(const GcnModel& model, const Sample& sample,
                               std::span<const double> class_weights, double epsilon);

// Checkpoint container (JSON): variant, layer shapes, row-major weights,
// class names, seed and training history.
struct Checkpoint {
  GcnModel model;
  std::vector<EpochStats> history;
};

nlohmann::json to_json(const GcnModel& model, std::span<const EpochStats> history = {});
Checkpoint checkpoint_from_json(const nlohmann::json& j);
void save_checkpoint(const std::filesystem::path& path, const GcnModel& model,
                     std::span<const EpochStats> history = {});
// Errors: "missing-checkpoint", "corrupt-checkpoint".
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tennis::posegcn
