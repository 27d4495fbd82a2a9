#pragma once

// Classification metrics (accuracy, macro precision/recall, macro one-vs-rest
// AUC) and the event-level train/validation/test split.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace tennis::evalkit {

struct ClassStats {
  std::int64_t support = 0;    // truth count
  std::int64_t predicted = 0;  // prediction count
  double precision = 0;
  double recall = 0;
  std::optional<double> auc;  // absent when the class lacks positives or negatives
};

struct EvalResult {
  std::string task;
  std::vector<std::string> class_names;
  double accuracy = 0;
  double macro_precision = 0;
  double macro_recall = 0;
  std::optional<double> macro_auc;
  std::vector<std::vector<std::int64_t>> confusion;  // [truth][prediction]
  std::vector<ClassStats> per_class;
  // Classes left out of the macro averages for lack of support.
  std::vector<int> excluded_classes;
  std::vector<int> auc_excluded_classes;
};

// Macro averages run over classes present in the truth; a supported class
// that is never predicted has precision 0. Errors: "length-mismatch",
// "empty-input", "invalid-argument" (class id out of range).
EvalResult confusion_and_rates(std::span<const int> predictions, std::span<const int> truths,
                               int num_classes);

// Binary AUC by pair counting: fraction of (positive, negative) pairs ranked
// correctly, ties counting one half. Returns nullopt without both classes.
std::optional<double> binary_auc(std::span<const double> scores, std::span<const bool> positive);

struct OvrAuc {
  double macro = 0;
  std::vector<std::optional<double>> per_class;
  std::vector<int> excluded;
};

// scores is row-major, one row of num_classes probabilities per sample.
// Error "no-evaluable-class" when no class has both positives and negatives.
OvrAuc ovr_auc(std::span<const double> scores, std::span<const int> truths, int num_classes);

// confusion_and_rates plus ovr_auc when scores are given.
EvalResult evaluate(std::string task, std::vector<std::string> class_names,
                    std::span<const int> predictions, std::span<const int> truths,
                    std::span<const double> scores = {});

nlohmann::json to_json(const EvalResult& result);
// Plain-text table for terminals.
std::string format_table(const EvalResult& result);

struct EventRef {
  std::string id;
  std::string video_id;
};

struct SplitPlan {
  std::vector<std::string> train_events;
  std::vector<std::string> val_events;
  std::vector<std::string> test_events;
  double ratio = 0.7;
  std::uint64_t seed = 0;
  std::vector<std::string> holdout_video_ids;

  bool operator==(const SplitPlan&) const = default;
};

// Holdout-video events go to test. The rest are shuffled with the seeded
// generator; the first floor(ratio * n) become train, the remainder val.
// Errors: "invalid-argument" (ratio outside (0, 1)), "empty-split".
SplitPlan split_dataset(std::span<const EventRef> events, double ratio, std::uint64_t seed,
                        std::span<const std::string> holdout_video_ids);

nlohmann::json to_json(const SplitPlan& plan);

}  // namespace tennis::evalkit
