#include "tennis/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <memory>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "tennis/error.hpp"

namespace tennis::evalkit {

EvalResult confusion_and_rates(std::span<const int> predictions, std::span<const int> truths,
                               int num_classes) {
  if (predictions.size() != truths.size()) {
    throw Error("length-mismatch", "predictions and truths differ in length");
  }
  if (truths.empty()) throw Error("empty-input", "no samples to evaluate");
  if (num_classes < 1) throw Error("invalid-argument", "need at least one class");
  const auto k = static_cast<std::size_t>(num_classes);

  EvalResult r;
  r.confusion.assign(k, std::vector<std::int64_t>(k, 0));
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const int t = truths[i];
    const int p = predictions[i];
    if (t < 0 || t >= num_classes || p < 0 || p >= num_classes) {
      throw Error("invalid-argument", "class id out of range at sample " + std::to_string(i));
    }
    ++r.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
  }

  std::int64_t trace = 0;
  r.per_class.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    trace += r.confusion[c][c];
    auto& s = r.per_class[c];
    for (std::size_t j = 0; j < k; ++j) {
      s.support += r.confusion[c][j];
      s.predicted += r.confusion[j][c];
    }
    const auto tp = static_cast<double>(r.confusion[c][c]);
    s.precision = s.predicted > 0 ? tp / static_cast<double>(s.predicted) : 0.0;
    s.recall = s.support > 0 ? tp / static_cast<double>(s.support) : 0.0;
  }
  r.accuracy = static_cast<double>(trace) / static_cast<double>(truths.size());

  double p_sum = 0;
  double r_sum = 0;
  int supported = 0;
  for (std::size_t c = 0; c < k; ++c) {
    if (r.per_class[c].support == 0) {
      r.excluded_classes.push_back(static_cast<int>(c));
      continue;
    }
    p_sum += r.per_class[c].precision;
    r_sum += r.per_class[c].recall;
    ++supported;
  }
  r.macro_precision = p_sum / supported;
  r.macro_recall = r_sum / supported;
  return r;
}

std::optional<double> binary_auc(std::span<const double> scores, std::span<const bool> positive) {
  if (scores.size() != positive.size()) {
    throw Error("length-mismatch", "scores and labels differ in length");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Walk tie groups in ascending score order. Each positive beats every
  // negative seen in earlier groups and half-beats negatives in its own.
  double concordant = 0;
  double negatives_below = 0;
  double total_pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    double pos = 0;
    double neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (positive[order[j]] ? pos : neg) += 1.0;
      ++j;
    }
    concordant += pos * negatives_below + 0.5 * pos * neg;
    negatives_below += neg;
    total_pos += pos;
    i = j;
  }
  if (total_pos == 0 || negatives_below == 0) return std::nullopt;
  return concordant / (total_pos * negatives_below);
}

OvrAuc ovr_auc(std::span<const double> scores, std::span<const int> truths, int num_classes) {
  const auto k = static_cast<std::size_t>(num_classes);
  if (num_classes < 1 || scores.size() != truths.size() * k) {
    throw Error("length-mismatch", "scores must hold num_classes values per sample");
  }
  OvrAuc out;
  out.per_class.resize(k);
  std::vector<double> column(truths.size());
  std::unique_ptr<bool[]> positive(new bool[truths.size()]);
  double sum = 0;
  int evaluated = 0;
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t i = 0; i < truths.size(); ++i) {
      column[i] = scores[i * k + c];
      positive[i] = truths[i] == static_cast<int>(c);
    }
    out.per_class[c] = binary_auc(column, {positive.get(), truths.size()});
    if (out.per_class[c]) {
      sum += *out.per_class[c];
      ++evaluated;
    } else {
      out.excluded.push_back(static_cast<int>(c));
    }
  }
  if (evaluated == 0) {
    throw Error("no-evaluable-class", "no class has both positive and negative samples");
  }
  out.macro = sum / evaluated;
  return out;
}

EvalResult evaluate(std::string task, std::vector<std::string> class_names,
                    std::span<const int> predictions, std::span<const int> truths,
                    std::span<const double> scores) {
  const int k = static_cast<int>(class_names.size());
  EvalResult r = confusion_and_rates(predictions, truths, k);
  r.task = std::move(task);
  r.class_names = std::move(class_names);
  if (!scores.empty()) {
    try {
      const auto auc = ovr_auc(scores, truths, k);
      r.macro_auc = auc.macro;
      for (std::size_t c = 0; c < r.per_class.size(); ++c) r.per_class[c].auc = auc.per_class[c];
      r.auc_excluded_classes = auc.excluded;
    } catch (const Error& e) {
      if (e.code() != "no-evaluable-class") throw;
      for (int c = 0; c < k; ++c) r.auc_excluded_classes.push_back(c);
    }
  }
  return r;
}

nlohmann::json to_json(const EvalResult& r) {
  auto per_class = nlohmann::json::array();
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const auto& s = r.per_class[c];
    per_class.push_back({{"class", c < r.class_names.size() ? r.class_names[c] : std::to_string(c)},
                         {"support", s.support},
                         {"predicted", s.predicted},
                         {"precision", s.precision},
                         {"recall", s.recall},
                         {"auc", s.auc ? nlohmann::json(*s.auc) : nlohmann::json(nullptr)}});
  }
  return {{"task", r.task},
          {"class_names", r.class_names},
          {"accuracy", r.accuracy},
          {"macro_precision", r.macro_precision},
          {"macro_recall", r.macro_recall},
          {"macro_auc", r.macro_auc ? nlohmann::json(*r.macro_auc) : nlohmann::json(nullptr)},
          {"confusion", r.confusion},
          {"per_class", std::move(per_class)},
          {"excluded_classes", r.excluded_classes},
          {"auc_excluded_classes", r.auc_excluded_classes}};
}

std::string format_table(const EvalResult& r) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  out << "task: " << r.task << "\n";
  out << "accuracy " << r.accuracy << "  macro-precision " << r.macro_precision
      << "  macro-recall " << r.macro_recall << "  macro-auc ";
  if (r.macro_auc) {
    out << *r.macro_auc;
  } else {
    out << "n/a";
  }
  out << "\n\n" << std::left << std::setw(16) << "class" << std::right << std::setw(9)
      << "support" << std::setw(11) << "precision" << std::setw(9) << "recall" << std::setw(9)
      << "auc" << "\n";
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const auto& s = r.per_class[c];
    out << std::left << std::setw(16) << (c < r.class_names.size() ? r.class_names[c] : "?")
        << std::right << std::setw(9) << s.support << std::setw(11) << s.precision
        << std::setw(9) << s.recall << std::setw(9);
    if (s.auc) {
      out << *s.auc;
    } else {
      out << "-";
    }
    out << "\n";
  }
  return out.str();
}

SplitPlan split_dataset(std::span<const EventRef> events, double ratio, std::uint64_t seed,
                        std::span<const std::string> holdout_video_ids) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw Error("invalid-argument", "split ratio must lie strictly between 0 and 1");
  }
  SplitPlan plan;
  plan.ratio = ratio;
  plan.seed = seed;
  plan.holdout_video_ids.assign(holdout_video_ids.begin(), holdout_video_ids.end());
  const std::set<std::string> holdouts(holdout_video_ids.begin(), holdout_video_ids.end());

  std::vector<std::string> pool;
  for (const auto& e : events) {
    if (holdouts.count(e.video_id)) {
      plan.test_events.push_back(e.id);
    } else {
      pool.push_back(e.id);
    }
  }
  if (pool.empty()) {
    throw Error("empty-split", "every event belongs to a held-out video");
  }
  std::mt19937_64 rng(seed);
  std::shuffle(pool.begin(), pool.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(pool.size()) + 1e-9));
  plan.train_events.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_train));
  plan.val_events.assign(pool.begin() + static_cast<std::ptrdiff_t>(n_train), pool.end());
  return plan;
}

nlohmann::json to_json(const SplitPlan& plan) {
  return {{"ratio", plan.ratio},
          {"seed", plan.seed},
          {"holdout_video_ids", plan.holdout_video_ids},
          {"train_events", plan.train_events},
          {"val_events", plan.val_events},
          {"test_events", plan.test_events}};
}

}  // namespace tennis::evalkit
