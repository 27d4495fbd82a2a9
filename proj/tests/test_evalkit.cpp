#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "support.hpp"
#include "tennis/evalkit.hpp"

using namespace tennis;
using namespace tennis::evalkit;

namespace {

std::string code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

// Every (positive, negative) pair: 2 for a win, 1 for a tie.
std::optional<double> brute_auc(const std::vector<double>& s, const std::vector<bool>& pos) {
  long long twice = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!pos[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (pos[j]) continue;
      twice += s[i] > s[j] ? 2 : (s[i] == s[j] ? 1 : 0);
      ++pairs;
    }
  }
  if (pairs == 0) return std::nullopt;
  return static_cast<double>(twice) / static_cast<double>(2 * pairs);
}

std::optional<double> lib_auc(const std::vector<double>& s, const std::vector<bool>& pos) {
  std::unique_ptr<bool[]> p(new bool[pos.size()]);
  for (std::size_t i = 0; i < pos.size(); ++i) p[i] = pos[i];
  return binary_auc(s, {p.get(), pos.size()});
}

// Area under the ROC polyline swept over distinct thresholds.
double trapezoid_auc(const std::vector<double>& s, const std::vector<bool>& pos) {
  std::set<double, std::greater<>> thresholds(s.begin(), s.end());
  double P = 0, N = 0;
  for (bool b : pos) (b ? P : N) += 1;
  double area = 0, prev_tpr = 0, prev_fpr = 0;
  for (double t : thresholds) {
    double tp = 0, fp = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] >= t) (pos[i] ? tp : fp) += 1;
    }
    const double tpr = tp / P, fpr = fp / N;
    area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2;
    prev_tpr = tpr;
    prev_fpr = fpr;
  }
  return area;
}

}  // namespace

TEST(EvalKit, AucMatchesPairEnumerationExactly) {
  std::mt19937_64 rng(2024);
  int compared = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = std::uniform_int_distribution<int>(2, 25)(rng);
    // Coarse scores so ties are common.
    std::uniform_int_distribution<int> level(0, trial % 2 ? 4 : 1000);
    std::vector<double> s(n);
    std::vector<bool> pos(n);
    for (int i = 0; i < n; ++i) {
      s[i] = level(rng) / 7.0;
      pos[i] = std::bernoulli_distribution(0.4)(rng);
    }
    const auto expect = brute_auc(s, pos);
    const auto got = lib_auc(s, pos);
    ASSERT_EQ(expect.has_value(), got.has_value());
    if (expect) {
      EXPECT_EQ(*got, *expect) << "trial " << trial;
      EXPECT_NEAR(*got, trapezoid_auc(s, pos), 1e-12);
      ++compared;
    }
  }
  EXPECT_GT(compared, 150);
}

TEST(EvalKit, AucKnownValues) {
  // Three of the four (positive, negative) pairs are ordered correctly.
  EXPECT_EQ(lib_auc({0.9, 0.8, 0.3, 0.1}, {true, false, true, false}), 0.75);
  EXPECT_EQ(lib_auc({0.9, 0.1}, {true, false}), 1.0);
  EXPECT_EQ(lib_auc({0.1, 0.9}, {true, false}), 0.0);
  EXPECT_EQ(lib_auc({0.5, 0.5}, {true, false}), 0.5);
  EXPECT_FALSE(lib_auc({0.5, 0.7}, {true, true}).has_value());
  EXPECT_EQ(code_of([] {
              const bool p[] = {true};
              binary_auc(std::vector<double>{1, 2}, p);
            }),
            "length-mismatch");
}

TEST(EvalKit, AucInvariantUnderMonotoneTransforms) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0, 1);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> s(40);
    std::vector<bool> pos(40);
    for (int i = 0; i < 40; ++i) {
      s[i] = n(rng);
      pos[i] = i % 3 == 0;
    }
    const auto base = *lib_auc(s, pos);
    auto transformed = [&](auto f) {
      std::vector<double> t;
      for (double x : s) t.push_back(f(x));
      return *lib_auc(t, pos);
    };
    EXPECT_EQ(transformed([](double x) { return std::exp(x); }), base);
    EXPECT_EQ(transformed([](double x) { return 3 * x + 7; }), base);
    EXPECT_EQ(transformed([](double x) { return 1 / (1 + std::exp(-x)); }), base);
    EXPECT_EQ(transformed([](double x) { return x * x * x; }), base);
  }
}

TEST(EvalKit, MacroMetricsMatchHandBuiltConfusion) {
  // truth\pred   0  1  2
  //     0        3  1  0
  //     1        0  2  2
  //     2        1  0  1
  const std::vector<int> truth{0, 0, 0, 0, 1, 1, 1, 1, 2, 2};
  const std::vector<int> pred{0, 0, 0, 1, 1, 1, 2, 2, 0, 2};
  const auto r = confusion_and_rates(pred, truth, 3);
  EXPECT_EQ(r.confusion, (std::vector<std::vector<std::int64_t>>{{3, 1, 0}, {0, 2, 2}, {1, 0, 1}}));
  EXPECT_DOUBLE_EQ(r.accuracy, 0.6);
  EXPECT_DOUBLE_EQ(r.per_class[0].precision, 3.0 / 4);
  EXPECT_DOUBLE_EQ(r.per_class[1].precision, 2.0 / 3);
  EXPECT_DOUBLE_EQ(r.per_class[2].precision, 1.0 / 3);
  EXPECT_DOUBLE_EQ(r.per_class[0].recall, 3.0 / 4);
  EXPECT_DOUBLE_EQ(r.per_class[1].recall, 2.0 / 4);
  EXPECT_DOUBLE_EQ(r.per_class[2].recall, 1.0 / 2);
  EXPECT_DOUBLE_EQ(r.macro_precision, (3.0 / 4 + 2.0 / 3 + 1.0 / 3) / 3);
  EXPECT_DOUBLE_EQ(r.macro_recall, (3.0 / 4 + 2.0 / 4 + 1.0 / 2) / 3);

  // Class 3 has no support and leaves the averages; class 2 is never
  // predicted and contributes precision 0.
  const std::vector<int> t2{0, 1, 2, 0};
  const std::vector<int> p2{0, 1, 0, 3};
  const auto r2 = confusion_and_rates(p2, t2, 4);
  EXPECT_EQ(r2.excluded_classes, std::vector<int>{3});
  EXPECT_DOUBLE_EQ(r2.macro_precision, (0.5 + 1.0 + 0.0) / 3);
  EXPECT_DOUBLE_EQ(r2.macro_recall, (0.5 + 1.0 + 0.0) / 3);
}

TEST(EvalKit, MacroMetricsMatchOracleOnRandomInputs) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = std::uniform_int_distribution<int>(2, 6)(rng);
    const int n = std::uniform_int_distribution<int>(1, 60)(rng);
    std::uniform_int_distribution<int> cls(0, k - 1);
    std::vector<int> t(n), p(n);
    for (int i = 0; i < n; ++i) {
      t[i] = cls(rng);
      p[i] = std::bernoulli_distribution(0.5)(rng) ? t[i] : cls(rng);
    }
    std::map<std::pair<int, int>, int> cm;
    for (int i = 0; i < n; ++i) ++cm[{t[i], p[i]}];
    double ps = 0, rs = 0, correct = 0;
    int supported = 0;
    for (int c = 0; c < k; ++c) {
      double tp = cm[{c, c}], support = 0, predicted = 0;
      for (int j = 0; j < k; ++j) {
        support += cm[{c, j}];
        predicted += cm[{j, c}];
      }
      correct += tp;
      if (support == 0) continue;
      ++supported;
      ps += predicted ? tp / predicted : 0;
      rs += tp / support;
    }
    const auto r = confusion_and_rates(p, t, k);
    EXPECT_NEAR(r.accuracy, correct / n, 1e-15);
    EXPECT_NEAR(r.macro_precision, ps / supported, 1e-15);
    EXPECT_NEAR(r.macro_recall, rs / supported, 1e-15);
  }
}

TEST(EvalKit, OvrAuc) {
  // Class 2 never occurs and is excluded from the macro average.
  const std::vector<int> truth{0, 1, 0, 1};
  const std::vector<double> scores{0.9, 0.1, 0.0,  //
                                   0.8, 0.2, 0.0,  //
                                   0.3, 0.7, 0.0,  //
                                   0.1, 0.9, 0.0};
  const auto r = ovr_auc(scores, truth, 3);
  EXPECT_EQ(r.excluded, std::vector<int>{2});
  EXPECT_EQ(r.per_class[0], 0.75);
  EXPECT_EQ(r.per_class[1], 0.75);
  EXPECT_EQ(r.macro, 0.75);
  const std::vector<int> one{0, 0};
  const std::vector<double> s2{0.5, 0.5, 0.5, 0.5};
  EXPECT_EQ(code_of([&] { ovr_auc(s2, one, 2); }), "no-evaluable-class");

  const auto full = evaluate("direction", {"a", "b", "c"}, std::vector<int>{0, 0, 1, 1}, truth,
                             scores);
  EXPECT_EQ(full.macro_auc, 0.75);
  EXPECT_EQ(full.task, "direction");
  const auto j = to_json(full);
  EXPECT_EQ(j.at("per_class").size(), 3u);
  EXPECT_TRUE(j.at("per_class")[2].at("auc").is_null());
  EXPECT_NE(format_table(full).find("macro-auc 0.7500"), std::string::npos);
}

TEST(EvalKit, InputErrors) {
  const std::vector<int> a{0, 1}, b{0};
  EXPECT_EQ(code_of([&] { confusion_and_rates(a, b, 2); }), "length-mismatch");
  EXPECT_EQ(code_of([&] { confusion_and_rates(std::vector<int>{}, std::vector<int>{}, 2); }),
            "empty-input");
  EXPECT_EQ(code_of([&] { confusion_and_rates(a, std::vector<int>{0, 2}, 2); }),
            "invalid-argument");
}

TEST(EvalKit, SplitOnEightVideoLayout) {
  const auto events = fixtures::layout_events();
  const auto holdouts = fixtures::layout_holdouts();
  ASSERT_EQ(events.size(), 101u + 110 + 141 + 88 + 251 + 247 + 243 + 177);
  ASSERT_EQ(holdouts.size(), 2u);

  const auto plan = split_dataset(events, 0.7, 42, holdouts);
  EXPECT_EQ(plan.test_events.size(), 88u + 177);
  const std::size_t pool = 101 + 110 + 141 + 251 + 247 + 243;
  EXPECT_EQ(plan.train_events.size(), static_cast<std::size_t>(0.7 * pool));
  EXPECT_EQ(plan.train_events.size() + plan.val_events.size(), pool);

  std::map<std::string, std::string> video_of;
  for (const auto& e : events) video_of[e.id] = e.video_id;
  const std::set<std::string> held(holdouts.begin(), holdouts.end());
  for (const auto& id : plan.test_events) EXPECT_TRUE(held.count(video_of[id]));
  for (const auto& id : plan.train_events) EXPECT_FALSE(held.count(video_of[id]));
  for (const auto& id : plan.val_events) EXPECT_FALSE(held.count(video_of[id]));

  std::set<std::string> all;
  for (const auto* part : {&plan.train_events, &plan.val_events, &plan.test_events}) {
    all.insert(part->begin(), part->end());
  }
  EXPECT_EQ(all.size(), events.size());

  EXPECT_EQ(split_dataset(events, 0.7, 42, holdouts), plan);
  EXPECT_NE(split_dataset(events, 0.7, 43, holdouts).train_events, plan.train_events);
  // Input order does not change the test split.
  auto reversed = events;
  std::reverse(reversed.begin(), reversed.end());
  auto test_sorted = plan.test_events;
  auto rev_test = split_dataset(reversed, 0.7, 42, holdouts).test_events;
  std::sort(test_sorted.begin(), test_sorted.end());
  std::sort(rev_test.begin(), rev_test.end());
  EXPECT_EQ(rev_test, test_sorted);
}

TEST(EvalKit, SplitRoundingAndErrors) {
  std::vector<EventRef> ev;
  for (int i = 0; i < 90; ++i) ev.push_back({"e" + std::to_string(i), "v"});
  // 0.7 * 90 is 62.99999999999999 in binary floating point.
  EXPECT_EQ(split_dataset(ev, 0.7, 1, {}).train_events.size(), 63u);
  EXPECT_EQ(code_of([&] { split_dataset(ev, 1.0, 1, {}); }), "invalid-argument");
  EXPECT_EQ(code_of([&] { split_dataset(ev, 0.0, 1, {}); }), "invalid-argument");
  const std::vector<std::string> all{"v"};
  EXPECT_EQ(code_of([&] { split_dataset(ev, 0.7, 1, all); }), "empty-split");
  const auto j = to_json(split_dataset(ev, 0.5, 3, {}));
  EXPECT_EQ(j.at("train_events").size(), 45u);
}
