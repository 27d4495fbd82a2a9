#include <gtest/gtest.h>

#include <atomic>
#include <future>
#include <thread>

#include "tennis/error.hpp"
#include "tennis/jobs.hpp"

using namespace tennis;
using namespace tennis::jobs;

namespace {

std::string code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

}  // namespace

TEST(Jobs, SuccessfulJobWalksEveryState) {
  JobRunner runner;
  std::promise<void> go;
  auto gate = go.get_future().share();
  const auto queued = runner.submit(JobKind::Generate, "labels", [gate](const auto& progress) {
    gate.wait();
    progress(0.5);
    return nlohmann::json{{"labelled", 7}};
  });
  EXPECT_EQ(queued.transitions.front(), JobState::Queued);
  go.set_value();
  const auto done = runner.wait(queued.job_id);
  EXPECT_EQ(done.state, JobState::Succeeded);
  EXPECT_EQ(done.transitions,
            (std::vector<JobState>{JobState::Queued, JobState::Running, JobState::Succeeded}));
  EXPECT_EQ(done.result.at("labelled"), 7);
  EXPECT_DOUBLE_EQ(done.progress, 1.0);
  const auto j = to_json(done);
  EXPECT_EQ(j.at("state"), "succeeded");
  EXPECT_EQ(j.at("kind"), "generate");
}

TEST(Jobs, ThrowingWorkFails) {
  JobRunner runner;
  const auto a = runner.submit(JobKind::Train, "t", [](const auto&) -> nlohmann::json {
    throw Error("empty-split", "nothing to train on");
  });
  const auto b = runner.submit(JobKind::Train, "t", [](const auto&) -> nlohmann::json {
    throw std::runtime_error("boom");
  });
  const auto fa = runner.wait(a.job_id);
  EXPECT_EQ(fa.state, JobState::Failed);
  EXPECT_EQ(fa.error_code, "empty-split");
  EXPECT_EQ(fa.transitions.back(), JobState::Failed);
  EXPECT_TRUE(fa.result.is_null());
  const auto fb = runner.wait(b.job_id);
  EXPECT_EQ(fb.state, JobState::Failed);
  EXPECT_TRUE(fb.error_code.has_value());
}

TEST(Jobs, QueueFullAndUnknownJob) {
  JobRunner runner({.train_workers = 1, .generate_workers = 1, .max_queued = 2});
  std::promise<void> go;
  auto gate = go.get_future().share();
  auto blocked = [gate](const auto&) {
    gate.wait();
    return nlohmann::json::object();
  };
  const auto first = runner.submit(JobKind::Generate, "g", blocked);
  // Wait for the single worker to pick it up so the queue is empty.
  while (runner.status(first.job_id).state != JobState::Running) {
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
  runner.submit(JobKind::Generate, "g", blocked);
  runner.submit(JobKind::Generate, "g", blocked);
  EXPECT_EQ(code_of([&] { runner.submit(JobKind::Generate, "g", blocked); }), "queue-full");
  // The other kind has its own queue.
  EXPECT_NO_THROW(runner.submit(JobKind::Train, "t", blocked));
  go.set_value();
  for (const auto& s : runner.list()) EXPECT_EQ(runner.wait(s.job_id).state, JobState::Succeeded);
  EXPECT_EQ(runner.list().size(), 4u);
  EXPECT_EQ(code_of([&] { runner.status("nope"); }), "unknown-job");
}

TEST(Jobs, KindsRunConcurrently) {
  JobRunner runner({.train_workers = 1, .generate_workers = 2, .max_queued = 8});
  std::atomic<int> running{0}, peak{0};
  auto work = [&](const auto&) {
    const int now = ++running;
    int p = peak.load();
    while (now > p && !peak.compare_exchange_weak(p, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(60));
    --running;
    return nlohmann::json::object();
  };
  std::vector<std::string> ids;
  ids.push_back(runner.submit(JobKind::Train, "t", work).job_id);
  ids.push_back(runner.submit(JobKind::Generate, "g", work).job_id);
  ids.push_back(runner.submit(JobKind::Generate, "g", work).job_id);
  for (const auto& id : ids) runner.wait(id);
  EXPECT_EQ(peak.load(), 3);
}

TEST(Jobs, ShutdownFailsQueuedAndFinishesRunning) {
  JobRunner runner({.train_workers = 1, .generate_workers = 1, .max_queued = 4});
  std::atomic<bool> release{false};
  const auto running = runner.submit(JobKind::Train, "t", [&](const auto&) {
    while (!release) std::this_thread::sleep_for(std::chrono::milliseconds(1));
    return nlohmann::json{{"ok", true}};
  });
  while (runner.status(running.job_id).state != JobState::Running) {
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
  const auto queued = runner.submit(JobKind::Train, "t", [](const auto&) {
    return nlohmann::json::object();
  });
  std::thread releaser([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    release = true;
  });
  runner.shutdown();
  releaser.join();
  EXPECT_EQ(runner.status(running.job_id).state, JobState::Succeeded);
  const auto q = runner.status(queued.job_id);
  EXPECT_EQ(q.state, JobState::Failed);
  EXPECT_EQ(q.transitions, (std::vector<JobState>{JobState::Queued, JobState::Failed}));
}
