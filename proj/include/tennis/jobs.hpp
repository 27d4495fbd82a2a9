#pragma once

// Background job runner for training and label generation. Each kind has
// its own worker pool and bounded queue.

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

namespace tennis::jobs {

enum class JobKind { Train, Generate };
enum class JobState { Queued, Running, Succeeded, Failed };

std::string_view to_token(JobKind kind);
std::string_view to_token(JobState state);

struct JobStatus {
  std::string job_id;
  JobKind kind = JobKind::Generate;
  JobState state = JobState::Queued;
  double progress = 0;
  std::string message;
  std::optional<std::string> error_code;
  nlohmann::json result;  // null until Succeeded
  // Every state the job has been in, in order.
  std::vector<JobState> transitions;
};

nlohmann::json to_json(const JobStatus& status);

struct RunnerLimits {
  int train_workers = 1;
  int generate_workers = 2;
  // Jobs waiting per kind before submissions are refused.
  std::size_t max_queued = 16;
};

class JobRunner {
 public:
  using ProgressFn = std::function<void(double)>;
  using Work = std::function<nlohmann::json(const ProgressFn&)>;

  explicit JobRunner(RunnerLimits limits = {});
  ~JobRunner();
  JobRunner(const JobRunner&) = delete;
  JobRunner& operator=(const JobRunner&) = delete;

  // Returns the new job's status. Error "queue-full" when the kind's queue is
  // at capacity. Work signals failure by throwing.
  JobStatus submit(JobKind kind, std::string description, Work work);
  // Error "unknown-job".
  JobStatus status(const std::string& job_id) const;
  std::vector<JobStatus> list() const;
  // Blocks until the job is Succeeded or Failed.
  JobStatus wait(const std::string& job_id) const;
  // Queued jobs are failed; running ones are allowed to finish.
  void shutdown();

 private:
  struct Job {
    JobStatus status;
    Work work;
  };
  struct Pool {
    std::deque<std::string> queue;
    std::vector<std::thread> workers;
  };

  void worker_loop(JobKind kind);
  Pool& pool(JobKind kind) { return kind == JobKind::Train ? train_ : generate_; }
  void transition(Job& job, JobState state);

  RunnerLimits limits_;
  mutable std::mutex mutex_;
  mutable std::condition_variable changed_;
  std::map<std::string, Job> jobs_;
  Pool train_;
  Pool generate_;
  std::uint64_t next_id_ = 1;
  bool stopping_ = false;
};

}  // namespace tennis::jobs
