#include "tennis/jobs.hpp"

#include <algorithm>

#include "tennis/error.hpp"

namespace tennis::jobs {

std::string_view to_token(JobKind kind) {
  return kind == JobKind::Train ? "train" : "generate";
}

std::string_view to_token(JobState state) {
  switch (state) {
    case JobState::Queued: return "queued";
    case JobState::Running: return "running";
    case JobState::Succeeded: return "succeeded";
    case JobState::Failed: return "failed";
  }
  return "?";
}

nlohmann::json to_json(const JobStatus& s) {
  auto transitions = nlohmann::json::array();
  for (auto t : s.transitions) transitions.push_back(to_token(t));
  nlohmann::json j{{"job_id", s.job_id},
                   {"kind", to_token(s.kind)},
                   {"state", to_token(s.state)},
                   {"progress", s.progress},
                   {"message", s.message},
                   {"transitions", std::move(transitions)},
                   {"result", s.result}};
  if (s.error_code) j["error_code"] = *s.error_code;
  return j;
}

JobRunner::JobRunner(RunnerLimits limits) : limits_(limits) {
  if (limits_.train_workers < 1 || limits_.generate_workers < 1) {
    throw Error("invalid-argument", "each job kind needs at least one worker");
  }
  for (int i = 0; i < limits_.train_workers; ++i) {
    train_.workers.emplace_back([this] { worker_loop(JobKind::Train); });
  }
  for (int i = 0; i < limits_.generate_workers; ++i) {
    generate_.workers.emplace_back([this] { worker_loop(JobKind::Generate); });
  }
}

JobRunner::~JobRunner() { shutdown(); }

void JobRunner::shutdown() {
  {
    std::lock_guard lock(mutex_);
    if (stopping_) return;
    stopping_ = true;
    for (Pool* p : {&train_, &generate_}) {
      for (const auto& id : p->queue) {
        auto& job = jobs_.at(id);
        job.status.message = "service shutting down";
        transition(job, JobState::Failed);
      }
      p->queue.clear();
    }
  }
  changed_.notify_all();
  for (Pool* p : {&train_, &generate_}) {
    for (auto& t : p->workers) {
      if (t.joinable()) t.join();
    }
  }
}

void JobRunner::transition(Job& job, JobState state) {
  job.status.state = state;
  job.status.transitions.push_back(state);
}

JobStatus JobRunner::submit(JobKind kind, std::string description, Work work) {
  std::lock_guard lock(mutex_);
  if (stopping_) throw Error("queue-full", "job runner is shutting down");
  auto& p = pool(kind);
  if (p.queue.size() >= limits_.max_queued) {
    throw Error("queue-full", std::string(to_token(kind)) + " queue holds " +
                                  std::to_string(p.queue.size()) + " jobs");
  }
  const std::string id = "job-" + std::to_string(next_id_++);
  Job job;
  job.status.job_id = id;
  job.status.kind = kind;
  job.status.message = std::move(description);
  job.work = std::move(work);
  transition(job, JobState::Queued);
  auto& stored = jobs_.emplace(id, std::move(job)).first->second;
  p.queue.push_back(id);
  changed_.notify_all();
  return stored.status;
}

JobStatus JobRunner::status(const std::string& job_id) const {
  std::lock_guard lock(mutex_);
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) throw Error("unknown-job", "no job '" + job_id + "'");
  return it->second.status;
}

std::vector<JobStatus> JobRunner::list() const {
  std::lock_guard lock(mutex_);
  std::vector<JobStatus> out;
  for (const auto& [id, job] : jobs_) out.push_back(job.status);
  return out;
}

JobStatus JobRunner::wait(const std::string& job_id) const {
  std::unique_lock lock(mutex_);
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) throw Error("unknown-job", "no job '" + job_id + "'");
  changed_.wait(lock, [&] {
    const auto s = it->second.status.state;
    return s == JobState::Succeeded || s == JobState::Failed;
  });
  return it->second.status;
}

void JobRunner::worker_loop(JobKind kind) {
  auto& p = pool(kind);
  for (;;) {
    std::string id;
    Work work;
    {
      std::unique_lock lock(mutex_);
      changed_.wait(lock, [&] { return stopping_ || !p.queue.empty(); });
      if (p.queue.empty()) return;
      id = p.queue.front();
      p.queue.pop_front();
      auto& job = jobs_.at(id);
      transition(job, JobState::Running);
      work = std::move(job.work);
    }
    changed_.notify_all();

    const ProgressFn progress = [this, id](double f) {
      std::lock_guard lock(mutex_);
      auto& s = jobs_.at(id).status;
      s.progress = std::clamp(f, s.progress, 1.0);
    };

    nlohmann::json result;
    std::optional<std::string> code;
    std::string message;
    try {
      result = work(progress);
    } catch (const Error& e) {
      code = e.code();
      message = e.what();
    } catch (const std::exception& e) {
      code = "internal";
      message = e.what();
    }
    {
      std::lock_guard lock(mutex_);
      auto& job = jobs_.at(id);
      if (code) {
        job.status.error_code = code;
        job.status.message = message;
        transition(job, JobState::Failed);
      } else {
        job.status.progress = 1.0;
        job.status.result = std::move(result);
        transition(job, JobState::Succeeded);
      }
    }
    changed_.notify_all();
  }
}

}  // namespace tennis::jobs
