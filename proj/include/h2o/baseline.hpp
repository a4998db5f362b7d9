#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "h2o/domain.hpp"
#include "h2o/hierarchy.hpp"
#include "h2o/platform.hpp"

namespace h2o {

/// Round-Robin over (cluster, server, hour, minute) slots. The cursor advances by one
/// slot per placed task; clusters rotate fastest, then servers within a cluster, then
/// hours, then minutes. A task takes the first slot from the cursor that satisfies
/// support, capacity, dependencies and its soft deadline.
class RoundRobinScheduler {
 public:
  explicit RoundRobinScheduler(const PlatformConfig& platform) : platform_(platform), ledger_(platform) {
    // Interleave clusters: c0s0, c1s0, ..., c0s1, c1s1, ...
    std::size_t largest = 0;
    for (const auto& c : platform_.clusters) largest = std::max(largest, c.servers.size());
    for (std::size_t i = 0; i < largest; ++i)
      for (const auto& c : platform_.clusters)
        if (i < c.servers.size()) order_.push_back(c.servers[i]);
    slots_ = static_cast<std::int64_t>(order_.size()) * platform_.horizon_minutes();
  }

  AllocationLedger& ledger() { return ledger_; }
  const AllocationLedger& ledger() const { return ledger_; }
  std::int64_t cursor() const { return cursor_; }

  struct Slot {
    ServerId server;
    int start;
  };

  Slot slot(std::int64_t i) const {
    const auto n = static_cast<std::int64_t>(order_.size());
    const std::int64_t hours = platform_.horizon_hours;
    const auto server = order_[static_cast<std::size_t>(i % n)];
    const auto hour = static_cast<int>((i / n) % hours);
    const auto minute = static_cast<int>(i / (n * hours));
    return {server, hour * platform_.minutes_per_hour + minute};
  }

  void schedule_job(const Job& job) {
    const auto order = topological_tasks(job);
    for (const Task* t : order) ledger_.record(*t);
    const bool admitted = std::all_of(order.begin(), order.end(), [&](const Task* t) {
      return admission_check(platform_, *t) == Admission::Accept;
    });
    if (!admitted) {
      for (const Task* t : order) {
        ledger_.record(*t).admitted = false;
        ledger_.reject(*t, RejectReason::Unfulfillable);
      }
      return;
    }
    std::optional<ClusterId> cluster;
    for (std::size_t i = 0; i < order.size(); ++i) {
      if (schedule_task(job, *order[i], cluster)) {
        cluster = ledger_.find({job.job_id, order[i]->task_id})->decision->cluster_id;
        continue;
      }
      for (std::size_t j = 0; j < order.size(); ++j) {
        if (j < i) ledger_.release({job.job_id, order[j]->task_id});
        if (j != i) ledger_.reject(*order[j], RejectReason::JobRollback);
      }
      return;
    }
  }

  /// Places one task; false if no slot in the whole rotation works. Once a job has a
  /// task placed, its remaining tasks only take slots in the same cluster.
  bool schedule_task(const Job& job, const Task& task, std::optional<ClusterId> cluster = std::nullopt) {
    auto& rec = ledger_.record(task);
    const int last_any = ledger_.horizon_minutes() - task.duration_minutes;
    std::vector<int> ready(platform_.servers.size(), -1);
    for (std::int64_t k = 0; k < slots_; ++k) {
      const std::int64_t i = (cursor_ + k) % slots_;
      const auto [server_id, start] = slot(i);
      if (cluster && platform_.server(server_id).cluster_id != *cluster) continue;
      auto& es = ready[static_cast<std::size_t>(server_id)];
      if (es < 0) es = earliest_start(ledger_, job, task, platform_, server_id);
      if (start < es || start > last_any) continue;
      const int end = start + task.duration_minutes - 1;
      const auto& server = platform_.server(server_id);
      if (!can_host(ledger_, server, task, start, end)) continue;
      if (end > task.deadline_minute) {
        // This assignment would violate the soft deadline; move on to the next option.
        rec.deadline_violation = true;
        continue;
      }
      ledger_.allocate(platform_, task,
                       {server.cluster_id, server_id, start / platform_.minutes_per_hour, start, end});
      cursor_ = (i + 1) % slots_;
      return true;
    }
    ledger_.reject(task, rec.deadline_violation ? RejectReason::Deadline : RejectReason::NoValidAction);
    return false;
  }

 private:
  const PlatformConfig& platform_;
  AllocationLedger ledger_;
  std::vector<ServerId> order_;
  std::int64_t slots_ = 0;
  std::int64_t cursor_ = 0;
};

inline AllocationLedger run_rr_baseline(const std::vector<Job>& jobs, const PlatformConfig& platform) {
  if (auto v = validate_platform(platform); !v)
    throw Error(std::string("invalid platform: ") + to_string(v.code) + " " + v.detail);
  for (const auto& j : jobs)
    if (auto v = validate_job(j); !v) throw Error(std::string("invalid job: ") + to_string(v.code) + " " + v.detail);
  RoundRobinScheduler rr(platform);
  for (const Job* j : jobs_by_arrival(jobs)) rr.schedule_job(*j);
  return rr.ledger();
}

}  // namespace h2o
