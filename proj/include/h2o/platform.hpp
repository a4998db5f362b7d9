#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "h2o/detail/text.hpp"
#include "h2o/domain.hpp"

namespace h2o {

/// Slack used when comparing accumulated demand against capacity.
inline constexpr double kCapacityEps = 1e-9;

struct TaskKey {
  JobId job = 0;
  TaskId task = 0;

  friend bool operator==(const TaskKey&, const TaskKey&) = default;
  std::string str() const { return std::to_string(job) + ":" + std::to_string(task); }
};

struct TaskKeyHash {
  std::size_t operator()(const TaskKey& k) const noexcept {
    return std::hash<JobId>()(k.job) * 1000003u ^ std::hash<TaskId>()(k.task);
  }
};

/// Where and when a task runs. end_minute is inclusive.
struct Decision {
  ClusterId cluster_id = 0;
  ServerId server_id = 0;
  int hour = 0;
  int start_minute = 0;
  int end_minute = 0;

  friend bool operator==(const Decision&, const Decision&) = default;
};

enum class TaskStatus { Pending, Scheduled, Rejected };

enum class RejectReason { None, Unfulfillable, Deadline, NoValidAction, JobRollback };

struct TaskRecord {
  TaskKey key;
  TaskStatus status = TaskStatus::Pending;
  RejectReason reason = RejectReason::None;
  std::optional<Decision> decision;
  int recycles = 0;
  bool deadline_violation = false;  // triggered at least one soft-deadline recycle/rejection
  bool admitted = true;
  int priority = 0;
  int deadline_minute = 0;
  int duration_minutes = 0;
  double cpu = 0.0;
  double mem = 0.0;

  std::string status_str() const {
    if (status == TaskStatus::Scheduled) return recycles > 0 ? "recycled_then_scheduled" : "scheduled";
    if (status == TaskStatus::Rejected) return recycles > 0 ? "recycled_then_rejected" : "rejected";
    return "pending";
  }
};

/// One task's presence on a server.
struct Placement {
  TaskKey key;
  int start = 0;
  int end = 0;  // inclusive
  double cpu = 0.0;
  double mem = 0.0;
  std::vector<VmTypeId> vm_types;
};

class CapacityViolation : public Error {
 public:
  using Error::Error;
};

class PredecessorUnscheduled : public Error {
 public:
  using Error::Error;
};

/// Per-minute resource state of every server plus the outcome of every task seen.
class AllocationLedger {
 public:
  AllocationLedger() = default;
  explicit AllocationLedger(const PlatformConfig& cfg)
      : servers_(cfg.servers.size()),
        horizon_(cfg.horizon_minutes()),
        hours_(cfg.horizon_hours),
        cpu_(servers_ * static_cast<std::size_t>(horizon_), 0.0),
        mem_(cpu_.size(), 0.0),
        hour_cpu_(servers_ * static_cast<std::size_t>(hours_), 0.0),
        hour_task_minutes_(hour_cpu_.size(), 0),
        server_cpu_(servers_, 0.0),
        placements_(servers_) {}

  std::size_t server_count() const { return servers_; }
  int horizon_minutes() const { return horizon_; }
  int horizon_hours() const { return hours_; }

  double cpu_used(ServerId s, int minute) const { return cpu_[idx(s, minute)]; }
  double mem_used(ServerId s, int minute) const { return mem_[idx(s, minute)]; }
  /// Sum over the hour's minutes of allocated CPU.
  double hour_cpu_sum(ServerId s, int hour) const { return hour_cpu_[hidx(s, hour)]; }
  int hour_task_minutes(ServerId s, int hour) const { return hour_task_minutes_[hidx(s, hour)]; }
  double horizon_cpu_sum(ServerId s) const { return server_cpu_[static_cast<std::size_t>(s)]; }
  const std::vector<Placement>& placements(ServerId s) const {
    return placements_[static_cast<std::size_t>(s)];
  }

  /// Entries present on a server at a minute.
  std::vector<const Placement*> entries_at(ServerId s, int minute) const {
    std::vector<const Placement*> out;
    for (const auto& p : placements(s))
      if (p.start <= minute && minute <= p.end) out.push_back(&p);
    return out;
  }

  TaskRecord& record(const Task& t) {
    TaskKey key{t.job_id, t.task_id};
    auto [it, inserted] = index_.try_emplace(key, records_.size());
    if (inserted) {
      TaskRecord r;
      r.key = key;
      r.priority = t.priority;
      r.deadline_minute = t.deadline_minute;
      r.duration_minutes = t.duration_minutes;
      r.cpu = t.total_cpu();
      r.mem = t.total_mem();
      records_.push_back(r);
    }
    return records_[it->second];
  }
  const TaskRecord* find(const TaskKey& key) const {
    auto it = index_.find(key);
    return it == index_.end() ? nullptr : &records_[it->second];
  }
  const std::vector<TaskRecord>& records() const { return records_; }

  /// Adds the task to every minute of the decision's interval.
  void allocate(const PlatformConfig& cfg, const Task& task, const Decision& d) {
    const auto& srv = cfg.server(d.server_id);
    if (d.end_minute - d.start_minute + 1 != task.duration_minutes)
      throw CapacityViolation("interval length does not match duration for " + TaskKey{task.job_id, task.task_id}.str());
    if (d.start_minute < 0 || d.end_minute >= horizon_)
      throw CapacityViolation("interval outside the horizon");
    if (d.start_minute / cfg.minutes_per_hour != d.hour)
      throw CapacityViolation("start minute is not inside the chosen hour");
    if (srv.cluster_id != d.cluster_id) throw CapacityViolation("server is not in the chosen cluster");
    for (const auto& r : task.vm_requests)
      if (!srv.supports(r.vm_type))
        throw CapacityViolation("vm type " + std::to_string(r.vm_type) + " unsupported on server " +
                                std::to_string(d.server_id));
    const double c = task.total_cpu(), m = task.total_mem();
    for (int t = d.start_minute; t <= d.end_minute; ++t)
      if (cpu_[idx(d.server_id, t)] + c > srv.cpu_capacity + kCapacityEps ||
          mem_[idx(d.server_id, t)] + m > srv.mem_capacity + kCapacityEps)
        throw CapacityViolation("capacity exceeded on server " + std::to_string(d.server_id) + " minute " +
                                std::to_string(t));
    apply(d.server_id, d.start_minute, d.end_minute, c, m, +1);
    Placement p{{task.job_id, task.task_id}, d.start_minute, d.end_minute, c, m, {}};
    for (const auto& r : task.vm_requests) p.vm_types.push_back(r.vm_type);
    placements_[static_cast<std::size_t>(d.server_id)].push_back(std::move(p));
    auto& rec = record(task);
    rec.status = TaskStatus::Scheduled;
    rec.reason = RejectReason::None;
    rec.decision = d;
  }

  /// Removes a scheduled task's allocation (job rollback); the record returns to Pending.
  void release(const TaskKey& key) {
    auto it = index_.find(key);
    if (it == index_.end()) return;
    auto& rec = records_[it->second];
    if (rec.status != TaskStatus::Scheduled || !rec.decision) return;
    const auto& d = *rec.decision;
    auto& ps = placements_[static_cast<std::size_t>(d.server_id)];
    auto pit = std::find_if(ps.begin(), ps.end(), [&](const Placement& p) { return p.key == key; });
    if (pit != ps.end()) {
      apply(d.server_id, pit->start, pit->end, pit->cpu, pit->mem, -1);
      ps.erase(pit);
    }
    rec.status = TaskStatus::Pending;
    rec.decision.reset();
  }

  void reject(const Task& task, RejectReason reason) {
    auto& rec = record(task);
    rec.status = TaskStatus::Rejected;
    rec.reason = reason;
    rec.decision.reset();
  }

  /// CSV export: task_key,cluster_id,server_id,hour,start_minute,end_minute,status
  std::string to_csv() const {
    std::string out = "task_key,cluster_id,server_id,hour,start_minute,end_minute,status\n";
    for (const auto& r : records_) {
      out += r.key.str() + ',';
      if (r.decision)
        out += std::to_string(r.decision->cluster_id) + ',' + std::to_string(r.decision->server_id) + ',' +
               std::to_string(r.decision->hour) + ',' + std::to_string(r.decision->start_minute) + ',' +
               std::to_string(r.decision->end_minute);
      else
        out += ",,,,";
      out += ',' + r.status_str() + '\n';
    }
    return out;
  }

 private:
  std::size_t idx(ServerId s, int minute) const {
    return static_cast<std::size_t>(s) * static_cast<std::size_t>(horizon_) + static_cast<std::size_t>(minute);
  }
  std::size_t hidx(ServerId s, int hour) const {
    return static_cast<std::size_t>(s) * static_cast<std::size_t>(hours_) + static_cast<std::size_t>(hour);
  }

  void apply(ServerId s, int start, int end, double c, double m, int sign) {
    const int per_hour = horizon_ / hours_;
    for (int t = start; t <= end; ++t) {
      auto i = idx(s, t);
      cpu_[i] += sign * c;
      mem_[i] += sign * m;
      if (sign < 0) {
        // Snap accumulated rounding residue back to zero.
        if (std::abs(cpu_[i]) < kCapacityEps) cpu_[i] = 0.0;
        if (std::abs(mem_[i]) < kCapacityEps) mem_[i] = 0.0;
      }
      auto h = hidx(s, t / per_hour);
      hour_cpu_[h] += sign * c;
      hour_task_minutes_[h] += sign;
    }
    server_cpu_[static_cast<std::size_t>(s)] += sign * c * (end - start + 1);
  }

  std::size_t servers_ = 0;
  int horizon_ = 0;
  int hours_ = 0;
  std::vector<double> cpu_, mem_;
  std::vector<double> hour_cpu_;
  std::vector<int> hour_task_minutes_;
  std::vector<double> server_cpu_;
  std::vector<std::vector<Placement>> placements_;
  std::vector<TaskRecord> records_;
  std::unordered_map<TaskKey, std::size_t, TaskKeyHash> index_;
};

enum class Admission { Accept, RejectUnfulfillable };

inline bool server_supports_all(const Server& s, const Task& task) {
  return std::all_of(task.vm_requests.begin(), task.vm_requests.end(),
                     [&](const VmRequest& r) { return s.supports(r.vm_type); });
}

/// Accept iff some server could host the whole task when empty.
inline Admission admission_check(const PlatformConfig& cfg, const Task& task) {
  const double c = task.total_cpu(), m = task.total_mem();
  for (const auto& s : cfg.servers)
    if (server_supports_all(s, task) && c <= s.cpu_capacity + kCapacityEps && m <= s.mem_capacity + kCapacityEps)
      return Admission::Accept;
  return Admission::RejectUnfulfillable;
}

/// Support-set membership plus per-minute capacity over [start, end] (inclusive, non-strict).
inline bool can_host(const AllocationLedger& ledger, const Server& server, const Task& task, int start, int end) {
  if (start < 0 || end >= ledger.horizon_minutes() || end < start) return false;
  if (!server_supports_all(server, task)) return false;
  const double c = task.total_cpu(), m = task.total_mem();
  for (int t = start; t <= end; ++t)
    if (ledger.cpu_used(server.id, t) + c > server.cpu_capacity + kCapacityEps ||
        ledger.mem_used(server.id, t) + m > server.mem_capacity + kCapacityEps)
      return false;
  return true;
}

inline double utilization(const AllocationLedger& ledger, const Server& server, int minute) {
  return ledger.cpu_used(server.id, minute) / server.cpu_capacity;
}

/// Mean CPU utilization of a server over [first, last] minutes.
inline double mean_utilization(const AllocationLedger& ledger, const Server& server, int first, int last) {
  if (last < first) return 0.0;
  double s = 0.0;
  for (int t = first; t <= last; ++t) s += ledger.cpu_used(server.id, t);
  return s / (server.cpu_capacity * (last - first + 1));
}

inline double hour_utilization(const AllocationLedger& ledger, const Server& server, int hour, int minutes_per_hour) {
  return ledger.hour_cpu_sum(server.id, hour) / (server.cpu_capacity * minutes_per_hour);
}

inline double horizon_utilization(const AllocationLedger& ledger, const Server& server) {
  return ledger.horizon_cpu_sum(server.id) / (server.cpu_capacity * ledger.horizon_minutes());
}

/// Earliest dependency-feasible start of `task` on `candidate`.
inline int earliest_start(const AllocationLedger& ledger, const Job& job, const Task& task,
                          const PlatformConfig& cfg, ServerId candidate) {
  int start = task.arrival_minute;
  for (const auto& e : job.edges) {
    if (e.to != task.task_id) continue;
    const auto* rec = ledger.find({job.job_id, e.from});
    if (!rec || rec->status != TaskStatus::Scheduled || !rec->decision)
      throw PredecessorUnscheduled("predecessor " + std::to_string(e.from) + " of " +
                                   TaskKey{job.job_id, task.task_id}.str() + " has no decision");
    const auto& d = *rec->decision;
    int transfer = 0;
    if (d.server_id != candidate && e.data_units > 0.0)
      transfer = static_cast<int>(std::ceil(e.data_units / cfg.bandwidth_between(d.server_id, candidate)));
    start = std::max(start, d.end_minute + 1 + transfer);
  }
  return start;
}

/// Start minutes in [lo, hi] at which `task` fits on `server` for its full duration.
/// Result index i corresponds to start lo + i.
inline std::vector<char> feasible_starts(const AllocationLedger& ledger, const Server& server, const Task& task,
                                         int lo, int hi) {
  const int dur = task.duration_minutes;
  hi = std::min(hi, ledger.horizon_minutes() - dur);
  lo = std::max(lo, 0);
  if (hi < lo) return {};
  std::vector<char> out(static_cast<std::size_t>(hi - lo + 1), 0);
  if (!server_supports_all(server, task)) return out;
  const double c = task.total_cpu(), m = task.total_mem();
  // Length of the run of fitting minutes ending at each minute, scanned backwards.
  int run = 0;
  std::vector<int> run_from(static_cast<std::size_t>(hi + dur - lo), 0);
  for (int t = hi + dur - 1; t >= lo; --t) {
    const bool fits = ledger.cpu_used(server.id, t) + c <= server.cpu_capacity + kCapacityEps &&
                      ledger.mem_used(server.id, t) + m <= server.mem_capacity + kCapacityEps;
    run = fits ? run + 1 : 0;
    run_from[static_cast<std::size_t>(t - lo)] = run;
  }
  for (int s = lo; s <= hi; ++s) out[static_cast<std::size_t>(s - lo)] = run_from[static_cast<std::size_t>(s - lo)] >= dur;
  return out;
}

}  // namespace h2o
