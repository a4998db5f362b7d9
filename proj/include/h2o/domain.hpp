#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace h2o {

constexpr int kMinutesPerHour = 60;

/// Base class for every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using VmTypeId = int;
using JobId = std::int64_t;
using TaskId = std::int64_t;
using ServerId = int;
using ClusterId = int;

struct VmType {
  VmTypeId id = 0;
  double cpu_units = 0.0;
  double mem_units = 0.0;
};

/// Demand of a task on one VM type.
struct VmRequest {
  VmTypeId vm_type = 0;
  double cpu = 0.0;
  double mem = 0.0;

  friend bool operator==(const VmRequest&, const VmRequest&) = default;
};

struct Task {
  JobId job_id = 0;
  TaskId task_id = 0;
  std::vector<VmRequest> vm_requests;
  int priority = 0;
  int deadline_minute = 0;  // absolute, soft
  int arrival_minute = 0;
  int duration_minutes = 1;

  double total_cpu() const {
    double s = 0.0;
    for (const auto& r : vm_requests) s += r.cpu;
    return s;
  }
  double total_mem() const {
    double s = 0.0;
    for (const auto& r : vm_requests) s += r.mem;
    return s;
  }

  friend bool operator==(const Task&, const Task&) = default;
};

struct Edge {
  TaskId from = 0;
  TaskId to = 0;
  double data_units = 0.0;

  friend bool operator==(const Edge&, const Edge&) = default;
};

struct Job {
  JobId job_id = 0;
  std::vector<Task> tasks;
  std::vector<Edge> edges;

  const Task* find_task(TaskId id) const {
    for (const auto& t : tasks)
      if (t.task_id == id) return &t;
    return nullptr;
  }

  friend bool operator==(const Job&, const Job&) = default;
};

struct PowerParams {
  double static_watts = 0.0;
  double a = 0.0;  // linear slope below the optimal utilization
  double b = 0.0;  // quadratic coefficient above it
  double ur_opt = 0.7;
};

struct Server {
  ServerId id = 0;
  ClusterId cluster_id = 0;
  double cpu_capacity = 1.0;
  double mem_capacity = 1.0;
  std::vector<VmTypeId> supported_vm_types;
  PowerParams power;

  bool supports(VmTypeId v) const {
    return std::find(supported_vm_types.begin(), supported_vm_types.end(), v) !=
           supported_vm_types.end();
  }
};

struct Cluster {
  ClusterId id = 0;
  std::vector<ServerId> servers;
};

struct PlatformConfig {
  std::vector<VmType> vm_types;
  std::vector<Server> servers;
  std::vector<Cluster> clusters;
  double default_bandwidth = 100.0;  // data units per minute
  std::map<std::pair<ServerId, ServerId>, double> bandwidth;
  int horizon_hours = 24;
  int minutes_per_hour = kMinutesPerHour;

  int horizon_minutes() const { return horizon_hours * minutes_per_hour; }

  /// Bandwidth between two servers; symmetric lookup, falls back to the default.
  double bandwidth_between(ServerId a, ServerId b) const {
    if (auto it = bandwidth.find({a, b}); it != bandwidth.end()) return it->second;
    if (auto it = bandwidth.find({b, a}); it != bandwidth.end()) return it->second;
    return default_bandwidth;
  }

  /// Servers are addressed by position; ids equal positions after validation.
  const Server& server(ServerId id) const { return servers.at(static_cast<std::size_t>(id)); }
};

enum class ValidationCode {
  Ok,
  // jobs
  CycleDetected,
  DanglingEdge,
  SelfEdge,
  DuplicateTask,
  EmptyVmRequest,
  NegativeDemand,
  NonPositiveDuration,
  DeadlineBeforeArrival,
  // platform
  OrphanServer,
  DuplicateMembership,
  NonPositiveCapacity,
  UrOptOutOfRange,
  NegativePowerParam,
  EmptyVmSupport,
  BadServerId,
  NonPositiveBandwidth,
  BadHorizon,
};

inline const char* to_string(ValidationCode c) {
  switch (c) {
    case ValidationCode::Ok: return "Ok";
    case ValidationCode::CycleDetected: return "CycleDetected";
    case ValidationCode::DanglingEdge: return "DanglingEdge";
    case ValidationCode::SelfEdge: return "SelfEdge";
    case ValidationCode::DuplicateTask: return "DuplicateTask";
    case ValidationCode::EmptyVmRequest: return "EmptyVmRequest";
    case ValidationCode::NegativeDemand: return "NegativeDemand";
    case ValidationCode::NonPositiveDuration: return "NonPositiveDuration";
    case ValidationCode::DeadlineBeforeArrival: return "DeadlineBeforeArrival";
    case ValidationCode::OrphanServer: return "OrphanServer";
    case ValidationCode::DuplicateMembership: return "DuplicateMembership";
    case ValidationCode::NonPositiveCapacity: return "NonPositiveCapacity";
    case ValidationCode::UrOptOutOfRange: return "UrOptOutOfRange";
    case ValidationCode::NegativePowerParam: return "NegativePowerParam";
    case ValidationCode::EmptyVmSupport: return "EmptyVmSupport";
    case ValidationCode::BadServerId: return "BadServerId";
    case ValidationCode::NonPositiveBandwidth: return "NonPositiveBandwidth";
    case ValidationCode::BadHorizon: return "BadHorizon";
  }
  return "?";
}

struct ValidationResult {
  ValidationCode code = ValidationCode::Ok;
  std::string detail;  // offending element

  bool ok() const { return code == ValidationCode::Ok; }
  explicit operator bool() const { return ok(); }
};

inline ValidationResult fail(ValidationCode c, std::string detail) {
  return {c, std::move(detail)};
}

namespace detail {

/// Kahn's algorithm over task ids. Returns the order, or nullopt on a cycle.
inline std::optional<std::vector<TaskId>> topo_order(const Job& job) {
  std::unordered_map<TaskId, int> indeg;
  std::unordered_map<TaskId, std::vector<TaskId>> out;
  for (const auto& t : job.tasks) indeg[t.task_id] = 0;
  for (const auto& e : job.edges) {
    out[e.from].push_back(e.to);
    ++indeg[e.to];
  }
  // Seed in task-sequence order so the result is stable.
  std::vector<TaskId> ready;
  for (const auto& t : job.tasks)
    if (indeg[t.task_id] == 0) ready.push_back(t.task_id);
  std::vector<TaskId> order;
  std::size_t head = 0;
  while (head < ready.size()) {
    TaskId u = ready[head++];
    order.push_back(u);
    for (TaskId v : out[u])
      if (--indeg[v] == 0) ready.push_back(v);
  }
  if (order.size() != job.tasks.size()) return std::nullopt;
  return order;
}

}  // namespace detail

inline ValidationResult validate_task(const Task& t) {
  const std::string where = "task " + std::to_string(t.job_id) + "/" + std::to_string(t.task_id);
  if (t.vm_requests.empty()) return fail(ValidationCode::EmptyVmRequest, where);
  for (const auto& r : t.vm_requests)
    if (r.cpu < 0.0 || r.mem < 0.0) return fail(ValidationCode::NegativeDemand, where);
  if (t.duration_minutes < 1) return fail(ValidationCode::NonPositiveDuration, where);
  if (t.deadline_minute < t.arrival_minute) return fail(ValidationCode::DeadlineBeforeArrival, where);
  return {};
}

/// Checks every Job invariant; reports the first violation found.
inline ValidationResult validate_job(const Job& job) {
  std::set<TaskId> ids;
  for (const auto& t : job.tasks) {
    if (!ids.insert(t.task_id).second)
      return fail(ValidationCode::DuplicateTask, "task " + std::to_string(t.task_id));
    if (auto r = validate_task(t); !r) return r;
  }
  for (const auto& e : job.edges) {
    const std::string where = std::to_string(e.from) + "->" + std::to_string(e.to);
    if (!ids.count(e.from) || !ids.count(e.to)) return fail(ValidationCode::DanglingEdge, where);
    if (e.from == e.to) return fail(ValidationCode::SelfEdge, where);
    if (e.data_units < 0.0) return fail(ValidationCode::NegativeDemand, "edge " + where);
  }
  if (!detail::topo_order(job))
    return fail(ValidationCode::CycleDetected, "job " + std::to_string(job.job_id));
  return {};
}

/// Tasks of a validated job in dependency order (ties keep sequence order).
inline std::vector<const Task*> topological_tasks(const Job& job) {
  auto order = detail::topo_order(job);
  if (!order) throw Error("job " + std::to_string(job.job_id) + " has a dependency cycle");
  std::vector<const Task*> out;
  out.reserve(order->size());
  for (TaskId id : *order) out.push_back(job.find_task(id));
  return out;
}

inline ValidationResult validate_platform(const PlatformConfig& cfg) {
  if (cfg.horizon_hours < 1 || cfg.minutes_per_hour != kMinutesPerHour)
    return fail(ValidationCode::BadHorizon, "horizon " + std::to_string(cfg.horizon_hours));
  const auto n = cfg.servers.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = cfg.servers[i];
    const std::string where = "server " + std::to_string(s.id);
    if (s.id != static_cast<ServerId>(i)) return fail(ValidationCode::BadServerId, where);
    if (!(s.cpu_capacity > 0.0) || !(s.mem_capacity > 0.0))
      return fail(ValidationCode::NonPositiveCapacity, where);
    if (!(s.power.ur_opt > 0.0 && s.power.ur_opt < 1.0))
      return fail(ValidationCode::UrOptOutOfRange, where);
    if (s.power.a < 0.0 || s.power.b < 0.0 || s.power.static_watts < 0.0)
      return fail(ValidationCode::NegativePowerParam, where);
    if (s.supported_vm_types.empty()) return fail(ValidationCode::EmptyVmSupport, where);
  }
  std::vector<int> seen(n, 0);
  for (const auto& c : cfg.clusters) {
    for (ServerId id : c.servers) {
      if (id < 0 || static_cast<std::size_t>(id) >= n)
        return fail(ValidationCode::BadServerId, "cluster " + std::to_string(c.id));
      if (++seen[static_cast<std::size_t>(id)] > 1)
        return fail(ValidationCode::DuplicateMembership, "server " + std::to_string(id));
      if (cfg.servers[static_cast<std::size_t>(id)].cluster_id != c.id)
        return fail(ValidationCode::OrphanServer, "server " + std::to_string(id) + " cluster mismatch");
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    if (seen[i] == 0) return fail(ValidationCode::OrphanServer, "server " + std::to_string(i));
  if (!(cfg.default_bandwidth > 0.0)) return fail(ValidationCode::NonPositiveBandwidth, "default");
  for (const auto& [k, v] : cfg.bandwidth)
    if (!(v > 0.0))
      return fail(ValidationCode::NonPositiveBandwidth,
                  std::to_string(k.first) + "," + std::to_string(k.second));
  return {};
}

/// Index of a cluster by id, or -1.
inline int cluster_index(const PlatformConfig& cfg, ClusterId id) {
  for (std::size_t i = 0; i < cfg.clusters.size(); ++i)
    if (cfg.clusters[i].id == id) return static_cast<int>(i);
  return -1;
}

/// Homogeneous platform: `servers` split as evenly as possible into `clusters`.
inline PlatformConfig make_uniform_platform(int servers, int clusters, double cpu_capacity = 1.0,
                                            double mem_capacity = 1.0,
                                            PowerParams power = {100.0, 100.0, 200.0, 0.7},
                                            std::vector<VmTypeId> vm_types = {0}) {
  PlatformConfig cfg;
  for (VmTypeId v : vm_types) cfg.vm_types.push_back({v, cpu_capacity, mem_capacity});
  cfg.clusters.resize(static_cast<std::size_t>(clusters));
  for (int c = 0; c < clusters; ++c) cfg.clusters[static_cast<std::size_t>(c)].id = c;
  for (int i = 0; i < servers; ++i) {
    const int c = static_cast<int>(static_cast<long long>(i) * clusters / servers);
    cfg.servers.push_back({i, c, cpu_capacity, mem_capacity, vm_types, power});
    cfg.clusters[static_cast<std::size_t>(c)].servers.push_back(i);
  }
  return cfg;
}

}  // namespace h2o
