#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "h2o/detail/text.hpp"
#include "h2o/domain.hpp"

namespace h2o {

struct WorkloadStats {
  std::int64_t task_count = 0;
  double total_cpu_units = 0.0;
  double total_mem_units = 0.0;
  double cpu_variance = 0.0;  // population variance of per-task total CPU
  double mem_variance = 0.0;
  int span_minutes = 0;
};

template <typename T>
struct Range {
  T min{};
  T max{};
};

/// Parameters of a synthetic scenario. Demands are in the platform's CPU/MEM units.
struct ScenarioConfig {
  std::int64_t target_task_count = 1000;
  double target_total_cpu = 35.0;
  double target_cpu_variance = 0.0;
  double target_total_mem = 35.0;
  double target_mem_variance = 0.0;
  int span_minutes = 83;
  Range<int> job_size_range{1, 10};
  double edge_probability = 0.3;
  Range<int> deadline_slack_range{60, 360};
  Range<int> duration_range{5, 60};
  Range<int> priority_range{0, 59};
  Range<double> data_units_range{0.0, 200.0};
  double reference_bandwidth = 100.0;  // transfer padding between parent and child deadlines
  double max_task_cpu = 1.0;  // per-task demand cap
  double max_task_mem = 1.0;
  std::vector<VmTypeId> vm_types{0};
};

class TraceError : public Error {
 public:
  enum class Kind { MalformedLine, UnknownVmType, DanglingDependency, InvalidJob };
  TraceError(Kind kind, std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), kind_(kind), line_(line) {}
  Kind kind() const { return kind_; }
  std::size_t line() const { return line_; }

 private:
  Kind kind_;
  std::size_t line_;
};

class InfeasibleTargets : public Error {
 public:
  using Error::Error;
};

inline constexpr std::string_view kTraceHeader =
    "job_id,task_id,arrival_minute,duration_minutes,vm_requests,priority,deadline_minute,deps";

/// Serialize jobs to the workload CSV. Edges are written on their child task's line.
inline std::string serialize_trace(const std::vector<Job>& jobs) {
  using detail::format_double;
  std::string out(kTraceHeader);
  out += '\n';
  for (const auto& job : jobs) {
    for (const auto& t : job.tasks) {
      out += std::to_string(job.job_id) + ',' + std::to_string(t.task_id) + ',' +
             std::to_string(t.arrival_minute) + ',' + std::to_string(t.duration_minutes) + ',';
      for (std::size_t i = 0; i < t.vm_requests.size(); ++i) {
        const auto& r = t.vm_requests[i];
        if (i) out += '|';
        out += std::to_string(r.vm_type) + ':' + format_double(r.cpu) + ':' + format_double(r.mem);
      }
      out += ',' + std::to_string(t.priority) + ',' + std::to_string(t.deadline_minute) + ',';
      bool first = true;
      for (const auto& e : job.edges) {
        if (e.to != t.task_id) continue;
        if (!first) out += '|';
        first = false;
        out += std::to_string(e.from) + ':' + format_double(e.data_units);
      }
      out += '\n';
    }
  }
  return out;
}

/// Parse the workload CSV. Jobs keep first-appearance order; tasks within a job are
/// stably ordered by arrival minute; edges are grouped by child task.
/// `known_vm_types` empty means any VM type id is accepted.
inline std::vector<Job> parse_trace(std::string_view text,
                                    const std::vector<VmTypeId>& known_vm_types = {}) {
  using detail::parse_number;
  using detail::split;
  using K = TraceError::Kind;

  struct Row {
    Task task;
    std::vector<Edge> deps;
    std::size_t line;
  };
  std::vector<JobId> job_order;
  std::unordered_map<JobId, std::vector<Row>> rows;

  std::size_t line_no = 0;
  bool header_seen = false;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != kTraceHeader) throw TraceError(K::MalformedLine, line_no, "missing or wrong header");
      header_seen = true;
      continue;
    }
    auto f = split(line, ',');
    if (f.size() != 8) throw TraceError(K::MalformedLine, line_no, "expected 8 fields");
    auto bad = [&](const char* what) { return TraceError(K::MalformedLine, line_no, what); };

    Row row{{}, {}, line_no};
    Task& t = row.task;
    auto job = parse_number<JobId>(f[0]);
    auto tid = parse_number<TaskId>(f[1]);
    auto arr = parse_number<int>(f[2]);
    auto dur = parse_number<int>(f[3]);
    auto prr = parse_number<int>(f[5]);
    auto ddl = parse_number<int>(f[6]);
    if (!job || !tid || !arr || !dur || !prr || !ddl) throw bad("bad integer field");
    t.job_id = *job;
    t.task_id = *tid;
    t.arrival_minute = *arr;
    t.duration_minutes = *dur;
    t.priority = *prr;
    t.deadline_minute = *ddl;
    if (t.arrival_minute < 0 || t.priority < 0 || t.deadline_minute < 0) throw bad("negative field");

    if (f[4].empty()) throw bad("empty vm_requests");
    for (auto triple : split(f[4], '|')) {
      auto p = split(triple, ':');
      if (p.size() != 3) throw bad("vm request must be v:cpu:mem");
      auto v = parse_number<VmTypeId>(p[0]);
      auto cpu = parse_number<double>(p[1]);
      auto mem = parse_number<double>(p[2]);
      if (!v || !cpu || !mem) throw bad("bad vm request number");
      if (!known_vm_types.empty() &&
          std::find(known_vm_types.begin(), known_vm_types.end(), *v) == known_vm_types.end())
        throw TraceError(K::UnknownVmType, line_no, "unknown vm type " + std::to_string(*v));
      t.vm_requests.push_back({*v, *cpu, *mem});
    }
    if (!f[7].empty()) {
      for (auto pair : split(f[7], '|')) {
        auto p = split(pair, ':');
        if (p.size() != 2) throw bad("dependency must be parent:data");
        auto parent = parse_number<TaskId>(p[0]);
        auto data = parse_number<double>(p[1]);
        if (!parent || !data) throw bad("bad dependency number");
        row.deps.push_back({*parent, t.task_id, *data});
      }
    }
    if (!rows.count(t.job_id)) job_order.push_back(t.job_id);
    rows[t.job_id].push_back(std::move(row));
  }

  std::vector<Job> jobs;
  jobs.reserve(job_order.size());
  for (JobId id : job_order) {
    auto& rs = rows[id];
    std::stable_sort(rs.begin(), rs.end(), [](const Row& a, const Row& b) {
      return a.task.arrival_minute < b.task.arrival_minute;
    });
    Job job;
    job.job_id = id;
    for (const auto& r : rs) job.tasks.push_back(r.task);
    for (const auto& r : rs)
      for (const auto& e : r.deps) {
        if (!job.find_task(e.from))
          throw TraceError(K::DanglingDependency, r.line,
                           "task " + std::to_string(e.to) + " depends on missing task " +
                               std::to_string(e.from));
        job.edges.push_back(e);
      }
    if (auto v = validate_job(job); !v)
      throw TraceError(K::InvalidJob, rs.front().line,
                       std::string(to_string(v.code)) + ": " + v.detail);
    jobs.push_back(std::move(job));
  }
  return jobs;
}

inline WorkloadStats workload_stats(const std::vector<Job>& jobs) {
  WorkloadStats st;
  std::vector<double> cpu, mem;
  int lo = 0, hi = -1;
  for (const auto& j : jobs)
    for (const auto& t : j.tasks) {
      cpu.push_back(t.total_cpu());
      mem.push_back(t.total_mem());
      if (hi < lo) {
        lo = hi = t.arrival_minute;
      } else {
        lo = std::min(lo, t.arrival_minute);
        hi = std::max(hi, t.arrival_minute);
      }
    }
  st.task_count = static_cast<std::int64_t>(cpu.size());
  if (cpu.empty()) return st;
  auto moments = [](const std::vector<double>& xs, double& total, double& var) {
    detail::KahanSum s;
    for (double x : xs) s.add(x);
    total = s.value();
    const double mean = total / static_cast<double>(xs.size());
    detail::KahanSum sq;
    for (double x : xs) sq.add((x - mean) * (x - mean));
    var = sq.value() / static_cast<double>(xs.size());
  };
  moments(cpu, st.total_cpu_units, st.cpu_variance);
  moments(mem, st.total_mem_units, st.mem_variance);
  st.span_minutes = hi - lo + 1;
  return st;
}

namespace detail {

/// Per-task demands with an exact mean, a capped maximum, and a variance driven to
/// `target_var` by bisecting the shape of a lognormal family over fixed normal draws.
inline std::vector<double> shaped_demands(const std::vector<double>& z, double mean, double target_var,
                                          double cap, const char* what) {
  const std::size_t n = z.size();
  if (n == 0) return {};
  if (mean < 0.0 || target_var < 0.0) throw InfeasibleTargets(std::string(what) + ": negative target");
  if (mean > cap) throw InfeasibleTargets(std::string(what) + ": mean exceeds the demand cap");
  // Values in [0, cap] with a given mean have variance at most mean * (cap - mean).
  if (target_var > mean * (cap - mean))
    throw InfeasibleTargets(std::string(what) + ": variance unreachable under the demand cap");
  if (target_var == 0.0 || mean == 0.0) return std::vector<double>(n, mean);

  auto realize = [&](double shape) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = std::exp(shape * z[i]);
    for (int it = 0; it < 200; ++it) {
      double s = 0.0;
      for (double v : x) s += v;
      const double m = s / static_cast<double>(n);
      if (std::abs(m - mean) <= 1e-12 * mean) break;
      const double k = mean / m;
      for (double& v : x) v = std::min(cap, v * k);
    }
    return x;
  };
  auto variance = [&](const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v;
    const double m = s / static_cast<double>(n);
    double q = 0.0;
    for (double v : x) q += (v - m) * (v - m);
    return q / static_cast<double>(n);
  };

  double lo = 0.0, hi = 0.5;
  while (variance(realize(hi)) < target_var) {
    hi *= 2.0;
    if (hi > 64.0) throw InfeasibleTargets(std::string(what) + ": variance unreachable with this task count");
  }
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    (variance(realize(mid)) < target_var ? lo : hi) = mid;
  }
  return realize(0.5 * (lo + hi));
}

}  // namespace detail

/// Deterministic synthetic workload for a scenario. Every emitted job passes validate_job.
inline std::vector<Job> generate_workload(const ScenarioConfig& cfg, std::uint64_t seed) {
  auto check_range = [](auto r, const char* name) {
    if (r.min > r.max) throw Error(std::string("empty range: ") + name);
  };
  check_range(cfg.job_size_range, "job_size_range");
  check_range(cfg.deadline_slack_range, "deadline_slack_range");
  check_range(cfg.duration_range, "duration_range");
  check_range(cfg.priority_range, "priority_range");
  check_range(cfg.data_units_range, "data_units_range");
  if (cfg.job_size_range.min < 1 || cfg.duration_range.min < 1 || cfg.deadline_slack_range.min < 0 ||
      cfg.priority_range.min < 0 || cfg.data_units_range.min < 0.0 || !(cfg.reference_bandwidth > 0.0))
    throw Error("scenario ranges out of domain");
  if (!(cfg.edge_probability >= 0.0 && cfg.edge_probability <= 1.0))
    throw Error("edge_probability must lie in [0,1]");
  if (cfg.target_task_count < 0 || cfg.span_minutes < 1 || cfg.vm_types.empty())
    throw Error("bad scenario size");

  const auto n = static_cast<std::size_t>(cfg.target_task_count);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> zc(n), zm(n);
  for (auto& z : zc) z = normal(rng);
  for (auto& z : zm) z = normal(rng);
  const double mean_cpu = n ? cfg.target_total_cpu / static_cast<double>(n) : 0.0;
  const double mean_mem = n ? cfg.target_total_mem / static_cast<double>(n) : 0.0;
  auto cpu = detail::shaped_demands(zc, mean_cpu, cfg.target_cpu_variance, cfg.max_task_cpu, "cpu");
  auto mem = detail::shaped_demands(zm, mean_mem, cfg.target_mem_variance, cfg.max_task_mem, "mem");

  // Job sizes, truncating the last job so the task count is exact.
  std::uniform_int_distribution<int> job_size(cfg.job_size_range.min, cfg.job_size_range.max);
  std::vector<int> sizes;
  for (std::size_t left = n; left > 0;) {
    auto k = static_cast<std::size_t>(job_size(rng));
    k = std::min(k, left);
    sizes.push_back(static_cast<int>(k));
    left -= k;
  }

  // Poisson-like arrivals: exponential gaps normalized onto the span.
  std::exponential_distribution<double> gap(1.0);
  std::vector<double> cum(sizes.size() + 1);
  double acc = 0.0;
  for (auto& c : cum) c = (acc += gap(rng));
  std::vector<int> arrivals(sizes.size());
  for (std::size_t j = 0; j < sizes.size(); ++j)
    arrivals[j] = std::min(cfg.span_minutes - 1,
                           static_cast<int>(std::floor(cfg.span_minutes * cum[j] / cum.back())));

  std::uniform_int_distribution<int> duration(cfg.duration_range.min, cfg.duration_range.max);
  std::uniform_int_distribution<int> slack(cfg.deadline_slack_range.min, cfg.deadline_slack_range.max);
  std::uniform_int_distribution<int> priority(cfg.priority_range.min, cfg.priority_range.max);
  std::uniform_real_distribution<double> data(cfg.data_units_range.min, cfg.data_units_range.max);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> vm_pick(0, cfg.vm_types.size() - 1);

  std::vector<Job> jobs;
  jobs.reserve(sizes.size());
  std::size_t next = 0;
  for (std::size_t j = 0; j < sizes.size(); ++j) {
    Job job;
    job.job_id = static_cast<JobId>(j + 1);
    const int k = sizes[j];
    std::vector<int> finish_floor(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i, ++next) {
      Task t;
      t.job_id = job.job_id;
      t.task_id = i + 1;
      t.arrival_minute = arrivals[j];
      t.duration_minutes = duration(rng);
      t.priority = priority(rng);
      t.vm_requests.push_back({cfg.vm_types[vm_pick(rng)], cpu[next], mem[next]});
      // Edges only point from earlier to later tasks, so the graph is acyclic.
      int ready = t.arrival_minute;
      int after_parent_deadlines = 0;
      for (int p = 0; p < i; ++p) {
        if (coin(rng) < cfg.edge_probability) {
          const double units = data(rng);
          job.edges.push_back({p + 1, t.task_id, units});
          ready = std::max(ready, finish_floor[static_cast<std::size_t>(p)]);
          const int transfer = static_cast<int>(std::ceil(units / cfg.reference_bandwidth));
          after_parent_deadlines =
              std::max(after_parent_deadlines, job.tasks[static_cast<std::size_t>(p)].deadline_minute + 1 + transfer);
        }
      }
      finish_floor[static_cast<std::size_t>(i)] = ready + t.duration_minutes;
      // A child's slack counts from its parents' deadlines, so a parent finishing
      // late still leaves the child room.
      const int base = std::max(finish_floor[static_cast<std::size_t>(i)], after_parent_deadlines + t.duration_minutes);
      t.deadline_minute = base + slack(rng);
      job.tasks.push_back(std::move(t));
    }
    jobs.push_back(std::move(job));
  }
  return jobs;
}

enum class VarianceLevel { Low, Medium, High };

/// Aggregate descriptors of the three reference trace scenarios.
struct TraceDescriptor {
  std::int64_t tasks;
  double total_cpu;
  double cpu_variance;
  double mem_variance;
};

inline constexpr TraceDescriptor kReferenceTraces[] = {
    {77776, 2610.98, 1621.64, 479.59},
    {154001, 5776.82, 16055.58, 13543.92},
    {265865, 9488.66, 42462.99, 23996.92},
};

/// The reference variances are read in milli-unit squared terms, i.e. multiplied by
/// 1e-6 to obtain a per-task variance in CPU units squared.
inline constexpr double kReferenceVarianceUnit = 1e-6;

/// Scenario scaled from a reference trace: count and total CPU scale with `scale`,
/// per-task variances are intensive and do not.
inline ScenarioConfig scenario_preset(VarianceLevel level, double scale) {
  const auto& d = kReferenceTraces[static_cast<int>(level)];
  ScenarioConfig c;
  c.target_task_count = static_cast<std::int64_t>(std::llround(static_cast<double>(d.tasks) * scale));
  c.target_total_cpu = d.total_cpu * static_cast<double>(c.target_task_count) / static_cast<double>(d.tasks);
  c.target_total_mem = c.target_total_cpu;
  c.target_cpu_variance = d.cpu_variance * kReferenceVarianceUnit;
  c.target_mem_variance = d.mem_variance * kReferenceVarianceUnit;
  c.span_minutes = 83;  // 1.39 hours
  c.max_task_cpu = 2.0;
  c.max_task_mem = 2.0;
  return c;
}

}  // namespace h2o
