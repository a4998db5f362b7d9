#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "h2o/detail/text.hpp"
#include "h2o/domain.hpp"
#include "h2o/energy.hpp"
#include "h2o/hierarchy.hpp"
#include "h2o/platform.hpp"

namespace h2o {

struct MetricsConfig {
  double uor_low = 0.60;
  double uor_high = 0.80;
  PowerPolicy power_policy = PowerPolicy::TurnOffIdleHours;
};

struct Indicators {
  double ece = 0.0;  // CPU processed per unit of energy cost
  double ee = 0.0;   // CPU processed per kWh
  double tfr = 0.0;
  double uor = 0.0;
  double ddl_vr = 0.0;
  double reward_rate = 0.0;
  double rejection_rate = 0.0;
  std::vector<std::string> flags;  // zero-denominator markers

  nlohmann::json to_json() const {
    return {{"ece", ece}, {"ee", ee}, {"tfr", tfr}, {"uor", uor}, {"ddl_vr", ddl_vr},
            {"reward_rate", reward_rate}, {"rejection_rate", rejection_rate}};
  }
};

inline Indicators compute_indicators(const AllocationLedger& ledger, const EnergyReport& energy,
                                     const PlatformConfig& platform, const MetricsConfig& cfg = {}) {
  Indicators ind;
  auto ratio = [&](double num, double den, const char* flag) {
    if (den == 0.0) {
      ind.flags.emplace_back(flag);
      return 0.0;
    }
    return num / den;
  };

  ind.ece = ratio(energy.total_cpu_processed, energy.total_cost, "ece_zero_cost");
  ind.ee = ratio(energy.total_cpu_processed, energy.total_energy_kwh, "ee_zero_energy");

  const int per_hour = platform.minutes_per_hour;
  long off = 0, working = 0, optimal = 0;
  for (const auto& s : platform.servers)
    for (int h = 0; h < platform.horizon_hours; ++h) {
      const bool on = cfg.power_policy == PowerPolicy::AlwaysOn || ledger.hour_task_minutes(s.id, h) > 0;
      if (!on) {
        ++off;
        continue;
      }
      ++working;
      const double ur = hour_utilization(ledger, s, h, per_hour);
      if (ur >= cfg.uor_low - 1e-12 && ur <= cfg.uor_high + 1e-12) ++optimal;
    }
  ind.tfr = ratio(static_cast<double>(off), static_cast<double>(platform.servers.size()) * platform.horizon_hours,
                  "tfr_no_server_hours");
  ind.uor = ratio(static_cast<double>(optimal), static_cast<double>(working), "uor_no_working_hours");

  long all = 0, admitted = 0, violated = 0, scheduled = 0, hits = 0, rejected = 0;
  for (const auto& r : ledger.records()) {
    ++all;
    if (r.status == TaskStatus::Rejected) ++rejected;
    if (r.admitted) {
      ++admitted;
      if (r.deadline_violation) ++violated;
    }
    if (r.status == TaskStatus::Scheduled && r.decision) {
      ++scheduled;
      if (priority_window_hit(r.decision->start_minute % per_hour, r.priority)) ++hits;
    }
  }
  ind.ddl_vr = ratio(static_cast<double>(violated), static_cast<double>(admitted), "ddl_vr_no_admitted");
  ind.reward_rate = ratio(static_cast<double>(hits), static_cast<double>(scheduled), "reward_rate_no_scheduled");
  ind.rejection_rate = ratio(static_cast<double>(rejected), static_cast<double>(all), "rejection_rate_no_tasks");
  return ind;
}

/// Ledger CSV with the audit columns needed to recompute indicators.
inline std::string ledger_to_csv(const AllocationLedger& ledger) {
  std::string out = "task_key,cluster_id,server_id,hour,start_minute,end_minute,status,recycles,ddl_violation,admitted\n";
  std::string base = ledger.to_csv();
  auto lines = detail::split(base, '\n');
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto& r = ledger.records()[i - 1];
    out += std::string(lines[i]) + ',' + std::to_string(r.recycles) + ',' + (r.deadline_violation ? "1" : "0") + ',' +
           (r.admitted ? "1" : "0") + '\n';
  }
  return out;
}

/// Rebuilds a ledger from its CSV export and the workload it was scheduled from.
inline AllocationLedger ledger_from_csv(std::string_view csv, const std::vector<Job>& jobs,
                                        const PlatformConfig& platform) {
  std::unordered_map<TaskKey, const Task*, TaskKeyHash> tasks;
  for (const auto& j : jobs)
    for (const auto& t : j.tasks) tasks[{j.job_id, t.task_id}] = &t;
  AllocationLedger ledger(platform);
  auto lines = detail::split(csv, '\n');
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    auto f = detail::split(lines[i], ',');
    if (f.size() != 10) throw Error("ledger line " + std::to_string(i + 1) + ": expected 10 fields");
    auto key_parts = detail::split(f[0], ':');
    if (key_parts.size() != 2) throw Error("ledger line " + std::to_string(i + 1) + ": bad task key");
    auto job = detail::parse_number<JobId>(key_parts[0]);
    auto task = detail::parse_number<TaskId>(key_parts[1]);
    if (!job || !task || !tasks.count({*job, *task}))
      throw Error("ledger line " + std::to_string(i + 1) + ": unknown task " + std::string(f[0]));
    const Task& t = *tasks[{*job, *task}];
    const std::string status(f[6]);
    if (status == "scheduled" || status == "recycled_then_scheduled") {
      auto num = [&](std::string_view s) {
        auto v = detail::parse_number<int>(s);
        if (!v) throw Error("ledger line " + std::to_string(i + 1) + ": bad decision field");
        return *v;
      };
      ledger.allocate(platform, t, {num(f[1]), num(f[2]), num(f[3]), num(f[4]), num(f[5])});
    } else if (status == "rejected" || status == "recycled_then_rejected") {
      ledger.reject(t, RejectReason::None);
    } else {
      ledger.record(t);
    }
    auto& rec = ledger.record(t);
    rec.recycles = detail::parse_number<int>(f[7]).value_or(0);
    rec.deadline_violation = f[8] == "1";
    rec.admitted = f[9] == "1";
  }
  return ledger;
}

/// Cross-check: fraction of scheduled tasks whose final minute-layer step earned the
/// priority bonus, read from the training trace.
inline double reward_rate_from_trace(const std::vector<TraceRecord>& trace, const AllocationLedger& ledger) {
  std::unordered_map<TaskKey, bool, TaskKeyHash> last;
  for (const auto& r : trace)
    if (r.layer == Layer::Minute && !r.reject) last[r.task] = r.priority_bonus;
  long scheduled = 0, hits = 0;
  for (const auto& rec : ledger.records()) {
    if (rec.status != TaskStatus::Scheduled) continue;
    ++scheduled;
    if (auto it = last.find(rec.key); it != last.end() && it->second) ++hits;
  }
  return scheduled ? static_cast<double>(hits) / static_cast<double>(scheduled) : 0.0;
}

inline nlohmann::json report_json(const Indicators& ind, const EnergyReport& energy, const std::string& digest) {
  return {{"indicators", ind.to_json()}, {"flags", ind.flags}, {"config_digest", digest}, {"energy", energy.to_json()}};
}

}  // namespace h2o
