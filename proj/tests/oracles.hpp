#pragma once

// Independent reference implementations used to cross-check the library.

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "h2o.hpp"

namespace oracle {

struct Placed {
  int server;
  int start;
  int end;
  double cpu;
};

struct EnergyTotals {
  double energy_kwh = 0.0;
  double cost = 0.0;
};

/// Recomputes energy and cost from raw placements, minute by minute.
inline EnergyTotals brute_energy(const h2o::PlatformConfig& p, const std::vector<Placed>& placed,
                                 const h2o::EnergyPricingConfig& price, bool always_on = false) {
  EnergyTotals out;
  const int mph = p.minutes_per_hour;
  for (int t = 0; t < p.horizon_hours * mph; ++t) {
    const int hour = t / mph;
    double watts = 0.0;
    for (const auto& s : p.servers) {
      double cpu = 0.0;
      bool busy_hour = false;
      for (const auto& x : placed) {
        if (x.server != s.id) continue;
        if (x.start <= t && t <= x.end) cpu += x.cpu;
        if (x.start <= hour * mph + mph - 1 && x.end >= hour * mph) busy_hour = true;
      }
      if (!always_on && !busy_hour) continue;
      const double ur = cpu / s.cpu_capacity;
      const auto& w = s.power;
      const double dyn = ur < w.ur_opt ? ur * w.a : w.ur_opt * w.a + (ur - w.ur_opt) * (ur - w.ur_opt) * w.b;
      watts += w.static_watts + dyn;
    }
    const double kw = watts / 1000.0;
    const double kwh = kw / 60.0;
    out.energy_kwh += kwh;
    out.cost += (price.tou_rates[static_cast<std::size_t>(hour % 24)] + price.rtp_slope * kw) * kwh;
  }
  return out;
}

/// Depth-first three-colour cycle detection.
inline bool dfs_has_cycle(const h2o::Job& job) {
  std::map<h2o::TaskId, std::vector<h2o::TaskId>> adj;
  for (const auto& e : job.edges) adj[e.from].push_back(e.to);
  std::map<h2o::TaskId, int> colour;
  auto visit = [&](auto&& self, h2o::TaskId v) -> bool {
    colour[v] = 1;
    for (auto w : adj[v]) {
      if (colour[w] == 1) return true;
      if (colour[w] == 0 && self(self, w)) return true;
    }
    colour[v] = 2;
    return false;
  };
  for (const auto& [v, _] : adj)
    if (colour[v] == 0 && visit(visit, v)) return true;
  return false;
}

/// Central finite difference of Q(x)[action] with respect to one parameter.
inline double numeric_grad(h2o::dqn::QNetwork net, const std::vector<double>& x, int action, std::size_t layer,
                           std::size_t index, bool bias, double h = 1e-6) {
  auto& p = bias ? net.biases(layer)[index] : net.weights(layer)[index];
  const double orig = p;
  p = orig + h;
  const double up = net.forward(x)[static_cast<std::size_t>(action)];
  p = orig - h;
  const double down = net.forward(x)[static_cast<std::size_t>(action)];
  return (up - down) / (2.0 * h);
}

/// Exhaustive schedule audit built from the task records only. Returns an empty
/// string when every check passes, otherwise the first problem found.
inline std::string audit(const h2o::PlatformConfig& p, const std::vector<h2o::Job>& jobs,
                         const h2o::AllocationLedger& ledger) {
  const int H = p.horizon_minutes();
  std::vector<double> cpu(p.servers.size() * static_cast<std::size_t>(H), 0.0), mem(cpu.size(), 0.0);
  auto at = [&](int s, int t) { return static_cast<std::size_t>(s) * static_cast<std::size_t>(H) + static_cast<std::size_t>(t); };
  for (const auto& job : jobs) {
    std::optional<int> job_cluster;
    for (const auto& task : job.tasks) {
      const auto* rec = ledger.find({job.job_id, task.task_id});
      if (!rec) return "missing record for task " + std::to_string(job.job_id) + ":" + std::to_string(task.task_id);
      if (rec->status != h2o::TaskStatus::Scheduled) continue;
      const auto& d = *rec->decision;
      const auto& s = p.servers.at(static_cast<std::size_t>(d.server_id));
      if (s.cluster_id != d.cluster_id) return "server outside chosen cluster";
      if (job_cluster && *job_cluster != d.cluster_id) return "job split across clusters";
      job_cluster = d.cluster_id;
      if (d.start_minute / p.minutes_per_hour != d.hour) return "start outside chosen hour";
      if (d.end_minute - d.start_minute + 1 != task.duration_minutes) return "interval length mismatch";
      if (d.end_minute > task.deadline_minute) return "scheduled task ends past its deadline";
      if (d.start_minute < task.arrival_minute) return "starts before arrival";
      for (const auto& r : task.vm_requests) {
        bool ok = false;
        for (auto v : s.supported_vm_types) ok = ok || v == r.vm_type;
        if (!ok) return "unsupported vm type";
      }
      for (int t = d.start_minute; t <= d.end_minute; ++t) {
        for (const auto& r : task.vm_requests) {
          cpu[at(d.server_id, t)] += r.cpu;
          mem[at(d.server_id, t)] += r.mem;
        }
      }
    }
    for (const auto& e : job.edges) {
      const auto* parent = ledger.find({job.job_id, e.from});
      const auto* child = ledger.find({job.job_id, e.to});
      if (child->status != h2o::TaskStatus::Scheduled) continue;
      if (parent->status != h2o::TaskStatus::Scheduled) return "child scheduled without its parent";
      const auto& pd = *parent->decision;
      const auto& cd = *child->decision;
      int transfer = 0;
      if (pd.server_id != cd.server_id && e.data_units > 0)
        transfer = static_cast<int>(std::ceil(e.data_units / p.bandwidth_between(pd.server_id, cd.server_id)));
      if (cd.start_minute < pd.end_minute + 1 + transfer) return "dependency violated";
    }
  }
  for (const auto& s : p.servers)
    for (int t = 0; t < H; ++t) {
      if (cpu[at(s.id, t)] > s.cpu_capacity + 1e-9) return "cpu capacity exceeded";
      if (mem[at(s.id, t)] > s.mem_capacity + 1e-9) return "mem capacity exceeded";
      if (std::abs(cpu[at(s.id, t)] - ledger.cpu_used(s.id, t)) > 1e-9) return "ledger cpu out of sync";
      if (std::abs(mem[at(s.id, t)] - ledger.mem_used(s.id, t)) > 1e-9) return "ledger mem out of sync";
    }
  return {};
}

/// Placements of every scheduled task, for brute_energy.
inline std::vector<Placed> placements_of(const h2o::AllocationLedger& ledger) {
  std::vector<Placed> out;
  for (const auto& r : ledger.records())
    if (r.status == h2o::TaskStatus::Scheduled)
      out.push_back({r.decision->server_id, r.decision->start_minute, r.decision->end_minute, r.cpu});
  return out;
}

}  // namespace oracle
