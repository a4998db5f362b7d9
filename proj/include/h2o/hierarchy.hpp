#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "h2o/detail/text.hpp"
#include "h2o/domain.hpp"
#include "h2o/dqn.hpp"
#include "h2o/energy.hpp"
#include "h2o/platform.hpp"

namespace h2o {

enum class Layer { Cluster = 1, Server = 2, Hour = 3, Minute = 4 };

inline constexpr int kLayerCount = 4;
inline constexpr int kTaskFeatures = 5;
inline constexpr double kPriorityBonus = 2.5;

inline std::size_t layer_slot(Layer l) { return static_cast<std::size_t>(static_cast<int>(l) - 1); }

// ---------------------------------------------------------------------------
// Rewards

struct RewardContext {
  double ur = 0.0;
  double unit_price = 0.0;
  int scheduled_minute = -1;  // minute within the hour (layer 4 only)
  int priority = 0;
};

/// Whether a start minute-of-hour falls within one minute of the task's priority.
inline bool priority_window_hit(int minute_of_hour, int priority) {
  return minute_of_hour >= priority - 1 && minute_of_hour <= priority + 1;
}

inline double layer_reward(Layer layer, const RewardContext& c, double price_threshold = 0.3) {
  const double ur = c.ur;
  switch (layer) {
    case Layer::Cluster:
      if (ur >= 0.0 && ur < 0.45) return 1.0;
      if (ur > 0.50) return -2.0;
      return -1.0;
    case Layer::Server:
      if (ur >= 0.20 && ur < 0.80) return 1.0;
      if (ur > 1.00) return -2.0;
      return -1.0;
    case Layer::Hour:
      if (ur > 1.00) return -2.0;
      if (c.unit_price < price_threshold) return -c.unit_price;
      return -4.0 * c.unit_price;
    case Layer::Minute: {
      double r;
      if (ur > 1.00)
        r = -2.0;
      else if (ur > 0.80 || ur < 0.20)
        r = -1.0;
      else if (ur > 0.60)
        r = 2.0;
      else
        r = 1.0;
      if (priority_window_hit(c.scheduled_minute, c.priority)) r *= kPriorityBonus;
      return r;
    }
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Round-Robin fallback

struct RoundRobinCursor {
  int position = 0;
};

/// First valid action scanning circularly from cursor+1; the cursor moves onto it.
inline std::optional<int> round_robin_fallback(RoundRobinCursor& cursor, const std::vector<char>& validity) {
  const int n = static_cast<int>(validity.size());
  for (int k = 1; k <= n; ++k) {
    const int a = (cursor.position + k) % n;
    if (validity[static_cast<std::size_t>(a)]) {
      cursor.position = a;
      return a;
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Configuration

enum class PricePower { SingleServer, Platform };

struct SchedulerConfig {
  bool hybrid_enabled = true;
  int max_recycles = 3;
  int server_candidate_cap = 64;
  double price_reward_threshold = 0.3;
  /// Which power level feeds the price in the hour-layer reward.
  PricePower hour_price_power = PricePower::SingleServer;
  std::array<dqn::AgentConfig, kLayerCount> agents = default_agents();
  std::uint64_t seed = 1;

  static std::array<dqn::AgentConfig, kLayerCount> default_agents() {
    std::array<dqn::AgentConfig, kLayerCount> a{};
    const int periods[kLayerCount] = {20, 5, 10, 10};
    for (int i = 0; i < kLayerCount; ++i) a[static_cast<std::size_t>(i)].train_period = periods[i];
    return a;
  }

  void validate() const {
    if (max_recycles < 0) throw Error("max_recycles must be non-negative");
    if (server_candidate_cap < 1) throw Error("server_candidate_cap must be at least 1");
    for (const auto& a : agents) a.validate();
  }
};

// ---------------------------------------------------------------------------
// Observations

/// Decisions already taken for the task being encoded.
struct PriorDecisions {
  std::optional<ClusterId> cluster;
  std::optional<ServerId> server;
  std::optional<int> hour;
};

class MissingPriorDecision : public Error {
 public:
  using Error::Error;
};

struct Environment {
  const PlatformConfig& platform;
  const EnergyPricingConfig& price;
  const AllocationLedger& ledger;
};

/// Mean CPU utilization of a cluster over the whole horizon.
inline double cluster_utilization(const Environment& env, const Cluster& c) {
  double used = 0.0, cap = 0.0;
  for (ServerId s : c.servers) {
    used += env.ledger.horizon_cpu_sum(s);
    cap += env.platform.server(s).cpu_capacity * env.ledger.horizon_minutes();
  }
  return cap > 0.0 ? used / cap : 0.0;
}

/// Power (kW) of one server over an hour at a given mean utilization.
inline double server_power_kw(const Server& s, double ur) {
  return (s.power.static_watts + dynamic_power(std::min(ur, 1.0), s.power)) / 1000.0;
}

/// Servers of a cluster able to host the task when empty, ordered by closeness of
/// their horizon utilization to 0.5, truncated to `cap`.
inline std::vector<ServerId> candidate_servers(const Environment& env, const Cluster& cluster, const Task& task,
                                               int cap) {
  std::vector<std::pair<double, ServerId>> scored;
  const double c = task.total_cpu(), m = task.total_mem();
  for (ServerId id : cluster.servers) {
    const auto& s = env.platform.server(id);
    if (!server_supports_all(s, task) || c > s.cpu_capacity + kCapacityEps || m > s.mem_capacity + kCapacityEps)
      continue;
    scored.emplace_back(std::abs(horizon_utilization(env.ledger, s) - 0.5), id);
  }
  std::stable_sort(scored.begin(), scored.end());
  if (static_cast<int>(scored.size()) > cap) scored.resize(static_cast<std::size_t>(cap));
  std::vector<ServerId> out;
  for (const auto& p : scored) out.push_back(p.second);
  return out;
}

/// Latest start that still meets the soft deadline and fits in the horizon.
inline int latest_start(const Task& task, int horizon_minutes) {
  return std::min(task.deadline_minute - task.duration_minutes + 1, horizon_minutes - task.duration_minutes);
}

inline std::vector<double> task_block(const Task& task, int ready_minute, int horizon_minutes) {
  const double slack = task.deadline_minute - (ready_minute + task.duration_minutes - 1);
  return {task.total_cpu(), task.total_mem(), slack / horizon_minutes, task.priority / 60.0,
          task.duration_minutes / 60.0};
}

struct LayerDims {
  int input = 0;
  int actions = 0;
};

inline LayerDims layer_dims(Layer layer, const PlatformConfig& cfg, int candidate_cap) {
  switch (layer) {
    case Layer::Cluster: {
      const int m = static_cast<int>(cfg.clusters.size());
      return {kTaskFeatures + m, m};
    }
    case Layer::Server: {
      std::size_t largest = 0;
      for (const auto& c : cfg.clusters) largest = std::max(largest, c.servers.size());
      const int k = std::max(1, std::min(candidate_cap, static_cast<int>(largest)));
      return {kTaskFeatures + 3 * k, k};
    }
    case Layer::Hour:
      return {kTaskFeatures + 2 * cfg.horizon_hours, cfg.horizon_hours};
    case Layer::Minute:
      return {kTaskFeatures + cfg.minutes_per_hour, cfg.minutes_per_hour};
  }
  return {};
}

/// Fixed-length feature vector for one layer: task block followed by the layer's
/// environment block. `candidates` is only read by the server layer.
inline std::vector<double> encode_observation(Layer layer, const Environment& env, const Task& task,
                                              const PriorDecisions& prior, int ready_minute,
                                              const std::vector<ServerId>& candidates = {},
                                              int candidate_slots = 0) {
  const auto& cfg = env.platform;
  const int horizon = env.ledger.horizon_minutes();
  auto x = task_block(task, ready_minute, horizon);
  switch (layer) {
    case Layer::Cluster:
      for (const auto& c : cfg.clusters) x.push_back(cluster_utilization(env, c));
      break;
    case Layer::Server: {
      if (!prior.cluster) throw MissingPriorDecision("server layer needs a cluster");
      const int lo = std::clamp(task.arrival_minute, 0, horizon - 1);
      const int hi = std::clamp(task.deadline_minute, lo, horizon - 1);
      for (int k = 0; k < candidate_slots; ++k) {
        if (k < static_cast<int>(candidates.size())) {
          const auto& s = cfg.server(candidates[static_cast<std::size_t>(k)]);
          double cpu = 0.0, mem = 0.0;
          for (int t = lo; t <= hi; ++t) {
            cpu += env.ledger.cpu_used(s.id, t);
            mem += env.ledger.mem_used(s.id, t);
          }
          const double span = hi - lo + 1;
          x.push_back(1.0 - cpu / (s.cpu_capacity * span));
          x.push_back(1.0 - mem / (s.mem_capacity * span));
          x.push_back(horizon_utilization(env.ledger, s));
        } else {
          x.insert(x.end(), {0.0, 0.0, 0.0});
        }
      }
      break;
    }
    case Layer::Hour: {
      if (!prior.cluster || !prior.server) throw MissingPriorDecision("hour layer needs a cluster and a server");
      const auto& s = cfg.server(*prior.server);
      for (int h = 0; h < cfg.horizon_hours; ++h) {
        const double ur = hour_utilization(env.ledger, s, h, cfg.minutes_per_hour);
        const double forecast = std::min(1.0, ur + task.total_cpu() / s.cpu_capacity);
        x.push_back(unit_price(env.price, h, server_power_kw(s, forecast)));
        x.push_back(ur);
      }
      break;
    }
    case Layer::Minute: {
      if (!prior.cluster || !prior.server || !prior.hour)
        throw MissingPriorDecision("minute layer needs a cluster, a server and an hour");
      const auto& s = cfg.server(*prior.server);
      const int base = *prior.hour * cfg.minutes_per_hour;
      for (int m = 0; m < cfg.minutes_per_hour; ++m) x.push_back(utilization(env.ledger, s, base + m));
      break;
    }
  }
  return x;
}

// ---------------------------------------------------------------------------
// Scheduler

struct TraceRecord {
  std::uint64_t step = 0;
  Layer layer = Layer::Cluster;
  int action = 0;      // executed action
  int dqn_action = 0;  // action proposed by the agent
  double reward = 0.0;
  bool reject = false;         // executed action was invalid
  bool reject_signal = false;  // proposed action was invalid
  bool fallback_used = false;
  std::optional<double> loss;
  TaskKey task;
  bool priority_bonus = false;
  int options = 0;  // valid actions available at this step
};

inline std::string trace_to_csv(const std::vector<TraceRecord>& trace) {
  std::string out = "step,layer,action,reward,reject,fallback_used,loss\n";
  for (const auto& r : trace) {
    out += std::to_string(r.step) + ',' + std::to_string(static_cast<int>(r.layer)) + ',' + std::to_string(r.action) +
           ',' + detail::format_double(r.reward) + ',' + (r.reject ? "1" : "0") + ',' + (r.fallback_used ? "1" : "0") +
           ',' + (r.loss ? detail::format_double(*r.loss) : std::string()) + '\n';
  }
  return out;
}

enum class TaskOutcome { Scheduled, Recycled, Rejected };

/// Layered deep-Q scheduler: one agent per layer, run in order cluster, server, hour, minute.
class Scheduler {
 public:
  /// Decides one layer's action. Tests may substitute the agent's choice.
  using ActionOverride = std::function<std::optional<int>(Layer, const std::vector<char>& validity)>;

  Scheduler(const PlatformConfig& platform, const EnergyPricingConfig& price, SchedulerConfig cfg)
      : platform_(platform), price_(price), cfg_(std::move(cfg)), ledger_(platform) {
    cfg_.validate();
    for (int i = 0; i < kLayerCount; ++i) {
      const auto layer = static_cast<Layer>(i + 1);
      const auto dims = layer_dims(layer, platform_, cfg_.server_candidate_cap);
      auto acfg = cfg_.agents[static_cast<std::size_t>(i)];
      acfg.seed = cfg_.seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(i + 1) * 0xBF58476D1CE4E5B9ull + acfg.seed;
      agents_.emplace_back(dims.input, dims.actions, acfg);
    }
  }

  const SchedulerConfig& config() const { return cfg_; }
  AllocationLedger& ledger() { return ledger_; }
  const AllocationLedger& ledger() const { return ledger_; }
  const std::vector<TraceRecord>& trace() const { return trace_; }
  dqn::Agent& agent(Layer l) { return agents_[layer_slot(l)]; }
  RoundRobinCursor& cursor(Layer l) { return cursors_[layer_slot(l)]; }
  void set_action_override(ActionOverride f) { override_ = std::move(f); }

  /// Queues a job for online scheduling.
  void submit(const Job& job) {
    JobState st;
    st.job = &job;
    queue_.push_back(std::move(st));
  }

  /// Works through the queue. A job whose task is recycled goes to the back of the
  /// queue with its placed tasks kept, and resumes at that task later.
  void drain() {
    while (!queue_.empty()) {
      JobState st = std::move(queue_.front());
      queue_.pop_front();
      if (advance(st)) queue_.push_back(std::move(st));
    }
  }

  /// Submits one job, drains the queue and returns the job's outcomes in dependency order.
  std::vector<std::pair<TaskKey, TaskOutcome>> schedule_job(const Job& job) {
    submit(job);
    drain();
    std::vector<std::pair<TaskKey, TaskOutcome>> out;
    for (const Task* t : topological_tasks(job)) {
      const auto* rec = ledger_.find({job.job_id, t->task_id});
      out.emplace_back(rec->key, rec->status == TaskStatus::Scheduled ? TaskOutcome::Scheduled : TaskOutcome::Rejected);
    }
    return out;
  }

  /// Closes every layer's last pending transition as terminal.
  void finish() {
    for (int i = 0; i < kLayerCount; ++i) {
      auto& p = pending_[static_cast<std::size_t>(i)];
      if (!p) continue;
      p->next_state = p->state;
      p->terminal = true;
      agents_[static_cast<std::size_t>(i)].store_transition(std::move(*p));
      p.reset();
    }
  }

 private:
  struct StepOutcome {
    int action = 0;
    bool valid = false;
  };

  struct Attempt {
    bool scheduled = false;
    bool deadline_related = false;
  };

  struct JobState {
    const Job* job = nullptr;
    std::vector<const Task*> order;
    std::size_t next = 0;
    std::optional<ClusterId> cluster;
    bool started = false;
  };

  void reject_all(const JobState& st, RejectReason reason) {
    for (const Task* t : st.order) ledger_.reject(*t, reason);
  }

  /// Progresses one job as far as possible; true when it was recycled.
  bool advance(JobState& st) {
    const Job& job = *st.job;
    if (!st.started) {
      st.started = true;
      st.order = topological_tasks(job);
      for (const Task* t : st.order) ledger_.record(*t);
      const bool admitted = std::all_of(st.order.begin(), st.order.end(), [&](const Task* t) {
        return admission_check(platform_, *t) == Admission::Accept;
      });
      if (!admitted) {
        for (const Task* t : st.order) ledger_.record(*t).admitted = false;
        reject_all(st, RejectReason::Unfulfillable);
        return false;
      }
    }
    if (!st.cluster) {
      st.cluster = choose_cluster(job, st.order);
      if (!st.cluster) {
        const bool can_recycle = std::all_of(st.order.begin(), st.order.end(), [&](const Task* t) {
          return ledger_.record(*t).recycles < cfg_.max_recycles;
        });
        if (can_recycle) {
          for (const Task* t : st.order) ++ledger_.record(*t).recycles;
          return true;
        }
        reject_all(st, RejectReason::NoValidAction);
        return false;
      }
    }
    for (; st.next < st.order.size(); ++st.next) {
      const Task& t = *st.order[st.next];
      auto& rec = ledger_.record(t);
      const auto attempt = attempt_task(job, t, *st.cluster);
      if (attempt.scheduled) continue;
      if (attempt.deadline_related) rec.deadline_violation = true;
      if (rec.recycles < cfg_.max_recycles) {
        ++rec.recycles;
        return true;
      }
      // All-or-nothing: undo this job's placements and reject the rest.
      for (std::size_t j = 0; j < st.order.size(); ++j) {
        const Task& u = *st.order[j];
        if (j < st.next) ledger_.release({job.job_id, u.task_id});
        ledger_.reject(u, j == st.next ? (attempt.deadline_related ? RejectReason::Deadline : RejectReason::NoValidAction)
                                       : RejectReason::JobRollback);
      }
      return false;
    }
    return false;
  }

  Environment env() const { return {platform_, price_, ledger_}; }

  /// One environment step of one layer's agent, including the hybrid substitution.
  template <typename RewardFn>
  StepOutcome step(Layer layer, std::vector<double> obs, const std::vector<char>& validity, const TaskKey& key,
                   RewardFn&& reward_of) {
    auto& agent = agents_[layer_slot(layer)];
    int proposed = agent.select_action(obs);
    if (override_)
      if (auto forced = override_(layer, validity)) proposed = *forced;
    const auto valid_at = [&](int a) { return a >= 0 && a < static_cast<int>(validity.size()) && validity[static_cast<std::size_t>(a)]; };
    const int options = static_cast<int>(std::count(validity.begin(), validity.end(), char{1}));

    TraceRecord rec;
    rec.step = ++steps_;
    rec.layer = layer;
    rec.task = key;
    rec.dqn_action = proposed;
    rec.reject_signal = !valid_at(proposed);
    rec.options = options;
    int action = proposed;
    if (rec.reject_signal && cfg_.hybrid_enabled && options > 1) {
      if (auto rr = round_robin_fallback(cursors_[layer_slot(layer)], validity); rr && *rr != action) {
        action = *rr;
        rec.fallback_used = true;
      }
    }
    const bool valid = valid_at(action);
    bool bonus = false;
    double reward = -2.0;  // invalid executed action
    if (valid) std::tie(reward, bonus) = reward_of(action);
    rec.action = action;
    rec.reward = reward;
    rec.reject = !valid;
    rec.priority_bonus = bonus;

    auto& pending = pending_[layer_slot(layer)];
    if (pending) {
      pending->next_state = obs;
      agent.store_transition(std::move(*pending));
    }
    pending = dqn::Transition{std::move(obs), action, reward, {}, false};
    rec.loss = agent.after_step();
    trace_.push_back(rec);
    return {action, valid};
  }

  std::optional<ClusterId> choose_cluster(const Job& job, const std::vector<const Task*>& order) {
    const auto e = env();
    // Job-level task block: aggregate demand, tightest slack, first task's priority.
    Task summary = *order.front();
    summary.vm_requests = {{0, 0.0, 0.0}};
    int dur = 0, ddl = summary.deadline_minute, arrival = summary.arrival_minute;
    for (const Task* t : order) {
      summary.vm_requests[0].cpu += t->total_cpu();
      summary.vm_requests[0].mem += t->total_mem();
      dur = std::max(dur, t->duration_minutes);
      ddl = std::min(ddl, t->deadline_minute);
      arrival = std::min(arrival, t->arrival_minute);
    }
    summary.duration_minutes = dur;
    summary.deadline_minute = ddl;
    summary.arrival_minute = arrival;
    auto obs = encode_observation(Layer::Cluster, e, summary, {}, arrival);

    std::vector<char> validity(platform_.clusters.size(), 0);
    for (std::size_t c = 0; c < platform_.clusters.size(); ++c) {
      bool ok = true;
      for (const Task* t : order)
        if (candidate_servers(e, platform_.clusters[c], *t, 1).empty()) ok = false;
      validity[c] = ok;
    }
    double job_cpu_minutes = 0.0;
    for (const Task* t : order) job_cpu_minutes += t->total_cpu() * t->duration_minutes;
    const auto out = step(Layer::Cluster, std::move(obs), validity, {job.job_id, order.front()->task_id},
                          [&](int a) {
                            const auto& c = platform_.clusters[static_cast<std::size_t>(a)];
                            double cap = 0.0;
                            for (ServerId s : c.servers) cap += platform_.server(s).cpu_capacity;
                            const double ur = cluster_utilization(e, c) + job_cpu_minutes / (cap * ledger_.horizon_minutes());
                            return std::pair{layer_reward(Layer::Cluster, {ur, 0.0, -1, 0}), false};
                          });
    if (!out.valid) return std::nullopt;
    return platform_.clusters[static_cast<std::size_t>(out.action)].id;
  }

  Attempt attempt_task(const Job& job, const Task& task, ClusterId cluster_id) {
    const auto e = env();
    const int H = ledger_.horizon_minutes();
    const int per_hour = platform_.minutes_per_hour;
    const TaskKey key{job.job_id, task.task_id};
    const auto& cluster = platform_.clusters[static_cast<std::size_t>(cluster_index(platform_, cluster_id))];
    const int last_ok = latest_start(task, H);
    const int last_any = H - task.duration_minutes;

    // Server layer.
    const auto slots = layer_dims(Layer::Server, platform_, cfg_.server_candidate_cap).actions;
    const auto cands = candidate_servers(e, cluster, task, slots);
    std::vector<int> ready(cands.size());
    std::vector<std::vector<char>> starts(cands.size());
    std::vector<char> validity(static_cast<std::size_t>(slots), 0), relaxed(static_cast<std::size_t>(slots), 0);
    for (std::size_t k = 0; k < cands.size(); ++k) {
      const auto& s = platform_.server(cands[k]);
      ready[k] = earliest_start(ledger_, job, task, platform_, s.id);
      starts[k] = feasible_starts(ledger_, s, task, ready[k], last_any);
      for (std::size_t i = 0; i < starts[k].size(); ++i) {
        if (!starts[k][i]) continue;
        relaxed[k] = 1;
        if (ready[k] + static_cast<int>(i) <= last_ok) validity[k] = 1;
      }
    }
    PriorDecisions prior{cluster_id, std::nullopt, std::nullopt};
    const int ready0 = cands.empty() ? task.arrival_minute : ready.front();
    auto obs2 = encode_observation(Layer::Server, e, task, prior, ready0, cands, slots);
    const auto s2 = step(Layer::Server, std::move(obs2), validity, key, [&](int a) {
      const auto& s = platform_.server(cands[static_cast<std::size_t>(a)]);
      const double ur = (ledger_.horizon_cpu_sum(s.id) + task.total_cpu() * task.duration_minutes) / (s.cpu_capacity * H);
      return std::pair{layer_reward(Layer::Server, {ur, 0.0, -1, 0}), false};
    });
    if (!s2.valid) return {false, s2.action < static_cast<int>(cands.size()) && relaxed[static_cast<std::size_t>(s2.action)]};
    const auto k = static_cast<std::size_t>(s2.action);
    const auto& server = platform_.server(cands[k]);
    const int es = ready[k];
    const auto& fits = starts[k];
    auto fits_at = [&](int start) {
      return start >= es && start <= last_any && fits[static_cast<std::size_t>(start - es)];
    };

    // Hour layer.
    std::vector<char> hour_ok(static_cast<std::size_t>(platform_.horizon_hours), 0), hour_relaxed(hour_ok.size(), 0);
    for (int h = 0; h < platform_.horizon_hours; ++h)
      for (int start = std::max(h * per_hour, es); start < (h + 1) * per_hour && start <= last_any; ++start) {
        if (!fits_at(start)) continue;
        hour_relaxed[static_cast<std::size_t>(h)] = 1;
        if (start <= last_ok) {
          hour_ok[static_cast<std::size_t>(h)] = 1;
          break;
        }
      }
    prior.server = server.id;
    auto obs3 = encode_observation(Layer::Hour, e, task, prior, es);
    const auto s3 = step(Layer::Hour, std::move(obs3), hour_ok, key, [&](int h) {
      const int in_hour = std::min(task.duration_minutes, per_hour);
      const double ur = (ledger_.hour_cpu_sum(server.id, h) + task.total_cpu() * in_hour) / (server.cpu_capacity * per_hour);
      double kw = server_power_kw(server, ur);
      if (cfg_.hour_price_power == PricePower::Platform) {
        kw = 0.0;
        for (const auto& s : platform_.servers)
          if (ledger_.hour_task_minutes(s.id, h) > 0 || s.id == server.id)
            kw += server_power_kw(s, s.id == server.id ? ur : hour_utilization(ledger_, s, h, per_hour));
      }
      const double price = unit_price(price_, h, kw);
      return std::pair{layer_reward(Layer::Hour, {ur, price, -1, 0}, cfg_.price_reward_threshold), false};
    });
    if (!s3.valid) return {false, hour_relaxed[static_cast<std::size_t>(s3.action)] != 0};
    const int hour = s3.action;

    // Minute layer.
    std::vector<char> minute_ok(static_cast<std::size_t>(per_hour), 0), minute_relaxed(minute_ok.size(), 0);
    for (int m = 0; m < per_hour; ++m) {
      const int start = hour * per_hour + m;
      if (!fits_at(start)) continue;
      minute_relaxed[static_cast<std::size_t>(m)] = 1;
      minute_ok[static_cast<std::size_t>(m)] = start <= last_ok;
    }
    prior.hour = hour;
    auto obs4 = encode_observation(Layer::Minute, e, task, prior, es);
    const auto s4 = step(Layer::Minute, std::move(obs4), minute_ok, key, [&](int m) {
      const int start = hour * per_hour + m;
      const double ur = (ledger_.cpu_used(server.id, start) + task.total_cpu()) / server.cpu_capacity;
      const bool hit = priority_window_hit(m, task.priority);
      return std::pair{layer_reward(Layer::Minute, {ur, 0.0, m, task.priority}), hit};
    });
    if (!s4.valid) return {false, minute_relaxed[static_cast<std::size_t>(s4.action)] != 0};

    const int start = hour * per_hour + s4.action;
    ledger_.allocate(platform_, task, {cluster_id, server.id, hour, start, start + task.duration_minutes - 1});
    return {true, false};
  }

  const PlatformConfig& platform_;
  const EnergyPricingConfig& price_;
  SchedulerConfig cfg_;
  AllocationLedger ledger_;
  std::vector<dqn::Agent> agents_;
  std::array<RoundRobinCursor, kLayerCount> cursors_{};
  std::array<std::optional<dqn::Transition>, kLayerCount> pending_{};
  std::vector<TraceRecord> trace_;
  std::uint64_t steps_ = 0;
  ActionOverride override_;
  std::deque<JobState> queue_;
};

struct RunResult {
  AllocationLedger ledger;
  std::vector<TraceRecord> trace;
};

/// Jobs ordered by their earliest task arrival (stable).
inline std::vector<const Job*> jobs_by_arrival(const std::vector<Job>& jobs) {
  std::vector<const Job*> order;
  for (const auto& j : jobs) order.push_back(&j);
  auto first_arrival = [](const Job* j) {
    int a = std::numeric_limits<int>::max();
    for (const auto& t : j->tasks) a = std::min(a, t.arrival_minute);
    return a;
  };
  std::stable_sort(order.begin(), order.end(),
                   [&](const Job* a, const Job* b) { return first_arrival(a) < first_arrival(b); });
  return order;
}

/// Single online pass over the workload in arrival order.
inline RunResult run_online(const std::vector<Job>& jobs, const PlatformConfig& platform,
                            const EnergyPricingConfig& price, const SchedulerConfig& cfg) {
  if (auto v = validate_platform(platform); !v)
    throw Error(std::string("invalid platform: ") + to_string(v.code) + " " + v.detail);
  for (const auto& j : jobs)
    if (auto v = validate_job(j); !v) throw Error(std::string("invalid job: ") + to_string(v.code) + " " + v.detail);
  Scheduler sched(platform, price, cfg);
  for (const Job* j : jobs_by_arrival(jobs)) sched.submit(*j);
  sched.drain();
  sched.finish();
  return {sched.ledger(), sched.trace()};
}

}  // namespace h2o
