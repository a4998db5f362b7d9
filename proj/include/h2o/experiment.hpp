#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "h2o/baseline.hpp"
#include "h2o/detail/text.hpp"
#include "h2o/domain.hpp"
#include "h2o/energy.hpp"
#include "h2o/hierarchy.hpp"
#include "h2o/metrics.hpp"
#include "h2o/workload.hpp"

namespace h2o {

enum class Approach { H2O, HDRL, RR };

inline const char* to_string(Approach a) {
  switch (a) {
    case Approach::H2O: return "h2o";
    case Approach::HDRL: return "hdrl";
    case Approach::RR: return "rr";
  }
  return "?";
}

inline std::optional<Approach> parse_approach(std::string_view s) {
  if (s == "h2o") return Approach::H2O;
  if (s == "hdrl") return Approach::HDRL;
  if (s == "rr") return Approach::RR;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Logging, controlled by H2O_LOG=off|info|debug

enum class LogLevel { Off, Info, Debug };

inline LogLevel log_level() {
  const char* v = std::getenv("H2O_LOG");
  if (!v) return LogLevel::Off;
  const std::string s(v);
  if (s == "debug") return LogLevel::Debug;
  if (s == "info") return LogLevel::Info;
  return LogLevel::Off;
}

inline void log(LogLevel level, const std::string& msg) {
  static const LogLevel configured = log_level();
  if (level != LogLevel::Off && level <= configured)
    std::cerr << (level == LogLevel::Debug ? "[debug] " : "[info] ") << msg << '\n';
}

// ---------------------------------------------------------------------------
// Configuration

struct ScalePreset {
  const char* name;
  int servers;
  int clusters;
};

inline constexpr ScalePreset kScalePresets[] = {
    {"desk", 60, 2}, {"small", 600, 2}, {"medium", 1080, 3}, {"large", 12500, 5}};

struct PlatformSpec {
  std::string preset = "desk";  // empty when servers/clusters are explicit
  int servers = 60;
  int clusters = 2;
  double cpu_capacity = 2.0;
  double mem_capacity = 2.0;
  PowerParams power{100.0, 200.0, 300.0, 0.7};
  double bandwidth = 100.0;
  int horizon_hours = 24;

  PlatformConfig build() const {
    auto cfg = make_uniform_platform(servers, clusters, cpu_capacity, mem_capacity, power);
    cfg.default_bandwidth = bandwidth;
    cfg.horizon_hours = horizon_hours;
    return cfg;
  }
};

struct WorkloadSpec {
  std::string scenario = "medium";  // low|medium|high; empty when a trace is used
  double scale = 2000.0 / 154001.0;
  std::optional<ScenarioConfig> custom;  // replaces the preset when present
  std::string trace_path;
};

struct ExperimentConfig {
  PlatformSpec platform;
  WorkloadSpec workload;
  EnergyPricingConfig pricing = EnergyPricingConfig::defaults();
  SchedulerConfig scheduler;
  MetricsConfig metrics;
  Approach approach = Approach::H2O;
  std::vector<std::uint64_t> seeds{1};
  std::string output_dir = "out";
};

inline nlohmann::json scenario_to_json(const ScenarioConfig& s) {
  return {{"target_task_count", s.target_task_count},
          {"target_total_cpu", s.target_total_cpu},
          {"target_cpu_variance", s.target_cpu_variance},
          {"target_total_mem", s.target_total_mem},
          {"target_mem_variance", s.target_mem_variance},
          {"span_minutes", s.span_minutes},
          {"job_size_range", {s.job_size_range.min, s.job_size_range.max}},
          {"edge_probability", s.edge_probability},
          {"deadline_slack_range", {s.deadline_slack_range.min, s.deadline_slack_range.max}},
          {"duration_range", {s.duration_range.min, s.duration_range.max}},
          {"priority_range", {s.priority_range.min, s.priority_range.max}},
          {"data_units_range", {s.data_units_range.min, s.data_units_range.max}},
          {"reference_bandwidth", s.reference_bandwidth},
          {"max_task_cpu", s.max_task_cpu},
          {"max_task_mem", s.max_task_mem},
          {"vm_types", s.vm_types}};
}

inline ScenarioConfig scenario_from_json(const nlohmann::json& j, ScenarioConfig s = {}) {
  auto range = [&](const char* key, auto& r) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_array() || v.size() != 2) throw Error(std::string(key) + " must be a [min, max] pair");
    v[0].get_to(r.min);
    v[1].get_to(r.max);
  };
  auto field = [&](const char* key, auto& out) {
    if (j.contains(key)) j.at(key).get_to(out);
  };
  field("target_task_count", s.target_task_count);
  field("target_total_cpu", s.target_total_cpu);
  field("target_cpu_variance", s.target_cpu_variance);
  field("target_total_mem", s.target_total_mem);
  field("target_mem_variance", s.target_mem_variance);
  field("span_minutes", s.span_minutes);
  range("job_size_range", s.job_size_range);
  field("edge_probability", s.edge_probability);
  range("deadline_slack_range", s.deadline_slack_range);
  range("duration_range", s.duration_range);
  range("priority_range", s.priority_range);
  range("data_units_range", s.data_units_range);
  field("reference_bandwidth", s.reference_bandwidth);
  field("max_task_cpu", s.max_task_cpu);
  field("max_task_mem", s.max_task_mem);
  field("vm_types", s.vm_types);
  return s;
}

inline nlohmann::json agent_to_json(const dqn::AgentConfig& a) {
  return {{"learning_rate", a.learning_rate},
          {"discount", a.discount},
          {"epsilon_start", a.epsilon_start},
          {"epsilon_decrement", a.epsilon_decrement},
          {"epsilon_floor", a.epsilon_floor},
          {"minibatch_size", a.minibatch_size},
          {"memory_capacity", a.memory_capacity},
          {"target_sync_period", a.target_sync_period},
          {"train_period", a.train_period},
          {"hidden", a.hidden},
          {"init_bound", a.init_bound},
          {"error_clip", a.error_clip},
          {"loss_reduction", a.reduction == dqn::LossReduction::Mean ? "mean" : "sum"}};
}

inline dqn::AgentConfig agent_from_json(const nlohmann::json& j, dqn::AgentConfig a) {
  auto field = [&](const char* key, auto& out) {
    if (j.contains(key)) j.at(key).get_to(out);
  };
  field("learning_rate", a.learning_rate);
  field("discount", a.discount);
  field("epsilon_start", a.epsilon_start);
  field("epsilon_decrement", a.epsilon_decrement);
  field("epsilon_floor", a.epsilon_floor);
  field("minibatch_size", a.minibatch_size);
  field("memory_capacity", a.memory_capacity);
  field("target_sync_period", a.target_sync_period);
  field("train_period", a.train_period);
  field("hidden", a.hidden);
  field("init_bound", a.init_bound);
  field("error_clip", a.error_clip);
  if (j.contains("loss_reduction")) {
    const auto r = j.at("loss_reduction").get<std::string>();
    if (r != "mean" && r != "sum") throw Error("loss_reduction must be mean or sum");
    a.reduction = r == "mean" ? dqn::LossReduction::Mean : dqn::LossReduction::Sum;
  }
  return a;
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json platform = {{"preset", c.platform.preset},
                             {"servers", c.platform.servers},
                             {"clusters", c.platform.clusters},
                             {"cpu_capacity", c.platform.cpu_capacity},
                             {"mem_capacity", c.platform.mem_capacity},
                             {"power",
                              {{"static_watts", c.platform.power.static_watts},
                               {"a", c.platform.power.a},
                               {"b", c.platform.power.b},
                               {"ur_opt", c.platform.power.ur_opt}}},
                             {"bandwidth", c.platform.bandwidth},
                             {"horizon_hours", c.platform.horizon_hours}};
  nlohmann::json workload;
  if (!c.workload.trace_path.empty()) {
    workload = {{"trace", c.workload.trace_path}};
  } else {
    workload = {{"scenario", c.workload.scenario}, {"scale", c.workload.scale}};
    if (c.workload.custom) workload["custom"] = scenario_to_json(*c.workload.custom);
  }
  nlohmann::json agents = nlohmann::json::array();
  for (const auto& a : c.scheduler.agents) agents.push_back(agent_to_json(a));
  nlohmann::json seeds = c.seeds;
  return {{"platform", platform},
          {"workload", workload},
          {"pricing", {{"tou_rates", c.pricing.tou_rates}, {"rtp_slope", c.pricing.rtp_slope}}},
          {"scheduler",
           {{"hybrid_enabled", c.scheduler.hybrid_enabled},
            {"max_recycles", c.scheduler.max_recycles},
            {"server_candidate_cap", c.scheduler.server_candidate_cap},
            {"price_reward_threshold", c.scheduler.price_reward_threshold},
            {"hour_price_power", c.scheduler.hour_price_power == PricePower::Platform ? "platform" : "single_server"},
            {"agents", agents}}},
          {"metrics", {{"uor_band", {c.metrics.uor_low, c.metrics.uor_high}}}},
          {"approach", to_string(c.approach)},
          {"seeds", seeds},
          {"output_dir", c.output_dir}};
}

/// Parses a config document; every key is optional and defaults apply.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    if (j.contains("platform")) {
      const auto& p = j.at("platform");
      if (p.contains("preset") && !p.at("preset").get<std::string>().empty()) {
        const auto name = p.at("preset").get<std::string>();
        bool found = false;
        for (const auto& s : kScalePresets)
          if (name == s.name) {
            c.platform.preset = name;
            c.platform.servers = s.servers;
            c.platform.clusters = s.clusters;
            found = true;
          }
        if (!found) throw Error("unknown platform preset '" + name + "'");
      }
      if (p.contains("servers")) p.at("servers").get_to(c.platform.servers);
      if (p.contains("clusters")) p.at("clusters").get_to(c.platform.clusters);
      for (const auto& s : kScalePresets)
        if (c.platform.preset == s.name && (c.platform.servers != s.servers || c.platform.clusters != s.clusters))
          c.platform.preset.clear();
      if (p.contains("cpu_capacity")) p.at("cpu_capacity").get_to(c.platform.cpu_capacity);
      if (p.contains("mem_capacity")) p.at("mem_capacity").get_to(c.platform.mem_capacity);
      if (p.contains("bandwidth")) p.at("bandwidth").get_to(c.platform.bandwidth);
      if (p.contains("horizon_hours")) p.at("horizon_hours").get_to(c.platform.horizon_hours);
      if (p.contains("power")) {
        const auto& w = p.at("power");
        if (w.contains("static_watts")) w.at("static_watts").get_to(c.platform.power.static_watts);
        if (w.contains("a")) w.at("a").get_to(c.platform.power.a);
        if (w.contains("b")) w.at("b").get_to(c.platform.power.b);
        if (w.contains("ur_opt")) w.at("ur_opt").get_to(c.platform.power.ur_opt);
      }
      if (c.platform.servers < 1 || c.platform.clusters < 1 || c.platform.clusters > c.platform.servers)
        throw Error("platform needs at least one server per cluster");
    }
    if (j.contains("workload")) {
      const auto& w = j.at("workload");
      const bool has_trace = w.contains("trace");
      const bool has_scenario = w.contains("scenario") || w.contains("custom");
      if (has_trace == has_scenario) throw Error("workload needs exactly one of 'trace' or 'scenario'/'custom'");
      if (has_trace) {
        c.workload.trace_path = w.at("trace").get<std::string>();
        c.workload.scenario.clear();
      } else {
        if (w.contains("scenario")) c.workload.scenario = w.at("scenario").get<std::string>();
        if (c.workload.scenario != "low" && c.workload.scenario != "medium" && c.workload.scenario != "high")
          throw Error("scenario must be low, medium or high");
        if (w.contains("scale")) w.at("scale").get_to(c.workload.scale);
        if (!(c.workload.scale > 0.0)) throw Error("scale must be positive");
        if (w.contains("custom")) c.workload.custom = scenario_from_json(w.at("custom"));
      }
    }
    if (j.contains("pricing")) {
      const auto& p = j.at("pricing");
      if (p.contains("tou_rates")) {
        const auto rates = p.at("tou_rates").get<std::vector<double>>();
        if (rates.size() != 24) throw Error("tou_rates needs exactly 24 entries");
        std::copy(rates.begin(), rates.end(), c.pricing.tou_rates.begin());
      }
      if (p.contains("rtp_slope")) p.at("rtp_slope").get_to(c.pricing.rtp_slope);
      if (!c.pricing.valid()) throw Error("pricing rates must be non-negative");
    }
    if (j.contains("scheduler")) {
      const auto& s = j.at("scheduler");
      if (s.contains("hybrid_enabled")) s.at("hybrid_enabled").get_to(c.scheduler.hybrid_enabled);
      if (s.contains("max_recycles")) s.at("max_recycles").get_to(c.scheduler.max_recycles);
      if (s.contains("server_candidate_cap")) s.at("server_candidate_cap").get_to(c.scheduler.server_candidate_cap);
      if (s.contains("price_reward_threshold"))
        s.at("price_reward_threshold").get_to(c.scheduler.price_reward_threshold);
      if (s.contains("hour_price_power")) {
        const auto v = s.at("hour_price_power").get<std::string>();
        if (v != "platform" && v != "single_server") throw Error("hour_price_power must be platform or single_server");
        c.scheduler.hour_price_power = v == "platform" ? PricePower::Platform : PricePower::SingleServer;
      }
      if (s.contains("agents")) {
        const auto& a = s.at("agents");
        if (!a.is_array() || a.size() != static_cast<std::size_t>(kLayerCount)) throw Error("scheduler.agents needs one entry per layer");
        for (std::size_t i = 0; i < static_cast<std::size_t>(kLayerCount); ++i) c.scheduler.agents[i] = agent_from_json(a[i], c.scheduler.agents[i]);
      }
      c.scheduler.validate();
    }
    if (j.contains("metrics") && j.at("metrics").contains("uor_band")) {
      const auto band = j.at("metrics").at("uor_band").get<std::vector<double>>();
      if (band.size() != 2 || band[0] > band[1]) throw Error("uor_band must be [low, high]");
      c.metrics.uor_low = band[0];
      c.metrics.uor_high = band[1];
    }
    if (j.contains("approach")) {
      auto a = parse_approach(j.at("approach").get<std::string>());
      if (!a) throw Error("approach must be h2o, hdrl or rr");
      c.approach = *a;
    }
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (c.seeds.empty()) throw Error("seeds must not be empty");
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("config: ") + e.what());
  }
  return c;
}

/// Hash of the resolved config, excluding where outputs are written.
inline std::string config_digest(const ExperimentConfig& c) {
  auto j = to_json(c);
  j.erase("output_dir");
  return detail::hex64(detail::fnv1a64(j.dump()));
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Runs

inline std::vector<Job> build_workload(const ExperimentConfig& c, std::uint64_t seed) {
  if (!c.workload.trace_path.empty()) {
    std::vector<VmTypeId> known;
    for (const auto& v : c.platform.build().vm_types) known.push_back(v.id);
    return parse_trace(detail::read_file(c.workload.trace_path), known);
  }
  ScenarioConfig s;
  if (c.workload.custom) {
    s = *c.workload.custom;
  } else {
    const auto level = c.workload.scenario == "low" ? VarianceLevel::Low
                       : c.workload.scenario == "high" ? VarianceLevel::High
                                                       : VarianceLevel::Medium;
    s = scenario_preset(level, c.workload.scale);
  }
  return generate_workload(s, seed);
}

struct RunOutput {
  std::string run_id;
  Approach approach = Approach::H2O;
  std::uint64_t seed = 0;
  Indicators indicators;
  EnergyReport energy;
  std::string ledger_csv;
  std::string trace_csv;
  std::string report;  // JSON text
};

inline std::string scale_label(const ExperimentConfig& c) {
  return c.platform.preset.empty()
             ? std::to_string(c.platform.servers) + "x" + std::to_string(c.platform.clusters)
             : c.platform.preset;
}

inline std::string scenario_label(const ExperimentConfig& c) {
  if (!c.workload.trace_path.empty()) return "trace";
  return c.workload.custom ? "custom" : c.workload.scenario;
}

/// One approach on one seed, fully in memory.
inline RunOutput run_once(const ExperimentConfig& base, Approach approach, std::uint64_t seed) {
  ExperimentConfig c = base;
  c.approach = approach;
  c.seeds = {seed};
  c.scheduler.seed = seed;
  c.scheduler.hybrid_enabled = approach == Approach::H2O ? base.scheduler.hybrid_enabled : false;
  if (approach == Approach::RR) c.metrics.power_policy = PowerPolicy::AlwaysOn;

  const auto platform = c.platform.build();
  if (auto v = validate_platform(platform); !v)
    throw Error(std::string("invalid platform: ") + to_string(v.code) + " " + v.detail);
  const auto jobs = build_workload(c, seed);

  RunOutput out;
  out.approach = approach;
  out.seed = seed;
  out.run_id = std::string(to_string(approach)) + "-" + scale_label(c) + "-" + scenario_label(c) + "-s" +
               std::to_string(seed);
  AllocationLedger ledger;
  std::vector<TraceRecord> trace;
  log(LogLevel::Info, "run " + out.run_id + ": " + std::to_string(jobs.size()) + " jobs");
  if (approach == Approach::RR) {
    ledger = run_rr_baseline(jobs, platform);
  } else {
    auto r = run_online(jobs, platform, c.pricing, c.scheduler);
    ledger = std::move(r.ledger);
    trace = std::move(r.trace);
  }
  out.energy = energy_and_cost(ledger, platform, c.pricing, c.metrics.power_policy);
  out.indicators = compute_indicators(ledger, out.energy, platform, c.metrics);
  out.ledger_csv = ledger_to_csv(ledger);
  out.trace_csv = trace_to_csv(trace);
  const auto digest = config_digest(c);
  out.report = report_json(out.indicators, out.energy, digest).dump(2) + "\n";
  log(LogLevel::Info, "run " + out.run_id + ": ece=" + detail::format_double(out.indicators.ece) +
                          " rejection=" + detail::format_double(out.indicators.rejection_rate));
  return out;
}

inline std::string comparison_csv(const ExperimentConfig& c, const std::vector<RunOutput>& runs) {
  std::string out = "run_id,approach,scale,scenario,seed,ece,ee,tfr,uor,ddl_vr,reward_rate,rejection_rate\n";
  auto values = [](const Indicators& i) {
    return std::vector<double>{i.ece, i.ee, i.tfr, i.uor, i.ddl_vr, i.reward_rate, i.rejection_rate};
  };
  auto row = [&](const std::string& id, const std::string& approach, const std::string& seed,
                 const std::vector<double>& v) {
    out += id + ',' + approach + ',' + scale_label(c) + ',' + scenario_label(c) + ',' + seed;
    for (double x : v) out += ',' + detail::format_double(x);
    out += '\n';
  };
  std::map<std::string, std::vector<std::vector<double>>> by_approach;
  std::vector<std::string> approach_order;
  for (const auto& r : runs) {
    row(r.run_id, to_string(r.approach), std::to_string(r.seed), values(r.indicators));
    auto& bucket = by_approach[to_string(r.approach)];
    if (bucket.empty()) approach_order.push_back(to_string(r.approach));
    bucket.push_back(values(r.indicators));
  }
  for (const auto& a : approach_order) {
    const auto& rows = by_approach[a];
    const std::size_t k = rows.front().size();
    std::vector<double> mean(k, 0.0), sd(k, 0.0);
    for (const auto& r : rows)
      for (std::size_t i = 0; i < k; ++i) mean[i] += r[i] / static_cast<double>(rows.size());
    for (const auto& r : rows)
      for (std::size_t i = 0; i < k; ++i) sd[i] += (r[i] - mean[i]) * (r[i] - mean[i]);
    for (auto& s : sd) s = rows.size() > 1 ? std::sqrt(s / static_cast<double>(rows.size() - 1)) : 0.0;
    row(a + "-mean", a, "mean", mean);
    row(a + "-stdev", a, "stdev", sd);
  }
  return out;
}

/// Runs every (approach, seed) pair and writes per-run files plus comparison.csv.
/// Outputs are staged and only moved into place once every run succeeded.
inline std::vector<RunOutput> run_experiment(const ExperimentConfig& c, const std::vector<Approach>& approaches) {
  namespace fs = std::filesystem;
  const fs::path out_dir(c.output_dir);
  fs::create_directories(out_dir);
  const fs::path staging = out_dir / ".staging";
  fs::remove_all(staging);
  fs::create_directories(staging);
  std::vector<RunOutput> runs;
  try {
    for (Approach a : approaches)
      for (std::uint64_t seed : c.seeds) {
        auto r = run_once(c, a, seed);
        const auto dir = staging / r.run_id;
        fs::create_directories(dir);
        detail::write_file_atomic(dir / "report.json", r.report);
        detail::write_file_atomic(dir / "ledger.csv", r.ledger_csv);
        detail::write_file_atomic(dir / "trace.csv", r.trace_csv);
        runs.push_back(std::move(r));
      }
    detail::write_file_atomic(staging / "comparison.csv", comparison_csv(c, runs));
  } catch (...) {
    fs::remove_all(staging);
    throw;
  }
  for (const auto& entry : fs::directory_iterator(staging)) {
    const auto target = out_dir / entry.path().filename();
    fs::remove_all(target);
    fs::rename(entry.path(), target);
  }
  fs::remove_all(staging);
  return runs;
}

}  // namespace h2o
