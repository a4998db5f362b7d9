#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "h2o.hpp"

namespace {

int cmd_run(const std::string& config_path, const std::string& approach, const std::vector<std::uint64_t>& seeds,
            const std::string& out, bool print_config) {
  h2o::ExperimentConfig cfg = config_path.empty() ? h2o::ExperimentConfig{} : h2o::load_config(config_path);
  std::vector<h2o::Approach> approaches;
  if (approach.empty()) {
    approaches.push_back(cfg.approach);
  } else {
    for (auto part : h2o::detail::split(approach, ',')) {
      auto a = h2o::parse_approach(part);
      if (!a) {
        std::cerr << "unknown approach '" << part << "' (expected h2o, hdrl or rr)\n";
        return 2;
      }
      approaches.push_back(*a);
    }
    cfg.approach = approaches.front();
  }
  if (!seeds.empty()) cfg.seeds = seeds;
  if (!out.empty()) cfg.output_dir = out;
  if (print_config) {
    std::cout << h2o::to_json(cfg).dump(2) << '\n';
    return 0;
  }
  const auto runs = h2o::run_experiment(cfg, approaches);
  for (const auto& r : runs)
    std::cout << r.run_id << " ece=" << h2o::detail::format_double(r.indicators.ece)
              << " ddl_vr=" << h2o::detail::format_double(r.indicators.ddl_vr)
              << " rejection_rate=" << h2o::detail::format_double(r.indicators.rejection_rate) << '\n';
  std::cout << "wrote " << cfg.output_dir << "/comparison.csv\n";
  return 0;
}

int cmd_validate(const std::string& config_path) {
  const auto cfg = h2o::load_config(config_path);
  const auto platform = cfg.platform.build();
  if (auto v = h2o::validate_platform(platform); !v) {
    std::cerr << "platform: " << h2o::to_string(v.code) << ' ' << v.detail << '\n';
    return 1;
  }
  if (!cfg.workload.trace_path.empty()) {
    const auto jobs = h2o::build_workload(cfg, cfg.seeds.front());
    std::cout << "trace ok: " << jobs.size() << " jobs\n";
  }
  std::cout << "config ok: " << platform.servers.size() << " servers, " << platform.clusters.size()
            << " clusters, digest " << h2o::config_digest(cfg) << '\n';
  return 0;
}

int cmd_stats(const std::string& trace_path) {
  const auto jobs = h2o::parse_trace(h2o::detail::read_file(trace_path));
  const auto s = h2o::workload_stats(jobs);
  nlohmann::json j = {{"jobs", jobs.size()},
                      {"task_count", s.task_count},
                      {"total_cpu_units", s.total_cpu_units},
                      {"total_mem_units", s.total_mem_units},
                      {"cpu_variance", s.cpu_variance},
                      {"mem_variance", s.mem_variance},
                      {"span_minutes", s.span_minutes}};
  std::cout << j.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical hybrid DQN cloud scheduler"};
  app.require_subcommand(1);

  std::string config_path, approach, out, trace_path;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds;
  bool print_config = false;

  auto* run = app.add_subcommand("run", "Run an experiment");
  run->add_option("--config", config_path, "Experiment config (JSON)");
  run->add_option("--approach", approach, "h2o, hdrl or rr (comma-separated for several)");
  auto* seed_opt = run->add_option("--seed", seed, "Single seed");
  run->add_option("--seeds", seeds, "Seed list")->delimiter(',')->excludes(seed_opt);
  run->add_option("--out", out, "Output directory");
  run->add_flag("--print-config", print_config, "Print the resolved config and exit");

  auto* validate = app.add_subcommand("validate", "Validate a config");
  validate->add_option("--config", config_path, "Experiment config (JSON)")->required();

  auto* stats = app.add_subcommand("stats", "Print statistics of a workload trace");
  stats->add_option("--trace", trace_path, "Trace CSV")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      if (*seed_opt) seeds = {seed};
      return cmd_run(config_path, approach, seeds, out, print_config);
    }
    if (*validate) return cmd_validate(config_path);
    if (*stats) return cmd_stats(trace_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
