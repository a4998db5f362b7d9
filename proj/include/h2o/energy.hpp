#pragma once

#include <array>
#include <cassert>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "h2o/detail/text.hpp"
#include "h2o/domain.hpp"
#include "h2o/platform.hpp"

namespace h2o {

struct EnergyPricingConfig {
  /// Time-of-use rate per kWh for each hour of the day.
  std::array<double, 24> tou_rates{};
  /// Real-time component: extra rate per kWh for each kW of concurrent power.
  double rtp_slope = 0.001;

  static EnergyPricingConfig defaults() {
    EnergyPricingConfig c;
    for (int h = 0; h < 24; ++h) c.tou_rates[static_cast<std::size_t>(h)] = h < 8 ? 0.10 : (h >= 17 && h <= 21 ? 0.40 : 0.20);
    c.rtp_slope = 0.001;
    return c;
  }

  static EnergyPricingConfig flat(double rate, double rtp_slope = 0.0) {
    EnergyPricingConfig c;
    c.tou_rates.fill(rate);
    c.rtp_slope = rtp_slope;
    return c;
  }

  bool valid() const {
    for (double r : tou_rates)
      if (!(r >= 0.0)) return false;
    return rtp_slope >= 0.0;
  }
};

/// How idle servers are treated when integrating power.
enum class PowerPolicy {
  TurnOffIdleHours,  // zero power in any hour with no task-minutes
  AlwaysOn,          // static power for every server-minute of the horizon
};

/// Piecewise dynamic power: linear below the optimal utilization, quadratic above.
inline double dynamic_power(double ur, const PowerParams& p) {
  if (ur < p.ur_opt) return ur * p.a;
  const double over = ur - p.ur_opt;
  return p.ur_opt * p.a + over * over * p.b;
}

inline bool server_on(const AllocationLedger& ledger, ServerId s, int minute, int minutes_per_hour,
                      PowerPolicy policy) {
  return policy == PowerPolicy::AlwaysOn || ledger.hour_task_minutes(s, minute / minutes_per_hour) > 0;
}

/// Watts drawn by one server in one minute.
inline double total_power(const AllocationLedger& ledger, const PlatformConfig& cfg, const Server& server, int minute,
                          PowerPolicy policy = PowerPolicy::TurnOffIdleHours) {
  if (!server_on(ledger, server.id, minute, cfg.minutes_per_hour, policy)) return 0.0;
  return server.power.static_watts + dynamic_power(utilization(ledger, server, minute), server.power);
}

/// Rate per kWh at an hour given concurrent power in kW.
inline double unit_price(const EnergyPricingConfig& price, int hour, double power_kw) {
  if (power_kw < 0.0) throw std::invalid_argument("unit_price: negative power");
  const int h = ((hour % 24) + 24) % 24;
  return price.tou_rates[static_cast<std::size_t>(h)] + price.rtp_slope * power_kw;
}

struct HourEnergy {
  double energy_kwh = 0.0;
  double cost = 0.0;
};

struct EnergyReport {
  double total_energy_kwh = 0.0;
  double total_cost = 0.0;
  double total_cpu_processed = 0.0;  // CPU units x hours actually executed
  std::vector<HourEnergy> per_hour;

  nlohmann::json to_json() const {
    nlohmann::json hours = nlohmann::json::array();
    for (std::size_t h = 0; h < per_hour.size(); ++h)
      hours.push_back({{"hour", h}, {"energy_kwh", per_hour[h].energy_kwh}, {"cost", per_hour[h].cost}});
    return {{"total_energy_kwh", total_energy_kwh},
            {"total_cost", total_cost},
            {"total_cpu_processed", total_cpu_processed},
            {"per_hour", hours}};
  }

  static EnergyReport from_json(const nlohmann::json& j) {
    EnergyReport r;
    r.total_energy_kwh = j.at("total_energy_kwh").get<double>();
    r.total_cost = j.at("total_cost").get<double>();
    r.total_cpu_processed = j.at("total_cpu_processed").get<double>();
    for (const auto& h : j.at("per_hour"))
      r.per_hour.push_back({h.at("energy_kwh").get<double>(), h.at("cost").get<double>()});
    return r;
  }
};

/// Executed CPU demand: sum over scheduled tasks of cpu * duration / 60.
inline double executed_cpu(const AllocationLedger& ledger) {
  detail::KahanSum s;
  for (const auto& r : ledger.records())
    if (r.status == TaskStatus::Scheduled) s.add(r.cpu * r.duration_minutes / 60.0);
  return s.value();
}

/// Integrates power minute by minute. Each minute is priced at the rate implied by the
/// platform's total power in that minute.
inline EnergyReport energy_and_cost(const AllocationLedger& ledger, const PlatformConfig& cfg,
                                    const EnergyPricingConfig& price,
                                    PowerPolicy policy = PowerPolicy::TurnOffIdleHours) {
  EnergyReport rep;
  rep.per_hour.assign(static_cast<std::size_t>(cfg.horizon_hours), {});
  detail::KahanSum energy, cost;
  for (int t = 0; t < ledger.horizon_minutes(); ++t) {
    double watts = 0.0;
    for (const auto& s : cfg.servers) watts += total_power(ledger, cfg, s, t, policy);
    const double kw = watts / 1000.0;
    const double kwh = kw / cfg.minutes_per_hour;
    const double c = unit_price(price, t / cfg.minutes_per_hour, kw) * kwh;
    auto& h = rep.per_hour[static_cast<std::size_t>(t / cfg.minutes_per_hour)];
    h.energy_kwh += kwh;
    h.cost += c;
    energy.add(kwh);
    cost.add(c);
  }
  rep.total_energy_kwh = energy.value();
  rep.total_cost = cost.value();
  rep.total_cpu_processed = executed_cpu(ledger);
  return rep;
}

}  // namespace h2o
