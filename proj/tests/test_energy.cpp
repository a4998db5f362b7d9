#include <gtest/gtest.h>

#include <random>

#include "h2o.hpp"
#include "oracles.hpp"

using namespace h2o;

namespace {

const PowerParams kParams{100.0, 100.0, 200.0, 0.7};

Task task(JobId job, double cpu, int dur) {
  Task t;
  t.job_id = job;
  t.task_id = 1;
  t.vm_requests = {{0, cpu, cpu}};
  t.duration_minutes = dur;
  t.deadline_minute = 10000;
  return t;
}

void put(AllocationLedger& l, const PlatformConfig& p, JobId job, ServerId s, double cpu, int start, int dur) {
  l.allocate(p, task(job, cpu, dur), {p.server(s).cluster_id, s, start / 60, start, start + dur - 1});
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace

TEST(DynamicPower, Examples) {
  EXPECT_NEAR(dynamic_power(0.5, kParams), 50.0, 1e-9);
  EXPECT_NEAR(dynamic_power(0.9, kParams), 78.0, 1e-9);
  EXPECT_EQ(dynamic_power(0.0, kParams), 0.0);
  EXPECT_EQ(dynamic_power(0.0, {1, 7, 3, 0.2}), 0.0);
}

TEST(DynamicPower, ContinuousAndNonDecreasing) {
  const double left = dynamic_power(std::nextafter(0.7, 0.0), kParams);
  EXPECT_NEAR(left, 70.0, 1e-9);
  EXPECT_NEAR(dynamic_power(0.7, kParams), 70.0, 1e-9);
  double prev = -1.0;
  for (int k = 0; k <= 1000; ++k) {
    const double v = dynamic_power(k / 1000.0, kParams);
    EXPECT_GE(v, prev);
    prev = v;
  }
}

TEST(UnitPrice, Examples) {
  auto p = EnergyPricingConfig::defaults();
  p.rtp_slope = 0.0;
  EXPECT_NEAR(unit_price(p, 3, 50.0), 0.10, 1e-12);
  auto q = EnergyPricingConfig::defaults();
  q.tou_rates[18] = 0.20;
  EXPECT_NEAR(unit_price(q, 18, 100.0), 0.30, 1e-12);
  EXPECT_THROW(unit_price(q, 18, -1.0), std::invalid_argument);
}

TEST(UnitPrice, DefaultTariff) {
  auto p = EnergyPricingConfig::defaults();
  EXPECT_EQ(p.tou_rates[7], 0.10);
  EXPECT_EQ(p.tou_rates[8], 0.20);
  EXPECT_EQ(p.tou_rates[17], 0.40);
  EXPECT_EQ(p.tou_rates[21], 0.40);
  EXPECT_EQ(p.tou_rates[22], 0.20);
  EXPECT_EQ(p.rtp_slope, 0.001);
}

TEST(TotalPower, TurnOffRule) {
  auto p = make_uniform_platform(2, 1, 1.0, 1.0, kParams);
  AllocationLedger l(p);
  put(l, p, 1, 0, 0.5, 10, 5);
  EXPECT_EQ(total_power(l, p, p.server(1), 12), 0.0);
  EXPECT_EQ(total_power(l, p, p.server(0), 30), 100.0);
  EXPECT_NEAR(total_power(l, p, p.server(0), 12), 150.0, 1e-9);
  EXPECT_EQ(total_power(l, p, p.server(0), 60), 0.0);
  EXPECT_EQ(total_power(l, p, p.server(1), 12, PowerPolicy::AlwaysOn), 100.0);
}

TEST(EnergyAndCost, EmptyLedger) {
  auto p = make_uniform_platform(3, 1);
  AllocationLedger l(p);
  auto r = energy_and_cost(l, p, EnergyPricingConfig::defaults());
  EXPECT_EQ(r.total_energy_kwh, 0.0);
  EXPECT_EQ(r.total_cost, 0.0);
  EXPECT_EQ(r.total_cpu_processed, 0.0);
  EXPECT_EQ(r.per_hour.size(), 24u);
}

TEST(EnergyAndCost, ConstantPowerClosedForm) {
  auto p = make_uniform_platform(1, 1, 1.0, 1.0, {250.0, 100.0, 200.0, 0.7});
  p.horizon_hours = 1;
  AllocationLedger l(p);
  put(l, p, 1, 0, 0.0, 0, 60);
  auto r = energy_and_cost(l, p, EnergyPricingConfig::flat(0.15));
  EXPECT_NEAR(r.total_energy_kwh, 0.25, 1e-12);
  EXPECT_NEAR(r.total_cost, 0.15 * 0.25, 1e-12);
}

TEST(EnergyAndCost, MatchesBruteForceOracle) {
  auto p = make_uniform_platform(2, 1, 1.0, 1.0, kParams);
  p.servers[1].power = {80.0, 120.0, 300.0, 0.6};
  p.horizon_hours = 2;
  const auto price = EnergyPricingConfig::defaults();
  AllocationLedger l(p);
  put(l, p, 1, 0, 0.4, 0, 30);
  put(l, p, 2, 0, 0.5, 20, 25);
  put(l, p, 3, 1, 0.9, 50, 20);
  put(l, p, 4, 1, 0.1, 65, 40);
  put(l, p, 5, 0, 0.3, 100, 15);
  for (bool on : {false, true}) {
    const auto r = energy_and_cost(l, p, price, on ? PowerPolicy::AlwaysOn : PowerPolicy::TurnOffIdleHours);
    const auto o = oracle::brute_energy(p, oracle::placements_of(l), price, on);
    EXPECT_LT(rel(r.total_energy_kwh, o.energy_kwh), 1e-9);
    EXPECT_LT(rel(r.total_cost, o.cost), 1e-9);
    double e = 0.0, c = 0.0;
    for (const auto& h : r.per_hour) e += h.energy_kwh, c += h.cost;
    EXPECT_LT(rel(e, r.total_energy_kwh), 1e-9);
    EXPECT_LT(rel(c, r.total_cost), 1e-9);
  }
  EXPECT_NEAR(energy_and_cost(l, p, price).total_cpu_processed,
              (0.4 * 30 + 0.5 * 25 + 0.9 * 20 + 0.1 * 40 + 0.3 * 15) / 60.0, 1e-12);
}

TEST(EnergyAndCost, RandomInstancesMatchOracle) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> dem(0.05, 0.5);
  std::uniform_int_distribution<int> start(0, 170), dur(1, 40), srv(0, 2);
  for (int trial = 0; trial < 20; ++trial) {
    auto p = make_uniform_platform(3, 1, 1.0, 1.0, kParams);
    p.horizon_hours = 4;
    AllocationLedger l(p);
    for (int k = 0; k < 12; ++k) {
      const int s = srv(rng), st = start(rng), d = dur(rng);
      const auto t = task(k + 1, dem(rng), d);
      if (can_host(l, p.server(s), t, st, st + d - 1)) put(l, p, k + 1, s, t.total_cpu(), st, d);
    }
    const auto price = EnergyPricingConfig::defaults();
    const auto r = energy_and_cost(l, p, price);
    const auto o = oracle::brute_energy(p, oracle::placements_of(l), price);
    EXPECT_LT(rel(r.total_energy_kwh, o.energy_kwh), 1e-9);
    EXPECT_LT(rel(r.total_cost, o.cost), 1e-9);
  }
}

TEST(EnergyAndCost, AdditiveOverServers) {
  auto p = make_uniform_platform(2, 1, 1.0, 1.0, kParams);
  const auto price = EnergyPricingConfig::flat(0.2);
  AllocationLedger both(p), only0(p), only1(p);
  put(both, p, 1, 0, 0.4, 100, 50);
  put(both, p, 2, 1, 0.8, 600, 90);
  put(only0, p, 1, 0, 0.4, 100, 50);
  put(only1, p, 2, 1, 0.8, 600, 90);
  const auto a = energy_and_cost(both, p, price), b = energy_and_cost(only0, p, price),
             c = energy_and_cost(only1, p, price);
  EXPECT_LT(rel(a.total_energy_kwh, b.total_energy_kwh + c.total_energy_kwh), 1e-9);
  EXPECT_LT(rel(a.total_cost, b.total_cost + c.total_cost), 1e-9);
}

TEST(EnergyAndCost, FlatRateWithoutRtpIsRateTimesEnergy) {
  auto p = make_uniform_platform(2, 1, 1.0, 1.0, kParams);
  AllocationLedger l(p);
  put(l, p, 1, 0, 0.9, 300, 50);
  put(l, p, 2, 1, 0.3, 900, 120);
  const auto r = energy_and_cost(l, p, EnergyPricingConfig::flat(0.37));
  EXPECT_LT(rel(r.total_cost, 0.37 * r.total_energy_kwh), 1e-12);
}

TEST(EnergyAndCost, ShiftToCheaperHourNeverIncreasesCost) {
  auto p = make_uniform_platform(1, 1, 1.0, 1.0, kParams);
  auto price = EnergyPricingConfig::defaults();
  price.rtp_slope = 0.0;
  AllocationLedger peak(p), cheap(p);
  put(peak, p, 1, 0, 0.6, 18 * 60 + 5, 30);
  put(cheap, p, 1, 0, 0.6, 3 * 60 + 5, 30);
  EXPECT_LE(energy_and_cost(cheap, p, price).total_cost, energy_and_cost(peak, p, price).total_cost);
}

TEST(EnergyReport, JsonFieldNames) {
  auto p = make_uniform_platform(1, 1);
  AllocationLedger l(p);
  put(l, p, 1, 0, 0.5, 0, 10);
  const auto r = energy_and_cost(l, p, EnergyPricingConfig::defaults());
  const auto j = r.to_json();
  for (auto k : {"total_energy_kwh", "total_cost", "total_cpu_processed", "per_hour"}) EXPECT_TRUE(j.contains(k)) << k;
  const auto back = EnergyReport::from_json(j);
  EXPECT_EQ(back.total_cost, r.total_cost);
  EXPECT_EQ(back.per_hour.size(), 24u);
}
