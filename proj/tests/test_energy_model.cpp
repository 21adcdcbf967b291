#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "ecosim/energy_model.hpp"
#include "ecosim/errors.hpp"
#include "oracles.hpp"

using namespace ecosim;
using doctest::Approx;

namespace {

EnergyParams example_params() {
  EnergyParams p;
  p.gamma = 0.8;
  p.alpha = 1.0;
  p.beta = 0.1;
  p.e0_compute = 2.0;
  p.ek_compute = {0.05};
  p.e_uplink_per_bit = 1e-6;
  p.e_downlink_per_bit = 1e-6;
  return p;
}

std::vector<Site> table1() {
  return {{"Kassel", 208, 144.6, 41.7},
          {"Mainz", 1847, 1283.9, 370.8},
          {"Stuttgart", 1290, 896.7, 259.0},
          {"Ulm", 572, 397.6, 114.8}};
}

}  // namespace

TEST_CASE("energy_cl worked example") {
  const std::vector<double> bits{1e6};
  const EnergyBreakdown b = energy_cl(example_params(), 10, 1, bits);
  CHECK(b.compute_kwh == Approx(16.0).epsilon(1e-14));
  CHECK(b.transmission_kwh == Approx(1.0).epsilon(1e-14));
  CHECK(b.total_kwh == Approx(17.0).epsilon(1e-14));
  CHECK(b.total_kwh == b.compute_kwh + b.transmission_kwh);
}

TEST_CASE("energy_cl zero and linearity in dataset size") {
  EnergyParams p = example_params();
  p.alpha = 0.0;
  const std::vector<double> bits{1e6, 2e6};
  CHECK(energy_cl(p, 0, 2, bits).total_kwh == 0.0);

  p.alpha = 1.3;
  const std::vector<double> doubled{2e6, 4e6};
  const auto once = energy_cl(p, 7, 2, bits);
  const auto twice = energy_cl(p, 7, 2, doubled);
  CHECK(twice.transmission_kwh == Approx(2.0 * once.transmission_kwh).epsilon(1e-15));
  CHECK(twice.compute_kwh == once.compute_kwh);
}

TEST_CASE("energy_cl dimension mismatch") {
  const std::vector<double> bits{1.0, 2.0};
  CHECK_THROWS_AS(energy_cl(example_params(), 1, 3, bits), DimensionError);
}

TEST_CASE("energy_fl_compute worked example") {
  // 0.8*20*0.1*2.0 + 20*4*0.05 = 3.2 + 4.0
  CHECK(energy_fl_compute(example_params(), 20, 4) == Approx(7.2).epsilon(1e-14));
  EnergyParams zero = example_params();
  zero.beta = 0.0;
  zero.ek_compute = {0.0};
  CHECK(energy_fl_compute(zero, 20, 4) == 0.0);
  CHECK(energy_fl_compute(example_params(), 14, 4) == Approx(2.0 * energy_fl_compute(example_params(), 7, 4)));
  CHECK(energy_fl_compute(example_params(), 20, 4, 3) ==
        Approx(3.2 + 3 * 4.0).epsilon(1e-14));
}

TEST_CASE("energy_fl_trans worked example") {
  EnergyParams p = example_params();
  p.gamma = 1.0;
  const double bits = 100.0 * 32.0;
  const auto schedule = SelectionSchedule::full(1, 2);
  // 3200 * (2e-6 + 2e-6)
  CHECK(energy_fl_trans(p, bits, 1, 2, schedule) == Approx(0.0128).epsilon(1e-14));
  CHECK(energy_fl_trans(p, 0.0, 1, 2, schedule) == 0.0);
}

TEST_CASE("full participation makes uplink equal downlink") {
  EnergyParams p = example_params();
  p.gamma = 1.0;
  EnergyParams up_only = p, down_only = p;
  up_only.e_downlink_per_bit = 0.0;
  down_only.e_uplink_per_bit = 0.0;
  const auto schedule = SelectionSchedule::full(5, 3);
  CHECK(energy_fl_trans(up_only, 288, 5, 3, schedule) == Approx(energy_fl_trans(down_only, 288, 5, 3, schedule)));
}

TEST_CASE("energy_fl_trans schedule checks") {
  const auto schedule = SelectionSchedule::full(2, 3);
  CHECK_THROWS_AS(energy_fl_trans(example_params(), 10, 3, 3, schedule), DimensionError);
  SelectionSchedule bad{{{0, 5}}};
  CHECK_THROWS_AS(energy_fl_trans(example_params(), 10, 1, 3, bad), DimensionError);
}

TEST_CASE("energy_fl_total composes the two terms") {
  EnergyParams p = example_params();
  const auto schedule = SelectionSchedule::full(20, 4);
  const auto b = energy_fl_total(p, 3200, 20, 4, schedule);
  CHECK(b.compute_kwh == Approx(7.2).epsilon(1e-14));
  CHECK(b.transmission_kwh == Approx(energy_fl_trans(p, 3200, 20, 4, schedule)).epsilon(1e-15));
  CHECK(b.total_kwh == b.compute_kwh + b.transmission_kwh);
  CHECK(b.total_kwh >= b.compute_kwh);
  CHECK(b.total_kwh >= b.transmission_kwh);
  CHECK(energy_fl_total(p, 3200, 0, 4, SelectionSchedule{}).total_kwh == 0.0);
}

TEST_CASE("selected-only variants") {
  EnergyParams p = example_params();
  p.ek_compute = {1.0, 2.0, 4.0};
  SelectionSchedule schedule{{{0}, {1, 2}}};
  // gamma*n*beta*E0 + E * (1 + 2 + 4)
  CHECK(energy_fl_compute_selected(p, schedule, 2) == Approx(0.8 * 2 * 0.1 * 2.0 + 2 * 7.0));
  p.compute_selected_only = true;
  CHECK(energy_fl_total(p, 10, 2, 3, schedule, 2).compute_kwh == Approx(0.32 + 14.0));

  p.downlink_selected_only = true;
  p.gamma = 1.0;
  // three uploads and three broadcasts, 10 bits each at 1e-6
  CHECK(energy_fl_trans(p, 10, 2, 3, schedule) == Approx(6 * 10 * 1e-6));
}

TEST_CASE("equations are linear in each coefficient") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unit(0.5, 3.0);
  for (int i = 0; i < 200; ++i) {
    const int K = 1 + static_cast<int>(rng() % 5);
    const int n = 1 + static_cast<int>(rng() % 10);
    EnergyParams p = oracle::random_energy(rng, K);
    p.gamma = std::min(p.gamma, 0.9);
    p.beta = std::min(p.beta, 0.3);
    std::vector<double> bits(static_cast<std::size_t>(K));
    for (double& b : bits) b = 1e5 * unit(rng);
    const auto schedule = SelectionSchedule::full(n, K);
    const double c = unit(rng);
    const double model_bits = 32.0 * (1 + rng() % 50);

    const auto base_cl = energy_cl(p, n, K, bits);
    EnergyParams q = p;
    q.e0_compute *= c;
    CHECK(energy_cl(q, n, K, bits).compute_kwh == Approx(c * base_cl.compute_kwh).epsilon(1e-12));
    q = p;
    q.alpha *= c;
    CHECK(energy_cl(q, n, K, bits).transmission_kwh == Approx(c * base_cl.transmission_kwh).epsilon(1e-12));

    // beta scales only the server term
    const double server = p.gamma * n * p.beta * p.e0_compute;
    const double local = energy_fl_compute(p, n, K) - server;
    q = p;
    q.beta *= c;
    CHECK(energy_fl_compute(q, n, K) == Approx(c * server + local).epsilon(1e-12));
    q = p;
    for (double& e : q.ek_compute) e *= c;
    CHECK(energy_fl_compute(q, n, K) == Approx(server + c * local).epsilon(1e-12));

    q = p;
    q.e_uplink_per_bit *= c;
    q.e_downlink_per_bit *= c;
    CHECK(energy_fl_trans(q, model_bits, n, K, schedule) ==
          Approx(c * energy_fl_trans(p, model_bits, n, K, schedule)).epsilon(1e-12));
  }
}

TEST_CASE("full schedule matches the closed form") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 100; ++i) {
    const int K = 1 + static_cast<int>(rng() % 6);
    const int n = static_cast<int>(rng() % 8);
    const EnergyParams p = oracle::random_energy(rng, K);
    const double bits = 32.0 * (1 + rng() % 100);
    const double closed = bits * n * K * (p.gamma * p.e_downlink_per_bit + p.e_uplink_per_bit);
    const double got = energy_fl_trans(p, bits, n, K, SelectionSchedule::full(n, K));
    CHECK(oracle::relative_error(got, closed) <= 1e-12);
  }
}

TEST_CASE("calibration on the four measured sites") {
  const auto sites = table1();
  const CalibrationResult r = calibrate(sites);
  CHECK(r.cl_kwh_per_sensor == Approx(0.695).epsilon(1e-3));
  CHECK(r.fl_kwh_per_sensor == Approx(0.2007).epsilon(1e-3));
  CHECK(r.max_relative_error < 0.01);
  REQUIRE(r.per_site_residuals.size() == 4);
  double worst = 0.0;
  for (const auto& s : r.per_site_residuals)
    worst = std::max({worst, std::abs(s.cl_relative_error), std::abs(s.fl_relative_error)});
  CHECK(worst == r.max_relative_error);
  CHECK(r.fl_kwh_per_sensor / r.cl_kwh_per_sensor == Approx(0.289).epsilon(0.005 / 0.289));
}

TEST_CASE("calibration degenerate inputs") {
  const std::vector<Site> one{{"solo", 100, 50.0, 20.0}};
  const CalibrationResult r = calibrate(one);
  CHECK(r.cl_kwh_per_sensor == 0.5);
  CHECK(r.fl_kwh_per_sensor == 0.2);
  CHECK(r.max_relative_error == 0.0);

  const std::vector<Site> line{{"a", 10, 7.0, 2.0}, {"b", 30, 21.0, 6.0}};
  CHECK(calibrate(line).max_relative_error < 1e-15);

  CHECK_THROWS(calibrate(std::vector<Site>{}));
  CHECK_THROWS(calibrate(std::vector<Site>{{"zero", 0, 1.0, 1.0}}));
}

TEST_CASE("predict_site") {
  const auto r = calibrate(table1());
  const auto [cl, fl] = predict_site(r, 208);
  CHECK(std::abs(cl - 144.6) / 144.6 < 0.01);
  CHECK(std::abs(fl - 41.7) / 41.7 < 0.01);
  CHECK(predict_site(r, 0) == std::pair{0.0, 0.0});
  const auto doubled = predict_site(r, 416);
  CHECK(doubled.first == 2.0 * cl);
  CHECK(doubled.second == 2.0 * fl);
}

TEST_CASE("sites CSV parsing") {
  const auto sites = parse_sites_csv("site,sensors,cl_kwh,fl_kwh\nKassel,208,144.6,41.7\r\n");
  REQUIRE(sites.size() == 1);
  CHECK(sites[0].name == "Kassel");
  CHECK(sites[0].sensors == 208);
  CHECK(sites[0].fl_kwh == 41.7);
  CHECK_THROWS_AS(parse_sites_csv(""), ParseError);
  CHECK_THROWS_AS(parse_sites_csv("site,sensors,cl_kwh,fl_kwh\n"), ParseError);
  CHECK_THROWS_AS(parse_sites_csv("site,count,cl,fl\na,1,1,1\n"), ParseError);
  CHECK_THROWS_AS(parse_sites_csv("site,sensors,cl_kwh,fl_kwh\na,x,1,1\n"), ParseError);
  CHECK_THROWS_AS(parse_sites_csv("site,sensors,cl_kwh,fl_kwh\na,1,1\n"), ParseError);
  CHECK_THROWS_AS(parse_sites_csv("site,sensors,cl_kwh,fl_kwh\na,0,1,1\n"), ParseError);
  const auto shipped = read_sites_csv(ECOSIM_SOURCE_DIR "/data/table1.csv");
  CHECK(shipped.size() == 4);
}
