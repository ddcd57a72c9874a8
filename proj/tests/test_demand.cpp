#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "gridlight/demand.h"

using namespace gridlight;

TEST_CASE("binomial arrivals") {
  SUBCASE("b=10 p=2 is 1800 veh/h") {
    DemandConfig c;
    c.b = 10;
    c.p = 2.0;
    CHECK(c.vehicles_per_hour() == doctest::Approx(1800.0));
    Rng rng(3);
    double total = 0.0;
    const int draws = 200000;
    for (int i = 0; i < draws; ++i) total += sample_arrivals(rng, c);
    CHECK(total / draws == doctest::Approx(0.5).epsilon(0.01));
  }
  SUBCASE("p huge means nothing arrives") {
    DemandConfig c;
    c.p = 1e300;
    Rng rng(1);
    for (int i = 0; i < 1000; ++i) CHECK(sample_arrivals(rng, c) == 0);
  }
  SUBCASE("b=60 p=0.1 Monte Carlo mean") {
    DemandConfig c;
    c.b = 60;
    c.p = 0.1;
    Rng rng(11);
    double total = 0.0;
    const int draws = 1000000;
    int most = 0;
    for (int i = 0; i < draws; ++i) {
      const int k = sample_arrivals(rng, c);
      total += k;
      most = std::max(most, k);
    }
    CHECK(std::abs(total / draws - 10.0) < 0.1);
    CHECK(most <= 60);
  }
  SUBCASE("n override changes the trial probability") {
    DemandConfig c;
    c.b = 10;
    c.p = 2.0;
    c.n_override = 20.0;
    CHECK(c.success_probability() == doctest::Approx(1.0 / 40.0));
  }
  CHECK(p_for_demand(2400.0) == doctest::Approx(1.5));
  CHECK_THROWS(p_for_demand(0.0));
}

TEST_CASE("config validation") {
  DemandConfig c;
  c.b = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.b = 10;
  c.episode_length = 3601;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.episode_length = 3600;
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("ring weights") {
  const auto flat = ring_normal_weights(12, 3.0, 1e9);
  for (double w : flat) CHECK(w == doctest::Approx(1.0 / 12.0));
  const auto peaked = ring_normal_weights(12, 0.0, 1.0);
  double total = 0.0;
  for (double w : peaked) total += w;
  CHECK(total == doctest::Approx(1.0));
  // wraps: index 11 is as close to 0 as index 1
  CHECK(peaked[11] == doctest::Approx(peaked[1]));
  CHECK(peaked[0] > peaked[1]);
  CHECK(peaked[6] < peaked[3]);
  // width is floored
  CHECK(ring_normal_weights(12, 0.0, 0.01) == peaked);
}

TEST_CASE("routing table") {
  const auto net = build_grid(3, 3);
  Rng a(5), b(5);
  const auto t1 = build_routing_table(a, net, 4);
  const auto t2 = build_routing_table(b, net, 4);
  REQUIRE(t1.periods.size() == 4);
  for (std::size_t p = 0; p < 4; ++p) {
    CHECK(t1.periods[p].entry_weights.size() == 12);
    CHECK(t1.periods[p].exit_weights.size() == 12);
    CHECK(t1.periods[p].entry_weights == t2.periods[p].entry_weights);
    CHECK(t1.periods[p].exit_weights == t2.periods[p].exit_weights);
    for (std::size_t q = 0; q < p; ++q) {
      CHECK(t1.periods[p].entry_weights != t1.periods[q].entry_weights);
      CHECK(t1.periods[p].exit_weights != t1.periods[q].exit_weights);
    }
  }
  std::ostringstream os;
  write_routing_csv(os, net, t1);
  int lines = 0;
  for (char ch : os.str()) lines += ch == '\n';
  CHECK(lines == 10);
}

TEST_CASE("period index") {
  CHECK(period_of(2700, 3600, 4) == 3);
  CHECK(period_of(0, 3600, 4) == 0);
  CHECK(period_of(899, 3600, 4) == 0);
  CHECK(period_of(900, 3600, 4) == 1);
  CHECK(period_of(3599, 3600, 4) == 3);
  CHECK(period_of(599, 600, 4) == 3);
}

TEST_CASE("spawn") {
  const auto net = build_grid(2, 2);
  RouteTable routes(net);
  Rng rng(9);
  const auto table = build_routing_table(rng, net, 4);
  CHECK(spawn(rng, net, routes, 0, table, 10, 600).empty());

  SUBCASE("one-hot routing gives one route") {
    RoutingTable hot;
    RoutingPeriod p;
    p.entry_weights.assign(8, 0.0);
    p.exit_weights.assign(8, 0.0);
    p.entry_weights[2] = 1.0;
    p.exit_weights[5] = 1.0;
    hot.periods.assign(4, p);
    const auto trips = spawn(rng, net, routes, 50, hot, 100, 600);
    REQUIRE(trips.size() == 50);
    for (const auto& t : trips) {
      CHECK(t.route == trips.front().route);
      CHECK(t.entry_slot == 2);
      CHECK(t.exit_slot == 5);
      CHECK(t.depart == 100);
    }
  }
  SUBCASE("never exits on its own arm") {
    RoutingTable self;
    RoutingPeriod p;
    p.entry_weights.assign(8, 0.0);
    p.exit_weights.assign(8, 0.0);
    p.entry_weights[4] = 1.0;
    p.exit_weights[4] = 1.0;
    self.periods.assign(4, p);
    for (const auto& t : spawn(rng, net, routes, 20, self, 0, 600)) CHECK(t.exit_slot != 4);
    for (const auto& t : spawn(rng, net, routes, 200, table, 300, 600)) CHECK(t.exit_slot != t.entry_slot);
  }
}

TEST_CASE("episode demand is reproducible") {
  const auto net = build_grid(2, 2);
  RouteTable routes(net);
  DemandConfig c;
  c.b = 10;
  c.p = 1.5;
  c.episode_length = 600;
  c.seed = 42;
  const auto d1 = generate_episode_demand(net, routes, c);
  const auto d2 = generate_episode_demand(net, routes, c);
  REQUIRE(d1.trips.size() == d2.trips.size());
  for (std::size_t i = 0; i < d1.trips.size(); ++i) {
    CHECK(d1.trips[i].depart == d2.trips[i].depart);
    CHECK(d1.trips[i].route == d2.trips[i].route);
  }
  for (std::size_t i = 1; i < d1.trips.size(); ++i) CHECK(d1.trips[i - 1].depart <= d1.trips[i].depart);
  // about 600/1.5 = 400 trips
  CHECK(d1.trips.size() > 320);
  CHECK(d1.trips.size() < 480);
  c.seed = 43;
  CHECK(generate_episode_demand(net, routes, c).trips.size() != d1.trips.size());
}
