#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <vector>

#include "gridlight/network.h"
#include "gridlight/simulation.h"

namespace gridlight {

using Rng = std::mt19937_64;

struct DemandConfig {
  int b = 10;          // maximum simultaneous arrivals per second
  double p = 2.0;      // 1/p = expected arrivals per second
  std::uint64_t seed = 0;
  int episode_length = 3600;
  int periods = 4;
  // Binomial trial-probability denominator is n·p; n defaults to b so the
  // per-second mean is 1/p. Set > 0 to override n.
  double n_override = 0.0;

  void validate() const;
  double success_probability() const;
  double vehicles_per_hour() const { return 3600.0 / p; }
};

// Demand in veh/h to the per-second rate parameter p.
double p_for_demand(double vehicles_per_hour);

struct RoutingPeriod {
  std::vector<double> entry_weights;  // over net.entry_edges (ring order)
  std::vector<double> exit_weights;   // over net.exit_edges (ring order)
};

struct RoutingTable {
  std::vector<RoutingPeriod> periods;
};

inline constexpr double kMinRoutingWidth = 1.0;

int sample_arrivals(Rng& rng, const DemandConfig& config);

// Wrapped normal density over ring indices, normalized. `width` is floored at kMinRoutingWidth.
std::vector<double> ring_normal_weights(std::size_t n, double center, double width);

RoutingTable build_routing_table(Rng& rng, const RoadNetwork& net, int periods);

int period_of(int t, int episode_length, int periods);

struct Trip {
  int depart = 0;
  int entry_slot = 0;
  int exit_slot = 0;
  Route route;
};

// Draws `count` trips departing at time t. When an exit lands on the entry's
// own arm the exit is redrawn.
std::vector<Trip> spawn(Rng& rng, const RoadNetwork& net, const RouteTable& routes, int count,
                        const RoutingTable& table, int t, int episode_length);

// Whole-episode demand, reproducible from config.seed.
struct EpisodeDemand {
  RoutingTable table;
  std::vector<Trip> trips;  // sorted by departure
};

EpisodeDemand generate_episode_demand(const RoadNetwork& net, const RouteTable& routes, const DemandConfig& config);

// "period,edge_0,...,edge_k" rows with percentages, entry block then exit block.
void write_routing_csv(std::ostream& os, const RoadNetwork& net, const RoutingTable& table);

}  // namespace gridlight
