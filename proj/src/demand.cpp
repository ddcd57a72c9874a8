#include "gridlight/demand.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace gridlight {

void DemandConfig::validate() const {
  if (b < 1) throw std::invalid_argument("demand: b must be >= 1");
  if (!(p > 0.0)) throw std::invalid_argument("demand: p must be > 0");
  if (periods < 1) throw std::invalid_argument("demand: periods must be >= 1");
  if (episode_length < 1 || episode_length % periods != 0) {
    throw std::invalid_argument("demand: episode_length must be a positive multiple of periods");
  }
}

double DemandConfig::success_probability() const {
  const double n = n_override > 0.0 ? n_override : static_cast<double>(b);
  return std::clamp(1.0 / (n * p), 0.0, 1.0);
}

double p_for_demand(double vehicles_per_hour) {
  if (!(vehicles_per_hour > 0.0)) throw std::invalid_argument("demand must be > 0 veh/h");
  return 3600.0 / vehicles_per_hour;
}

int sample_arrivals(Rng& rng, const DemandConfig& config) {
  const double q = config.success_probability();
  if (q <= 0.0) return 0;
  std::binomial_distribution<int> dist(config.b, q);
  return dist(rng);
}

std::vector<double> ring_normal_weights(std::size_t n, double center, double width) {
  if (n == 0) return {};
  width = std::max(width, kMinRoutingWidth);
  std::vector<double> w(n);
  const double ring = static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    double d = std::fmod(std::abs(static_cast<double>(i) - center), ring);
    d = std::min(d, ring - d);
    w[i] = std::exp(-0.5 * (d / width) * (d / width));
  }
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& x : w) x /= total;
  return w;
}

RoutingTable build_routing_table(Rng& rng, const RoadNetwork& net, int periods) {
  if (periods < 1) throw std::invalid_argument("build_routing_table: periods must be >= 1");
  const std::size_t n_in = net.entry_edges.size();
  const std::size_t n_out = net.exit_edges.size();
  auto draw = [&](std::size_t n) {
    std::uniform_real_distribution<double> center(0.0, static_cast<double>(n));
    std::uniform_real_distribution<double> width(kMinRoutingWidth, std::max(kMinRoutingWidth, static_cast<double>(n) / 2.0));
    const double c = center(rng);
    const double w = width(rng);
    return ring_normal_weights(n, c, w);
  };
  RoutingTable table;
  table.periods.resize(static_cast<std::size_t>(periods));
  for (auto& period : table.periods) {
    period.entry_weights = draw(n_in);
    period.exit_weights = draw(n_out);
  }
  return table;
}

int period_of(int t, int episode_length, int periods) {
  const int span = episode_length / periods;
  return std::clamp(t / span, 0, periods - 1);
}

namespace {

int draw_index(Rng& rng, const std::vector<double>& weights) {
  std::discrete_distribution<int> dist(weights.begin(), weights.end());
  return dist(rng);
}

}  // namespace

std::vector<Trip> spawn(Rng& rng, const RoadNetwork& net, const RouteTable& routes, int count,
                        const RoutingTable& table, int t, int episode_length) {
  std::vector<Trip> trips;
  if (count <= 0) return trips;
  if (t < 0 || t >= episode_length) throw std::invalid_argument("spawn: t outside the episode");
  const int periods = static_cast<int>(table.periods.size());
  const RoutingPeriod& period = table.periods.at(static_cast<std::size_t>(period_of(t, episode_length, periods)));
  const int n_out = static_cast<int>(net.exit_edges.size());
  trips.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Trip trip;
    trip.depart = t;
    trip.entry_slot = draw_index(rng, period.entry_weights);
    const int arm = net.edge(net.entry_edges[static_cast<std::size_t>(trip.entry_slot)]).ring_index;
    trip.exit_slot = draw_index(rng, period.exit_weights);
    for (int attempt = 0; attempt < 64 && net.edge(net.exit_edges[static_cast<std::size_t>(trip.exit_slot)]).ring_index == arm;
         ++attempt) {
      trip.exit_slot = draw_index(rng, period.exit_weights);
    }
    // All exit mass on the entry arm: fall through to the next arm on the ring.
    if (net.edge(net.exit_edges[static_cast<std::size_t>(trip.exit_slot)]).ring_index == arm) {
      trip.exit_slot = (trip.exit_slot + 1) % n_out;
    }
    trip.route = routes.route(trip.entry_slot, trip.exit_slot);
    trips.push_back(std::move(trip));
  }
  return trips;
}

EpisodeDemand generate_episode_demand(const RoadNetwork& net, const RouteTable& routes, const DemandConfig& config) {
  config.validate();
  Rng rng(config.seed);
  EpisodeDemand demand;
  demand.table = build_routing_table(rng, net, config.periods);
  for (int t = 0; t < config.episode_length; ++t) {
    auto batch = spawn(rng, net, routes, sample_arrivals(rng, config), demand.table, t, config.episode_length);
    for (auto& trip : batch) demand.trips.push_back(std::move(trip));
  }
  return demand;
}

void write_routing_csv(std::ostream& os, const RoadNetwork& net, const RoutingTable& table) {
  os << "kind,period";
  for (int e : net.entry_edges) os << ',' << edge_name(net, e);
  os << '\n';
  auto row = [&](const char* kind, std::size_t p, const std::vector<double>& w) {
    os << kind << ',' << p;
    for (double x : w) os << ',' << std::fixed << std::setprecision(2) << 100.0 * x;
    os << '\n';
    os.unsetf(std::ios::floatfield);
  };
  for (std::size_t p = 0; p < table.periods.size(); ++p) row("entry", p, table.periods[p].entry_weights);
  os << "kind,period";
  for (int e : net.exit_edges) os << ',' << edge_name(net, e);
  os << '\n';
  for (std::size_t p = 0; p < table.periods.size(); ++p) row("exit", p, table.periods[p].exit_weights);
}

}  // namespace gridlight
