#include "gridlight/environment.h"

#include <stdexcept>

namespace gridlight {

DemandConfig EnvConfig::demand(std::uint64_t seed) const {
  DemandConfig d;
  d.b = b;
  d.p = p;
  d.seed = seed;
  d.episode_length = episode_length;
  d.periods = periods;
  d.n_override = n_override;
  d.validate();
  return d;
}

World World::build(const EnvConfig& config) {
  World w;
  auto net = std::make_shared<RoadNetwork>(build_grid(config.rows, config.cols, config.arm_length, config.speed_limit));
  w.routes = std::make_shared<const RouteTable>(*net);
  w.net = std::move(net);
  return w;
}

TrafficEnv::TrafficEnv(World world, EnvConfig config, std::uint64_t seed) : world_(std::move(world)), config_(std::move(config)) {
  if (!world_.net || !world_.routes) throw std::invalid_argument("TrafficEnv: world is not built");
  reset(seed);
}

void TrafficEnv::reset(std::uint64_t seed) {
  seed_ = seed;
  demand_ = generate_episode_demand(*world_.net, *world_.routes, config_.demand(seed));
  next_trip_ = 0;
  sim_ = std::make_unique<Simulation>(world_.net, config_.sim);
  frame_ = sim_->read_sensors();
  records_.clear();
}

EnvStep TrafficEnv::step(std::span<const Command> commands) {
  if (done()) throw std::logic_error("TrafficEnv::step after episode end");
  const int t = sim_->time();
  while (next_trip_ < demand_.trips.size() && demand_.trips[next_trip_].depart <= t) {
    sim_->enqueue(demand_.trips[next_trip_].route);
    ++next_trip_;
  }
  EnvStep out;
  out.events = sim_->step(commands);
  records_.insert(records_.end(), out.events.arrived_vehicle_records.begin(), out.events.arrived_vehicle_records.end());
  frame_ = sim_->read_sensors();
  out.frame = frame_;
  out.done = done();
  return out;
}

EpisodeMetrics TrafficEnv::metrics() const { return finalize_metrics(records_, sim_->log()); }

EpisodeMetrics run_episode(TrafficEnv& env, Controller& controller) {
  controller.reset(env);
  while (!env.done()) {
    const auto commands = controller.act(env);
    env.step(commands);
  }
  return env.metrics();
}

}  // namespace gridlight
