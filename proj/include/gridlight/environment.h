#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "gridlight/demand.h"
#include "gridlight/network.h"
#include "gridlight/simulation.h"
#include "gridlight/state_reward.h"

namespace gridlight {

struct EnvConfig {
  int rows = 2;
  int cols = 2;
  double arm_length = 500.0;
  double speed_limit = 13.89;
  int episode_length = 600;
  int b = 10;
  double p = 1.5;
  int periods = 4;
  double n_override = 0.0;
  SimConfig sim;

  DemandConfig demand(std::uint64_t seed) const;
};

// Shared immutable topology for many environments.
struct World {
  std::shared_ptr<const RoadNetwork> net;
  std::shared_ptr<const RouteTable> routes;

  static World build(const EnvConfig& config);
};

struct EnvStep {
  StepEvents events;
  SensorFrame frame;
  bool done = false;
};

// One simulated episode driven by pre-generated demand.
class TrafficEnv {
 public:
  TrafficEnv(World world, EnvConfig config, std::uint64_t seed);

  // Starts a new episode with demand drawn from `seed`.
  void reset(std::uint64_t seed);
  EnvStep step(std::span<const Command> commands);

  const SensorFrame& frame() const { return frame_; }
  StateTensor observe() const { return encode_state(frame_, *world_.net); }
  bool done() const { return sim_->time() >= config_.episode_length; }

  const Simulation& sim() const { return *sim_; }
  Simulation& sim() { return *sim_; }
  const RoadNetwork& network() const { return *world_.net; }
  const EnvConfig& config() const { return config_; }
  const EpisodeDemand& demand() const { return demand_; }
  std::uint64_t seed() const { return seed_; }
  int tls_count() const { return world_.net->node_count(); }

  EpisodeMetrics metrics() const;

 private:
  World world_;
  EnvConfig config_;
  std::uint64_t seed_ = 0;
  EpisodeDemand demand_;
  std::size_t next_trip_ = 0;
  std::unique_ptr<Simulation> sim_;
  SensorFrame frame_;
  std::vector<ArrivalRecord> records_;
};

class Controller {
 public:
  virtual ~Controller() = default;
  virtual void reset(TrafficEnv& env) { (void)env; }
  virtual std::vector<Command> act(const TrafficEnv& env) = 0;
};

// Runs the env to its episode end. The env must be freshly reset.
EpisodeMetrics run_episode(TrafficEnv& env, Controller& controller);

}  // namespace gridlight
