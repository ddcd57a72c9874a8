#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <vector>

#include "gridlight/demand.h"
#include "gridlight/environment.h"

namespace gridlight {

// Flow in veh/s per (tls, arm, lane), indexed like SensorFrame.
struct MovementFlows {
  int n_tls = 0;
  std::vector<double> flow;

  double at(int tls, Dir arm, int lane) const { return flow.at(SensorFrame::index(tls, arm, lane)); }
};

// Counts every trip's movement at each intersection it crosses, divided by the horizon.
MovementFlows movement_flows(const RoadNetwork& net, std::span<const Trip> trips, int horizon_seconds);

struct WebsterConfig {
  double saturation_flow = 0.5;
  double lost_time = 12.0;  // 4 phases × 3 s yellow
  double max_flow_ratio = 0.95;
  double min_cycle = 20.0;
  double max_cycle = 120.0;
  int min_green = 5;
  int yellow = 3;
  bool common_cycle = true;  // one cycle for the whole grid so offsets stay meaningful
};

// (1.5·L + 5) / (1 − Y), Y capped at max_flow_ratio, result clamped to [min_cycle, max_cycle].
double webster_cycle(double lost_time, double flow_ratio_sum, const WebsterConfig& config = {});

struct TlsPlan {
  int cycle = 0;
  std::array<int, 4> greens{};
  int offset = 0;
};

struct FixedPlan {
  int yellow = 3;
  std::vector<TlsPlan> tls;
};

// Critical flow ratio of each phase: the busiest lane it serves.
std::array<double, 4> phase_flow_ratios(const MovementFlows& flows, int tls, double saturation_flow);

// Integer greens ≥ min_green summing to total, proportional to ratios (equal when all are zero).
std::array<int, 4> split_greens(const std::array<double, 4>& ratios, int total, int min_green);

FixedPlan webster_plan(const MovementFlows& flows, const RoadNetwork& net, const WebsterConfig& config = {});

// Switch exactly when t (shifted by the offset) reaches the end of a green window.
std::vector<Command> fixed_time_commands(const FixedPlan& plan, int t);

// Light state a plan prescribes at time t.
LightState plan_light_state(const FixedPlan& plan, int tls, int t);

void write_plan(std::ostream& os, const FixedPlan& plan);
FixedPlan read_plan(std::istream& is);

// Webster timing from the env's own generated trips, applied at reset.
class FixedTimeController : public Controller {
 public:
  explicit FixedTimeController(WebsterConfig config = {}) : config_(config) {}
  void reset(TrafficEnv& env) override;
  std::vector<Command> act(const TrafficEnv& env) override;
  const FixedPlan& plan() const { return plan_; }

 private:
  WebsterConfig config_;
  FixedPlan plan_;
};

struct ActuatedConfig {
  int min_green = 5;
  int max_green = 45;
  int gap = 3;
};

struct ActuatedState {
  std::vector<int> phase;
  std::vector<int> last_detection;  // green second of the latest detection in the current phase, -1 if none
};

// A lane the phase serves has a vehicle on its stop-line presence detector.
bool phase_detects(const SensorFrame& frame, int tls, int phase);

// Decides per intersection from the green time already served and the
// detectors of the lanes the current phase serves.
std::vector<Command> actuated_commands(ActuatedState& state, std::span<const LightState> lights, const SensorFrame& frame,
                                       const ActuatedConfig& config = {});

class ActuatedController : public Controller {
 public:
  explicit ActuatedController(ActuatedConfig config = {}) : config_(config) {}
  void reset(TrafficEnv& env) override;
  std::vector<Command> act(const TrafficEnv& env) override;

 private:
  ActuatedConfig config_;
  ActuatedState state_;
};

// Maintain or Switch with equal probability per intersection per second.
class RandomController : public Controller {
 public:
  explicit RandomController(std::uint64_t seed) : seed_(seed) {}
  void reset(TrafficEnv& env) override;
  std::vector<Command> act(const TrafficEnv& env) override;

 private:
  std::uint64_t seed_;
  std::mt19937_64 rng_;
};

}  // namespace gridlight
