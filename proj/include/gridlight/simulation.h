#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "gridlight/network.h"

namespace gridlight {

struct SimConfig {
  double halt_threshold = 0.1;   // m/s
  int teleport_threshold = 300;  // consecutive halted seconds
  double saturation_flow = 0.5;  // veh per green second per lane
  double vehicle_space = 7.5;    // length + gap, m
  double detection_range = 150.0;
  double presence_range = 30.0;  // stop-line detector used by actuated control
  int min_green = 5;
  int yellow_time = 3;
};

struct Vehicle {
  std::int64_t id = -1;
  Route route;
  std::size_t route_index = 0;
  double position = 0.0;  // m from the upstream end of the current edge
  double speed = 0.0;     // distance covered during the last step
  int entered_at = 0;
  double waiting_accum = 0.0;
  int halt_streak = 0;
  double ideal_time = 0.0;
  std::int64_t moved_at = -1;

  int edge() const { return (*route)[route_index]; }
};

enum class Command : std::uint8_t { Maintain = 0, Switch = 1 };

// Fixed cycle 0 → 1 → 2 → 3 → 0:
//   0 through from N and S, 1 left from N and S,
//   2 through from W and E, 3 left from W and E.
// Right turns are never restricted by the signal.
inline constexpr int kPhaseCount = 4;
bool phase_permits(int phase, Dir arm, Movement m);

struct LightState {
  int tls_id = 0;
  int phase_index = 0;
  bool in_yellow = false;
  int phase_elapsed = 0;   // green seconds served in the current phase
  int yellow_elapsed = 0;
};

struct ArrivalRecord {
  int entered_at = 0;
  int arrival_time = 0;
  double waiting_accum = 0.0;
  double ideal_time = 0.0;
};

struct StepEvents {
  int inserted = 0;
  int arrived = 0;
  int teleported = 0;
  std::vector<ArrivalRecord> arrived_vehicle_records;
};

struct SensorReading {
  int halting_count = 0;
  int vehicle_count = 0;
  int presence_count = 0;  // vehicles within presence_range of the stop line
  double mean_speed = 0.0;
};

// Eight detectors per intersection: arm (N, E, S, W) × lane (through, left).
struct SensorFrame {
  int n_tls = 0;
  std::vector<SensorReading> readings;

  static std::size_t index(int tls, Dir arm, int lane) {
    return (static_cast<std::size_t>(tls) * 4 + static_cast<std::size_t>(arm)) * 2 + static_cast<std::size_t>(lane);
  }
  const SensorReading& at(int tls, Dir arm, int lane) const { return readings.at(index(tls, arm, lane)); }
  SensorReading& at(int tls, Dir arm, int lane) { return readings.at(index(tls, arm, lane)); }
};

struct LogRow {
  int t = 0;
  int inserted = 0;
  int arrived = 0;
  int teleported = 0;
  int on_network = 0;
};

class Simulation {
 public:
  explicit Simulation(RoadNetwork net, SimConfig config = {});
  Simulation(std::shared_ptr<const RoadNetwork> net, SimConfig config = {});

  // Queues a vehicle outside its entry edge; counted as inserted once it fits.
  void enqueue(Route route);

  // Puts a vehicle directly on the network (counted as inserted immediately).
  // Used for scenario setup; the vehicle keeps its position and speed.
  void place_vehicle(Vehicle v, int lane);

  // Advances the clock by exactly one second.
  StepEvents step(std::span<const Command> commands);

  SensorFrame read_sensors() const;

  const RoadNetwork& network() const { return *net_; }
  const SimConfig& config() const { return config_; }
  int time() const { return time_; }
  int tls_count() const { return net_->node_count(); }

  std::size_t on_network() const { return on_network_; }
  std::size_t pending() const;
  std::int64_t total_inserted() const { return total_inserted_; }
  std::int64_t total_arrived() const { return total_arrived_; }
  std::int64_t total_teleported() const { return total_teleported_; }

  const LightState& light(int tls) const { return lights_.at(static_cast<std::size_t>(tls)); }
  void set_light(int tls, LightState state);

  const std::deque<Vehicle>& lane_vehicles(int edge, int lane) const;
  const std::vector<LogRow>& log() const { return log_; }

 private:
  struct Lane {
    std::deque<Vehicle> vehicles;  // front is nearest the downstream end
    double credit = 0.0;
  };

  Lane& lane_ref(int edge, int lane) { return lanes_[static_cast<std::size_t>(edge) * 2 + static_cast<std::size_t>(lane)]; }
  bool permitted(const Edge& e, Movement m) const;
  bool try_transfer(Vehicle& v, double remaining, std::int64_t stamp);
  void move_lane(int edge, int lane, std::int64_t stamp, StepEvents& events);
  void account_halting(StepEvents& events);
  void insert_pending(StepEvents& events);
  Vehicle fresh_vehicle(Route route);

  std::shared_ptr<const RoadNetwork> net_;
  SimConfig config_;
  std::vector<Lane> lanes_;
  std::vector<std::deque<Vehicle>> pending_;  // per entry slot
  std::vector<int> entry_slot_;               // edge id -> entry slot or -1
  std::vector<LightState> lights_;
  std::vector<LogRow> log_;
  int time_ = 0;
  std::int64_t next_id_ = 0;
  std::size_t on_network_ = 0;
  std::int64_t total_inserted_ = 0;
  std::int64_t total_arrived_ = 0;
  std::int64_t total_teleported_ = 0;
};

struct EpisodeMetrics {
  std::int64_t arrived = 0;
  std::int64_t inserted = 0;
  std::int64_t teleported = 0;
  std::optional<double> mean_waiting_time;  // unset when nothing arrived
  std::optional<double> mean_time_loss;
  std::vector<LogRow> series;
  int peak_accumulation = 0;
};

EpisodeMetrics finalize_metrics(std::span<const ArrivalRecord> records, std::span<const LogRow> log);

// CSV with header "t,inserted,arrived,teleported,on_network".
void write_event_log_csv(std::ostream& os, std::span<const LogRow> log);
std::vector<LogRow> read_event_log_csv(std::istream& is);

}  // namespace gridlight
