#pragma once

#include <span>
#include <vector>

#include "gridlight/network.h"
#include "gridlight/simulation.h"

namespace gridlight {

inline constexpr double kHaltingNormalizer = 20.0;  // detection-zone capacity: 150 m / 7.5 m

// Observation of shape ⟨2, 4·rows, 4·cols⟩, row-major.
// Channel 0 holds halting counts / 20, channel 1 mean speeds / speed limit.
struct StateTensor {
  int channels = 2;
  int height = 0;
  int width = 0;
  std::vector<double> values;

  double at(int c, int y, int x) const {
    return values[(static_cast<std::size_t>(c) * static_cast<std::size_t>(height) + static_cast<std::size_t>(y)) *
                      static_cast<std::size_t>(width) +
                  static_cast<std::size_t>(x)];
  }
};

struct CellPos {
  int row;
  int col;
};

// Cell inside an intersection's 4×4 block for a detector:
//   N through (0,1)  N left (0,2)
//   E through (1,3)  E left (2,3)
//   S through (3,2)  S left (3,1)
//   W through (2,0)  W left (1,0)
// Each arm's through cell sits on the driver's right of its left-turn cell.
// Every other cell of the block is zero padding.
CellPos sensor_cell(Dir arm, int lane);

StateTensor encode_state(const SensorFrame& frame, const RoadNetwork& net);

// Net outflow of the step: arrivals (teleports excluded) minus insertions.
double global_reward(const StepEvents& events);

// −| max halting over the W/E approach lanes − max halting over the N/S approach lanes |.
double local_reward(const SensorFrame& frame, int tls_id);
std::vector<double> local_rewards(const SensorFrame& frame);

double hybrid_reward(double global, std::span<const double> locals, double beta);

// Linear 0 → 1 over training progress; out-of-range input is clamped.
double beta_schedule(double progress);

struct RewardParts {
  double global = 0.0;
  std::vector<double> locals;
  double hybrid = 0.0;
  double beta = 0.0;
};

RewardParts compute_rewards(const StepEvents& events, const SensorFrame& frame, double beta);

}  // namespace gridlight
