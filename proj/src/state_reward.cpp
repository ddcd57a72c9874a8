#include "gridlight/state_reward.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace gridlight {

CellPos sensor_cell(Dir arm, int lane) {
  const bool through = lane == kThroughLane;
  switch (arm) {
    case Dir::North: return through ? CellPos{0, 1} : CellPos{0, 2};
    case Dir::East: return through ? CellPos{1, 3} : CellPos{2, 3};
    case Dir::South: return through ? CellPos{3, 2} : CellPos{3, 1};
    case Dir::West: return through ? CellPos{2, 0} : CellPos{1, 0};
  }
  return {0, 0};
}

StateTensor encode_state(const SensorFrame& frame, const RoadNetwork& net) {
  if (frame.n_tls != net.node_count() || frame.readings.size() != static_cast<std::size_t>(frame.n_tls) * 8) {
    throw std::invalid_argument("encode_state: frame does not cover every intersection");
  }
  StateTensor s;
  s.height = 4 * net.rows;
  s.width = 4 * net.cols;
  s.values.assign(static_cast<std::size_t>(2 * s.height * s.width), 0.0);
  const std::size_t plane = static_cast<std::size_t>(s.height * s.width);
  for (int n = 0; n < frame.n_tls; ++n) {
    const int r0 = 4 * net.node_row(n);
    const int c0 = 4 * net.node_col(n);
    for (Dir arm : kAllDirs) {
      for (int lane = 0; lane < 2; ++lane) {
        const SensorReading& r = frame.at(n, arm, lane);
        const CellPos cell = sensor_cell(arm, lane);
        const std::size_t idx =
            static_cast<std::size_t>(r0 + cell.row) * static_cast<std::size_t>(s.width) + static_cast<std::size_t>(c0 + cell.col);
        s.values[idx] = static_cast<double>(r.halting_count) / kHaltingNormalizer;
        s.values[plane + idx] = r.mean_speed / net.speed_limit;
      }
    }
  }
  return s;
}

double global_reward(const StepEvents& events) {
  return static_cast<double>(events.arrived) - static_cast<double>(events.inserted);
}

double local_reward(const SensorFrame& frame, int tls_id) {
  if (tls_id < 0 || tls_id >= frame.n_tls) throw std::out_of_range("local_reward: tls_id");
  auto max_over = [&](Dir a, Dir b) {
    int m = 0;
    for (int lane = 0; lane < 2; ++lane) {
      m = std::max({m, frame.at(tls_id, a, lane).halting_count, frame.at(tls_id, b, lane).halting_count});
    }
    return m;
  };
  const int we = max_over(Dir::West, Dir::East);
  const int ns = max_over(Dir::North, Dir::South);
  return -std::abs(static_cast<double>(we - ns));
}

std::vector<double> local_rewards(const SensorFrame& frame) {
  std::vector<double> out(static_cast<std::size_t>(frame.n_tls));
  for (int i = 0; i < frame.n_tls; ++i) out[static_cast<std::size_t>(i)] = local_reward(frame, i);
  return out;
}

double hybrid_reward(double global, std::span<const double> locals, double beta) {
  if (locals.empty()) throw std::invalid_argument("hybrid_reward: no local rewards");
  const double mean = std::accumulate(locals.begin(), locals.end(), 0.0) / static_cast<double>(locals.size());
  return beta * global + (1.0 - beta) * mean;
}

double beta_schedule(double progress) {
  if (std::isnan(progress)) return 0.0;
  return std::clamp(progress, 0.0, 1.0);
}

RewardParts compute_rewards(const StepEvents& events, const SensorFrame& frame, double beta) {
  RewardParts parts;
  parts.beta = beta;
  parts.global = global_reward(events);
  parts.locals = local_rewards(frame);
  parts.hybrid = hybrid_reward(parts.global, parts.locals, beta);
  return parts;
}

}  // namespace gridlight
