#include "gridlight/baselines.h"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "gridlight/parallel.h"

namespace gridlight {

MovementFlows movement_flows(const RoadNetwork& net, std::span<const Trip> trips, int horizon_seconds) {
  if (horizon_seconds <= 0) throw std::invalid_argument("movement_flows: horizon must be positive");
  MovementFlows f;
  f.n_tls = net.node_count();
  f.flow.assign(static_cast<std::size_t>(f.n_tls) * 8, 0.0);
  for (const Trip& trip : trips) {
    const std::vector<int>& route = *trip.route;
    for (std::size_t i = 0; i + 1 < route.size(); ++i) {
      const Edge& e = net.edge(route[i]);
      const Movement m = movement_after(net, route, i);
      f.flow[SensorFrame::index(e.to_node, e.approach(), lane_for(m))] += 1.0;
    }
  }
  for (double& v : f.flow) v /= horizon_seconds;
  return f;
}

double webster_cycle(double lost_time, double flow_ratio_sum, const WebsterConfig& config) {
  const double y = std::clamp(flow_ratio_sum, 0.0, config.max_flow_ratio);
  return std::clamp((1.5 * lost_time + 5.0) / (1.0 - y), config.min_cycle, config.max_cycle);
}

std::array<double, 4> phase_flow_ratios(const MovementFlows& flows, int tls, double saturation_flow) {
  auto lane_ratio = [&](Dir a, Dir b, int lane) {
    return std::max(flows.at(tls, a, lane), flows.at(tls, b, lane)) / saturation_flow;
  };
  return {lane_ratio(Dir::North, Dir::South, kThroughLane), lane_ratio(Dir::North, Dir::South, kLeftLane),
          lane_ratio(Dir::West, Dir::East, kThroughLane), lane_ratio(Dir::West, Dir::East, kLeftLane)};
}

std::array<int, 4> split_greens(const std::array<double, 4>& ratios, int total, int min_green) {
  if (total < 4 * min_green) throw std::invalid_argument("split_greens: total green below the minimum");
  std::array<double, 4> share{};
  std::array<bool, 4> floored{};
  // Phases whose proportional share falls under the floor are pinned to it and
  // the rest is re-split among the others.
  for (int pass = 0; pass < 4; ++pass) {
    double free_total = total;
    double free_ratio = 0.0;
    int free_count = 0;
    for (int i = 0; i < 4; ++i) {
      if (floored[static_cast<std::size_t>(i)]) free_total -= min_green;
      else {
        free_ratio += std::max(ratios[static_cast<std::size_t>(i)], 0.0);
        ++free_count;
      }
    }
    bool changed = false;
    for (int i = 0; i < 4; ++i) {
      const auto k = static_cast<std::size_t>(i);
      if (floored[k]) {
        share[k] = min_green;
        continue;
      }
      share[k] = free_ratio > 0.0 ? free_total * std::max(ratios[k], 0.0) / free_ratio : free_total / free_count;
      if (share[k] < min_green) {
        floored[k] = true;
        changed = true;
      }
    }
    if (!changed) break;
  }
  std::array<int, 4> g{};
  int assigned = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    g[i] = static_cast<int>(std::floor(share[i]));
    assigned += g[i];
  }
  std::array<std::size_t, 4> order{0, 1, 2, 3};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return share[a] - g[a] > share[b] - g[b]; });
  for (std::size_t q = 0; assigned < total; q = (q + 1) % 4, ++assigned) ++g[order[q]];
  return g;
}

FixedPlan webster_plan(const MovementFlows& flows, const RoadNetwork& net, const WebsterConfig& config) {
  if (flows.n_tls != net.node_count()) throw std::invalid_argument("webster_plan: flows do not cover the grid");
  for (double v : flows.flow) {
    if (v < 0.0) throw std::invalid_argument("webster_plan: negative flow");
  }
  const int shortest = 4 * (config.min_green + config.yellow);
  FixedPlan plan;
  plan.yellow = config.yellow;
  plan.tls.resize(static_cast<std::size_t>(net.node_count()));
  std::vector<std::array<double, 4>> ratios(plan.tls.size());
  int common = shortest;
  for (int n = 0; n < net.node_count(); ++n) {
    const auto k = static_cast<std::size_t>(n);
    ratios[k] = phase_flow_ratios(flows, n, config.saturation_flow);
    const double y = std::accumulate(ratios[k].begin(), ratios[k].end(), 0.0);
    plan.tls[k].cycle = std::max(shortest, static_cast<int>(std::lround(webster_cycle(config.lost_time, y, config))));
    common = std::max(common, plan.tls[k].cycle);
  }

  double ns = 0.0, we = 0.0;
  for (int n = 0; n < net.node_count(); ++n) {
    for (int lane = 0; lane < 2; ++lane) {
      ns += flows.at(n, Dir::North, lane) + flows.at(n, Dir::South, lane);
      we += flows.at(n, Dir::West, lane) + flows.at(n, Dir::East, lane);
    }
  }
  const double link_time = net.arm_length / net.speed_limit;
  for (int n = 0; n < net.node_count(); ++n) {
    TlsPlan& p = plan.tls[static_cast<std::size_t>(n)];
    if (config.common_cycle) p.cycle = common;
    p.greens = split_greens(ratios[static_cast<std::size_t>(n)], p.cycle - 4 * config.yellow, config.min_green);
    const int hops = we >= ns ? net.node_col(n) : net.node_row(n);
    p.offset = static_cast<int>(std::lround(hops * link_time)) % p.cycle;
  }
  return plan;
}

LightState plan_light_state(const FixedPlan& plan, int tls, int t) {
  const TlsPlan& p = plan.tls.at(static_cast<std::size_t>(tls));
  int tau = ((t - p.offset) % p.cycle + p.cycle) % p.cycle;
  LightState s;
  s.tls_id = tls;
  for (int i = 0; i < 4; ++i) {
    const int g = p.greens[static_cast<std::size_t>(i)];
    if (tau < g) {
      s.phase_index = i;
      s.phase_elapsed = tau;
      return s;
    }
    if (tau < g + plan.yellow) {
      s.phase_index = i;
      s.in_yellow = true;
      s.phase_elapsed = g;
      s.yellow_elapsed = tau - g;
      return s;
    }
    tau -= g + plan.yellow;
  }
  throw std::logic_error("plan_light_state: cycle longer than its phases");
}

std::vector<Command> fixed_time_commands(const FixedPlan& plan, int t) {
  std::vector<Command> out(plan.tls.size(), Command::Maintain);
  for (std::size_t n = 0; n < plan.tls.size(); ++n) {
    const TlsPlan& p = plan.tls[n];
    const int tau = ((t - p.offset) % p.cycle + p.cycle) % p.cycle;
    int end = 0;
    for (int i = 0; i < 4; ++i) {
      end += p.greens[static_cast<std::size_t>(i)];
      if (tau == end) {
        out[n] = Command::Switch;
        break;
      }
      end += plan.yellow;
    }
  }
  return out;
}

void write_plan(std::ostream& os, const FixedPlan& plan) {
  os << "# tls cycle g0 g1 g2 g3 offset\n";
  os << "yellow " << plan.yellow << '\n';
  for (std::size_t n = 0; n < plan.tls.size(); ++n) {
    const TlsPlan& p = plan.tls[n];
    os << "tls " << n << ' ' << p.cycle;
    for (int g : p.greens) os << ' ' << g;
    os << ' ' << p.offset << '\n';
  }
}

FixedPlan read_plan(std::istream& is) {
  FixedPlan plan;
  int line_no = 0;
  for (std::string line; std::getline(is, line);) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "yellow") {
      ls >> plan.yellow;
    } else if (tag == "tls") {
      std::size_t id = 0;
      TlsPlan p;
      ls >> id >> p.cycle >> p.greens[0] >> p.greens[1] >> p.greens[2] >> p.greens[3] >> p.offset;
      if (!ls || id != plan.tls.size()) throw std::runtime_error("plan line " + std::to_string(line_no) + ": malformed tls row");
      plan.tls.push_back(p);
      continue;
    } else {
      throw std::runtime_error("plan line " + std::to_string(line_no) + ": unknown tag '" + tag + "'");
    }
    if (!ls) throw std::runtime_error("plan line " + std::to_string(line_no) + ": malformed");
  }
  for (const TlsPlan& p : plan.tls) {
    const int sum = std::accumulate(p.greens.begin(), p.greens.end(), 0) + 4 * plan.yellow;
    if (sum != p.cycle) throw std::runtime_error("plan: greens and yellows do not add up to the cycle");
  }
  return plan;
}

void FixedTimeController::reset(TrafficEnv& env) {
  const MovementFlows flows = movement_flows(env.network(), env.demand().trips, env.config().episode_length);
  WebsterConfig c = config_;
  c.saturation_flow = env.sim().config().saturation_flow;
  c.min_green = env.sim().config().min_green;
  c.yellow = env.sim().config().yellow_time;
  plan_ = webster_plan(flows, env.network(), c);
  // Start every light where its plan says it is at the current time.
  Simulation& sim = env.sim();
  for (int n = 0; n < env.tls_count(); ++n) sim.set_light(n, plan_light_state(plan_, n, sim.time()));
}

std::vector<Command> FixedTimeController::act(const TrafficEnv& env) { return fixed_time_commands(plan_, env.sim().time()); }

bool phase_detects(const SensorFrame& frame, int tls, int phase) {
  const bool ns = phase == 0 || phase == 1;
  const int lane = (phase == 0 || phase == 2) ? kThroughLane : kLeftLane;
  const Dir a = ns ? Dir::North : Dir::West;
  const Dir b = ns ? Dir::South : Dir::East;
  return frame.at(tls, a, lane).presence_count > 0 || frame.at(tls, b, lane).presence_count > 0;
}

std::vector<Command> actuated_commands(ActuatedState& state, std::span<const LightState> lights, const SensorFrame& frame,
                                       const ActuatedConfig& config) {
  const std::size_t n = lights.size();
  if (state.phase.size() != n) {
    state.phase.assign(n, -1);
    state.last_detection.assign(n, -1);
  }
  std::vector<Command> out(n, Command::Maintain);
  for (std::size_t i = 0; i < n; ++i) {
    const LightState& ls = lights[i];
    if (ls.in_yellow) continue;
    if (state.phase[i] != ls.phase_index || ls.phase_elapsed == 0) {
      state.phase[i] = ls.phase_index;
      state.last_detection[i] = -1;
    }
    const int e = ls.phase_elapsed;
    if (phase_detects(frame, static_cast<int>(i), ls.phase_index)) state.last_detection[i] = e;
    if (e < config.min_green) continue;
    const int gap_start = std::max(config.min_green, state.last_detection[i]);
    if (e >= config.max_green || e - gap_start >= config.gap) out[i] = Command::Switch;
  }
  return out;
}

void ActuatedController::reset(TrafficEnv& env) {
  (void)env;
  state_ = ActuatedState{};
}

std::vector<Command> ActuatedController::act(const TrafficEnv& env) {
  std::vector<LightState> lights;
  lights.reserve(static_cast<std::size_t>(env.tls_count()));
  for (int n = 0; n < env.tls_count(); ++n) lights.push_back(env.sim().light(n));
  return actuated_commands(state_, lights, env.frame(), config_);
}

void RandomController::reset(TrafficEnv& env) { rng_.seed(mix_seed(seed_, env.seed())); }

std::vector<Command> RandomController::act(const TrafficEnv& env) {
  std::vector<Command> out(static_cast<std::size_t>(env.tls_count()));
  for (auto& c : out) c = (rng_() >> 63) ? Command::Switch : Command::Maintain;
  return out;
}

}  // namespace gridlight
