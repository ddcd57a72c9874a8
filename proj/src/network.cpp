#include "gridlight/network.h"

#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <queue>
#include <stdexcept>

namespace gridlight {

Dir opposite(Dir d) { return static_cast<Dir>((static_cast<int>(d) + 2) % 4); }
Dir left_of(Dir heading) { return static_cast<Dir>((static_cast<int>(heading) + 3) % 4); }
Dir right_of(Dir heading) { return static_cast<Dir>((static_cast<int>(heading) + 1) % 4); }

char dir_letter(Dir d) {
  switch (d) {
    case Dir::North: return 'N';
    case Dir::East: return 'E';
    case Dir::South: return 'S';
    case Dir::West: return 'W';
  }
  return '?';
}

Movement classify_turn(Dir in, Dir out) {
  if (in == out) return Movement::Through;
  if (out == left_of(in)) return Movement::Left;
  if (out == right_of(in)) return Movement::Right;
  return Movement::UTurn;
}

int lane_for(Movement m) { return m == Movement::Left ? kLeftLane : kThroughLane; }

int RoadNetwork::lane_capacity(int edge_id, double vehicle_space) const {
  return std::max(1, static_cast<int>(std::floor(edge(edge_id).length / vehicle_space)));
}

namespace {

bool has_neighbor(int rows, int cols, int r, int c, Dir d) {
  switch (d) {
    case Dir::North: return r > 0;
    case Dir::South: return r < rows - 1;
    case Dir::West: return c > 0;
    case Dir::East: return c < cols - 1;
  }
  return false;
}

std::pair<int, int> step_toward(int r, int c, Dir d) {
  switch (d) {
    case Dir::North: return {r - 1, c};
    case Dir::South: return {r + 1, c};
    case Dir::West: return {r, c - 1};
    case Dir::East: return {r, c + 1};
  }
  return {r, c};
}

}  // namespace

RoadNetwork build_grid(int rows, int cols, double arm_length, double speed_limit) {
  if (rows < 1 || cols < 1) throw std::invalid_argument("build_grid: rows and cols must be >= 1");
  if (!(arm_length > 0.0)) throw std::invalid_argument("build_grid: arm_length must be > 0");
  if (!(speed_limit > 0.0)) throw std::invalid_argument("build_grid: speed_limit must be > 0");

  RoadNetwork net;
  net.rows = rows;
  net.cols = cols;
  net.arm_length = arm_length;
  net.speed_limit = speed_limit;
  const int n = rows * cols;
  net.incoming.assign(static_cast<std::size_t>(n), {-1, -1, -1, -1});
  net.outgoing.assign(static_cast<std::size_t>(n), {-1, -1, -1, -1});

  auto add_edge = [&](EdgeKind kind, int from, int to, Dir heading) {
    Edge e;
    e.id = static_cast<int>(net.edges.size());
    e.kind = kind;
    e.from_node = from;
    e.to_node = to;
    e.heading = heading;
    e.length = arm_length;
    e.lanes = net.lanes_per_direction;
    net.edges.push_back(e);
    if (from >= 0) net.outgoing[static_cast<std::size_t>(from)][static_cast<int>(heading)] = e.id;
    if (to >= 0) net.incoming[static_cast<std::size_t>(to)][static_cast<int>(e.approach())] = e.id;
    return e.id;
  };

  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      for (Dir d : kAllDirs) {
        if (!has_neighbor(rows, cols, r, c, d)) continue;
        auto [nr, nc] = step_toward(r, c, d);
        add_edge(EdgeKind::Internal, net.node_id(r, c), net.node_id(nr, nc), d);
      }
    }
  }

  // Outer arms clockwise from the north-west corner.
  std::vector<std::pair<int, Dir>> arms;
  for (int c = 0; c < cols; ++c) arms.emplace_back(net.node_id(0, c), Dir::North);
  for (int r = 0; r < rows; ++r) arms.emplace_back(net.node_id(r, cols - 1), Dir::East);
  for (int c = cols - 1; c >= 0; --c) arms.emplace_back(net.node_id(rows - 1, c), Dir::South);
  for (int r = rows - 1; r >= 0; --r) arms.emplace_back(net.node_id(r, 0), Dir::West);

  for (std::size_t i = 0; i < arms.size(); ++i) {
    auto [node, side] = arms[i];
    int in = add_edge(EdgeKind::Entry, -1, node, opposite(side));
    int out = add_edge(EdgeKind::Exit, node, -1, side);
    net.edges[static_cast<std::size_t>(in)].ring_index = static_cast<int>(i);
    net.edges[static_cast<std::size_t>(out)].ring_index = static_cast<int>(i);
    net.boundary_edges.push_back(in);
    net.boundary_edges.push_back(out);
    net.entry_edges.push_back(in);
    net.exit_edges.push_back(out);
  }
  return net;
}

std::vector<int> shortest_route(const RoadNetwork& net, int entry_edge, int exit_edge) {
  const Edge& first = net.edge(entry_edge);
  const Edge& last = net.edge(exit_edge);
  if (first.kind != EdgeKind::Entry) throw std::invalid_argument("shortest_route: not an entry edge");
  if (last.kind != EdgeKind::Exit) throw std::invalid_argument("shortest_route: not an exit edge");

  const std::size_t m = net.edges.size();
  std::vector<double> dist(m, std::numeric_limits<double>::infinity());
  std::vector<int> prev(m, -1);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> open;
  dist[static_cast<std::size_t>(entry_edge)] = first.length / net.speed_limit;
  open.emplace(dist[static_cast<std::size_t>(entry_edge)], entry_edge);

  while (!open.empty()) {
    auto [d, e] = open.top();
    open.pop();
    if (d > dist[static_cast<std::size_t>(e)]) continue;
    if (e == exit_edge) break;
    const Edge& cur = net.edge(e);
    if (cur.to_node < 0) continue;
    for (int next : net.outgoing[static_cast<std::size_t>(cur.to_node)]) {
      if (next < 0) continue;
      const Edge& ne = net.edge(next);
      if (classify_turn(cur.heading, ne.heading) == Movement::UTurn) continue;
      double nd = d + ne.length / net.speed_limit;
      auto& slot = dist[static_cast<std::size_t>(next)];
      if (nd < slot - 1e-12 || (std::abs(nd - slot) <= 1e-12 && e < prev[static_cast<std::size_t>(next)])) {
        slot = nd;
        prev[static_cast<std::size_t>(next)] = e;
        open.emplace(nd, next);
      }
    }
  }
  if (!std::isfinite(dist[static_cast<std::size_t>(exit_edge)])) {
    throw std::runtime_error("shortest_route: exit unreachable from entry");
  }
  std::vector<int> route;
  for (int e = exit_edge; e >= 0; e = prev[static_cast<std::size_t>(e)]) route.push_back(e);
  return {route.rbegin(), route.rend()};
}

double route_length(const RoadNetwork& net, const std::vector<int>& route) {
  double len = 0.0;
  for (int e : route) len += net.edge(e).length;
  return len;
}

Movement movement_after(const RoadNetwork& net, const std::vector<int>& route, std::size_t index) {
  if (index + 1 >= route.size()) return Movement::Exit;
  return classify_turn(net.edge(route[index]).heading, net.edge(route[index + 1]).heading);
}

RouteTable::RouteTable(const RoadNetwork& net) : exits_(net.exit_edges.size()) {
  routes_.reserve(net.entry_edges.size() * exits_);
  for (int in : net.entry_edges) {
    for (int out : net.exit_edges) {
      // Same-arm pairs would need a U-turn; they are never requested.
      if (net.edge(in).ring_index == net.edge(out).ring_index) {
        routes_.emplace_back();
        continue;
      }
      routes_.push_back(std::make_shared<const std::vector<int>>(shortest_route(net, in, out)));
    }
  }
}

const Route& RouteTable::route(int entry_slot, int exit_slot) const {
  const auto& r = routes_.at(static_cast<std::size_t>(entry_slot) * exits_ + static_cast<std::size_t>(exit_slot));
  if (!r) throw std::invalid_argument("RouteTable: entry and exit share an arm");
  return r;
}

std::string edge_name(const RoadNetwork& net, int edge_id) {
  const Edge& e = net.edge(edge_id);
  auto node_label = [&](int n) {
    return std::to_string(net.node_row(n)) + "/" + std::to_string(net.node_col(n));
  };
  std::string from = e.from_node >= 0 ? node_label(e.from_node) : std::string("out") + dir_letter(opposite(e.heading));
  std::string to = e.to_node >= 0 ? node_label(e.to_node) : std::string("out") + dir_letter(e.heading);
  return from + "to" + to;
}

void write_network(std::ostream& os, const RoadNetwork& net) {
  os << "grid " << net.rows << " " << net.cols << "\n";
  os << "arm_length " << net.arm_length << "\n";
  os << "speed_limit " << net.speed_limit << "\n";
  os << "lanes_per_direction " << net.lanes_per_direction << "\n";
  os << "edges " << net.edges.size() << "\n";
  for (const Edge& e : net.edges) {
    const char* kind = e.kind == EdgeKind::Entry ? "entry" : e.kind == EdgeKind::Exit ? "exit" : "internal";
    os << "edge " << e.id << " " << kind << " " << e.from_node << " " << e.to_node << " " << dir_letter(e.heading)
       << " " << e.length << " " << e.lanes << " " << e.ring_index << " " << edge_name(net, e.id) << "\n";
  }
}

}  // namespace gridlight
