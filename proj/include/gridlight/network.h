#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace gridlight {

// Heading of travel / side of an intersection. Row index grows southward.
enum class Dir : std::uint8_t { North = 0, East = 1, South = 2, West = 3 };

inline constexpr std::array<Dir, 4> kAllDirs{Dir::North, Dir::East, Dir::South, Dir::West};

Dir opposite(Dir d);
Dir left_of(Dir heading);
Dir right_of(Dir heading);
char dir_letter(Dir d);

enum class Movement : std::uint8_t { Through, Left, Right, UTurn, Exit };

using Route = std::shared_ptr<const std::vector<int>>;

// Movement performed when leaving an edge heading `in` onto an edge heading `out`.
Movement classify_turn(Dir in, Dir out);

enum class EdgeKind : std::uint8_t { Entry, Internal, Exit };

struct Edge {
  int id = -1;
  EdgeKind kind = EdgeKind::Internal;
  int from_node = -1;  // -1 for the outside world
  int to_node = -1;    // -1 for the outside world
  Dir heading = Dir::North;
  double length = 0.0;
  int lanes = 2;
  int ring_index = -1;  // position on the boundary ring, boundary edges only

  // Side of to_node this edge arrives on.
  Dir approach() const { return opposite(heading); }
};

// Lane 0 carries through and right-turning traffic, lane 1 is the left-turn pocket.
inline constexpr int kThroughLane = 0;
inline constexpr int kLeftLane = 1;

int lane_for(Movement m);

struct RoadNetwork {
  int rows = 0;
  int cols = 0;
  double arm_length = 500.0;
  int lanes_per_direction = 2;
  double speed_limit = 13.89;

  std::vector<Edge> edges;
  // Ring order, alternating entry/exit per outer arm: entry0, exit0, entry1, exit1, ...
  std::vector<int> boundary_edges;
  std::vector<int> entry_edges;  // ring order
  std::vector<int> exit_edges;   // ring order

  // incoming[node][side] / outgoing[node][side]: edge id or -1.
  std::vector<std::array<int, 4>> incoming;
  std::vector<std::array<int, 4>> outgoing;

  int node_count() const { return rows * cols; }
  int node_id(int r, int c) const { return r * cols + c; }
  int node_row(int n) const { return n / cols; }
  int node_col(int n) const { return n % cols; }
  const Edge& edge(int id) const { return edges.at(static_cast<std::size_t>(id)); }
  int outer_arm_count() const { return 2 * (rows + cols); }
  int lane_capacity(int edge_id, double vehicle_space) const;
};

// Builds an R×C signalized lattice. Throws std::invalid_argument on empty grids
// or non-positive arm length.
RoadNetwork build_grid(int rows, int cols, double arm_length = 500.0, double speed_limit = 13.89);

// Edge-sequence route from an entry edge to an exit edge, minimizing free-flow
// travel time, no U-turns. Ties prefer the lower-id predecessor edge.
std::vector<int> shortest_route(const RoadNetwork& net, int entry_edge, int exit_edge);

double route_length(const RoadNetwork& net, const std::vector<int>& route);

// Turn made at the downstream end of route[index]; Exit for the last edge.
Movement movement_after(const RoadNetwork& net, const std::vector<int>& route, std::size_t index);

// Precomputed entry × exit routes.
class RouteTable {
 public:
  explicit RouteTable(const RoadNetwork& net);
  const Route& route(int entry_slot, int exit_slot) const;

 private:
  std::size_t exits_ = 0;
  std::vector<Route> routes_;
};

std::string edge_name(const RoadNetwork& net, int edge_id);

// Plain-text description of the grid, one edge per line.
void write_network(std::ostream& os, const RoadNetwork& net);

}  // namespace gridlight
