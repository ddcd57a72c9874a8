#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>
#include <sstream>

#include "gridlight/network.h"

using namespace gridlight;

TEST_CASE("grid sizes") {
  const auto g33 = build_grid(3, 3, 500);
  CHECK(g33.node_count() == 9);
  CHECK(g33.boundary_edges.size() == 24);
  CHECK(g33.entry_edges.size() == 12);
  CHECK(g33.exit_edges.size() == 12);

  const auto g11 = build_grid(1, 1, 500);
  CHECK(g11.node_count() == 1);
  CHECK(g11.entry_edges.size() == 4);
  CHECK(g11.exit_edges.size() == 4);
  CHECK(g11.edges.size() == 8);

  const auto g23 = build_grid(2, 3, 400);
  CHECK(g23.node_count() == 6);
  CHECK(g23.entry_edges.size() == 10);
  // every pair of neighbours is joined both ways
  int internal = 0;
  for (const auto& e : g23.edges) internal += e.kind == EdgeKind::Internal;
  CHECK(internal == 2 * (2 * 2 + 3 * 1));
  for (const auto& e : g23.edges) CHECK(e.length == 400.0);
}

TEST_CASE("bad grids throw") {
  CHECK_THROWS_AS(build_grid(0, 3), std::invalid_argument);
  CHECK_THROWS_AS(build_grid(2, 2, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(build_grid(2, 2, 500, -1), std::invalid_argument);
}

TEST_CASE("every node has four approaches and four exits") {
  const auto net = build_grid(3, 4);
  for (int n = 0; n < net.node_count(); ++n) {
    for (Dir d : kAllDirs) {
      const int in = net.incoming[static_cast<std::size_t>(n)][static_cast<int>(d)];
      const int out = net.outgoing[static_cast<std::size_t>(n)][static_cast<int>(d)];
      REQUIRE(in >= 0);
      REQUIRE(out >= 0);
      CHECK(net.edge(in).to_node == n);
      CHECK(net.edge(in).approach() == d);
      CHECK(net.edge(out).from_node == n);
      CHECK(net.edge(out).heading == d);
    }
  }
}

TEST_CASE("ring order alternates entry and exit per arm") {
  const auto net = build_grid(2, 3);
  REQUIRE(net.boundary_edges.size() == 2 * net.entry_edges.size());
  for (std::size_t i = 0; i < net.entry_edges.size(); ++i) {
    CHECK(net.boundary_edges[2 * i] == net.entry_edges[i]);
    CHECK(net.boundary_edges[2 * i + 1] == net.exit_edges[i]);
    CHECK(net.edge(net.entry_edges[i]).ring_index == static_cast<int>(i));
    CHECK(net.edge(net.exit_edges[i]).ring_index == static_cast<int>(i));
  }
  // first arm is the north side of the north-west corner
  CHECK(net.edge(net.entry_edges[0]).to_node == 0);
  CHECK(net.edge(net.entry_edges[0]).heading == Dir::South);
}

TEST_CASE("turn classification") {
  CHECK(classify_turn(Dir::North, Dir::North) == Movement::Through);
  CHECK(classify_turn(Dir::North, Dir::West) == Movement::Left);
  CHECK(classify_turn(Dir::North, Dir::East) == Movement::Right);
  CHECK(classify_turn(Dir::South, Dir::North) == Movement::UTurn);
  CHECK(classify_turn(Dir::East, Dir::North) == Movement::Left);
  CHECK(lane_for(Movement::Left) == kLeftLane);
  CHECK(lane_for(Movement::Right) == kThroughLane);
}

TEST_CASE("shortest routes") {
  const auto net = build_grid(3, 3, 500);
  // straight across the middle row, west to east
  const int in = net.incoming[3][static_cast<int>(Dir::West)];
  const int out = net.outgoing[5][static_cast<int>(Dir::East)];
  const auto r = shortest_route(net, in, out);
  REQUIRE(r.size() == 4);
  CHECK(r.front() == in);
  CHECK(r.back() == out);
  CHECK(route_length(net, r) == doctest::Approx(2000.0));
  for (std::size_t i = 0; i + 1 < r.size(); ++i) CHECK(movement_after(net, r, i) == Movement::Through);
  CHECK(movement_after(net, r, r.size() - 1) == Movement::Exit);

  // corner to corner needs one turn, length is Manhattan
  const int nw = net.incoming[0][static_cast<int>(Dir::North)];
  const int se = net.outgoing[8][static_cast<int>(Dir::East)];
  const auto r2 = shortest_route(net, nw, se);
  CHECK(route_length(net, r2) == doctest::Approx(500.0 * 6));
  CHECK_THROWS(shortest_route(net, out, in));
}

TEST_CASE("route table covers every cross-arm pair") {
  const auto net = build_grid(2, 2);
  RouteTable table(net);
  std::set<const std::vector<int>*> distinct;
  for (std::size_t i = 0; i < net.entry_edges.size(); ++i) {
    for (std::size_t j = 0; j < net.exit_edges.size(); ++j) {
      if (i == j) {
        CHECK_THROWS_AS(table.route(static_cast<int>(i), static_cast<int>(j)), std::invalid_argument);
        continue;
      }
      const auto& r = table.route(static_cast<int>(i), static_cast<int>(j));
      CHECK(r->front() == net.entry_edges[i]);
      CHECK(r->back() == net.exit_edges[j]);
      for (std::size_t k = 0; k + 1 < r->size(); ++k) CHECK(movement_after(net, *r, k) != Movement::UTurn);
      distinct.insert(r.get());
    }
  }
  CHECK(distinct.size() == 8 * 7);
}

TEST_CASE("edge names and dump") {
  const auto net = build_grid(1, 2);
  const int e = net.outgoing[0][static_cast<int>(Dir::East)];
  CHECK(edge_name(net, e) == "0/0to0/1");
  std::ostringstream os;
  write_network(os, net);
  CHECK(os.str().rfind("grid 1 2\n", 0) == 0);
  CHECK(os.str().find("edges " + std::to_string(net.edges.size())) != std::string::npos);
}
