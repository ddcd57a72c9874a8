#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <string>

#include "gridlight/autodiff.h"
#include "gridlight/network.h"

namespace testsupport {

using gridlight::ad::Gradients;
using gridlight::ad::ParamSet;
using gridlight::ad::Tape;
using gridlight::ad::Var;

using LossFn = std::function<Var(Tape&, const std::map<std::string, Var>&)>;

inline double eval_loss(const ParamSet& params, const LossFn& fn) {
  Tape tape;
  const auto vars = tape.parameters(params);
  return fn(tape, vars).value().item();
}

inline Gradients analytic_grads(const ParamSet& params, const LossFn& fn) {
  Tape tape;
  const auto vars = tape.parameters(params);
  return tape.backward(fn(tape, vars));
}

struct FdReport {
  double max_rel = 0.0;
  std::string worst;
  std::size_t checked = 0;
};

// Central differences on every entry of every parameter. Relative error is
// |a − n| / max(|a|, |n|, floor); the floor keeps entries whose true gradient
// is ~0 from dividing roundoff by roundoff.
inline FdReport finite_difference_check(const ParamSet& params, const LossFn& fn, double h = 1e-5, double floor = 1e-6) {
  const Gradients g = analytic_grads(params, fn);
  FdReport rep;
  ParamSet p = params;
  for (auto& [name, t] : p) {
    const auto& ga = g.at(name);
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double x0 = t[i];
      t[i] = x0 + h;
      const double up = eval_loss(p, fn);
      t[i] = x0 - h;
      const double down = eval_loss(p, fn);
      t[i] = x0;
      const double num = (up - down) / (2.0 * h);
      const double a = ga[i];
      const double rel = std::abs(a - num) / std::max({std::abs(a), std::abs(num), floor});
      ++rep.checked;
      if (rel > rep.max_rel) {
        rep.max_rel = rel;
        rep.worst = name + "[" + std::to_string(i) + "] analytic " + std::to_string(a) + " numeric " + std::to_string(num);
      }
    }
  }
  return rep;
}

// Route entering `node` from side `from` and leaving through side `to`.
inline gridlight::Route route_through(const gridlight::RoadNetwork& net, int node, gridlight::Dir from, gridlight::Dir to) {
  const int in = net.incoming[static_cast<std::size_t>(node)][static_cast<int>(from)];
  const int out = net.outgoing[static_cast<std::size_t>(node)][static_cast<int>(to)];
  return std::make_shared<const std::vector<int>>(std::vector<int>{in, out});
}

}  // namespace testsupport
