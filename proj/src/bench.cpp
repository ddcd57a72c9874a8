#include "gridlight/bench.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "gridlight/parallel.h"

namespace gridlight {

ControllerKind parse_controller(const std::string& s) {
  if (s == "rl") return ControllerKind::RL;
  if (s == "fixed") return ControllerKind::Fixed;
  if (s == "actuated") return ControllerKind::Actuated;
  if (s == "random") return ControllerKind::Random;
  throw std::invalid_argument("unknown controller '" + s + "' (expected rl, fixed, actuated or random)");
}

std::string to_string(ControllerKind k) {
  switch (k) {
    case ControllerKind::RL: return "rl";
    case ControllerKind::Fixed: return "fixed";
    case ControllerKind::Actuated: return "actuated";
    case ControllerKind::Random: return "random";
  }
  return "?";
}

const std::vector<std::string>& known_config_keys() {
  static const std::vector<std::string> keys = {
      "grid.rows",       "grid.cols",        "grid.arm_length",  "grid.speed_limit", "episode.length",  "demand.vph",
      "demand.b",        "demand.periods",   "demand.n",         "train.episodes",   "train.actors",    "train.horizon",
      "train.epochs",    "train.minibatch",  "train.gamma",      "train.lambda",     "train.epsilon",   "train.lr",
      "train.c1",        "train.c2",         "train.reward",     "train.local_critic", "train.seed",    "train.threads",
      "net.trunk",       "net.hidden",       "controller",       "checkpoint",       "eval.greedy",     "eval.demands",
      "eval.randomness", "eval.repetitions", "eval.seed",        "eval.threads",     "eval.event_logs", "output.dir"};
  return keys;
}

EnvConfig env_from_kv(const KvConfig& kv) {
  EnvConfig e;
  e.rows = kv.get_int("grid.rows", e.rows);
  e.cols = kv.get_int("grid.cols", e.cols);
  e.arm_length = kv.get_double("grid.arm_length", e.arm_length);
  e.speed_limit = kv.get_double("grid.speed_limit", e.speed_limit);
  e.episode_length = kv.get_int("episode.length", e.episode_length);
  e.p = p_for_demand(kv.get_double("demand.vph", 3600.0 / e.p));
  e.b = kv.get_int("demand.b", e.b);
  e.periods = kv.get_int("demand.periods", e.periods);
  e.n_override = kv.get_double("demand.n", e.n_override);
  if (e.rows < 1 || e.cols < 1) throw std::invalid_argument("grid.rows and grid.cols must be >= 1");
  e.demand(0);
  return e;
}

TrainSetup train_setup_from_kv(const KvConfig& kv) {
  TrainSetup s;
  s.env = env_from_kv(kv);
  TrainConfig& t = s.train;
  t.episodes = kv.get_int("train.episodes", t.episodes);
  t.actors = kv.get_int("train.actors", t.actors);
  t.horizon = kv.get_int("train.horizon", t.horizon);
  t.epochs = kv.get_int("train.epochs", t.epochs);
  t.minibatch_size = kv.get_int("train.minibatch", t.actors * t.horizon);
  t.gamma = kv.get_double("train.gamma", t.gamma);
  t.lambda = kv.get_double("train.lambda", t.lambda);
  t.epsilon0 = kv.get_double("train.epsilon", t.epsilon0);
  t.lr0 = kv.get_double("train.lr", t.lr0);
  t.c1 = kv.get_double("train.c1", t.c1);
  t.c2 = kv.get_double("train.c2", t.c2);
  t.reward = parse_reward_mode(kv.get_string("train.reward", to_string(t.reward)));
  t.train_local_critic = kv.get_bool("train.local_critic", t.train_local_critic);
  t.seed = static_cast<std::uint64_t>(kv.get_int("train.seed", static_cast<int>(t.seed)));
  t.threads = kv.get_int("train.threads", t.threads);
  t.validate();
  s.net = NetConfig::for_grid(s.env.rows, s.env.cols, kv.get_int_list("net.trunk", {16, 32}), kv.get_int("net.hidden", 64));
  return s;
}

void ExperimentConfig::validate() const {
  if (repetitions < 1) throw std::invalid_argument("eval.repetitions must be >= 1");
  if (demands.empty() || randomness.empty()) throw std::invalid_argument("eval.demands and eval.randomness must be nonempty");
  for (double d : demands) {
    if (!(d > 0.0)) throw std::invalid_argument("eval.demands entries must be positive");
  }
  for (int b : randomness) {
    if (b < 1) throw std::invalid_argument("eval.randomness entries must be >= 1");
  }
  if (threads < 1) throw std::invalid_argument("eval.threads must be >= 1");
  if (controller == ControllerKind::RL && checkpoint.empty()) throw std::invalid_argument("controller rl needs a checkpoint");
}

ExperimentConfig ExperimentConfig::from_kv(const KvConfig& kv) {
  ExperimentConfig c;
  c.env = env_from_kv(kv);
  c.controller = parse_controller(kv.get_string("controller", to_string(c.controller)));
  c.checkpoint = kv.get_string("checkpoint", "");
  c.greedy = kv.get_bool("eval.greedy", c.greedy);
  c.demands = kv.get_double_list("eval.demands", {3600.0 / c.env.p});
  c.randomness = kv.get_int_list("eval.randomness", {c.env.b});
  c.repetitions = kv.get_int("eval.repetitions", c.repetitions);
  c.seed = static_cast<std::uint64_t>(kv.get_int("eval.seed", static_cast<int>(c.seed)));
  c.threads = kv.get_int("eval.threads", c.threads);
  c.event_logs = kv.get_bool("eval.event_logs", c.event_logs);
  c.output_dir = kv.get_string("output.dir", c.output_dir.string());
  c.validate();
  return c;
}

std::uint64_t cell_seed(std::uint64_t seed, double demand, int b, int rep) {
  return mix_seed(mix_seed(seed, static_cast<std::uint64_t>(std::llround(demand * 1000.0))), static_cast<std::uint64_t>(b),
                  static_cast<std::uint64_t>(rep));
}

std::unique_ptr<Controller> make_controller(const ExperimentConfig& config, const TrainState* policy) {
  switch (config.controller) {
    case ControllerKind::RL:
      if (!policy) throw std::invalid_argument("rl controller needs a trained policy");
      return std::make_unique<PolicyController>(policy->params, policy->net, config.greedy, config.seed);
    case ControllerKind::Fixed: return std::make_unique<FixedTimeController>();
    case ControllerKind::Actuated: return std::make_unique<ActuatedController>();
    case ControllerKind::Random: return std::make_unique<RandomController>(config.seed);
  }
  throw std::logic_error("make_controller");
}

namespace {

std::string fmt_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt_num(*v) : "NA"; }

std::string fmt_demand(double d) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", d);
  return buf;
}

std::optional<double> parse_opt(const std::string& s) {
  if (s == "NA") return std::nullopt;
  return std::stod(s);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string f; std::getline(ss, f, ',');) out.push_back(f);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

SweepReport run_sweep(const ExperimentConfig& config) {
  config.validate();
  std::optional<TrainState> policy;
  if (config.controller == ControllerKind::RL) {
    if (!std::filesystem::exists(config.checkpoint)) throw std::runtime_error("checkpoint not found: " + config.checkpoint.string());
    policy = load_train_state(config.checkpoint);
    if (policy->net.n_tls != config.env.rows * config.env.cols) throw std::invalid_argument("checkpoint was trained on a different grid");
  }

  struct Cell {
    double demand;
    int b;
    int rep;
  };
  std::vector<Cell> cells;
  for (double d : config.demands) {
    for (int b : config.randomness) {
      for (int r = 0; r < config.repetitions; ++r) cells.push_back({d, b, r});
    }
  }

  const World world = World::build(config.env);
  const std::string name = to_string(config.controller);
  if (config.event_logs) std::filesystem::create_directories(config.output_dir / "events");
  std::vector<RunRow> rows(cells.size());
  parallel_for(cells.size(), config.threads, [&](std::size_t i) {
    const Cell& c = cells[i];
    EnvConfig ec = config.env;
    ec.p = p_for_demand(c.demand);
    ec.b = c.b;
    const std::uint64_t seed = cell_seed(config.seed, c.demand, c.b, c.rep);
    TrafficEnv env(world, ec, seed);
    auto controller = make_controller(config, policy ? &*policy : nullptr);
    const EpisodeMetrics m = run_episode(env, *controller);
    RunRow& r = rows[i];
    r.controller = name;
    r.demand = c.demand;
    r.b = c.b;
    r.rep = c.rep;
    r.seed = seed;
    r.arrived = m.arrived;
    r.inserted = m.inserted;
    r.teleported = m.teleported;
    r.mean_waiting_time = m.mean_waiting_time;
    r.mean_time_loss = m.mean_time_loss;
    r.peak_accumulation = m.peak_accumulation;
    if (config.event_logs) {
      std::ofstream os(config.output_dir / "events" /
                       (name + "_" + fmt_demand(c.demand) + "_" + std::to_string(c.b) + "_" + std::to_string(c.rep) + ".csv"));
      write_event_log_csv(os, m.series);
    }
  });

  SweepReport report;
  report.runs = std::move(rows);
  report.aggregates = aggregate(report.runs);
  return report;
}

std::vector<AggregateRow> aggregate(const std::vector<RunRow>& runs) {
  std::vector<AggregateRow> out;
  std::map<std::tuple<std::string, double, int>, std::size_t> index;
  struct Acc {
    double arr = 0, peak = 0, wait = 0, loss = 0;
    int wait_n = 0, loss_n = 0;
  };
  std::vector<Acc> acc;
  for (const RunRow& r : runs) {
    const auto key = std::make_tuple(r.controller, r.demand, r.b);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, out.size()).first;
      AggregateRow a;
      a.controller = r.controller;
      a.demand = r.demand;
      a.b = r.b;
      out.push_back(a);
      acc.emplace_back();
    }
    AggregateRow& a = out[it->second];
    Acc& s = acc[it->second];
    ++a.runs;
    s.arr += static_cast<double>(r.arrived);
    s.peak += r.peak_accumulation;
    if (r.mean_waiting_time) {
      s.wait += *r.mean_waiting_time;
      ++s.wait_n;
    }
    if (r.mean_time_loss) {
      s.loss += *r.mean_time_loss;
      ++s.loss_n;
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].mean_arrived = acc[i].arr / out[i].runs;
    out[i].mean_peak_accumulation = acc[i].peak / out[i].runs;
    if (acc[i].wait_n) out[i].mean_waiting_time = acc[i].wait / acc[i].wait_n;
    if (acc[i].loss_n) out[i].mean_time_loss = acc[i].loss / acc[i].loss_n;
  }
  return out;
}

void write_runs_csv(std::ostream& os, const std::vector<RunRow>& runs) {
  os << "controller,demand,b,rep,seed,arrived,inserted,teleported,mean_waiting_time,mean_time_loss,peak_accumulation\n";
  for (const RunRow& r : runs) {
    os << r.controller << ',' << fmt_demand(r.demand) << ',' << r.b << ',' << r.rep << ',' << r.seed << ',' << r.arrived << ','
       << r.inserted << ',' << r.teleported << ',' << fmt_opt(r.mean_waiting_time) << ',' << fmt_opt(r.mean_time_loss) << ','
       << r.peak_accumulation << '\n';
  }
}

void write_aggregate_csv(std::ostream& os, const std::vector<AggregateRow>& rows) {
  os << "controller,demand,b,runs,mean_arrived,mean_waiting_time,mean_time_loss,mean_peak_accumulation\n";
  for (const AggregateRow& a : rows) {
    os << a.controller << ',' << fmt_demand(a.demand) << ',' << a.b << ',' << a.runs << ',' << fmt_num(a.mean_arrived) << ','
       << fmt_opt(a.mean_waiting_time) << ',' << fmt_opt(a.mean_time_loss) << ',' << fmt_num(a.mean_peak_accumulation) << '\n';
  }
}

std::vector<AggregateRow> read_aggregate_csv(std::istream& is) {
  std::vector<AggregateRow> rows;
  std::string line;
  if (!std::getline(is, line) || line.rfind("controller,demand,b,runs,", 0) != 0) throw std::runtime_error("not an aggregate report");
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 8) throw std::runtime_error("aggregate report line " + std::to_string(line_no) + ": expected 8 fields");
    try {
      AggregateRow a;
      a.controller = f[0];
      a.demand = std::stod(f[1]);
      a.b = std::stoi(f[2]);
      a.runs = std::stoi(f[3]);
      a.mean_arrived = std::stod(f[4]);
      a.mean_waiting_time = parse_opt(f[5]);
      a.mean_time_loss = parse_opt(f[6]);
      a.mean_peak_accumulation = std::stod(f[7]);
      rows.push_back(std::move(a));
    } catch (const std::logic_error&) {
      throw std::runtime_error("aggregate report line " + std::to_string(line_no) + ": bad number");
    }
  }
  return rows;
}

void write_mfd_csv(std::ostream& os, const std::vector<LogRow>& log) {
  os << "t,vehicles_on_network,cumulative_outflow,cumulative_inserted,cumulative_teleported,conservation_residual\n";
  std::int64_t ins = 0, arr = 0, tel = 0;
  for (const LogRow& r : log) {
    ins += r.inserted;
    arr += r.arrived;
    tel += r.teleported;
    os << r.t << ',' << r.on_network << ',' << arr << ',' << ins << ',' << tel << ',' << (ins - arr - tel - r.on_network) << '\n';
  }
}

namespace {

std::optional<double> pct(std::optional<double> base, std::optional<double> v) {
  if (!base || !v || *base == 0.0) return std::nullopt;
  return 100.0 * (*v - *base) / *base;
}

}  // namespace

std::vector<CompareRow> compare_reports(const std::vector<AggregateRow>& base, const std::vector<std::vector<AggregateRow>>& others) {
  if (base.empty()) throw std::invalid_argument("compare: empty base report");
  std::vector<CompareRow> out;
  for (const auto& other : others) {
    if (other.size() != base.size()) throw std::invalid_argument("compare: reports cover different sweep grids");
    double sb_arr = 0, so_arr = 0, sb_w = 0, so_w = 0, sb_l = 0, so_l = 0;
    int nw = 0, nl = 0;
    for (std::size_t i = 0; i < base.size(); ++i) {
      const AggregateRow& a = base[i];
      const AggregateRow& b = other[i];
      if (a.demand != b.demand || a.b != b.b) throw std::invalid_argument("compare: reports cover different sweep grids");
      CompareRow r;
      r.controller = b.controller;
      r.demand = fmt_demand(a.demand);
      r.b = std::to_string(a.b);
      r.base_arrived = a.mean_arrived;
      r.arrived = b.mean_arrived;
      r.arrived_delta_pct = a.mean_arrived != 0.0 ? 100.0 * (b.mean_arrived - a.mean_arrived) / a.mean_arrived : 0.0;
      r.base_wait = a.mean_waiting_time;
      r.wait = b.mean_waiting_time;
      r.wait_delta_pct = pct(a.mean_waiting_time, b.mean_waiting_time);
      r.base_loss = a.mean_time_loss;
      r.loss = b.mean_time_loss;
      r.loss_delta_pct = pct(a.mean_time_loss, b.mean_time_loss);
      out.push_back(r);
      sb_arr += a.mean_arrived;
      so_arr += b.mean_arrived;
      if (a.mean_waiting_time && b.mean_waiting_time) {
        sb_w += *a.mean_waiting_time;
        so_w += *b.mean_waiting_time;
        ++nw;
      }
      if (a.mean_time_loss && b.mean_time_loss) {
        sb_l += *a.mean_time_loss;
        so_l += *b.mean_time_loss;
        ++nl;
      }
    }
    const double n = static_cast<double>(base.size());
    CompareRow avg;
    avg.controller = other.front().controller;
    avg.demand = "average";
    avg.b = "all";
    avg.base_arrived = sb_arr / n;
    avg.arrived = so_arr / n;
    avg.arrived_delta_pct = avg.base_arrived != 0.0 ? 100.0 * (avg.arrived - avg.base_arrived) / avg.base_arrived : 0.0;
    if (nw) {
      avg.base_wait = sb_w / nw;
      avg.wait = so_w / nw;
      avg.wait_delta_pct = pct(avg.base_wait, avg.wait);
    }
    if (nl) {
      avg.base_loss = sb_l / nl;
      avg.loss = so_l / nl;
      avg.loss_delta_pct = pct(avg.base_loss, avg.loss);
    }
    out.push_back(avg);
  }
  return out;
}

void write_compare_csv(std::ostream& os, const std::vector<CompareRow>& rows) {
  os << "controller,demand,b,base_arrived,arrived,arrived_delta_pct,base_waiting_time,waiting_time,waiting_time_delta_pct,"
        "base_time_loss,time_loss,time_loss_delta_pct\n";
  for (const CompareRow& r : rows) {
    os << r.controller << ',' << r.demand << ',' << r.b << ',' << fmt_num(r.base_arrived) << ',' << fmt_num(r.arrived) << ','
       << fmt_num(r.arrived_delta_pct) << ',' << fmt_opt(r.base_wait) << ',' << fmt_opt(r.wait) << ',' << fmt_opt(r.wait_delta_pct)
       << ',' << fmt_opt(r.base_loss) << ',' << fmt_opt(r.loss) << ',' << fmt_opt(r.loss_delta_pct) << '\n';
  }
}

}  // namespace gridlight
