#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "gridlight/bench.h"

using namespace gridlight;

namespace {

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

bool contains(const std::string& s, const std::string& part) { return s.find(part) != std::string::npos; }

AggregateRow agg(const std::string& c, double d, int b, double arr, std::optional<double> w, std::optional<double> l) {
  AggregateRow a;
  a.controller = c;
  a.demand = d;
  a.b = b;
  a.runs = 10;
  a.mean_arrived = arr;
  a.mean_waiting_time = w;
  a.mean_time_loss = l;
  a.mean_peak_accumulation = 50;
  return a;
}

}  // namespace

TEST_CASE("key-value parsing") {
  const auto kv = KvConfig::parse("# header\n grid.rows = 3  # trailing\n\neval.demands = 1200, 2400 3600\nname=a b\n", "x.cfg");
  CHECK(kv.get_int("grid.rows", 0) == 3);
  CHECK(kv.get_int("grid.cols", 7) == 7);
  CHECK(kv.get_double_list("eval.demands", {}) == std::vector<double>{1200, 2400, 3600});
  CHECK(kv.get_string("name", "") == "a b");

  CHECK(contains(error_of([] { KvConfig::parse("a = 1\nnonsense\n", "f.cfg"); }), "f.cfg:2: expected key = value"));
  CHECK(contains(error_of([] { KvConfig::parse(" = 4\n", "f.cfg"); }), "f.cfg:1: empty key"));
  const auto dup = error_of([] { KvConfig::parse("a = 1\n\na = 2\n", "f.cfg"); });
  CHECK(contains(dup, "f.cfg:3: duplicate key 'a'"));
  CHECK(contains(dup, "first at f.cfg:1"));
}

TEST_CASE("typed getters reject bad values") {
  auto kv = KvConfig::parse("n = 12x\nd = 1e-3\nflag = yes\nlist = 1,,2\nbadlist = 1,q\nbool = maybe\n", "g.cfg");
  CHECK(contains(error_of([&] { kv.get_int("n", 0); }), "g.cfg:1: n = '12x' is not an integer"));
  CHECK(kv.get_double("d", 0) == 1e-3);
  CHECK(kv.get_bool("flag", false));
  CHECK(kv.get_int_list("list", {}) == std::vector<int>{1, 2});
  CHECK_THROWS(kv.get_int_list("badlist", {}));
  CHECK_THROWS(kv.get_bool("bool", false));
}

TEST_CASE("overrides and unknown keys") {
  auto kv = KvConfig::parse("grid.rows = 3\n", "h.cfg");
  kv.set("grid.rows=4");
  kv.set("train.lr", "0.001");
  CHECK(kv.get_int("grid.rows", 0) == 4);
  CHECK(kv.get_double("train.lr", 0) == 1e-3);
  CHECK_NOTHROW(kv.require_known(known_config_keys()));
  kv.set("grid.rowz=2");
  CHECK(contains(error_of([&] { kv.require_known(known_config_keys()); }), "unknown key 'grid.rowz'"));
  CHECK_THROWS(kv.set("noequals"));
  kv.set("n", "abc");
  CHECK(contains(error_of([&] { kv.get_int("n", 0); }), "--set n"));
}

TEST_CASE("config defaults and conversions") {
  const auto empty = KvConfig::parse("");
  const auto s = train_setup_from_kv(empty);
  CHECK(s.env.rows == 2);
  CHECK(s.env.p == doctest::Approx(1.5));
  CHECK(s.train.minibatch_size == s.train.actors * s.train.horizon);
  CHECK(s.net.trunk_channels == std::vector<int>{16, 32});

  const auto kv = KvConfig::parse("demand.vph = 1800\ntrain.actors = 4\ntrain.horizon = 8\ntrain.reward = global\nnet.trunk = 4 8\n");
  const auto t = train_setup_from_kv(kv);
  CHECK(t.env.p == doctest::Approx(2.0));
  CHECK(t.train.minibatch_size == 32);
  CHECK(t.train.reward == RewardMode::Global);
  CHECK(t.net.trunk_channels == std::vector<int>{4, 8});

  const auto e = ExperimentConfig::from_kv(kv);
  CHECK(e.demands == std::vector<double>{1800.0});
  CHECK(e.randomness == std::vector<int>{10});
  CHECK(e.controller == ControllerKind::Fixed);

  CHECK_THROWS(env_from_kv(KvConfig::parse("grid.rows = 0\n")));
  CHECK_THROWS(ExperimentConfig::from_kv(KvConfig::parse("controller = smart\n")));
  CHECK_THROWS(train_setup_from_kv(KvConfig::parse("train.reward = both\n")));
  for (auto k : {ControllerKind::RL, ControllerKind::Fixed, ControllerKind::Actuated, ControllerKind::Random}) {
    CHECK(parse_controller(to_string(k)) == k);
  }
}

TEST_CASE("experiment validation") {
  ExperimentConfig c;
  CHECK_NOTHROW(c.validate());
  auto bad = [&](auto mutate, const std::string& what) {
    ExperimentConfig x;
    mutate(x);
    CHECK(contains(error_of([&] { x.validate(); }), what));
  };
  bad([](ExperimentConfig& x) { x.repetitions = 0; }, "repetitions");
  bad([](ExperimentConfig& x) { x.demands.clear(); }, "nonempty");
  bad([](ExperimentConfig& x) { x.demands = {-5}; }, "positive");
  bad([](ExperimentConfig& x) { x.randomness = {0}; }, ">= 1");
  bad([](ExperimentConfig& x) { x.threads = 0; }, "threads");
  bad([](ExperimentConfig& x) { x.controller = ControllerKind::RL; }, "checkpoint");
}

TEST_CASE("cell seeds") {
  CHECK(cell_seed(1, 2400, 10, 0) == cell_seed(1, 2400, 10, 0));
  CHECK(cell_seed(1, 2400, 10, 0) != cell_seed(1, 2400, 10, 1));
  CHECK(cell_seed(1, 2400, 10, 0) != cell_seed(1, 2400, 5, 0));
  CHECK(cell_seed(1, 2400, 10, 0) != cell_seed(1, 3600, 10, 0));
  CHECK(cell_seed(1, 2400, 10, 0) != cell_seed(2, 2400, 10, 0));
}

TEST_CASE("aggregation averages defined values only") {
  std::vector<RunRow> runs(3);
  for (int i = 0; i < 3; ++i) {
    runs[i].controller = "fixed";
    runs[i].demand = 2400;
    runs[i].b = 10;
    runs[i].rep = i;
    runs[i].arrived = 100 + 10 * i;
    runs[i].peak_accumulation = 20 + i;
  }
  runs[0].mean_waiting_time = 30.0;
  runs[2].mean_waiting_time = 40.0;
  runs[1].mean_time_loss = 7.0;
  RunRow other = runs[0];
  other.b = 5;
  runs.push_back(other);

  const auto a = aggregate(runs);
  REQUIRE(a.size() == 2);
  CHECK(a[0].runs == 3);
  CHECK(a[0].mean_arrived == doctest::Approx(110.0));
  CHECK(*a[0].mean_waiting_time == doctest::Approx(35.0));
  CHECK(*a[0].mean_time_loss == doctest::Approx(7.0));
  CHECK(a[0].mean_peak_accumulation == doctest::Approx(21.0));
  CHECK(a[1].b == 5);
  CHECK_FALSE(a[1].mean_time_loss.has_value());
}

TEST_CASE("csv writers and aggregate roundtrip") {
  RunRow r;
  r.controller = "actuated";
  r.demand = 2400;
  r.b = 10;
  r.seed = 42;
  r.arrived = 5;
  r.inserted = 9;
  r.mean_waiting_time = 1.25;
  std::ostringstream runs;
  write_runs_csv(runs, {r});
  CHECK(runs.str() ==
        "controller,demand,b,rep,seed,arrived,inserted,teleported,mean_waiting_time,mean_time_loss,peak_accumulation\n"
        "actuated,2400,10,0,42,5,9,0,1.250000,NA,0\n");

  const std::vector<AggregateRow> rows{agg("rl", 2400, 10, 123.5, 20.0, std::nullopt), agg("rl", 1200.5, 1, 60, std::nullopt, 3.0)};
  std::ostringstream os;
  write_aggregate_csv(os, rows);
  CHECK(os.str().rfind("controller,demand,b,runs,mean_arrived,mean_waiting_time,mean_time_loss,mean_peak_accumulation\n", 0) == 0);
  std::istringstream is(os.str());
  const auto back = read_aggregate_csv(is);
  REQUIRE(back.size() == 2);
  CHECK(back[0].mean_arrived == 123.5);
  CHECK(*back[0].mean_waiting_time == 20.0);
  CHECK_FALSE(back[0].mean_time_loss);
  CHECK(back[1].demand == 1200.5);
  CHECK_FALSE(back[1].mean_waiting_time);

  std::istringstream wrong("t,x\n");
  CHECK_THROWS(read_aggregate_csv(wrong));
  std::istringstream short_row("controller,demand,b,runs,x\nrl,1,2\n");
  CHECK(contains(error_of([&] { read_aggregate_csv(short_row); }), "line 2"));
  std::istringstream bad_num("controller,demand,b,runs,x\nrl,abc,1,1,1,1,1,1\n");
  CHECK(contains(error_of([&] { read_aggregate_csv(bad_num); }), "bad number"));
}

TEST_CASE("compare percentages") {
  const std::vector<AggregateRow> base{agg("fixed", 2400, 10, 2237.95, 602.38, 100.0), agg("fixed", 3600, 10, 1000, std::nullopt, 50.0)};
  const std::vector<AggregateRow> rl{agg("rl", 2400, 10, 2482.09, 508.61, 100.0), agg("rl", 3600, 10, 900, 10.0, 25.0)};
  const auto rows = compare_reports(base, {rl});
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].controller == "rl");
  // (2482.09 − 2237.95) / 2237.95 and (508.61 − 602.38) / 602.38
  CHECK(rows[0].arrived_delta_pct == doctest::Approx(10.909).epsilon(1e-4));
  CHECK(*rows[0].wait_delta_pct == doctest::Approx(-15.567).epsilon(1e-4));
  CHECK(*rows[0].loss_delta_pct == 0.0);
  CHECK(rows[1].arrived_delta_pct == doctest::Approx(-10.0));
  CHECK_FALSE(rows[1].wait_delta_pct);
  CHECK(*rows[1].loss_delta_pct == doctest::Approx(-50.0));

  const auto& avg = rows[2];
  CHECK(avg.demand == "average");
  CHECK(avg.b == "all");
  CHECK(avg.base_arrived == doctest::Approx((2237.95 + 1000) / 2));
  CHECK(avg.arrived == doctest::Approx((2482.09 + 900) / 2));
  // only the first cell has both waits
  CHECK(*avg.wait == doctest::Approx(508.61));
  CHECK(*avg.base_loss == doctest::Approx(75.0));
  CHECK(*avg.loss_delta_pct == doctest::Approx(100.0 * (62.5 - 75.0) / 75.0));

  std::ostringstream os;
  write_compare_csv(os, rows);
  std::string header;
  std::istringstream(os.str()) >> header;
  CHECK(header ==
        "controller,demand,b,base_arrived,arrived,arrived_delta_pct,base_waiting_time,waiting_time,waiting_time_delta_pct,"
        "base_time_loss,time_loss,time_loss_delta_pct");
  CHECK(contains(os.str(), "rl,3600,10,1000.000000,900.000000,-10.000000,NA,10.000000,NA,"));

  const std::vector<AggregateRow> other_grid{agg("rl", 2400, 5, 1, 1.0, 1.0), agg("rl", 3600, 10, 1, 1.0, 1.0)};
  CHECK(contains(error_of([&] { compare_reports(base, {other_grid}); }), "different sweep grids"));
  CHECK_THROWS(compare_reports(base, {{rl[0]}}));
  CHECK_THROWS(compare_reports({}, {rl}));
}

TEST_CASE("mfd csv") {
  std::vector<LogRow> log(3);
  log[0].t = 1;
  log[0].inserted = 3;
  log[0].on_network = 3;
  log[1].t = 2;
  log[1].inserted = 1;
  log[1].arrived = 2;
  log[1].on_network = 2;
  log[2].t = 3;
  log[2].teleported = 1;
  log[2].on_network = 1;
  std::ostringstream os;
  write_mfd_csv(os, log);
  CHECK(os.str() ==
        "t,vehicles_on_network,cumulative_outflow,cumulative_inserted,cumulative_teleported,conservation_residual\n"
        "1,3,0,3,0,0\n2,2,2,4,0,0\n3,1,2,4,1,0\n");
}

TEST_CASE("sweep output does not depend on thread count") {
  ExperimentConfig c;
  c.env.episode_length = 200;
  c.controller = ControllerKind::Actuated;
  c.demands = {1800, 3600};
  c.randomness = {2, 10};
  c.repetitions = 2;
  c.seed = 9;
  c.threads = 1;
  const auto one = run_sweep(c);
  c.threads = 2;
  const auto two = run_sweep(c);
  std::ostringstream a, b;
  write_runs_csv(a, one.runs);
  write_runs_csv(b, two.runs);
  CHECK(a.str() == b.str());
  REQUIRE(one.runs.size() == 8);
  CHECK(one.runs[0].demand == 1800);
  CHECK(one.runs[0].b == 2);
  CHECK(one.runs[1].rep == 1);
  CHECK(one.runs[7].demand == 3600);
  CHECK(one.aggregates.size() == 4);
  for (const auto& r : one.runs) CHECK(r.seed == cell_seed(9, r.demand, r.b, r.rep));

  // every controller sees the same traffic in a cell
  c.controller = ControllerKind::Fixed;
  const auto fixed = run_sweep(c);
  for (std::size_t i = 0; i < fixed.runs.size(); ++i) CHECK(fixed.runs[i].seed == one.runs[i].seed);

  c.controller = ControllerKind::RL;
  c.checkpoint = std::filesystem::temp_directory_path() / "gridlight_no_such_checkpoint.bin";
  CHECK(contains(error_of([&] { run_sweep(c); }), "checkpoint not found"));
}
