#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gridlight/baselines.h"
#include "gridlight/kvconfig.h"
#include "gridlight/ppo.h"

namespace gridlight {

enum class ControllerKind { RL, Fixed, Actuated, Random };

ControllerKind parse_controller(const std::string& s);
std::string to_string(ControllerKind k);

// Grid and episode keys shared by train and eval.
EnvConfig env_from_kv(const KvConfig& kv);

struct TrainSetup {
  EnvConfig env;
  TrainConfig train;
  NetConfig net;
};

TrainSetup train_setup_from_kv(const KvConfig& kv);

struct ExperimentConfig {
  EnvConfig env;
  ControllerKind controller = ControllerKind::Fixed;
  std::filesystem::path checkpoint;
  bool greedy = true;
  std::vector<double> demands{2400.0};  // veh/h
  std::vector<int> randomness{10};      // b
  int repetitions = 1;
  std::uint64_t seed = 1;
  int threads = 1;
  bool event_logs = false;
  std::filesystem::path output_dir = ".";

  void validate() const;
  static ExperimentConfig from_kv(const KvConfig& kv);
};

// Config keys understood by train and eval.
const std::vector<std::string>& known_config_keys();

// Demand seed of one sweep cell; independent of the controller so every
// controller faces the same traffic.
std::uint64_t cell_seed(std::uint64_t seed, double demand, int b, int rep);

struct RunRow {
  std::string controller;
  double demand = 0.0;
  int b = 0;
  int rep = 0;
  std::uint64_t seed = 0;
  std::int64_t arrived = 0;
  std::int64_t inserted = 0;
  std::int64_t teleported = 0;
  std::optional<double> mean_waiting_time;
  std::optional<double> mean_time_loss;
  int peak_accumulation = 0;
};

struct AggregateRow {
  std::string controller;
  double demand = 0.0;
  int b = 0;
  int runs = 0;
  double mean_arrived = 0.0;
  std::optional<double> mean_waiting_time;  // over runs where it is defined
  std::optional<double> mean_time_loss;
  double mean_peak_accumulation = 0.0;
};

struct SweepReport {
  std::vector<RunRow> runs;
  std::vector<AggregateRow> aggregates;
};

std::unique_ptr<Controller> make_controller(const ExperimentConfig& config, const TrainState* policy);

// Runs every (demand, b, repetition) cell. Cells may run on several threads;
// rows are always emitted in grid order.
SweepReport run_sweep(const ExperimentConfig& config);

std::vector<AggregateRow> aggregate(const std::vector<RunRow>& runs);

void write_runs_csv(std::ostream& os, const std::vector<RunRow>& runs);
void write_aggregate_csv(std::ostream& os, const std::vector<AggregateRow>& rows);
std::vector<AggregateRow> read_aggregate_csv(std::istream& is);

// t, vehicles_on_network, cumulative_outflow, cumulative_inserted,
// cumulative_teleported, conservation_residual
void write_mfd_csv(std::ostream& os, const std::vector<LogRow>& log);

struct CompareRow {
  std::string controller;
  std::string demand;  // "average" on the summary row
  std::string b;
  double base_arrived = 0.0, arrived = 0.0, arrived_delta_pct = 0.0;
  std::optional<double> base_wait, wait, wait_delta_pct;
  std::optional<double> base_loss, loss, loss_delta_pct;
};

// Percentage differences of each report against `base`, cell by cell plus a
// summary row built from the averages of the cell means. Reports must cover
// the same (demand, b) cells.
std::vector<CompareRow> compare_reports(const std::vector<AggregateRow>& base, const std::vector<std::vector<AggregateRow>>& others);
void write_compare_csv(std::ostream& os, const std::vector<CompareRow>& rows);

}  // namespace gridlight
