#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

#include "gridlight/bench.h"

using namespace gridlight;

namespace {

KvConfig load_config(const std::string& path, const std::vector<std::string>& sets) {
  KvConfig kv = path.empty() ? KvConfig{} : KvConfig::load(path);
  for (const auto& s : sets) kv.set(s);
  kv.require_known(known_config_keys());
  return kv;
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  return os;
}

void run_train(const KvConfig& kv, const std::filesystem::path& out, const std::string& resume, bool quiet) {
  const TrainSetup setup = train_setup_from_kv(kv);
  std::filesystem::create_directories(out);
  TrainOptions opts;
  opts.checkpoint_path = out / "checkpoint.bin";
  if (!resume.empty()) opts.resume_from = resume;

  const auto log_path = out / "train_log.csv";
  const bool append = !resume.empty() && std::filesystem::exists(log_path);
  std::ofstream log(log_path, append ? std::ios::app : std::ios::trunc);
  if (!log) throw std::runtime_error("cannot write " + log_path.string());
  if (!append) write_train_log_header(log);
  opts.on_episode = [&](const EpisodeLog& row) {
    write_train_log_row(log, row);
    log.flush();
    if (!quiet) {
      std::fprintf(stderr, "[%s] episode %d  net_outflow %.4f  pl %.4f  vl %.4f  H %.4f  lr %.2e  beta %.3f\n",
                   to_string(setup.train.reward).c_str(), row.episode, row.mean_net_outflow, row.policy_loss, row.value_loss, row.entropy,
                   row.lr, row.beta);
    }
  };
  train(setup.train, setup.env, setup.net, opts);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Grid traffic-signal reinforcement learning lab"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;

  auto* train_cmd = app.add_subcommand("train", "Train the actor-critic agent with PPO");
  std::string train_out = "run";
  std::string reward;
  std::string resume;
  bool quiet = false;
  train_cmd->add_option("-c,--config", config_path, "key = value config file");
  train_cmd->add_option("--set", sets, "Override a config key (key=value)");
  train_cmd->add_option("-o,--out", train_out, "Output directory for checkpoint.bin and train_log.csv");
  train_cmd->add_option("--reward", reward, "hybrid, global, or both (two runs in <out>/hybrid and <out>/global)")
      ->check(CLI::IsMember({"hybrid", "global", "both"}));
  train_cmd->add_option("--resume", resume, "Continue from a checkpoint");
  train_cmd->add_flag("-q,--quiet", quiet, "No per-episode progress on stderr");

  auto* eval_cmd = app.add_subcommand("eval", "Run a demand x randomness sweep for one controller");
  std::string eval_out;
  std::string controller;
  std::string checkpoint;
  eval_cmd->add_option("-c,--config", config_path, "key = value config file");
  eval_cmd->add_option("--set", sets, "Override a config key (key=value)");
  eval_cmd->add_option("--controller", controller, "rl, fixed, actuated or random")->check(CLI::IsMember({"rl", "fixed", "actuated", "random"}));
  eval_cmd->add_option("--checkpoint", checkpoint, "Trained checkpoint for the rl controller");
  eval_cmd->add_option("-o,--out", eval_out, "Output directory (overrides output.dir)");

  auto* mfd_cmd = app.add_subcommand("mfd", "Accumulation and outflow series from an event log");
  std::string mfd_log;
  std::string mfd_out;
  mfd_cmd->add_option("log", mfd_log, "Event log CSV written by eval")->required();
  mfd_cmd->add_option("-o,--out", mfd_out, "Output CSV (stdout when omitted)");

  auto* cmp_cmd = app.add_subcommand("compare", "Percentage differences between aggregate reports");
  std::vector<std::string> reports;
  std::string cmp_out;
  cmp_cmd->add_option("reports", reports, "aggregate.csv files; the first is the baseline")->required()->expected(2, -1);
  cmp_cmd->add_option("-o,--out", cmp_out, "Output CSV (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*train_cmd) {
      KvConfig kv = load_config(config_path, sets);
      if (reward == "both") {
        if (!resume.empty()) throw std::runtime_error("--resume cannot be combined with --reward both");
        for (const char* mode : {"hybrid", "global"}) {
          KvConfig k = kv;
          k.set("train.reward", mode);
          run_train(k, std::filesystem::path(train_out) / mode, "", quiet);
        }
      } else {
        if (!reward.empty()) kv.set("train.reward", reward);
        run_train(kv, train_out, resume, quiet);
      }
    } else if (*eval_cmd) {
      KvConfig kv = load_config(config_path, sets);
      if (!controller.empty()) kv.set("controller", controller);
      if (!checkpoint.empty()) kv.set("checkpoint", checkpoint);
      if (!eval_out.empty()) kv.set("output.dir", eval_out);
      const ExperimentConfig ec = ExperimentConfig::from_kv(kv);
      std::filesystem::create_directories(ec.output_dir);
      const SweepReport report = run_sweep(ec);
      auto runs = open_out(ec.output_dir / "runs.csv");
      write_runs_csv(runs, report.runs);
      auto agg = open_out(ec.output_dir / "aggregate.csv");
      write_aggregate_csv(agg, report.aggregates);
    } else if (*mfd_cmd) {
      std::ifstream is(mfd_log);
      if (!is) throw std::runtime_error("cannot open " + mfd_log);
      const auto log = read_event_log_csv(is);
      if (mfd_out.empty()) {
        write_mfd_csv(std::cout, log);
      } else {
        auto os = open_out(mfd_out);
        write_mfd_csv(os, log);
      }
    } else if (*cmp_cmd) {
      std::vector<std::vector<AggregateRow>> loaded;
      for (const auto& r : reports) {
        std::ifstream is(r);
        if (!is) throw std::runtime_error("cannot open " + r);
        loaded.push_back(read_aggregate_csv(is));
      }
      const std::vector<std::vector<AggregateRow>> others(loaded.begin() + 1, loaded.end());
      const auto rows = compare_reports(loaded.front(), others);
      if (cmp_out.empty()) {
        write_compare_csv(std::cout, rows);
      } else {
        auto os = open_out(cmp_out);
        write_compare_csv(os, rows);
      }
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
