#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gridlight/agent_net.h"
#include "gridlight/checkpoint.h"
#include "gridlight/environment.h"
#include "gridlight/optim.h"

namespace gridlight {

enum class RewardMode { Hybrid, Global };

RewardMode parse_reward_mode(const std::string& s);
std::string to_string(RewardMode m);

struct TrainConfig {
  int horizon = 64;            // T
  int actors = 16;             // N
  int epochs = 3;              // K
  int minibatch_size = 1024;   // samples per gradient step
  int episodes = 50;
  double gamma = 0.99;
  double lambda = 0.95;
  double epsilon0 = 0.1;
  double lr0 = 1e-4;
  double c1 = 1.0;
  double c2 = 0.01;
  RewardMode reward = RewardMode::Hybrid;
  bool train_local_critic = true;
  std::uint64_t seed = 1;
  int threads = 1;

  void validate() const;
  int minibatches_per_epoch() const { return actors * horizon / minibatch_size; }
};

// Running mean/variance (Welford) over every reward seen so far.
class RewardNormalizer {
 public:
  double normalize(double raw);
  double mean() const { return mean_; }
  double variance() const { return count_ > 0 ? m2_ / static_cast<double>(count_) : 0.0; }
  std::int64_t count() const { return count_; }

  void restore(std::int64_t count, double mean, double m2) {
    count_ = count;
    mean_ = mean;
    m2_ = m2;
  }
  double m2() const { return m2_; }

 private:
  std::int64_t count_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

// Samples are actor-major: index = n·T + t. Per-intersection arrays append n_tls
// entries per sample.
struct RolloutBatch {
  int actors = 0;
  int horizon = 0;
  int n_tls = 0;
  std::vector<StateTensor> states;
  std::vector<int> actions;
  std::vector<double> log_prob_old;
  std::vector<double> rewards;         // normalized hybrid
  std::vector<double> raw_global;      // net outflow before normalization
  std::vector<double> values;          // global critic
  std::vector<double> dones;
  std::vector<double> local_rewards;   // normalized
  std::vector<double> local_values;
  std::vector<double> bootstrap;       // per actor, V(s_{T+1})
  std::vector<double> bootstrap_locals;
  std::vector<double> advantages;
  std::vector<double> returns;
  std::vector<double> local_advantages;
  std::vector<double> local_returns;

  std::size_t size() const { return static_cast<std::size_t>(actors) * static_cast<std::size_t>(horizon); }
};

struct Normalizers {
  RewardNormalizer hybrid;
  RewardNormalizer local;
};

// Steps every env T times under the current policy. Actions are drawn from
// rngs[n]; envs that finish mid-collection are marked done and reset.
RolloutBatch collect_rollouts(std::span<TrafficEnv> envs, std::span<std::mt19937_64> rngs, const ad::ParamSet& params,
                              const NetConfig& net, int horizon, double beta, Normalizers& norm, int threads = 1);

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// values holds T+1 entries (bootstrap last); done_t cuts both the bootstrap and the recursion.
GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values, std::span<const double> dones,
                      double gamma, double lambda);

// Fills advantages/returns (global and local) of a collected batch.
void compute_batch_advantages(RolloutBatch& batch, double gamma, double lambda);

// Zero mean, unit std; a constant vector maps to zeros.
void normalize_advantages(std::span<double> adv);

// −mean(min(r·Â, clip(r, 1−ε, 1+ε)·Â)) with r = exp(new − old).
ad::Var policy_loss(ad::Var log_prob_new, const ad::Tensor& log_prob_old, const ad::Tensor& advantages, double epsilon);

// mean(½·[(v − R)² + (v_old + clip(v − v_old, −ε, ε) − R)²]).
ad::Var value_loss(ad::Var v_new, const ad::Tensor& v_old, const ad::Tensor& returns, double epsilon);

ad::Var total_objective(ad::Var policy_loss, ad::Var value_loss, ad::Var entropy, double c1, double c2);

struct Minibatch {
  ad::Tensor states;        // ⟨M,C,H,W⟩
  std::vector<int> actions; // M·n_tls
  ad::Tensor log_prob_old;  // ⟨M⟩
  ad::Tensor advantages;    // ⟨M⟩
  ad::Tensor values_old;    // ⟨M⟩
  ad::Tensor returns;       // ⟨M⟩
  ad::Tensor local_values_old;  // ⟨M·n_tls⟩
  ad::Tensor local_returns;     // ⟨M·n_tls⟩
};

Minibatch gather_minibatch(const RolloutBatch& batch, std::span<const std::size_t> indices);

struct LossTerms {
  ad::Var total;
  ad::Var policy;
  ad::Var value;
  ad::Var entropy;  // mean over samples of the summed per-intersection entropy
};

// Assembles the full training loss for one minibatch. The local critic adds
// its own clipped value loss against local returns when enabled.
LossTerms ppo_loss(const VarMap& params, const NetConfig& net, const Minibatch& mb, double epsilon, double c1, double c2,
                   bool train_local_critic);

struct EpisodeLog {
  int episode = 0;
  double mean_net_outflow = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double lr = 0.0;
  double epsilon = 0.0;
  double beta = 0.0;
};

void write_train_log_header(std::ostream& os);
void write_train_log_row(std::ostream& os, const EpisodeLog& row);

struct TrainState {
  NetConfig net;
  ad::ParamSet params;
  ad::AdamState adam;
  Normalizers norm;
  int next_episode = 0;
};

ad::Checkpoint to_checkpoint(const TrainState& state, const TrainConfig& config);
TrainState from_checkpoint(const ad::Checkpoint& ckpt);
TrainState load_train_state(const std::filesystem::path& path);

struct TrainOptions {
  std::optional<std::filesystem::path> checkpoint_path;  // rewritten after every episode
  std::optional<std::filesystem::path> resume_from;
  std::function<void(const EpisodeLog&)> on_episode;
};

struct TrainResult {
  TrainState state;
  std::vector<EpisodeLog> log;
};

TrainResult train(const TrainConfig& config, const EnvConfig& env, const NetConfig& net, const TrainOptions& options = {});

// Drives an env from a trained network. Greedy picks the likelier action per
// intersection; otherwise actions are sampled.
class PolicyController : public Controller {
 public:
  PolicyController(ad::ParamSet params, NetConfig net, bool greedy, std::uint64_t seed = 0);
  void reset(TrafficEnv& env) override;
  std::vector<Command> act(const TrafficEnv& env) override;

 private:
  ad::ParamSet params_;
  NetConfig net_;
  bool greedy_;
  std::uint64_t seed_;
  std::mt19937_64 rng_;
};

}  // namespace gridlight
