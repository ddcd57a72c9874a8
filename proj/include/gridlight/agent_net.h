#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gridlight/autodiff.h"
#include "gridlight/simulation.h"
#include "gridlight/state_reward.h"

namespace gridlight {

struct NetConfig {
  std::vector<int> trunk_channels{16, 32};
  int head_hidden = 64;
  int n_tls = 4;
  int in_channels = 2;
  int height = 8;
  int width = 8;
  int kernel = 3;
  double norm_eps = 1e-5;
  double policy_init_scale = 0.01;

  static NetConfig for_grid(int rows, int cols, std::vector<int> trunk = {16, 32}, int head_hidden = 64);
  void validate() const;
  int feature_size() const { return trunk_channels.back() * height * width; }

  std::map<std::string, std::string> to_manifest() const;
  static NetConfig from_manifest(const std::map<std::string, std::string>& m);
};

// Parameter names:
//   trunk.<i>.conv1 / conv2 / proj, trunk.<i>.norm1.gamma|beta, trunk.<i>.norm2.gamma|beta
//   actor.fc1.w|b, actor.fc2.w|b
//   critic.fc1.w|b, critic.fc2.w|b, critic.local.w|b, critic.global1.w|b, critic.global2.w|b
// proj exists only where a block changes the channel count.
ad::ParamSet init_network(const NetConfig& config, std::uint64_t seed);

using VarMap = std::map<std::string, ad::Var>;

// conv → norm → relu → conv → norm, plus shortcut, then relu.
ad::Var residual_block(const VarMap& p, const std::string& prefix, ad::Var x, double norm_eps = 1e-5);

struct NetVars {
  ad::Var logits;       // ⟨B·n_tls, 2⟩
  ad::Var log_policy;   // ⟨B·n_tls, 2⟩
  ad::Var policy;       // ⟨B·n_tls, 2⟩
  ad::Var local_values; // ⟨B, n_tls⟩
  ad::Var global_value; // ⟨B⟩
};

// input ⟨B, in_channels, height, width⟩
NetVars forward(const VarMap& p, const NetConfig& config, ad::Var input);

struct NetOutput {
  ad::Tensor policy;  // ⟨n_tls, 2⟩, column 0 maintain, column 1 switch
  std::vector<double> local_values;
  double global_value = 0.0;
};

NetOutput forward(const ad::ParamSet& params, const NetConfig& config, const StateTensor& state);
std::vector<NetOutput> forward_batch(const ad::ParamSet& params, const NetConfig& config, std::span<const StateTensor> states);

// Stacks states into ⟨B, C, H, W⟩.
ad::Tensor stack_states(std::span<const StateTensor> states);

std::vector<Command> sample_actions(const ad::Tensor& policy, std::mt19937_64& rng);
std::vector<Command> greedy_actions(const ad::Tensor& policy);
double log_prob(const ad::Tensor& policy, std::span<const Command> actions);
double entropy(const ad::Tensor& policy);

}  // namespace gridlight
