#include "gridlight/agent_net.h"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace gridlight {

using ad::Shape;
using ad::Tensor;
using ad::Var;

NetConfig NetConfig::for_grid(int rows, int cols, std::vector<int> trunk, int head_hidden) {
  NetConfig c;
  c.trunk_channels = std::move(trunk);
  c.head_hidden = head_hidden;
  c.n_tls = rows * cols;
  c.height = 4 * rows;
  c.width = 4 * cols;
  c.validate();
  return c;
}

void NetConfig::validate() const {
  if (trunk_channels.empty()) throw std::invalid_argument("NetConfig: trunk_channels is empty");
  for (int c : trunk_channels) {
    if (c < 1) throw std::invalid_argument("NetConfig: trunk channel counts must be positive");
  }
  if (head_hidden < 1 || n_tls < 1 || in_channels < 1 || height < 1 || width < 1) {
    throw std::invalid_argument("NetConfig: sizes must be positive");
  }
  if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("NetConfig: kernel must be odd");
}

std::map<std::string, std::string> NetConfig::to_manifest() const {
  std::ostringstream trunk;
  for (std::size_t i = 0; i < trunk_channels.size(); ++i) trunk << (i ? "," : "") << trunk_channels[i];
  std::ostringstream eps;
  eps.precision(17);
  eps << norm_eps;
  return {{"net.trunk_channels", trunk.str()}, {"net.head_hidden", std::to_string(head_hidden)},
          {"net.n_tls", std::to_string(n_tls)},  {"net.in_channels", std::to_string(in_channels)},
          {"net.height", std::to_string(height)}, {"net.width", std::to_string(width)},
          {"net.kernel", std::to_string(kernel)}, {"net.norm_eps", eps.str()}};
}

NetConfig NetConfig::from_manifest(const std::map<std::string, std::string>& m) {
  auto get = [&](const std::string& k) -> const std::string& {
    auto it = m.find(k);
    if (it == m.end()) throw std::runtime_error("checkpoint manifest lacks " + k);
    return it->second;
  };
  NetConfig c;
  c.trunk_channels.clear();
  std::istringstream ts(get("net.trunk_channels"));
  for (std::string tok; std::getline(ts, tok, ',');) c.trunk_channels.push_back(std::stoi(tok));
  c.head_hidden = std::stoi(get("net.head_hidden"));
  c.n_tls = std::stoi(get("net.n_tls"));
  c.in_channels = std::stoi(get("net.in_channels"));
  c.height = std::stoi(get("net.height"));
  c.width = std::stoi(get("net.width"));
  c.kernel = std::stoi(get("net.kernel"));
  c.norm_eps = std::stod(get("net.norm_eps"));
  c.validate();
  return c;
}

namespace {

Tensor he_normal(Shape shape, int fan_in, double gain, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> nd(0.0, gain * std::sqrt(2.0 / fan_in));
  for (double& v : t.data()) v = nd(rng);
  return t;
}

void add_dense(ad::ParamSet& p, const std::string& name, int in, int out, double gain, std::mt19937_64& rng) {
  p[name + ".w"] = he_normal({out, in}, in, gain, rng);
  p[name + ".b"] = Tensor({out});
}

Var dense_layer(const VarMap& p, const std::string& name, Var x) { return ad::dense(x, p.at(name + ".w"), p.at(name + ".b")); }

}  // namespace

ad::ParamSet init_network(const NetConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  ad::ParamSet p;
  const int k = config.kernel;
  int c_in = config.in_channels;
  for (std::size_t i = 0; i < config.trunk_channels.size(); ++i) {
    const int c_out = config.trunk_channels[i];
    const std::string pre = "trunk." + std::to_string(i);
    p[pre + ".conv1"] = he_normal({c_out, c_in, k, k}, c_in * k * k, 1.0, rng);
    p[pre + ".norm1.gamma"] = Tensor({c_out}, 1.0);
    p[pre + ".norm1.beta"] = Tensor({c_out});
    p[pre + ".conv2"] = he_normal({c_out, c_out, k, k}, c_out * k * k, 1.0, rng);
    p[pre + ".norm2.gamma"] = Tensor({c_out}, 1.0);
    p[pre + ".norm2.beta"] = Tensor({c_out});
    if (c_in != c_out) p[pre + ".proj"] = he_normal({c_out, c_in, 1, 1}, c_in, 1.0, rng);
    c_in = c_out;
  }
  const int f = config.feature_size();
  const int h = config.head_hidden;
  add_dense(p, "actor.fc1", f, h, 1.0, rng);
  add_dense(p, "actor.fc2", h, 2 * config.n_tls, config.policy_init_scale, rng);
  add_dense(p, "critic.fc1", f, h, 1.0, rng);
  add_dense(p, "critic.fc2", h, h, 1.0, rng);
  add_dense(p, "critic.local", h, config.n_tls, std::sqrt(0.5), rng);
  add_dense(p, "critic.global1", h, h, 1.0, rng);
  add_dense(p, "critic.global2", h, 1, std::sqrt(0.5), rng);
  return p;
}

Var residual_block(const VarMap& p, const std::string& prefix, Var x, double norm_eps) {
  Var y = ad::conv2d(x, p.at(prefix + ".conv1"));
  y = ad::relu(ad::channel_norm(y, p.at(prefix + ".norm1.gamma"), p.at(prefix + ".norm1.beta"), norm_eps));
  y = ad::conv2d(y, p.at(prefix + ".conv2"));
  y = ad::channel_norm(y, p.at(prefix + ".norm2.gamma"), p.at(prefix + ".norm2.beta"), norm_eps);
  auto proj = p.find(prefix + ".proj");
  Var shortcut = proj == p.end() ? x : ad::conv2d(x, proj->second);
  return ad::relu(y + shortcut);
}

NetVars forward(const VarMap& p, const NetConfig& config, Var input) {
  const Shape& s = input.shape();
  if (s.size() != 4 || s[1] != config.in_channels || s[2] != config.height || s[3] != config.width) {
    throw std::invalid_argument("forward: input " + ad::shape_str(s) + " does not match the network's <B," +
                                std::to_string(config.in_channels) + "," + std::to_string(config.height) + "," +
                                std::to_string(config.width) + ">");
  }
  const int batch = s[0];
  Var x = input;
  for (std::size_t i = 0; i < config.trunk_channels.size(); ++i) x = residual_block(p, "trunk." + std::to_string(i), x, config.norm_eps);
  Var features = ad::flatten(x);

  NetVars out;
  Var a = ad::relu(dense_layer(p, "actor.fc1", features));
  out.logits = ad::reshape(dense_layer(p, "actor.fc2", a), {batch * config.n_tls, 2});
  out.log_policy = ad::log_softmax(out.logits);
  out.policy = ad::softmax(out.logits);

  Var c = ad::relu(dense_layer(p, "critic.fc1", features));
  c = ad::relu(dense_layer(p, "critic.fc2", c));
  out.local_values = dense_layer(p, "critic.local", c);
  Var g = ad::relu(dense_layer(p, "critic.global1", c));
  out.global_value = ad::reshape(dense_layer(p, "critic.global2", g), {batch});
  return out;
}

Tensor stack_states(std::span<const StateTensor> states) {
  if (states.empty()) throw std::invalid_argument("stack_states: no states");
  const StateTensor& first = states.front();
  const std::size_t per = first.values.size();
  Tensor t({static_cast<int>(states.size()), first.channels, first.height, first.width});
  for (std::size_t i = 0; i < states.size(); ++i) {
    const StateTensor& st = states[i];
    if (st.channels != first.channels || st.height != first.height || st.width != first.width || st.values.size() != per) {
      throw std::invalid_argument("stack_states: mixed state shapes");
    }
    std::copy(st.values.begin(), st.values.end(), t.ptr() + i * per);
  }
  return t;
}

std::vector<NetOutput> forward_batch(const ad::ParamSet& params, const NetConfig& config, std::span<const StateTensor> states) {
  ad::Tape tape;
  VarMap p;
  for (const auto& [name, t] : params) p.emplace(name, tape.constant(t));
  NetVars v = forward(p, config, tape.constant(stack_states(states)));
  const Tensor& pol = v.policy.value();
  const Tensor& loc = v.local_values.value();
  const Tensor& glob = v.global_value.value();
  const std::size_t n = static_cast<std::size_t>(config.n_tls);
  std::vector<NetOutput> out(states.size());
  for (std::size_t b = 0; b < states.size(); ++b) {
    out[b].policy = Tensor({config.n_tls, 2}, std::vector<double>(pol.ptr() + b * n * 2, pol.ptr() + (b + 1) * n * 2));
    out[b].local_values.assign(loc.ptr() + b * n, loc.ptr() + (b + 1) * n);
    out[b].global_value = glob[b];
  }
  return out;
}

NetOutput forward(const ad::ParamSet& params, const NetConfig& config, const StateTensor& state) {
  return std::move(forward_batch(params, config, std::span<const StateTensor>(&state, 1)).front());
}

namespace {

void check_policy(const Tensor& policy) {
  if (policy.rank() != 2 || policy.dim(1) != 2) throw std::invalid_argument("policy must be <n_tls,2>, got " + ad::shape_str(policy.shape()));
}

}  // namespace

std::vector<Command> sample_actions(const Tensor& policy, std::mt19937_64& rng) {
  check_policy(policy);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Command> out(static_cast<std::size_t>(policy.dim(0)));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = u(rng) < policy[2 * i + 1] ? Command::Switch : Command::Maintain;
  return out;
}

std::vector<Command> greedy_actions(const Tensor& policy) {
  check_policy(policy);
  std::vector<Command> out(static_cast<std::size_t>(policy.dim(0)));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = policy[2 * i + 1] > policy[2 * i] ? Command::Switch : Command::Maintain;
  return out;
}

double log_prob(const Tensor& policy, std::span<const Command> actions) {
  check_policy(policy);
  if (actions.size() != static_cast<std::size_t>(policy.dim(0))) throw std::invalid_argument("log_prob: one action per intersection");
  double s = 0.0;
  for (std::size_t i = 0; i < actions.size(); ++i) s += std::log(policy[2 * i + static_cast<std::size_t>(actions[i])]);
  return s;
}

double entropy(const Tensor& policy) {
  check_policy(policy);
  double h = 0.0;
  for (double q : policy.data()) {
    if (q > 0.0) h -= q * std::log(q);
  }
  return h;
}

}  // namespace gridlight
