#include "gridlight/ppo.h"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "gridlight/parallel.h"

namespace gridlight {

using ad::Tensor;
using ad::Var;

RewardMode parse_reward_mode(const std::string& s) {
  if (s == "hybrid") return RewardMode::Hybrid;
  if (s == "global") return RewardMode::Global;
  throw std::invalid_argument("unknown reward mode '" + s + "' (expected hybrid or global)");
}

std::string to_string(RewardMode m) { return m == RewardMode::Hybrid ? "hybrid" : "global"; }

void TrainConfig::validate() const {
  if (horizon < 1 || actors < 1 || epochs < 1 || episodes < 1 || minibatch_size < 1) {
    throw std::invalid_argument("TrainConfig: horizon, actors, epochs, episodes and minibatch_size must be positive");
  }
  if ((actors * horizon) % minibatch_size != 0) {
    throw std::invalid_argument("TrainConfig: minibatch_size " + std::to_string(minibatch_size) + " does not divide N*T = " +
                                std::to_string(actors * horizon));
  }
  if (!(gamma >= 0.0 && gamma <= 1.0) || !(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("TrainConfig: gamma and lambda must lie in [0,1]");
  if (!(epsilon0 > 0.0) || !(lr0 > 0.0)) throw std::invalid_argument("TrainConfig: epsilon and learning rate must be positive");
  if (threads < 1) throw std::invalid_argument("TrainConfig: threads must be >= 1");
}

double RewardNormalizer::normalize(double raw) {
  ++count_;
  const double d = raw - mean_;
  mean_ += d / static_cast<double>(count_);
  m2_ += d * (raw - mean_);
  const double sd = std::sqrt(variance());
  return (raw - mean_) / std::max(sd, 1e-8);
}

// ---- rollouts ----------------------------------------------------------------

RolloutBatch collect_rollouts(std::span<TrafficEnv> envs, std::span<std::mt19937_64> rngs, const ad::ParamSet& params,
                              const NetConfig& net, int horizon, double beta, Normalizers& norm, int threads) {
  if (envs.empty() || envs.size() != rngs.size()) throw std::invalid_argument("collect_rollouts: one rng per env required");
  if (horizon < 1) throw std::invalid_argument("collect_rollouts: horizon must be positive");
  const std::size_t n_env = envs.size();
  const std::size_t T = static_cast<std::size_t>(horizon);
  const std::size_t k = static_cast<std::size_t>(net.n_tls);

  RolloutBatch b;
  b.actors = static_cast<int>(n_env);
  b.horizon = horizon;
  b.n_tls = net.n_tls;
  const std::size_t total = n_env * T;
  b.states.resize(total);
  b.actions.resize(total * k);
  b.log_prob_old.resize(total);
  b.rewards.resize(total);
  b.raw_global.resize(total);
  b.values.resize(total);
  b.dones.resize(total);
  b.local_rewards.resize(total * k);
  b.local_values.resize(total * k);
  b.bootstrap.assign(n_env, 0.0);
  b.bootstrap_locals.assign(n_env * k, 0.0);

  std::vector<StateTensor> obs(n_env);
  std::vector<std::vector<Command>> cmds(n_env);
  std::vector<EnvStep> results(n_env);

  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t n = 0; n < n_env; ++n) obs[n] = envs[n].observe();
    const auto out = forward_batch(params, net, obs);
    for (std::size_t n = 0; n < n_env; ++n) {
      const std::size_t i = n * T + t;
      cmds[n] = sample_actions(out[n].policy, rngs[n]);
      b.states[i] = obs[n];
      b.log_prob_old[i] = log_prob(out[n].policy, cmds[n]);
      b.values[i] = out[n].global_value;
      for (std::size_t j = 0; j < k; ++j) {
        b.actions[i * k + j] = static_cast<int>(cmds[n][j]);
        b.local_values[i * k + j] = out[n].local_values[j];
      }
    }
    parallel_for(n_env, threads, [&](std::size_t n) { results[n] = envs[n].step(cmds[n]); });
    // Normalizer updates run in fixed env order regardless of threading.
    for (std::size_t n = 0; n < n_env; ++n) {
      const std::size_t i = n * T + t;
      const RewardParts parts = compute_rewards(results[n].events, results[n].frame, beta);
      b.raw_global[i] = parts.global;
      b.rewards[i] = norm.hybrid.normalize(parts.hybrid);
      for (std::size_t j = 0; j < k; ++j) b.local_rewards[i * k + j] = norm.local.normalize(parts.locals[j]);
      b.dones[i] = results[n].done ? 1.0 : 0.0;
      if (results[n].done && t + 1 < T) envs[n].reset(mix_seed(envs[n].seed(), 0x5eed));
    }
  }

  std::vector<std::size_t> live;
  for (std::size_t n = 0; n < n_env; ++n) {
    if (b.dones[n * T + T - 1] == 0.0) live.push_back(n);
  }
  if (!live.empty()) {
    std::vector<StateTensor> tail;
    for (std::size_t n : live) tail.push_back(envs[n].observe());
    const auto out = forward_batch(params, net, tail);
    for (std::size_t q = 0; q < live.size(); ++q) {
      b.bootstrap[live[q]] = out[q].global_value;
      for (std::size_t j = 0; j < k; ++j) b.bootstrap_locals[live[q] * k + j] = out[q].local_values[j];
    }
  }
  return b;
}

// ---- advantages ----------------------------------------------------------------

GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values, std::span<const double> dones, double gamma,
                      double lambda) {
  const std::size_t T = rewards.size();
  if (values.size() != T + 1 || dones.size() != T) {
    throw std::invalid_argument("compute_gae: expected " + std::to_string(T) + " rewards/dones and " + std::to_string(T + 1) +
                                " values, got " + std::to_string(dones.size()) + "/" + std::to_string(values.size()));
  }
  GaeResult r;
  r.advantages.assign(T, 0.0);
  r.returns.assign(T, 0.0);
  double next = 0.0;
  for (std::size_t t = T; t-- > 0;) {
    const double keep = 1.0 - dones[t];
    const double delta = rewards[t] + gamma * values[t + 1] * keep - values[t];
    next = delta + gamma * lambda * keep * next;
    r.advantages[t] = next;
    r.returns[t] = next + values[t];
  }
  return r;
}

void compute_batch_advantages(RolloutBatch& b, double gamma, double lambda) {
  const std::size_t T = static_cast<std::size_t>(b.horizon);
  const std::size_t k = static_cast<std::size_t>(b.n_tls);
  b.advantages.assign(b.size(), 0.0);
  b.returns.assign(b.size(), 0.0);
  b.local_advantages.assign(b.size() * k, 0.0);
  b.local_returns.assign(b.size() * k, 0.0);
  std::vector<double> r(T), v(T + 1), d(T);
  for (std::size_t n = 0; n < static_cast<std::size_t>(b.actors); ++n) {
    const std::size_t base = n * T;
    std::copy_n(b.dones.begin() + static_cast<std::ptrdiff_t>(base), T, d.begin());
    std::copy_n(b.rewards.begin() + static_cast<std::ptrdiff_t>(base), T, r.begin());
    std::copy_n(b.values.begin() + static_cast<std::ptrdiff_t>(base), T, v.begin());
    v[T] = b.bootstrap[n];
    GaeResult g = compute_gae(r, v, d, gamma, lambda);
    std::copy(g.advantages.begin(), g.advantages.end(), b.advantages.begin() + static_cast<std::ptrdiff_t>(base));
    std::copy(g.returns.begin(), g.returns.end(), b.returns.begin() + static_cast<std::ptrdiff_t>(base));
    for (std::size_t j = 0; j < k; ++j) {
      for (std::size_t t = 0; t < T; ++t) {
        r[t] = b.local_rewards[(base + t) * k + j];
        v[t] = b.local_values[(base + t) * k + j];
      }
      v[T] = b.bootstrap_locals[n * k + j];
      GaeResult gl = compute_gae(r, v, d, gamma, lambda);
      for (std::size_t t = 0; t < T; ++t) {
        b.local_advantages[(base + t) * k + j] = gl.advantages[t];
        b.local_returns[(base + t) * k + j] = gl.returns[t];
      }
    }
  }
}

void normalize_advantages(std::span<double> adv) {
  if (adv.empty()) return;
  const double n = static_cast<double>(adv.size());
  const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / n;
  double var = 0.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / n);
  for (double& a : adv) a = sd > 1e-12 ? (a - mean) / sd : 0.0;
}

// ---- losses ----------------------------------------------------------------------

Var policy_loss(Var log_prob_new, const Tensor& log_prob_old, const Tensor& advantages, double epsilon) {
  if (log_prob_new.shape() != log_prob_old.shape() || log_prob_old.shape() != advantages.shape()) {
    throw std::invalid_argument("policy_loss: shape mismatch");
  }
  ad::Tape* tape = log_prob_new.tape();
  Var adv = tape->constant(advantages);
  Var ratio = ad::exp(log_prob_new - tape->constant(log_prob_old));
  Var unclipped = ratio * adv;
  Var clipped = ad::clip(ratio, 1.0 - epsilon, 1.0 + epsilon) * adv;
  return -ad::mean(ad::minimum(unclipped, clipped));
}

Var value_loss(Var v_new, const Tensor& v_old, const Tensor& returns, double epsilon) {
  if (v_new.shape() != v_old.shape() || v_old.shape() != returns.shape()) throw std::invalid_argument("value_loss: shape mismatch");
  ad::Tape* tape = v_new.tape();
  Var old = tape->constant(v_old);
  Var ret = tape->constant(returns);
  Var v_clipped = old + ad::clip(v_new - old, -epsilon, epsilon);
  return ad::mean(0.5 * (ad::square(v_new - ret) + ad::square(v_clipped - ret)));
}

Var total_objective(Var policy_loss, Var value_loss, Var entropy, double c1, double c2) {
  return policy_loss + c1 * value_loss - c2 * entropy;
}

Minibatch gather_minibatch(const RolloutBatch& b, std::span<const std::size_t> indices) {
  if (indices.empty()) throw std::invalid_argument("gather_minibatch: empty index set");
  const int m = static_cast<int>(indices.size());
  const std::size_t k = static_cast<std::size_t>(b.n_tls);
  Minibatch mb;
  std::vector<StateTensor> states;
  states.reserve(indices.size());
  mb.log_prob_old = Tensor({m});
  mb.advantages = Tensor({m});
  mb.values_old = Tensor({m});
  mb.returns = Tensor({m});
  mb.local_values_old = Tensor({m * b.n_tls});
  mb.local_returns = Tensor({m * b.n_tls});
  mb.actions.resize(indices.size() * k);
  for (std::size_t q = 0; q < indices.size(); ++q) {
    const std::size_t i = indices[q];
    if (i >= b.size()) throw std::out_of_range("gather_minibatch: sample index");
    states.push_back(b.states[i]);
    mb.log_prob_old[q] = b.log_prob_old[i];
    mb.advantages[q] = b.advantages[i];
    mb.values_old[q] = b.values[i];
    mb.returns[q] = b.returns[i];
    for (std::size_t j = 0; j < k; ++j) {
      mb.actions[q * k + j] = b.actions[i * k + j];
      mb.local_values_old[q * k + j] = b.local_values[i * k + j];
      mb.local_returns[q * k + j] = b.local_returns[i * k + j];
    }
  }
  mb.states = stack_states(states);
  return mb;
}

LossTerms ppo_loss(const VarMap& params, const NetConfig& net, const Minibatch& mb, double epsilon, double c1, double c2,
                   bool train_local_critic) {
  if (params.empty()) throw std::invalid_argument("ppo_loss: no parameters");
  ad::Tape* tape = params.begin()->second.tape();
  const int m = mb.states.dim(0);
  NetVars out = forward(params, net, tape->constant(mb.states));

  Var picked = ad::pick(out.log_policy, mb.actions);
  Var log_prob_new = ad::row_sum(ad::reshape(picked, {m, net.n_tls}));

  LossTerms terms;
  terms.policy = policy_loss(log_prob_new, mb.log_prob_old, mb.advantages, epsilon);
  terms.value = value_loss(out.global_value, mb.values_old, mb.returns, epsilon);
  if (train_local_critic) {
    Var local = ad::reshape(out.local_values, {m * net.n_tls});
    terms.value = terms.value + value_loss(local, mb.local_values_old, mb.local_returns, epsilon);
  }
  terms.entropy = ad::scale(ad::sum(out.policy * out.log_policy), -1.0 / m);
  terms.total = total_objective(terms.policy, terms.value, terms.entropy, c1, c2);
  return terms;
}

// ---- logs / checkpoints ------------------------------------------------------------

void write_train_log_header(std::ostream& os) { os << "episode,mean_net_outflow,policy_loss,value_loss,entropy,lr,epsilon,beta\n"; }

void write_train_log_row(std::ostream& os, const EpisodeLog& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.episode, r.mean_net_outflow, r.policy_loss, r.value_loss,
                r.entropy, r.lr, r.epsilon, r.beta);
  os << buf;
}

namespace {

std::string hexf(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

const std::string& need(const std::map<std::string, std::string>& m, const std::string& key) {
  auto it = m.find(key);
  if (it == m.end()) throw std::runtime_error("checkpoint manifest lacks " + key);
  return it->second;
}

}  // namespace

ad::Checkpoint to_checkpoint(const TrainState& s, const TrainConfig& config) {
  ad::Checkpoint c;
  c.manifest = s.net.to_manifest();
  c.manifest["train.next_episode"] = std::to_string(s.next_episode);
  c.manifest["train.episodes"] = std::to_string(config.episodes);
  c.manifest["train.reward"] = to_string(config.reward);
  c.manifest["train.seed"] = std::to_string(config.seed);
  c.manifest["adam.step"] = std::to_string(s.adam.step);
  c.manifest["adam.beta1"] = hexf(s.adam.config.beta1);
  c.manifest["adam.beta2"] = hexf(s.adam.config.beta2);
  c.manifest["adam.eps"] = hexf(s.adam.config.eps);
  auto put_norm = [&](const std::string& key, const RewardNormalizer& n) {
    c.manifest[key + ".count"] = std::to_string(n.count());
    c.manifest[key + ".mean"] = hexf(n.mean());
    c.manifest[key + ".m2"] = hexf(n.m2());
  };
  put_norm("norm.hybrid", s.norm.hybrid);
  put_norm("norm.local", s.norm.local);
  for (const auto& [name, t] : s.params) c.tensors["param/" + name] = t;
  for (const auto& [name, t] : s.adam.m) c.tensors["adam.m/" + name] = t;
  for (const auto& [name, t] : s.adam.v) c.tensors["adam.v/" + name] = t;
  return c;
}

TrainState from_checkpoint(const ad::Checkpoint& c) {
  TrainState s;
  s.net = NetConfig::from_manifest(c.manifest);
  auto it = c.manifest.find("train.next_episode");
  s.next_episode = it == c.manifest.end() ? 0 : std::stoi(it->second);
  if (c.manifest.count("adam.step")) {
    s.adam.step = std::stoll(need(c.manifest, "adam.step"));
    s.adam.config.beta1 = std::stod(need(c.manifest, "adam.beta1"));
    s.adam.config.beta2 = std::stod(need(c.manifest, "adam.beta2"));
    s.adam.config.eps = std::stod(need(c.manifest, "adam.eps"));
  }
  auto get_norm = [&](const std::string& key, RewardNormalizer& n) {
    if (!c.manifest.count(key + ".count")) return;
    n.restore(std::stoll(need(c.manifest, key + ".count")), std::stod(need(c.manifest, key + ".mean")),
              std::stod(need(c.manifest, key + ".m2")));
  };
  get_norm("norm.hybrid", s.norm.hybrid);
  get_norm("norm.local", s.norm.local);
  for (const auto& [name, t] : c.tensors) {
    if (name.starts_with("param/")) s.params[name.substr(6)] = t;
    else if (name.starts_with("adam.m/")) s.adam.m[name.substr(7)] = t;
    else if (name.starts_with("adam.v/")) s.adam.v[name.substr(7)] = t;
  }
  const ad::ParamSet expected = init_network(s.net, 0);
  for (const auto& [name, t] : expected) {
    auto p = s.params.find(name);
    if (p == s.params.end()) throw std::runtime_error("checkpoint lacks parameter " + name);
    if (p->second.shape() != t.shape()) throw std::runtime_error("checkpoint parameter " + name + " has shape " + ad::shape_str(p->second.shape()));
  }
  if (s.params.size() != expected.size()) throw std::runtime_error("checkpoint holds parameters the network does not use");
  return s;
}

TrainState load_train_state(const std::filesystem::path& path) { return from_checkpoint(ad::read_checkpoint(path)); }

// ---- training loop ----------------------------------------------------------------------

namespace {

std::uint64_t env_seed(std::uint64_t run_seed, int episode, int actor) {
  return mix_seed(run_seed, static_cast<std::uint64_t>(episode) + 1, static_cast<std::uint64_t>(actor) + 1);
}

}  // namespace

TrainResult train(const TrainConfig& config, const EnvConfig& env_config, const NetConfig& net_config, const TrainOptions& options) {
  config.validate();
  net_config.validate();
  if (net_config.n_tls != env_config.rows * env_config.cols || net_config.height != 4 * env_config.rows ||
      net_config.width != 4 * env_config.cols) {
    throw std::invalid_argument("train: network shape does not match the grid");
  }

  TrainResult result;
  TrainState& st = result.state;
  if (options.resume_from) {
    st = load_train_state(*options.resume_from);
    if (st.net.to_manifest() != net_config.to_manifest()) throw std::invalid_argument("train: resumed checkpoint has a different network");
  } else {
    st.net = net_config;
    st.params = init_network(net_config, mix_seed(config.seed, 0x1417));
  }

  const World world = World::build(env_config);
  const int L = env_config.episode_length;
  const int num_mb = config.minibatches_per_epoch();

  std::vector<TrafficEnv> envs;
  envs.reserve(static_cast<std::size_t>(config.actors));
  for (int n = 0; n < config.actors; ++n) envs.emplace_back(world, env_config, env_seed(config.seed, st.next_episode, n));
  std::vector<std::mt19937_64> rngs(static_cast<std::size_t>(config.actors));

  for (int episode = st.next_episode; episode < config.episodes; ++episode) {
    const double alpha = 1.0 - static_cast<double>(episode) / config.episodes;
    EpisodeLog row;
    row.episode = episode;
    row.lr = config.lr0 * alpha;
    row.epsilon = config.epsilon0 * alpha;
    row.beta = config.reward == RewardMode::Global
                   ? 1.0
                   : beta_schedule(config.episodes > 1 ? static_cast<double>(episode) / (config.episodes - 1) : 1.0);

    for (int n = 0; n < config.actors; ++n) {
      envs[static_cast<std::size_t>(n)].reset(env_seed(config.seed, episode, n));
      rngs[static_cast<std::size_t>(n)].seed(mix_seed(config.seed, 0xac7, static_cast<std::uint64_t>(episode) * 1009 + static_cast<std::uint64_t>(n)));
    }
    std::mt19937_64 shuffle_rng(mix_seed(config.seed, 0x5fu, static_cast<std::uint64_t>(episode)));

    double outflow = 0.0;
    std::size_t outflow_n = 0;
    double pl_sum = 0.0, vl_sum = 0.0, ent_sum = 0.0;
    int updates = 0;

    for (int done_steps = 0; done_steps < L;) {
      const int T = std::min(config.horizon, L - done_steps);
      RolloutBatch batch = collect_rollouts(envs, rngs, st.params, st.net, T, row.beta, st.norm, config.threads);
      done_steps += T;
      for (double g : batch.raw_global) outflow += g;
      outflow_n += batch.raw_global.size();

      compute_batch_advantages(batch, config.gamma, config.lambda);
      normalize_advantages(batch.advantages);

      const std::size_t B = batch.size();
      const std::size_t chunks = std::min<std::size_t>(static_cast<std::size_t>(num_mb), B);
      std::vector<std::size_t> order(B);
      for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (std::size_t c = 0; c < chunks; ++c) {
          const std::size_t lo = c * B / chunks;
          const std::size_t hi = (c + 1) * B / chunks;
          std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(lo), order.begin() + static_cast<std::ptrdiff_t>(hi));
          std::sort(idx.begin(), idx.end());
          const Minibatch mb = gather_minibatch(batch, idx);

          ad::Tape tape;
          const VarMap vars = tape.parameters(st.params);
          const LossTerms terms = ppo_loss(vars, st.net, mb, row.epsilon, config.c1, config.c2, config.train_local_critic);
          const double total = terms.total.value().item();
          if (!std::isfinite(total)) {
            throw std::runtime_error("training diverged: non-finite loss at episode " + std::to_string(episode));
          }
          pl_sum += terms.policy.value().item();
          vl_sum += terms.value.value().item();
          ent_sum += terms.entropy.value().item();
          ++updates;
          const ad::Gradients grads = tape.backward(terms.total);
          ad::adam_step(st.params, grads, st.adam, row.lr);
        }
      }
    }

    row.mean_net_outflow = outflow_n ? outflow / static_cast<double>(outflow_n) : 0.0;
    row.policy_loss = updates ? pl_sum / updates : 0.0;
    row.value_loss = updates ? vl_sum / updates : 0.0;
    row.entropy = updates ? ent_sum / updates : 0.0;
    st.next_episode = episode + 1;
    result.log.push_back(row);
    if (options.checkpoint_path) ad::write_checkpoint(*options.checkpoint_path, to_checkpoint(st, config));
    if (options.on_episode) options.on_episode(row);
  }
  return result;
}

// ---- evaluation controller ------------------------------------------------------------------

PolicyController::PolicyController(ad::ParamSet params, NetConfig net, bool greedy, std::uint64_t seed)
    : params_(std::move(params)), net_(std::move(net)), greedy_(greedy), seed_(seed), rng_(seed) {}

void PolicyController::reset(TrafficEnv& env) {
  if (env.tls_count() != net_.n_tls) throw std::invalid_argument("PolicyController: network trained for a different grid");
  rng_.seed(mix_seed(seed_, env.seed()));
}

std::vector<Command> PolicyController::act(const TrafficEnv& env) {
  const NetOutput out = forward(params_, net_, env.observe());
  return greedy_ ? greedy_actions(out.policy) : sample_actions(out.policy, rng_);
}

}  // namespace gridlight
