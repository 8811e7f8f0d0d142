#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "riftlab/intervention.hpp"
#include "riftlab/residual.hpp"
#include "riftlab/rng.hpp"
#include "riftlab/soft_rl.hpp"
#include "riftlab/tabular_mdp.hpp"

namespace riftlab {

// Whether an e-stop transition bootstraps from its successor state. With
// truncation the critic target is -e + gamma V(s') for every record; with
// termination records that ended in a stop lose the bootstrap (target -e),
// which implicitly rewrites the dynamics to absorb at interventions.
enum class BootstrapMode { truncation, termination };

// How the residual critic is fit from a dataset: model_based tabulates the
// empirical stop probability and solves the residual Bellman equation
// exactly (truncation semantics built in); sample_based runs a fitted
// iteration over the raw records and supports both bootstrap modes.
enum class FitMethod { model_based, sample_based };

struct RiftConfig {
  double omega = 1e-3;          // KL anchoring weight; 0 dispatches to RLIF
  int rounds = 10;
  int episodes_per_round = 50;
  int max_horizon = 100;
  BootstrapMode bootstrap_mode = BootstrapMode::truncation;
  FitMethod fit_method = FitMethod::model_based;
  double rlif_temperature = 0.01;  // entropy temperature, used only when omega = 0
  double phi_default = 0.0;        // estimate for state-action pairs never visited
  bool fresh_data_per_round = false;
  bool zero_residual_reward = false;  // drop the -e reward, keep the stop events
  double stop_intervention_rate = -1.0;  // early stop when rate < this; negative disables
  int eval_episodes = 200;
  double success_threshold = 0.5;
  double fit_tol = kDefaultSolverTol;
  int fit_max_iters = kDefaultSolverMaxIters;
  std::uint64_t seed = 0;
};

struct RunMetrics {
  int round = 0;  // 0 is the prior before any training
  double success_rate = 0.0;
  double mean_return = 0.0;
  double intervention_rate = 0.0;
  double kl_to_prior = 0.0;
  long dataset_size = 0;
};

struct RiftResult {
  PolicyTable policy;
  std::vector<RunMetrics> metrics;
};

struct PolicyEvalResult {
  double success_rate = 0.0;
  double mean_return = 0.0;
  double exact_discounted_return = 0.0;
};

inline void append_dataset(RolloutDataset& dst, const RolloutDataset& src) {
  const int base = dst.records.empty() ? 0 : static_cast<int>(dst.records.size());
  if (dst.episode_offsets.empty()) dst.episode_offsets.push_back(0);
  dst.records.insert(dst.records.end(), src.records.begin(), src.records.end());
  for (std::size_t e = 1; e < src.episode_offsets.size(); ++e)
    dst.episode_offsets.push_back(base + src.episode_offsets[e]);
  dst.end_causes.insert(dst.end_causes.end(), src.end_causes.begin(), src.end_causes.end());
}

// Empirical stop probability per state-action pair; pairs never visited get
// default_value (0 by default: unobserved pairs are treated as safe, the
// anchoring to the prior is what keeps the policy from exploiting them).
inline Mat estimate_phi(const RolloutDataset& ds, int num_states, int num_actions,
                        double default_value = 0.0) {
  Mat counts = Mat::Zero(num_states, num_actions);
  Mat stops = Mat::Zero(num_states, num_actions);
  for (const TransitionRecord& r : ds.records) {
    counts(r.state, r.action) += 1.0;
    stops(r.state, r.action) += r.estop;
  }
  Mat phi(num_states, num_actions);
  for (int s = 0; s < num_states; ++s)
    for (int a = 0; a < num_actions; ++a)
      phi(s, a) = counts(s, a) > 0.0 ? stops(s, a) / counts(s, a) : default_value;
  return phi;
}

// Fitted soft-Q iteration over raw records. The per-pair target is the
// empirical mean of
//   reward_term + gate * gamma * softv(s'),
// where reward_term is -e (or 0 when zero_reward), gate is 1 under
// truncation and 1[e = 0] under termination, and
//   softv(s) = temperature * log sum_a exp((q(s,a) + temperature * log_prior(s,a)) / temperature).
// A zero log_prior makes this plain soft Q-learning. Pairs never visited stay
// at their initialization q = 0, which keeps the induced policy at the prior
// (or uniform when log_prior = 0) on unexplored pairs.
inline Mat fitted_soft_q_from_dataset(const TabularMdp& mdp, const RolloutDataset& ds,
                                      double temperature, const Mat& log_prior, BootstrapMode mode,
                                      bool zero_reward, double tol = kDefaultSolverTol,
                                      int max_iters = kDefaultSolverMaxIters) {
  if (!(temperature > 0.0))
    throw std::invalid_argument("fitted_soft_q_from_dataset: temperature must be positive");
  if (ds.records.empty()) throw std::invalid_argument("fitted_soft_q_from_dataset: empty dataset");

  const int n = mdp.num_states * mdp.num_actions;
  std::vector<double> count(n, 0.0), reward_sum(n, 0.0);
  struct Boot {
    int sa;
    int next;
    double weight;
  };
  std::vector<Boot> boots;
  boots.reserve(ds.records.size());
  for (const TransitionRecord& r : ds.records) {
    const int sa = mdp.sa_index(r.state, r.action);
    count[sa] += 1.0;
    if (!zero_reward) reward_sum[sa] -= r.estop;
    const bool gated = mode == BootstrapMode::termination && r.estop;
    if (!gated) boots.push_back({sa, r.next_state, 1.0});
  }

  Mat q = Mat::Zero(mdp.num_states, mdp.num_actions);
  Vec softv(mdp.num_states);
  for (int it = 0; it < max_iters; ++it) {
    const Mat anchored = q + temperature * log_prior;
    for (int s = 0; s < mdp.num_states; ++s) softv(s) = log_sum_exp(anchored.row(s), temperature);
    std::vector<double> target(n, 0.0);
    for (const Boot& b : boots) target[b.sa] += b.weight * softv(b.next);
    double residual = 0.0;
    for (int s = 0; s < mdp.num_states; ++s) {
      for (int a = 0; a < mdp.num_actions; ++a) {
        const int sa = mdp.sa_index(s, a);
        if (count[sa] == 0.0) continue;
        const double next_q = (reward_sum[sa] + mdp.discount * target[sa]) / count[sa];
        residual = std::max(residual, std::abs(next_q - q(s, a)));
        q(s, a) = next_q;
      }
    }
    if (residual <= tol) return q;
  }
  throw std::runtime_error("fitted_soft_q_from_dataset: no convergence after " +
                           std::to_string(max_iters) + " iterations");
}

// Fits the fine-tuned policy from an e-stop dataset, anchored to the prior at
// weight cfg.omega. Model-based fitting requires truncation mode (the exact
// residual solve has no notion of terminated bootstraps).
inline PolicyTable fit_residual_from_dataset(const TabularMdp& mdp, const PolicyTable& prior,
                                             const RolloutDataset& ds, const RiftConfig& cfg) {
  check_prior_interior(prior);
  if (cfg.fit_method == FitMethod::model_based) {
    if (cfg.bootstrap_mode == BootstrapMode::termination)
      throw std::invalid_argument("fit_residual_from_dataset: termination requires sample_based fitting");
    Mat residual_reward = cfg.zero_residual_reward
                              ? Mat::Zero(mdp.num_states, mdp.num_actions)
                              : Mat(-estimate_phi(ds, mdp.num_states, mdp.num_actions, cfg.phi_default));
    return policy_from_residual(residual_soft_q_iteration(mdp, prior, residual_reward, cfg.omega,
                                                          cfg.fit_tol, cfg.fit_max_iters));
  }
  const Mat log_prior = prior.probs.array().log().matrix();
  const Mat q = fitted_soft_q_from_dataset(mdp, ds, cfg.omega, log_prior, cfg.bootstrap_mode,
                                           cfg.zero_residual_reward, cfg.fit_tol, cfg.fit_max_iters);
  return policy_from_q(SoftQTable{(q + cfg.omega * log_prior) / cfg.omega, 1.0});
}

// RLIF fit: plain max-ent RL on the -e reward at cfg.rlif_temperature, no
// prior anchoring, critic initialized at zero.
inline PolicyTable rlif_fit_from_dataset(const TabularMdp& mdp, const RolloutDataset& ds,
                                         const RiftConfig& cfg) {
  if (cfg.fit_method == FitMethod::model_based) {
    if (cfg.bootstrap_mode == BootstrapMode::termination)
      throw std::invalid_argument("rlif_fit_from_dataset: termination requires sample_based fitting");
    Mat reward = cfg.zero_residual_reward
                     ? Mat::Zero(mdp.num_states, mdp.num_actions)
                     : Mat(-estimate_phi(ds, mdp.num_states, mdp.num_actions, cfg.phi_default));
    return policy_from_q(soft_value_iteration_on(mdp, reward, cfg.rlif_temperature, cfg.fit_tol,
                                                 cfg.fit_max_iters));
  }
  const Mat zero_prior = Mat::Zero(mdp.num_states, mdp.num_actions);
  const Mat q = fitted_soft_q_from_dataset(mdp, ds, cfg.rlif_temperature, zero_prior,
                                           cfg.bootstrap_mode, cfg.zero_residual_reward, cfg.fit_tol,
                                           cfg.fit_max_iters);
  return policy_from_q(SoftQTable{q, cfg.rlif_temperature});
}

// Plain-MDP policy evaluation by seeded rollouts (no supervisor). Success is
// an undiscounted episode return at or above success_threshold. Episode i
// uses stream_seed(seed, i); draws per step are (action, transition). The
// exact discounted return E_d[V^pi] of the rolled-out policy is computed by
// a linear solve as a cross-check.
inline PolicyEvalResult evaluate_policy(const TabularMdp& mdp, const PolicyTable& policy,
                                        int episodes, int max_horizon, double success_threshold,
                                        std::uint64_t seed, bool deterministic = true) {
  if (episodes <= 0) throw std::invalid_argument("evaluate_policy: episodes must be positive");
  const PolicyTable rollout_policy = deterministic ? greedy_mode(policy) : policy;
  std::vector<bool> absorbing(mdp.num_states);
  for (int s = 0; s < mdp.num_states; ++s) absorbing[s] = mdp.is_absorbing(s);

  PolicyEvalResult out;
  int successes = 0;
  double total_return = 0.0;
  for (int e = 0; e < episodes; ++e) {
    SplitMix64 rng(stream_seed(seed, static_cast<std::uint64_t>(e)));
    int s = sample_categorical(rng, mdp.initial_dist);
    double ret = 0.0;
    for (int t = 0; t < max_horizon && !absorbing[s]; ++t) {
      const int a = sample_categorical(rng, rollout_policy.probs.row(s));
      const int next = sample_categorical(rng, mdp.transition.row(mdp.sa_index(s, a)));
      ret += mdp.realized_reward(s, a, next);
      s = next;
    }
    total_return += ret;
    if (ret >= success_threshold) ++successes;
  }
  out.success_rate = static_cast<double>(successes) / episodes;
  out.mean_return = total_return / episodes;
  out.exact_discounted_return =
      mdp.initial_dist.dot(soft_policy_evaluation(mdp, rollout_policy, 0.0).v.v);
  return out;
}

// Visitation-weighted KL to the prior under the policy's own occupancy.
inline double kl_to_prior(const TabularMdp& mdp, const PolicyTable& policy,
                          const PolicyTable& prior) {
  const VisitationDistribution vis = exact_visitation(mdp, policy);
  double kl = 0.0;
  for (int s = 0; s < mdp.num_states; ++s) {
    if (vis.rho(s) <= 0.0) continue;
    kl += vis.rho(s) * row_kl(policy.probs.row(s), prior.probs.row(s));
  }
  return kl;
}

namespace detail {
// Sub-stream indices hung off RiftConfig::seed.
inline constexpr std::uint64_t kStreamCollect = 1;
inline constexpr std::uint64_t kStreamEval = 2;
inline constexpr std::uint64_t kStreamRate = 3;

inline RunMetrics measure_round(const TabularMdp& mdp, const PolicyTable& policy,
                                const PolicyTable& prior, const InterventionStrategy& strategy,
                                const RiftConfig& cfg, int round, long dataset_size) {
  RunMetrics m;
  m.round = round;
  const PolicyEvalResult ev = evaluate_policy(mdp, policy, cfg.eval_episodes, cfg.max_horizon,
                                              cfg.success_threshold,
                                              stream_seed(cfg.seed, kStreamEval), true);
  m.success_rate = ev.success_rate;
  m.mean_return = ev.mean_return;
  m.intervention_rate = intervention_rate(mdp, policy, strategy, cfg.eval_episodes, cfg.max_horizon,
                                          stream_seed(cfg.seed, kStreamRate), true);
  m.kl_to_prior = kl_to_prior(mdp, policy, prior);
  m.dataset_size = dataset_size;
  return m;
}
}  // namespace detail

// The intervention fine-tuning loop: alternate collecting e-stop rollouts
// with the current policy and refitting against the prior anchor from all
// data so far (cumulative by default). Round 0 metrics describe the prior.
// omega = 0 runs the RLIF baseline instead: no anchor, data collection starts
// from the uniform policy implied by the zero-initialized critic.
inline RiftResult rift_loop(const TabularMdp& mdp, const PolicyTable& prior,
                            const InterventionStrategy& strategy, const RiftConfig& cfg) {
  if (cfg.omega < 0.0) throw std::invalid_argument("rift_loop: omega must be >= 0");
  if (cfg.rounds <= 0) throw std::invalid_argument("rift_loop: rounds must be positive");
  validate_strategy(strategy);
  const PolicyTable prior_i = ensure_interior(prior);
  const bool rlif = cfg.omega == 0.0;

  RiftResult out;
  out.policy = rlif ? PolicyTable::uniform(mdp.num_states, mdp.num_actions) : prior_i;
  out.metrics.push_back(detail::measure_round(mdp, out.policy, prior_i, strategy, cfg, 0, 0));

  RolloutDataset data;
  for (int round = 1; round <= cfg.rounds; ++round) {
    if (cfg.fresh_data_per_round) data = RolloutDataset{};
    const std::uint64_t collect_seed =
        stream_seed(stream_seed(cfg.seed, detail::kStreamCollect), static_cast<std::uint64_t>(round));
    append_dataset(data, collect_dataset(mdp, out.policy, strategy, cfg.episodes_per_round,
                                         cfg.max_horizon, collect_seed));
    out.policy = rlif ? rlif_fit_from_dataset(mdp, data, cfg)
                      : fit_residual_from_dataset(mdp, prior_i, data, cfg);
    out.metrics.push_back(detail::measure_round(mdp, out.policy, prior_i, strategy, cfg, round,
                                                static_cast<long>(data.records.size())));
    if (out.metrics.back().intervention_rate < cfg.stop_intervention_rate) break;
  }
  return out;
}

// RLIF baseline as a standalone entry point.
inline RiftResult rlif_train(const TabularMdp& mdp, const PolicyTable& prior,
                             const InterventionStrategy& strategy, RiftConfig cfg) {
  cfg.omega = 0.0;
  return rift_loop(mdp, prior, strategy, cfg);
}

// Behavior-cloned prior: roll num_demos stochastic expert episodes, count
// state-action visits, and normalize with additive smoothing. States never
// visited fall back to uniform (as does the whole table when num_demos = 0);
// the result is floored by ensure_interior.
inline PolicyTable prior_from_demos(const TabularMdp& mdp, const PolicyTable& expert, int num_demos,
                                    int max_horizon, double smoothing, std::uint64_t seed) {
  if (num_demos < 0) throw std::invalid_argument("prior_from_demos: num_demos must be >= 0");
  if (smoothing < 0.0) throw std::invalid_argument("prior_from_demos: smoothing must be >= 0");
  std::vector<bool> absorbing(mdp.num_states);
  for (int s = 0; s < mdp.num_states; ++s) absorbing[s] = mdp.is_absorbing(s);

  Mat counts = Mat::Zero(mdp.num_states, mdp.num_actions);
  for (int e = 0; e < num_demos; ++e) {
    SplitMix64 rng(stream_seed(seed, static_cast<std::uint64_t>(e)));
    int s = sample_categorical(rng, mdp.initial_dist);
    for (int t = 0; t < max_horizon && !absorbing[s]; ++t) {
      const int a = sample_categorical(rng, expert.probs.row(s));
      counts(s, a) += 1.0;
      s = sample_categorical(rng, mdp.transition.row(mdp.sa_index(s, a)));
    }
  }
  PolicyTable prior;
  prior.probs = Mat(mdp.num_states, mdp.num_actions);
  for (int s = 0; s < mdp.num_states; ++s) {
    const double total = counts.row(s).sum();
    if (total > 0.0 || smoothing > 0.0)
      prior.probs.row(s) =
          (counts.row(s).array() + smoothing) / (total + smoothing * mdp.num_actions);
    else
      prior.probs.row(s).setConstant(1.0 / mdp.num_actions);
  }
  return ensure_interior(prior);
}

// Prior trained by intervention RL alone (the "RL on -phi from scratch"
// baseline prior for the failure-case studies).
inline PolicyTable prior_from_intervention_rl(const TabularMdp& mdp,
                                              const InterventionStrategy& strategy,
                                              const RiftConfig& cfg) {
  return ensure_interior(rlif_train(mdp, PolicyTable::uniform(mdp.num_states, mdp.num_actions),
                                    strategy, cfg)
                             .policy);
}

// Rows drawn from a symmetric Dirichlet(concentration). An infinite
// concentration degenerates to the uniform policy.
inline PolicyTable random_prior(int num_states, int num_actions, double concentration,
                                std::uint64_t seed) {
  if (std::isinf(concentration) && concentration > 0.0)
    return PolicyTable::uniform(num_states, num_actions);
  if (!(concentration > 0.0))
    throw std::invalid_argument("random_prior: concentration must be positive");
  SplitMix64 rng(seed);
  PolicyTable prior;
  prior.probs = Mat(num_states, num_actions);
  for (int s = 0; s < num_states; ++s) {
    double total = 0.0;
    for (int a = 0; a < num_actions; ++a) {
      const double g = concentration == 1.0 ? -std::log(1.0 - rng.next_double())
                                            : sample_gamma(rng, concentration);
      prior.probs(s, a) = g;
      total += g;
    }
    if (total <= 0.0) prior.probs.row(s).setConstant(1.0 / num_actions);
    else prior.probs.row(s) /= total;
  }
  return ensure_interior(prior);
}

inline PolicyTable random_prior(const TabularMdp& mdp, std::uint64_t seed) {
  return random_prior(mdp.num_states, mdp.num_actions, 1.0, seed);
}

}  // namespace riftlab
