#pragma once

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "riftlab/rng.hpp"

namespace riftlab {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Minimum probability enforced on externally supplied policies so that
// log-prob tables stay finite. Priors are mixed with the uniform policy at
// weight num_actions * kEpsPolicy, which floors every entry at kEpsPolicy.
inline constexpr double kEpsPolicy = 1e-6;

inline constexpr double kStochasticTol = 1e-12;

// Finite MDP with dense tables. reward is S x A, transition is (S*A) x S with
// row s*A + a, initial_dist is over states. entry_bonus is an optional
// decomposition hook for simulators: when sized S it declares that the
// realized reward of a step is reward(s,a) adjusted for the landing state,
//   realized(s,a,s') = reward(s,a) - E[bonus | s,a] + bonus(s')
// for non-absorbing s (absorbing states always pay 0). Expectation-based
// operations never look at it.
struct TabularMdp {
  int num_states = 0;
  int num_actions = 0;
  Mat reward;
  Mat transition;
  Vec initial_dist;
  double discount = 0.0;
  Vec entry_bonus;

  int sa_index(int s, int a) const { return s * num_actions + a; }

  bool is_absorbing(int s) const {
    for (int a = 0; a < num_actions; ++a) {
      if (transition(sa_index(s, a), s) < 1.0 - 1e-12) return false;
    }
    return true;
  }

  double realized_reward(int s, int a, int next) const {
    if (entry_bonus.size() == 0) return reward(s, a);
    if (is_absorbing(s)) return 0.0;
    const double expected = transition.row(sa_index(s, a)).dot(entry_bonus);
    return reward(s, a) - expected + entry_bonus(next);
  }

  void validate() const {
    if (num_states <= 0 || num_actions <= 0)
      throw std::invalid_argument("TabularMdp: num_states and num_actions must be positive");
    if (reward.rows() != num_states || reward.cols() != num_actions)
      throw std::invalid_argument("TabularMdp: reward table has wrong shape");
    if (transition.rows() != num_states * num_actions || transition.cols() != num_states)
      throw std::invalid_argument("TabularMdp: transition table has wrong shape");
    if (initial_dist.size() != num_states)
      throw std::invalid_argument("TabularMdp: initial_dist has wrong size");
    if (!(discount >= 0.0 && discount < 1.0))
      throw std::invalid_argument("TabularMdp: discount must lie in [0, 1)");
    if (entry_bonus.size() != 0 && entry_bonus.size() != num_states)
      throw std::invalid_argument("TabularMdp: entry_bonus must be empty or sized num_states");
    for (int s = 0; s < num_states; ++s) {
      for (int a = 0; a < num_actions; ++a) {
        const auto row = transition.row(sa_index(s, a));
        if (row.minCoeff() < -kStochasticTol)
          throw std::invalid_argument("TabularMdp: negative transition probability in row (s=" +
                                      std::to_string(s) + ",a=" + std::to_string(a) + ")");
        const double sum = row.sum();
        if (std::abs(sum - 1.0) > 1e-9)
          throw std::invalid_argument("TabularMdp: transition row (s=" + std::to_string(s) +
                                      ",a=" + std::to_string(a) + ") sums to " + std::to_string(sum));
      }
    }
    if (initial_dist.minCoeff() < -kStochasticTol || std::abs(initial_dist.sum() - 1.0) > 1e-9)
      throw std::invalid_argument("TabularMdp: initial_dist is not a probability distribution");
  }
};

inline TabularMdp with_reward(TabularMdp mdp, Mat reward) {
  mdp.reward = std::move(reward);
  return mdp;
}

// Stochastic policy, rows are per-state action distributions.
struct PolicyTable {
  Mat probs;

  static PolicyTable uniform(int num_states, int num_actions) {
    PolicyTable p;
    p.probs = Mat::Constant(num_states, num_actions, 1.0 / num_actions);
    return p;
  }

  void validate() const {
    if (probs.minCoeff() < -kStochasticTol)
      throw std::invalid_argument("PolicyTable: negative probability");
    for (int s = 0; s < probs.rows(); ++s) {
      if (std::abs(probs.row(s).sum() - 1.0) > 1e-9)
        throw std::invalid_argument("PolicyTable: row " + std::to_string(s) + " sums to " +
                                    std::to_string(probs.row(s).sum()));
    }
  }
};

// Floors every entry at eps by mixing with the uniform policy at weight
// num_actions * eps. Renormalization is exact because the mixture of two
// distributions is a distribution.
inline PolicyTable ensure_interior(const PolicyTable& policy, double eps = kEpsPolicy) {
  const int num_actions = static_cast<int>(policy.probs.cols());
  const double w = num_actions * eps;
  if (w >= 1.0) throw std::invalid_argument("ensure_interior: eps too large for action count");
  PolicyTable out;
  out.probs = (1.0 - w) * policy.probs.array() + eps;
  return out;
}

// Deterministic policy putting all mass on the per-state mode action
// (lowest-index argmax), used for evaluation rollouts.
inline PolicyTable greedy_mode(const PolicyTable& policy) {
  PolicyTable out;
  out.probs = Mat::Zero(policy.probs.rows(), policy.probs.cols());
  for (int s = 0; s < policy.probs.rows(); ++s) {
    int best = 0;
    for (int a = 1; a < policy.probs.cols(); ++a) {
      if (policy.probs(s, a) > policy.probs(s, best)) best = a;
    }
    out.probs(s, best) = 1.0;
  }
  return out;
}

// KL divergence between two action rows; 0 log 0 = 0. Infinite KL (p has mass
// where q has none) raises std::domain_error.
template <class DerivedP, class DerivedQ>
double row_kl(const Eigen::DenseBase<DerivedP>& p, const Eigen::DenseBase<DerivedQ>& q) {
  double kl = 0.0;
  for (int a = 0; a < static_cast<int>(p.size()); ++a) {
    if (p(a) <= 0.0) continue;
    if (q(a) <= 0.0) throw std::domain_error("row_kl: divergence is infinite (zero in reference row)");
    kl += p(a) * std::log(p(a) / q(a));
  }
  return kl;
}

inline double max_per_state_tv(const PolicyTable& p, const PolicyTable& q) {
  double worst = 0.0;
  for (int s = 0; s < p.probs.rows(); ++s) {
    const double tv = 0.5 * (p.probs.row(s) - q.probs.row(s)).cwiseAbs().sum();
    if (tv > worst) worst = tv;
  }
  return worst;
}

// Discounted state-action and state occupancy, normalized to total mass 1.
struct VisitationDistribution {
  Mat mu;   // S x A
  Vec rho;  // S
};

// Policy-induced transition matrix on state-action pairs:
//   W[(s,a), (s',a')] = T(s'|s,a) * pi(a'|s').
// Rows sum to 1 because T rows and policy rows are both stochastic.
inline Mat transition_matrix(const TabularMdp& mdp, const PolicyTable& policy) {
  const int n = mdp.num_states * mdp.num_actions;
  Mat w(n, n);
  for (int sp = 0; sp < mdp.num_states; ++sp) {
    for (int ap = 0; ap < mdp.num_actions; ++ap) {
      w.col(sp * mdp.num_actions + ap) = mdp.transition.col(sp) * policy.probs(sp, ap);
    }
  }
  return w;
}

// Exact discounted occupancy: solves mu^T (I - gamma W) = (1 - gamma) mu_0^T
// by dense LU. mu_0(s,a) = d(s) pi(a|s).
inline VisitationDistribution exact_visitation(const TabularMdp& mdp, const PolicyTable& policy) {
  const int n = mdp.num_states * mdp.num_actions;
  Vec mu0(n);
  for (int s = 0; s < mdp.num_states; ++s)
    for (int a = 0; a < mdp.num_actions; ++a)
      mu0(mdp.sa_index(s, a)) = mdp.initial_dist(s) * policy.probs(s, a);

  const Mat w = transition_matrix(mdp, policy);
  const Mat system = Mat::Identity(n, n) - mdp.discount * w.transpose();
  const Vec mu_flat = Eigen::PartialPivLU<Mat>(system).solve((1.0 - mdp.discount) * mu0);

  VisitationDistribution out;
  out.mu = Mat(mdp.num_states, mdp.num_actions);
  for (int s = 0; s < mdp.num_states; ++s)
    for (int a = 0; a < mdp.num_actions; ++a)
      out.mu(s, a) = mu_flat(mdp.sa_index(s, a));
  out.rho = out.mu.rowwise().sum();
  return out;
}

// Undiscounted per-timestep state distributions rho_0..rho_num_steps via the
// push-forward recursion rho_{t+1}(s) = sum_{s',a'} rho_t(s') pi(a'|s') T(s|s',a').
inline std::vector<Vec> per_timestep_visitation(const TabularMdp& mdp, const PolicyTable& policy,
                                                int num_steps) {
  if (num_steps < 0) throw std::invalid_argument("per_timestep_visitation: num_steps must be >= 0");
  std::vector<Vec> rho;
  rho.reserve(num_steps + 1);
  rho.push_back(mdp.initial_dist);
  for (int t = 0; t < num_steps; ++t) {
    const Vec& cur = rho.back();
    Vec next = Vec::Zero(mdp.num_states);
    for (int s = 0; s < mdp.num_states; ++s) {
      if (cur(s) == 0.0) continue;
      for (int a = 0; a < mdp.num_actions; ++a) {
        const double mass = cur(s) * policy.probs(s, a);
        if (mass == 0.0) continue;
        next += mass * mdp.transition.row(mdp.sa_index(s, a)).transpose();
      }
    }
    rho.push_back(std::move(next));
  }
  return rho;
}

// Monte-Carlo estimate of the discounted occupancy from seeded rollouts.
// Episode i uses the generator seeded with stream_seed(seed, i); per step the
// draws are consumed in the order (action, transition). The estimate sums to
// 1 - gamma^horizon, i.e. the truncation deficit is at most gamma^horizon.
inline VisitationDistribution monte_carlo_visitation(const TabularMdp& mdp, const PolicyTable& policy,
                                                     int episodes, int horizon, std::uint64_t seed) {
  if (episodes <= 0) throw std::invalid_argument("monte_carlo_visitation: episodes must be positive");
  if (horizon <= 0) throw std::invalid_argument("monte_carlo_visitation: horizon must be positive");
  if (std::pow(mdp.discount, horizon) >= 1e-6)
    std::fprintf(stderr,
                 "monte_carlo_visitation: warning: horizon %d leaves truncation deficit %.3g\n",
                 horizon, std::pow(mdp.discount, horizon));

  VisitationDistribution out;
  out.mu = Mat::Zero(mdp.num_states, mdp.num_actions);
  for (int e = 0; e < episodes; ++e) {
    SplitMix64 rng(stream_seed(seed, static_cast<std::uint64_t>(e)));
    int s = sample_categorical(rng, mdp.initial_dist);
    double weight = 1.0 - mdp.discount;
    for (int t = 0; t < horizon; ++t) {
      const int a = sample_categorical(rng, policy.probs.row(s));
      out.mu(s, a) += weight;
      s = sample_categorical(rng, mdp.transition.row(mdp.sa_index(s, a)));
      weight *= mdp.discount;
    }
  }
  out.mu /= static_cast<double>(episodes);
  out.rho = out.mu.rowwise().sum();
  return out;
}

}  // namespace riftlab
