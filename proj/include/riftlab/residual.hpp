#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "riftlab/soft_rl.hpp"
#include "riftlab/tabular_mdp.hpp"

namespace riftlab {

// Residual soft-Q table for KL-anchored fine-tuning. The engine fixes the
// entropy temperature to the anchoring weight omega, so the fine-tuned policy
// logits are q_tilde = (q_r + omega * log prior) / omega and the residual
// Bellman backup bootstraps omega * logsumexp(q_tilde). With this convention
// a zero residual reward has fixed point q_r = 0 and recovers the prior
// exactly, and the solution matches direct max-ent fine-tuning on the
// composite reward r_r + omega * log prior at temperature omega.
struct ResidualQTable {
  Mat q_r;              // S x A
  double omega = 1e-3;  // anchoring weight; also the temperature
  Mat prior_log_probs;  // S x A

  Mat q_tilde() const { return (q_r + omega * prior_log_probs) / omega; }
};

inline void check_prior_interior(const PolicyTable& prior) {
  prior.validate();
  if (prior.probs.minCoeff() < kEpsPolicy * (1.0 - 1e-9))
    throw std::domain_error("prior policy is not strictly interior; pass it through ensure_interior");
}

inline PolicyTable policy_from_residual(const ResidualQTable& table) {
  return policy_from_q(SoftQTable{table.q_tilde(), 1.0});
}

// Exact residual fine-tuning: iterates
//   q_r <- r_r + gamma * T * u,  u(s) = omega * log sum_a exp(q_tilde(s,a))
// from q_r = 0 (the prior policy) until the residual sup norm is <= tol.
inline ResidualQTable residual_soft_q_iteration(const TabularMdp& mdp, const PolicyTable& prior,
                                                const Mat& residual_reward, double omega,
                                                double tol = kDefaultSolverTol,
                                                int max_iters = kDefaultSolverMaxIters) {
  if (!(omega > 0.0)) throw std::invalid_argument("residual_soft_q_iteration: omega must be positive");
  check_prior_interior(prior);

  ResidualQTable table;
  table.omega = omega;
  table.prior_log_probs = prior.probs.array().log().matrix();
  table.q_r = Mat::Zero(mdp.num_states, mdp.num_actions);

  Vec u(mdp.num_states);
  for (int it = 0; it < max_iters; ++it) {
    const Mat anchored = table.q_r + omega * table.prior_log_probs;
    for (int s = 0; s < mdp.num_states; ++s) u(s) = log_sum_exp(anchored.row(s), omega);
    const Vec tu = mdp.transition * u;
    Mat next(mdp.num_states, mdp.num_actions);
    for (int s = 0; s < mdp.num_states; ++s)
      for (int a = 0; a < mdp.num_actions; ++a)
        next(s, a) = residual_reward(s, a) + mdp.discount * tu(mdp.sa_index(s, a));
    const double residual = (next - table.q_r).cwiseAbs().maxCoeff();
    table.q_r = std::move(next);
    if (residual <= tol) return table;
  }
  throw std::runtime_error("residual_soft_q_iteration: no convergence after " +
                           std::to_string(max_iters) + " iterations");
}

// Oracle route for the same fine-tuning problem: solve max-ent RL directly on
// the composite reward r_r + omega * log prior at temperature omega.
inline PolicyTable finetune_equivalent_direct(const TabularMdp& mdp, const PolicyTable& prior,
                                              const Mat& residual_reward, double omega,
                                              double tol = kDefaultSolverTol,
                                              int max_iters = kDefaultSolverMaxIters) {
  if (!(omega > 0.0)) throw std::invalid_argument("finetune_equivalent_direct: omega must be positive");
  check_prior_interior(prior);
  const Mat composite = residual_reward + omega * prior.probs.array().log().matrix();
  return policy_from_q(soft_value_iteration_on(mdp, composite, omega, tol, max_iters));
}

// KL-regularized fine-tuning objective
//   J_FT(pi) = 1/(1-gamma) * sum_s rho^pi(s) [ sum_a pi(a|s) r(s,a)
//                                              - omega * KL(pi(.|s) || prior(.|s)) ].
inline double evaluate_j_ft(const TabularMdp& mdp, const PolicyTable& policy, const Mat& reward,
                            const PolicyTable& prior, double omega) {
  const VisitationDistribution vis = exact_visitation(mdp, policy);
  double acc = 0.0;
  for (int s = 0; s < mdp.num_states; ++s) {
    for (int a = 0; a < mdp.num_actions; ++a) acc += vis.mu(s, a) * reward(s, a);
    if (omega != 0.0 && vis.rho(s) > 0.0)
      acc -= omega * vis.rho(s) * row_kl(policy.probs.row(s), prior.probs.row(s));
  }
  return acc / (1.0 - mdp.discount);
}

}  // namespace riftlab
