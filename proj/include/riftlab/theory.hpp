#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include <Eigen/Dense>

#include "riftlab/intervention.hpp"
#include "riftlab/residual.hpp"
#include "riftlab/rng.hpp"
#include "riftlab/soft_rl.hpp"
#include "riftlab/tabular_mdp.hpp"

namespace riftlab {

// Random test instance: transition rows from a symmetric Dirichlet(1) (via
// normalized exponentials), rewards uniform in [-1, 1], uniform initial
// distribution.
inline TabularMdp random_instance(int num_states, int num_actions, double gamma,
                                  std::uint64_t seed) {
  SplitMix64 rng(seed);
  TabularMdp mdp;
  mdp.num_states = num_states;
  mdp.num_actions = num_actions;
  mdp.discount = gamma;
  mdp.transition = Mat(num_states * num_actions, num_states);
  for (int row = 0; row < num_states * num_actions; ++row) {
    double total = 0.0;
    for (int s = 0; s < num_states; ++s) {
      const double g = -std::log(1.0 - rng.next_double());
      mdp.transition(row, s) = g;
      total += g;
    }
    mdp.transition.row(row) /= total;
  }
  mdp.reward = Mat(num_states, num_actions);
  for (int s = 0; s < num_states; ++s)
    for (int a = 0; a < num_actions; ++a) mdp.reward(s, a) = 2.0 * rng.next_double() - 1.0;
  mdp.initial_dist = Vec::Constant(num_states, 1.0 / num_states);
  mdp.validate();
  return mdp;
}

inline Mat random_reward(int num_states, int num_actions, std::uint64_t seed) {
  SplitMix64 rng(seed);
  Mat r(num_states, num_actions);
  for (int s = 0; s < num_states; ++s)
    for (int a = 0; a < num_actions; ++a) r(s, a) = 2.0 * rng.next_double() - 1.0;
  return r;
}

// Expert-weighted divergence from the expert policy:
//   Psi(pi) = sum_s rho^{expert}(s) * KL(expert(.|s) || pi(.|s)).
// States the expert never visits contribute nothing; on visited states the
// candidate must cover the expert's support.
inline double compute_psi(const TabularMdp& mdp, const PolicyTable& expert,
                          const PolicyTable& candidate) {
  const Vec rho = exact_visitation(mdp, expert).rho;
  double psi = 0.0;
  for (int s = 0; s < mdp.num_states; ++s) {
    if (rho(s) <= 0.0) continue;
    psi += rho(s) * row_kl(expert.probs.row(s), candidate.probs.row(s));
  }
  return psi;
}

// Gradient of Psi with respect to the reward the candidate policy was solved
// from: (mu^{candidate} - mu^{expert}) / alpha. Sums to zero because both
// occupancies have total mass one.
inline Mat psi_gradient_analytic(const TabularMdp& mdp, const PolicyTable& expert,
                                 const PolicyTable& candidate, double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("psi_gradient_analytic: alpha must be positive");
  return (exact_visitation(mdp, candidate).mu - exact_visitation(mdp, expert).mu) / alpha;
}

// Central-difference gradient of r -> Psi(policy_from_q(solve(r, alpha))).
inline Mat psi_gradient_fd(const TabularMdp& mdp, const PolicyTable& expert, const Mat& reward_hat,
                           double alpha, double epsilon = 1e-5, double solver_tol = 1e-12) {
  Mat grad(mdp.num_states, mdp.num_actions);
  for (int s = 0; s < mdp.num_states; ++s) {
    for (int a = 0; a < mdp.num_actions; ++a) {
      Mat r = reward_hat;
      r(s, a) = reward_hat(s, a) + epsilon;
      const double up =
          compute_psi(mdp, expert, policy_from_q(soft_value_iteration_on(mdp, r, alpha, solver_tol)));
      r(s, a) = reward_hat(s, a) - epsilon;
      const double down =
          compute_psi(mdp, expert, policy_from_q(soft_value_iteration_on(mdp, r, alpha, solver_tol)));
      grad(s, a) = (up - down) / (2.0 * epsilon);
    }
  }
  return grad;
}

struct GradientReport {
  Mat analytic;
  Mat numeric;
  double max_abs_err = 0.0;
  // max_abs_err relative to the largest entry magnitude across both tables,
  // the usual gradient-checker normalization.
  double max_rel_err = 0.0;
  double analytic_sum = 0.0;
};

inline GradientReport make_gradient_report(Mat analytic, Mat numeric) {
  GradientReport rep;
  rep.analytic = std::move(analytic);
  rep.numeric = std::move(numeric);
  rep.max_abs_err = (rep.analytic - rep.numeric).cwiseAbs().maxCoeff();
  const double scale = std::max(rep.analytic.cwiseAbs().maxCoeff(), rep.numeric.cwiseAbs().maxCoeff());
  rep.max_rel_err = scale > 0.0 ? rep.max_abs_err / scale : rep.max_abs_err;
  rep.analytic_sum = rep.analytic.sum();
  return rep;
}

// Checks the occupancy-difference gradient formula against finite differences
// at the max-ent solution of reward_hat.
inline GradientReport gradient_check(const TabularMdp& mdp, const PolicyTable& expert,
                                     const Mat& reward_hat, double alpha, double epsilon = 1e-5) {
  const PolicyTable candidate =
      policy_from_q(soft_value_iteration_on(mdp, reward_hat, alpha, 1e-12));
  return make_gradient_report(psi_gradient_analytic(mdp, expert, candidate, alpha),
                              psi_gradient_fd(mdp, expert, reward_hat, alpha, epsilon));
}

// dPsi/dQhat(s,a) = rho^{expert}(s) * (pi_hat(a|s) - expert(a|s)) / alpha,
// checked against central differences of Psi(policy_from_q(q_hat +- eps)).
inline GradientReport psi_q_derivative_check(const TabularMdp& mdp, const PolicyTable& expert,
                                             const SoftQTable& q_hat, double epsilon = 1e-6) {
  const PolicyTable pi_hat = policy_from_q(q_hat);
  const Vec rho = exact_visitation(mdp, expert).rho;
  Mat analytic(mdp.num_states, mdp.num_actions);
  for (int s = 0; s < mdp.num_states; ++s)
    for (int a = 0; a < mdp.num_actions; ++a)
      analytic(s, a) = rho(s) * (pi_hat.probs(s, a) - expert.probs(s, a)) / q_hat.alpha;

  Mat numeric(mdp.num_states, mdp.num_actions);
  for (int s = 0; s < mdp.num_states; ++s) {
    for (int a = 0; a < mdp.num_actions; ++a) {
      SoftQTable q = q_hat;
      q.q(s, a) = q_hat.q(s, a) + epsilon;
      const double up = compute_psi(mdp, expert, policy_from_q(q));
      q.q(s, a) = q_hat.q(s, a) - epsilon;
      const double down = compute_psi(mdp, expert, policy_from_q(q));
      numeric(s, a) = (up - down) / (2.0 * epsilon);
    }
  }
  return make_gradient_report(std::move(analytic), std::move(numeric));
}

struct JacobianReport {
  Mat analytic;  // (S*A) x (S*A), entry (i, j) = dQhat_i / drhat_j
  double fd_max_rel_err = 0.0;
  double neumann_max_abs_err = 0.0;
  double neumann_bound = 0.0;
  double w_row_sum_err = 0.0;
};

// J = dQhat/drhat = (I - gamma W)^{-1} with W the policy-induced state-action
// transition matrix at the solution. Verified two ways: column-wise central
// differences through the solver, and the truncated Neumann series
// sum_{t<=T} (gamma W)^t whose tail is bounded by gamma^{T+1}/(1-gamma).
inline JacobianReport jacobian_check(const TabularMdp& mdp, const Mat& reward_hat, double alpha,
                                     double epsilon = 1e-5, int neumann_terms = 200) {
  const int n = mdp.num_states * mdp.num_actions;
  const SoftQTable q_hat = soft_value_iteration_on(mdp, reward_hat, alpha, 1e-12);
  const PolicyTable pi_hat = policy_from_q(q_hat);
  const Mat w = transition_matrix(mdp, pi_hat);

  JacobianReport rep;
  rep.w_row_sum_err = (w.rowwise().sum() - Vec::Ones(n)).cwiseAbs().maxCoeff();
  rep.analytic = Eigen::PartialPivLU<Mat>(Mat::Identity(n, n) - mdp.discount * w)
                     .solve(Mat::Identity(n, n));

  Mat fd(n, n);
  for (int j = 0; j < n; ++j) {
    const int s = j / mdp.num_actions;
    const int a = j % mdp.num_actions;
    Mat r = reward_hat;
    r(s, a) = reward_hat(s, a) + epsilon;
    const Mat q_up = soft_value_iteration_on(mdp, r, alpha, 1e-12).q;
    r(s, a) = reward_hat(s, a) - epsilon;
    const Mat q_down = soft_value_iteration_on(mdp, r, alpha, 1e-12).q;
    for (int i = 0; i < n; ++i)
      fd(i, j) = (q_up(i / mdp.num_actions, i % mdp.num_actions) -
                  q_down(i / mdp.num_actions, i % mdp.num_actions)) /
                 (2.0 * epsilon);
  }
  const double scale = std::max(rep.analytic.cwiseAbs().maxCoeff(), fd.cwiseAbs().maxCoeff());
  rep.fd_max_rel_err = (rep.analytic - fd).cwiseAbs().maxCoeff() / scale;

  Mat series = Mat::Identity(n, n);
  Mat term = Mat::Identity(n, n);
  for (int t = 1; t <= neumann_terms; ++t) {
    term = mdp.discount * (term * w);
    series += term;
  }
  rep.neumann_max_abs_err = (rep.analytic - series).cwiseAbs().maxCoeff();
  rep.neumann_bound =
      std::pow(mdp.discount, neumann_terms + 1) / (1.0 - mdp.discount);
  return rep;
}

struct CharacterizationReport {
  double expert_objective = 0.0;  // J_ME(expert | reward_hat)
  double decomposition = 0.0;     // E_d[Vhat] - alpha/(1-gamma) * Psi(pi_hat)
  double residual = 0.0;
};

// The characterization identity: the expert's max-ent objective under a
// candidate reward equals the candidate's optimal value minus the scaled
// divergence Psi of the candidate's optimal policy.
inline CharacterizationReport characterization_check(const TabularMdp& mdp,
                                                     const PolicyTable& expert,
                                                     const Mat& reward_hat, double alpha) {
  CharacterizationReport rep;
  rep.expert_objective = evaluate_maxent_objective(mdp, expert, alpha, &reward_hat);
  const SoftQTable q_hat = soft_value_iteration_on(mdp, reward_hat, alpha, 1e-12);
  const Vec v_hat = value_from_q(q_hat);
  const PolicyTable pi_hat = policy_from_q(q_hat);
  rep.decomposition = mdp.initial_dist.dot(v_hat) -
                      alpha / (1.0 - mdp.discount) * compute_psi(mdp, expert, pi_hat);
  rep.residual = std::abs(rep.expert_objective - rep.decomposition);
  return rep;
}

struct AlignmentReport {
  double lhs = 0.0;
  double rhs = 0.0;
};

// For a state-based supervisor phi(s): the inner product of phi with the Psi
// gradient collapses to a state-occupancy difference,
//   <phi, grad Psi> = 1/alpha * sum_s phi(s) (rho^{candidate}(s) - rho^{expert}(s)).
inline AlignmentReport state_based_alignment(const TabularMdp& mdp, const PolicyTable& expert,
                                             const PolicyTable& candidate, const Vec& phi_state,
                                             double alpha) {
  if (phi_state.size() != mdp.num_states)
    throw std::invalid_argument("state_based_alignment: phi_state must be sized num_states");
  const Mat grad = psi_gradient_analytic(mdp, expert, candidate, alpha);
  AlignmentReport rep;
  for (int s = 0; s < mdp.num_states; ++s) {
    for (int a = 0; a < mdp.num_actions; ++a) rep.lhs += phi_state(s) * grad(s, a);
  }
  const Vec rho_candidate = exact_visitation(mdp, candidate).rho;
  const Vec rho_expert = exact_visitation(mdp, expert).rho;
  rep.rhs = phi_state.dot(rho_candidate - rho_expert) / alpha;
  return rep;
}

struct AlignmentPrediction {
  double alignment = 0.0;  // <phi, grad Psi> at the prior
  double delta_psi = 0.0;  // Psi(fine-tuned) - Psi(prior)
};

// First-order story behind intervention fine-tuning: adding the residual
// reward -phi moves the policy along -<phi, grad Psi>, so positive alignment
// at the prior predicts that fine-tuning decreases Psi (progress toward the
// expert). An adversarial phi concentrated on expert-visited pairs flips the
// sign.
inline AlignmentPrediction alignment_predicts_improvement(const TabularMdp& mdp,
                                                          const PolicyTable& expert,
                                                          const PolicyTable& prior,
                                                          const InterventionStrategy& strategy,
                                                          double omega) {
  const PolicyTable prior_i = ensure_interior(prior);
  const Mat phi = phi_table(strategy, mdp.num_states, mdp.num_actions);
  const Mat grad = psi_gradient_analytic(mdp, expert, prior_i, omega);
  AlignmentPrediction out;
  out.alignment = (phi.array() * grad.array()).sum();
  const PolicyTable tuned = finetune_equivalent_direct(mdp, prior_i, -phi, omega);
  out.delta_psi = compute_psi(mdp, expert, tuned) - compute_psi(mdp, expert, prior_i);
  return out;
}

}  // namespace riftlab
