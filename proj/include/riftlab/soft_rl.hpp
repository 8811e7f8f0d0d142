#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "riftlab/tabular_mdp.hpp"

namespace riftlab {

inline constexpr double kDefaultSolverTol = 1e-10;
inline constexpr int kDefaultSolverMaxIters = 100000;

struct SoftQTable {
  Mat q;  // S x A
  double alpha = 1.0;
};

struct SoftValueTable {
  Vec v;  // S
  double alpha = 1.0;
};

// alpha * log sum_a exp(x(a) / alpha) with max subtraction, stable down to
// very small temperatures (alpha -> 0 recovers the max).
template <class Derived>
double log_sum_exp(const Eigen::DenseBase<Derived>& x, double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("log_sum_exp: alpha must be positive");
  const double m = x.maxCoeff();
  double acc = 0.0;
  for (int i = 0; i < static_cast<int>(x.size()); ++i) acc += std::exp((x(i) - m) / alpha);
  return m + alpha * std::log(acc);
}

inline Vec value_from_q(const SoftQTable& q) {
  Vec v(q.q.rows());
  for (int s = 0; s < q.q.rows(); ++s) v(s) = log_sum_exp(q.q.row(s), q.alpha);
  return v;
}

// Boltzmann policy pi(a|s) proportional to exp(q(s,a)/alpha); rows are exact
// softmax with max subtraction so every entry is strictly positive.
inline PolicyTable policy_from_q(const SoftQTable& q) {
  PolicyTable p;
  p.probs = Mat(q.q.rows(), q.q.cols());
  for (int s = 0; s < q.q.rows(); ++s) {
    const double m = q.q.row(s).maxCoeff();
    for (int a = 0; a < q.q.cols(); ++a) p.probs(s, a) = std::exp((q.q(s, a) - m) / q.alpha);
    p.probs.row(s) /= p.probs.row(s).sum();
  }
  return p;
}

inline Mat advantage(const SoftQTable& q) {
  const Vec v = value_from_q(q);
  return q.q.colwise() - v;
}

// Soft value iteration for the maximum-entropy objective: iterates
// Q <- r + gamma * T * V(Q) until the Bellman residual sup norm is <= tol.
// Throws std::runtime_error when max_iters is exhausted.
inline SoftQTable soft_value_iteration_on(const TabularMdp& mdp, const Mat& reward, double alpha,
                                          double tol = kDefaultSolverTol,
                                          int max_iters = kDefaultSolverMaxIters) {
  if (!(alpha > 0.0)) throw std::invalid_argument("soft_value_iteration: alpha must be positive");
  if (!(tol > 0.0)) throw std::invalid_argument("soft_value_iteration: tol must be positive");
  SoftQTable q{Mat::Zero(mdp.num_states, mdp.num_actions), alpha};
  Vec v(mdp.num_states);
  for (int it = 0; it < max_iters; ++it) {
    for (int s = 0; s < mdp.num_states; ++s) v(s) = log_sum_exp(q.q.row(s), alpha);
    Vec tv = mdp.transition * v;
    Mat next(mdp.num_states, mdp.num_actions);
    for (int s = 0; s < mdp.num_states; ++s)
      for (int a = 0; a < mdp.num_actions; ++a)
        next(s, a) = reward(s, a) + mdp.discount * tv(mdp.sa_index(s, a));
    const double residual = (next - q.q).cwiseAbs().maxCoeff();
    q.q = std::move(next);
    if (residual <= tol) return q;
  }
  throw std::runtime_error("soft_value_iteration: no convergence after " +
                           std::to_string(max_iters) + " iterations");
}

inline SoftQTable soft_value_iteration(const TabularMdp& mdp, double alpha,
                                       double tol = kDefaultSolverTol,
                                       int max_iters = kDefaultSolverMaxIters) {
  return soft_value_iteration_on(mdp, mdp.reward, alpha, tol, max_iters);
}

// Q(s,a) = alpha * log pi(a|s) + V(s). Requires a strictly positive policy.
inline SoftQTable q_from_policy_value(const PolicyTable& policy, const SoftValueTable& value) {
  if (policy.probs.minCoeff() <= 0.0)
    throw std::domain_error("q_from_policy_value: policy must be strictly positive");
  SoftQTable q;
  q.alpha = value.alpha;
  q.q = value.alpha * policy.probs.array().log().matrix();
  q.q.colwise() += value.v;
  return q;
}

inline Mat reward_from_q(const TabularMdp& mdp, const SoftQTable& q) {
  const Vec v = value_from_q(q);
  const Vec tv = mdp.transition * v;
  Mat r(mdp.num_states, mdp.num_actions);
  for (int s = 0; s < mdp.num_states; ++s)
    for (int a = 0; a < mdp.num_actions; ++a)
      r(s, a) = q.q(s, a) - mdp.discount * tv(mdp.sa_index(s, a));
  return r;
}

inline Mat reward_from_policy_value(const TabularMdp& mdp, const PolicyTable& policy,
                                    const SoftValueTable& value) {
  const SoftQTable q = q_from_policy_value(policy, value);
  const Vec tv = mdp.transition * value.v;
  Mat r(mdp.num_states, mdp.num_actions);
  for (int s = 0; s < mdp.num_states; ++s)
    for (int a = 0; a < mdp.num_actions; ++a)
      r(s, a) = q.q(s, a) - mdp.discount * tv(mdp.sa_index(s, a));
  return r;
}

struct PolicyEvaluation {
  SoftQTable q;
  SoftValueTable v;
};

// Exact evaluation of a fixed policy under the entropy-augmented return:
//   V(s) = sum_a pi(a|s) [r(s,a) + gamma E_{s'}[V(s')]] + alpha H[pi(.|s)]
// solved as a dense linear system. alpha = 0 gives plain policy evaluation.
inline PolicyEvaluation soft_policy_evaluation(const TabularMdp& mdp, const PolicyTable& policy,
                                               double alpha, const Mat* reward_override = nullptr) {
  if (alpha < 0.0) throw std::invalid_argument("soft_policy_evaluation: alpha must be >= 0");
  const Mat& reward = reward_override ? *reward_override : mdp.reward;
  Mat p_pi = Mat::Zero(mdp.num_states, mdp.num_states);
  Vec b = Vec::Zero(mdp.num_states);
  for (int s = 0; s < mdp.num_states; ++s) {
    double entropy = 0.0;
    for (int a = 0; a < mdp.num_actions; ++a) {
      const double pa = policy.probs(s, a);
      if (pa <= 0.0) continue;
      entropy -= pa * std::log(pa);
      b(s) += pa * reward(s, a);
      p_pi.row(s) += pa * mdp.transition.row(mdp.sa_index(s, a));
    }
    b(s) += alpha * entropy;
  }
  const Mat system = Mat::Identity(mdp.num_states, mdp.num_states) - mdp.discount * p_pi;
  PolicyEvaluation out;
  out.v.alpha = alpha;
  out.v.v = Eigen::PartialPivLU<Mat>(system).solve(b);
  out.q.alpha = alpha;
  const Vec tv = mdp.transition * out.v.v;
  out.q.q = Mat(mdp.num_states, mdp.num_actions);
  for (int s = 0; s < mdp.num_states; ++s)
    for (int a = 0; a < mdp.num_actions; ++a)
      out.q.q(s, a) = reward(s, a) + mdp.discount * tv(mdp.sa_index(s, a));
  return out;
}

// E_{s0 ~ d}[V^pi(s0)] for the entropy-augmented return.
inline double evaluate_maxent_objective(const TabularMdp& mdp, const PolicyTable& policy,
                                        double alpha, const Mat* reward_override = nullptr) {
  const PolicyEvaluation pe = soft_policy_evaluation(mdp, policy, alpha, reward_override);
  return mdp.initial_dist.dot(pe.v.v);
}

}  // namespace riftlab
