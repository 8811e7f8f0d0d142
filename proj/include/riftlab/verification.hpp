#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "riftlab/residual.hpp"
#include "riftlab/soft_rl.hpp"
#include "riftlab/tabular_mdp.hpp"
#include "riftlab/theory.hpp"

// Numerical check suites behind the `verify` subcommand. Each check sweeps
// seeded random instances, records the worst observed error against a pinned
// threshold, and reports pass/fail. The suites are intentionally reusable:
// the acceptance harness runs the same functions.

namespace riftlab {

struct CheckResult {
  std::string name;
  int instances = 0;
  double worst = 0.0;
  double threshold = 0.0;
  bool pass = false;
  double elapsed_seconds = 0.0;
  std::string detail;
};

namespace verify_detail {

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

// Instance sizes for the random suites: |S| in [2,6], |A| in [2,3].
inline void suite_shape(std::uint64_t index, int& states, int& actions) {
  SplitMix64 rng(stream_seed(0x517e5u, index));
  states = 2 + static_cast<int>(rng.next_u64() % 5);
  actions = 2 + static_cast<int>(rng.next_u64() % 2);
}

inline std::string format_worst(double worst, double threshold) {
  std::ostringstream os;
  os << "worst " << worst << " vs " << threshold;
  return os.str();
}

}  // namespace verify_detail

// Residual fine-tuning against the one-shot composite-reward solve: the two
// routes must produce the same policy.
inline CheckResult check_residual_equivalence(int instances = 100) {
  verify_detail::Stopwatch clock;
  const double omegas[] = {0.01, 0.1, 1.0};
  CheckResult out;
  out.name = "residual-equivalence";
  out.instances = instances;
  out.threshold = 1e-6;
  for (std::uint64_t i = 0; i < static_cast<std::uint64_t>(instances); ++i) {
    int states = 0;
    int actions = 0;
    verify_detail::suite_shape(i, states, actions);
    const TabularMdp mdp = random_instance(states, actions, 0.9, stream_seed(11000, i));
    const PolicyTable prior = random_prior(states, actions, 1.0, stream_seed(11001, i));
    const Mat residual_reward = random_reward(states, actions, stream_seed(11002, i));
    const double omega = omegas[i % 3];
    const ResidualQTable fit = residual_soft_q_iteration(mdp, prior, residual_reward, omega);
    const PolicyTable via_residual = policy_from_residual(fit);
    const PolicyTable direct = finetune_equivalent_direct(mdp, prior, residual_reward, omega);
    out.worst = std::max(out.worst, max_per_state_tv(via_residual, direct));
  }
  out.pass = out.worst <= out.threshold;
  out.elapsed_seconds = clock.seconds();
  out.detail = verify_detail::format_worst(out.worst, out.threshold);
  return out;
}

// Analytic occupancy-mismatch gradient of the weighted-KL objective against
// central finite differences; also checks that every gradient table sums to 0.
inline CheckResult check_gradient_mismatch(int instances = 50) {
  verify_detail::Stopwatch clock;
  const double alphas[] = {0.5, 1.0, 2.0};
  CheckResult out;
  out.name = "gradient-occupancy-mismatch";
  out.instances = instances;
  out.threshold = 1e-4;
  double worst_sum = 0.0;
  for (std::uint64_t i = 0; i < static_cast<std::uint64_t>(instances); ++i) {
    int states = 0;
    int actions = 0;
    verify_detail::suite_shape(i, states, actions);
    const TabularMdp mdp = random_instance(states, actions, 0.9, stream_seed(12000, i));
    const PolicyTable expert = random_prior(states, actions, 1.0, stream_seed(12001, i));
    const Mat reward_hat = random_reward(states, actions, stream_seed(12002, i));
    const GradientReport rep = gradient_check(mdp, expert, reward_hat, alphas[i % 3]);
    out.worst = std::max(out.worst, rep.max_rel_err);
    worst_sum = std::max(worst_sum, std::abs(rep.analytic_sum));
  }
  out.pass = out.worst <= out.threshold && worst_sum <= 1e-10;
  out.elapsed_seconds = clock.seconds();
  std::ostringstream os;
  os << verify_detail::format_worst(out.worst, out.threshold) << "; worst gradient sum "
     << worst_sum << " vs 1e-10";
  out.detail = os.str();
  return out;
}

// Objective decomposition: expert objective = E_d[V-hat] - alpha/(1-gamma) Psi.
inline CheckResult check_characterization(int instances = 30) {
  verify_detail::Stopwatch clock;
  const double alphas[] = {0.1, 1.0, 5.0};
  CheckResult out;
  out.name = "objective-decomposition";
  out.instances = instances;
  out.threshold = 1e-7;
  for (std::uint64_t i = 0; i < static_cast<std::uint64_t>(instances); ++i) {
    int states = 0;
    int actions = 0;
    verify_detail::suite_shape(i, states, actions);
    const TabularMdp mdp = random_instance(states, actions, 0.9, stream_seed(13000, i));
    const PolicyTable expert = random_prior(states, actions, 1.0, stream_seed(13001, i));
    const Mat reward_hat = random_reward(states, actions, stream_seed(13002, i));
    const CharacterizationReport rep =
        characterization_check(mdp, expert, reward_hat, alphas[i % 3]);
    out.worst = std::max(out.worst, rep.residual);
  }
  out.pass = out.worst <= out.threshold;
  out.elapsed_seconds = clock.seconds();
  out.detail = verify_detail::format_worst(out.worst, out.threshold);
  return out;
}

// Derivative of the weighted-KL objective in critic space against FD.
inline CheckResult check_critic_derivative(int instances = 30) {
  verify_detail::Stopwatch clock;
  CheckResult out;
  out.name = "critic-derivative";
  out.instances = instances;
  out.threshold = 1e-5;
  for (std::uint64_t i = 0; i < static_cast<std::uint64_t>(instances); ++i) {
    int states = 0;
    int actions = 0;
    verify_detail::suite_shape(i, states, actions);
    const TabularMdp mdp = random_instance(states, actions, 0.9, stream_seed(14000, i));
    const PolicyTable expert = random_prior(states, actions, 1.0, stream_seed(14001, i));
    const SoftQTable q_hat{random_reward(states, actions, stream_seed(14002, i)) * 2.0, 1.0};
    out.worst = std::max(out.worst, psi_q_derivative_check(mdp, expert, q_hat).max_rel_err);
  }
  out.pass = out.worst <= out.threshold;
  out.elapsed_seconds = clock.seconds();
  out.detail = verify_detail::format_worst(out.worst, out.threshold);
  return out;
}

// Policy-fixed critic Jacobian: linear solve vs FD vs truncated power series.
inline CheckResult check_jacobian(int instances = 20) {
  verify_detail::Stopwatch clock;
  CheckResult out;
  out.name = "critic-jacobian";
  out.instances = instances;
  out.threshold = 1e-4;
  double worst_neumann_margin = 0.0;  // error / bound, must stay <= 1
  double worst_row_sum = 0.0;
  for (std::uint64_t i = 0; i < static_cast<std::uint64_t>(instances); ++i) {
    int states = 0;
    int actions = 0;
    verify_detail::suite_shape(i, states, actions);
    const TabularMdp mdp = random_instance(states, actions, 0.9, stream_seed(15000, i));
    const Mat reward_hat = random_reward(states, actions, stream_seed(15001, i));
    const JacobianReport rep = jacobian_check(mdp, reward_hat, 0.7);
    out.worst = std::max(out.worst, rep.fd_max_rel_err);
    worst_neumann_margin =
        std::max(worst_neumann_margin, rep.neumann_max_abs_err / rep.neumann_bound);
    worst_row_sum = std::max(worst_row_sum, rep.w_row_sum_err);
  }
  out.pass = out.worst <= out.threshold && worst_neumann_margin <= 1.0 && worst_row_sum <= 1e-9;
  out.elapsed_seconds = clock.seconds();
  std::ostringstream os;
  os << verify_detail::format_worst(out.worst, out.threshold) << "; series error at "
     << worst_neumann_margin << " of its bound";
  out.detail = os.str();
  return out;
}

// State-only supervision identity (no differentiation involved).
inline CheckResult check_state_alignment(int instances = 30) {
  verify_detail::Stopwatch clock;
  CheckResult out;
  out.name = "state-alignment-identity";
  out.instances = instances;
  out.threshold = 1e-10;
  for (std::uint64_t i = 0; i < static_cast<std::uint64_t>(instances); ++i) {
    int states = 0;
    int actions = 0;
    verify_detail::suite_shape(i, states, actions);
    const TabularMdp mdp = random_instance(states, actions, 0.9, stream_seed(16000, i));
    const PolicyTable expert = random_prior(states, actions, 1.0, stream_seed(16001, i));
    const PolicyTable candidate = random_prior(states, actions, 1.0, stream_seed(16002, i));
    SplitMix64 rng(stream_seed(16003, i));
    Vec phi(states);
    for (int s = 0; s < states; ++s) phi(s) = rng.next_double();
    const AlignmentReport rep = state_based_alignment(mdp, expert, candidate, phi, 0.5);
    out.worst = std::max(out.worst, std::abs(rep.lhs - rep.rhs));
  }
  out.pass = out.worst <= out.threshold;
  out.elapsed_seconds = clock.seconds();
  out.detail = verify_detail::format_worst(out.worst, out.threshold);
  return out;
}

// Round trip reward -> critic -> (policy, value) -> critic -> reward.
inline CheckResult check_bijection_roundtrip(int instances = 100) {
  verify_detail::Stopwatch clock;
  const double alphas[] = {0.1, 1.0, 5.0};
  CheckResult out;
  out.name = "bijection-roundtrip";
  out.instances = instances;
  out.threshold = 10.0 * kDefaultSolverTol;
  for (std::uint64_t i = 0; i < static_cast<std::uint64_t>(instances); ++i) {
    int states = 0;
    int actions = 0;
    verify_detail::suite_shape(i, states, actions);
    const TabularMdp mdp = random_instance(states, actions, 0.9, stream_seed(17000, i));
    const double alpha = alphas[i % 3];
    const SoftQTable q = soft_value_iteration(mdp, alpha);
    const PolicyTable policy = policy_from_q(q);
    const SoftValueTable value{value_from_q(q), alpha};
    const SoftQTable q_again = q_from_policy_value(policy, value);
    const Mat reward_again = reward_from_q(mdp, q_again);
    out.worst = std::max(out.worst, (reward_again - mdp.reward).cwiseAbs().maxCoeff());
  }
  out.pass = out.worst <= out.threshold;
  out.elapsed_seconds = clock.seconds();
  out.detail = verify_detail::format_worst(out.worst, out.threshold);
  return out;
}

// Stationarity of the discounted occupancy: mu'(I - gamma W) = (1-gamma) mu0'.
inline CheckResult check_occupancy_stationarity(int instances = 50) {
  verify_detail::Stopwatch clock;
  CheckResult out;
  out.name = "occupancy-stationarity";
  out.instances = instances;
  out.threshold = 1e-9;
  for (std::uint64_t i = 0; i < static_cast<std::uint64_t>(instances); ++i) {
    int states = 0;
    int actions = 0;
    verify_detail::suite_shape(i, states, actions);
    const TabularMdp mdp = random_instance(states, actions, 0.9, stream_seed(18000, i));
    const PolicyTable policy = random_prior(states, actions, 1.0, stream_seed(18001, i));
    const VisitationDistribution vis = exact_visitation(mdp, policy);
    const int pairs = states * actions;
    Vec mu_flat(pairs);
    Vec mu0(pairs);
    for (int s = 0; s < states; ++s)
      for (int a = 0; a < actions; ++a) {
        mu_flat(mdp.sa_index(s, a)) = vis.mu(s, a);
        mu0(mdp.sa_index(s, a)) = mdp.initial_dist(s) * policy.probs(s, a);
      }
    const Mat w = transition_matrix(mdp, policy);
    const Vec residual =
        (mu_flat.transpose() * (Mat::Identity(pairs, pairs) - mdp.discount * w)).transpose() -
        (1.0 - mdp.discount) * mu0;
    out.worst = std::max(out.worst, residual.cwiseAbs().maxCoeff());
  }
  out.pass = out.worst <= out.threshold;
  out.elapsed_seconds = clock.seconds();
  out.detail = verify_detail::format_worst(out.worst, out.threshold);
  return out;
}

struct MonteCarloOccupancyStats {
  Mat mean;
  Mat stderr_of_mean;
  int episodes = 0;
};

// Same stream layout as monte_carlo_visitation, but tracks per-episode
// variance so estimates carry an uncertainty.
inline MonteCarloOccupancyStats monte_carlo_visitation_stats(const TabularMdp& mdp,
                                                             const PolicyTable& policy,
                                                             int episodes, int horizon,
                                                             std::uint64_t seed) {
  if (episodes <= 1) throw std::invalid_argument("visitation stats need at least 2 episodes");
  Mat sum = Mat::Zero(mdp.num_states, mdp.num_actions);
  Mat sum_sq = Mat::Zero(mdp.num_states, mdp.num_actions);
  Mat sample(mdp.num_states, mdp.num_actions);
  for (int e = 0; e < episodes; ++e) {
    SplitMix64 rng(stream_seed(seed, static_cast<std::uint64_t>(e)));
    sample.setZero();
    int s = sample_categorical(rng, mdp.initial_dist);
    double weight = 1.0 - mdp.discount;
    for (int t = 0; t < horizon; ++t) {
      const int a = sample_categorical(rng, policy.probs.row(s));
      sample(s, a) += weight;
      s = sample_categorical(rng, mdp.transition.row(mdp.sa_index(s, a)));
      weight *= mdp.discount;
    }
    sum += sample;
    sum_sq += sample.cwiseProduct(sample);
  }
  MonteCarloOccupancyStats out;
  out.episodes = episodes;
  const double n = static_cast<double>(episodes);
  out.mean = sum / n;
  const Mat variance = (sum_sq - n * out.mean.cwiseProduct(out.mean)) / (n - 1.0);
  out.stderr_of_mean = (variance / n).cwiseMax(0.0).cwiseSqrt();
  return out;
}

// Monte-Carlo occupancy against the linear solve, judged in standard errors.
inline CheckResult check_occupancy_monte_carlo(int episodes = 200000) {
  verify_detail::Stopwatch clock;
  CheckResult out;
  out.name = "occupancy-monte-carlo";
  out.instances = 1;
  out.threshold = 3.0;  // standard errors
  const TabularMdp mdp = random_instance(3, 2, 0.9, 19000);
  const PolicyTable policy = random_prior(3, 2, 1.0, 19001);
  const VisitationDistribution exact = exact_visitation(mdp, policy);
  const MonteCarloOccupancyStats stats =
      monte_carlo_visitation_stats(mdp, policy, episodes, 300, 19002);
  for (int s = 0; s < 3; ++s)
    for (int a = 0; a < 2; ++a) {
      const double err = std::abs(stats.mean(s, a) - exact.mu(s, a));
      const double se = stats.stderr_of_mean(s, a);
      if (se == 0.0) {
        if (err > 1e-12) out.worst = std::numeric_limits<double>::infinity();
        continue;
      }
      out.worst = std::max(out.worst, err / se);
    }
  out.pass = out.worst <= out.threshold;
  out.elapsed_seconds = clock.seconds();
  std::ostringstream os;
  os << "largest deviation " << out.worst << " standard errors (limit " << out.threshold << ")";
  out.detail = os.str();
  return out;
}

inline std::vector<CheckResult> run_verification_suite() {
  return {check_residual_equivalence(), check_gradient_mismatch(),  check_characterization(),
          check_critic_derivative(),    check_jacobian(),           check_state_alignment(),
          check_bijection_roundtrip(),  check_occupancy_stationarity(),
          check_occupancy_monte_carlo()};
}

}  // namespace riftlab
