#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "riftlab/rift.hpp"
#include "riftlab/soft_rl.hpp"
#include "riftlab/theory.hpp"

using namespace riftlab;

namespace {

// Single absorbing state with `num_actions` self-loop actions.
TabularMdp one_state_mdp(const Vec& rewards, double gamma) {
  TabularMdp mdp;
  mdp.num_states = 1;
  mdp.num_actions = static_cast<int>(rewards.size());
  mdp.reward = rewards.transpose();
  mdp.transition = Mat::Ones(mdp.num_actions, 1);
  mdp.initial_dist = Vec::Ones(1);
  mdp.discount = gamma;
  mdp.validate();
  return mdp;
}

// Scalar fixed-point iteration of v = gamma * v + log(e^r0 + e^r1) at alpha=1,
// independent of the matrix solver.
double two_action_value_oracle(double r0, double r1, double gamma) {
  const double lse = std::log(std::exp(r0) + std::exp(r1));
  double v = 0.0;
  for (;;) {
    const double next = gamma * v + lse;
    if (std::abs(next - v) <= 1e-13) return next;
    v = next;
  }
}

}  // namespace

TEST_CASE("soft value iteration solves self-loop fixed points") {
  // One action: no entropy, plain geometric series.
  const TabularMdp single = one_state_mdp(Vec::Ones(1), 0.9);
  const SoftQTable q1 = soft_value_iteration(single, 0.7);
  CHECK(q1.q(0, 0) == Catch::Approx(10.0).margin(1e-8));

  // Two actions, r = (1, 0), gamma = 0.5, alpha = 1: V = 2 log(1 + e).
  Vec r(2);
  r << 1.0, 0.0;
  const TabularMdp pair = one_state_mdp(r, 0.5);
  const double v_star = two_action_value_oracle(1.0, 0.0, 0.5);
  CHECK(v_star == Catch::Approx(2.0 * std::log(1.0 + std::exp(1.0))).margin(1e-12));
  const SoftQTable q2 = soft_value_iteration(pair, 1.0);
  CHECK(value_from_q(q2)(0) == Catch::Approx(v_star).margin(1e-9));
  CHECK(q2.q(0, 0) == Catch::Approx(1.0 + 0.5 * v_star).margin(1e-9));
  CHECK(q2.q(0, 1) == Catch::Approx(0.5 * v_star).margin(1e-9));
}

TEST_CASE("soft value iteration with zero discount returns the reward") {
  const TabularMdp mdp = random_instance(5, 3, 0.0, 101);
  const SoftQTable q = soft_value_iteration(mdp, 0.3);
  CHECK((q.q - mdp.reward).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("soft value iteration reports non-convergence") {
  const TabularMdp mdp = random_instance(4, 2, 0.9, 7);
  CHECK_THROWS_AS(soft_value_iteration(mdp, 1.0, 1e-15, 3), std::runtime_error);
  CHECK_THROWS_AS(soft_value_iteration(mdp, 0.0), std::invalid_argument);
}

TEST_CASE("soft value iteration stays finite at temperature 1e-3") {
  const TabularMdp mdp = random_instance(6, 3, 0.9, 23);
  const SoftQTable q = soft_value_iteration(mdp, 1e-3);
  CHECK(q.q.allFinite());
  // At a near-zero temperature the policy concentrates on the best action.
  const PolicyTable p = policy_from_q(q);
  for (int s = 0; s < mdp.num_states; ++s) CHECK(p.probs.row(s).maxCoeff() > 0.999);
}

TEST_CASE("policy_from_q is an exact softmax with shift invariance") {
  Mat q(1, 2);
  q << 0.0, 0.0;
  CHECK(policy_from_q({q, 1.0}).probs(0, 0) == Catch::Approx(0.5).margin(1e-15));

  q << std::log(3.0), 0.0;
  const PolicyTable p = policy_from_q({q, 1.0});
  CHECK(p.probs(0, 0) == Catch::Approx(0.75).margin(1e-12));
  CHECK(p.probs(0, 1) == Catch::Approx(0.25).margin(1e-12));

  // Adding the constant rounds the stored logits, so exactness is up to ulps.
  const Mat shifted = q.array() + 1234.5;
  const PolicyTable ps = policy_from_q({shifted, 1.0});
  CHECK((p.probs - ps.probs).cwiseAbs().maxCoeff() <= 1e-12);

  const Mat small_shift = q.array() + 0.5;
  const PolicyTable pe = policy_from_q({small_shift, 1.0});
  CHECK((p.probs - pe.probs).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("value_from_q evaluates the scaled log-sum-exp") {
  Mat q(1, 2);
  q << 0.0, 0.0;
  CHECK(value_from_q({q, 1.0})(0) == Catch::Approx(std::log(2.0)).margin(1e-15));

  Mat single(1, 1);
  single << 7.0;
  CHECK(value_from_q({single, 2.5})(0) == Catch::Approx(7.0).margin(1e-12));

  q << 2.0, 0.0;
  const double expected = 0.5 * std::log(std::exp(4.0) + 1.0);
  CHECK(value_from_q({q, 0.5})(0) == Catch::Approx(expected).margin(1e-12));
}

TEST_CASE("value_from_q is squeezed between max q and max q plus entropy cap") {
  SplitMix64 rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    const int actions = 2 + static_cast<int>(rng.next_u64() % 3);
    Mat q(4, actions);
    for (int s = 0; s < q.rows(); ++s)
      for (int a = 0; a < actions; ++a) q(s, a) = 20.0 * rng.next_double() - 10.0;
    const double alpha = 0.1 + 2.0 * rng.next_double();
    const Vec v = value_from_q({q, alpha});
    for (int s = 0; s < q.rows(); ++s) {
      CHECK(v(s) >= q.row(s).maxCoeff() - 1e-12);
      CHECK(v(s) <= q.row(s).maxCoeff() + alpha * std::log(double(actions)) + 1e-12);
    }
  }
}

TEST_CASE("advantage rows are log-probabilities scaled by alpha") {
  Mat q(1, 2);
  q << 0.0, 0.0;
  const Mat a0 = advantage({q, 1.0});
  CHECK(a0(0, 0) == Catch::Approx(-std::log(2.0)).margin(1e-12));

  q << std::log(3.0), 0.0;
  const Mat a1 = advantage({q, 1.0});
  CHECK(a1(0, 0) == Catch::Approx(std::log(0.75)).margin(1e-12));
  CHECK(a1(0, 1) == Catch::Approx(std::log(0.25)).margin(1e-12));

  SplitMix64 rng(5);
  Mat qr(3, 4);
  for (int s = 0; s < 3; ++s)
    for (int a = 0; a < 4; ++a) qr(s, a) = 6.0 * rng.next_double() - 3.0;
  const double alpha = 0.4;
  const Mat adv = advantage({qr, alpha});
  for (int s = 0; s < 3; ++s) {
    int best;
    qr.row(s).maxCoeff(&best);
    CHECK(adv(s, best) <= 0.0);
    CHECK((adv.row(s) / alpha).array().exp().sum() == Catch::Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("q_from_policy_value inverts the policy/value split") {
  PolicyTable uniform = PolicyTable::uniform(1, 2);
  const SoftQTable qu = q_from_policy_value(uniform, {Vec::Zero(1), 1.0});
  CHECK(qu.q(0, 0) == Catch::Approx(-std::log(2.0)).margin(1e-15));

  PolicyTable p;
  p.probs = Mat(1, 2);
  p.probs << 0.75, 0.25;
  Vec v(1);
  v << 0.5;
  const SoftQTable qp = q_from_policy_value(p, {v, 1.0});
  CHECK(qp.q(0, 0) == Catch::Approx(0.5 + std::log(0.75)).margin(1e-12));
  CHECK(qp.q(0, 1) == Catch::Approx(0.5 + std::log(0.25)).margin(1e-12));

  PolicyTable degenerate;
  degenerate.probs = Mat(1, 2);
  degenerate.probs << 1.0, 0.0;
  CHECK_THROWS_AS(q_from_policy_value(degenerate, {Vec::Zero(1), 1.0}), std::domain_error);
}

TEST_CASE("q -> (policy, value) -> q round-trips exactly") {
  SplitMix64 rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    Mat q(5, 3);
    for (int s = 0; s < 5; ++s)
      for (int a = 0; a < 3; ++a) q(s, a) = 8.0 * rng.next_double() - 4.0;
    const double alpha = 0.2 + rng.next_double();
    const SoftQTable table{q, alpha};
    const SoftQTable back =
        q_from_policy_value(policy_from_q(table), {value_from_q(table), alpha});
    CHECK((back.q - q).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("reward_from_q undoes the Bellman backup") {
  const TabularMdp single = one_state_mdp(Vec::Ones(1), 0.9);
  const SoftQTable q = soft_value_iteration(single, 1.0);
  CHECK(reward_from_q(single, q)(0, 0) == Catch::Approx(1.0).margin(1e-8));

  const TabularMdp flat = random_instance(4, 3, 0.0, 55);
  Mat arbitrary = random_reward(4, 3, 56);
  CHECK((reward_from_q(flat, {arbitrary, 1.0}) - arbitrary).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("reward <-> q round-trip is bounded by solver tolerance") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const TabularMdp mdp = random_instance(5, 3, 0.9, 200 + seed);
    const Mat q = random_reward(5, 3, 300 + seed) * 3.0;
    const double alpha = 0.5;
    const Mat r = reward_from_q(mdp, {q, alpha});
    const SoftQTable solved = soft_value_iteration_on(mdp, r, alpha);
    CHECK((solved.q - q).cwiseAbs().maxCoeff() <= 10.0 * kDefaultSolverTol);
  }
}

TEST_CASE("reward_from_policy_value matches its composed form") {
  const TabularMdp mdp = random_instance(5, 3, 0.85, 77);

  // V identically zero leaves only the log-policy term.
  const PolicyTable p = random_prior(mdp, 78);
  const SoftValueTable zero{Vec::Zero(5), 0.7};
  const Mat r0 = reward_from_policy_value(mdp, p, zero);
  CHECK((r0 - 0.7 * p.probs.array().log().matrix()).cwiseAbs().maxCoeff() <= 1e-12);

  // Uniform policy with constant V = c: alpha log(1/|A|) + c(1 - gamma).
  const PolicyTable u = PolicyTable::uniform(5, 3);
  const SoftValueTable constant{Vec::Constant(5, 2.0), 0.7};
  const Mat rc = reward_from_policy_value(mdp, u, constant);
  const double expected = 0.7 * std::log(1.0 / 3.0) + 2.0 * (1.0 - mdp.discount);
  CHECK((rc.array() - expected).abs().maxCoeff() <= 1e-12);

  // Composition identity with q_from_policy_value and reward_from_q.
  Vec v(5);
  SplitMix64 rng(79);
  for (int s = 0; s < 5; ++s) v(s) = 4.0 * rng.next_double() - 2.0;
  const SoftValueTable vt{v, 0.7};
  const Mat direct = reward_from_policy_value(mdp, p, vt);
  const Mat composed = reward_from_q(mdp, q_from_policy_value(p, vt));
  CHECK((direct - composed).cwiseAbs().maxCoeff() <= 1e-12);

  PolicyTable degenerate = u;
  degenerate.probs(0, 0) = 0.0;
  degenerate.probs(0, 1) = 2.0 / 3.0;
  CHECK_THROWS_AS(reward_from_policy_value(mdp, degenerate, vt), std::domain_error);
}

TEST_CASE("soft policy evaluation reduces to plain evaluation on a chain") {
  // Two states, one action: s0 -> s1, s1 self-loop; r = (1, 0), gamma = 0.5.
  TabularMdp mdp;
  mdp.num_states = 2;
  mdp.num_actions = 1;
  mdp.reward = Mat(2, 1);
  mdp.reward << 1.0, 0.0;
  mdp.transition = Mat(2, 2);
  mdp.transition << 0.0, 1.0, 0.0, 1.0;
  mdp.initial_dist = Vec(2);
  mdp.initial_dist << 1.0, 0.0;
  mdp.discount = 0.5;
  mdp.validate();

  const PolicyEvaluation pe = soft_policy_evaluation(mdp, PolicyTable::uniform(2, 1), 3.0);
  CHECK(pe.v.v(0) == Catch::Approx(1.0).margin(1e-12));
  CHECK(pe.v.v(1) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("the optimal policy is self-consistent under evaluation") {
  const TabularMdp mdp = random_instance(6, 3, 0.9, 404);
  const double alpha = 0.8;
  const SoftQTable q_star = soft_value_iteration(mdp, alpha);
  const PolicyTable pi_star = policy_from_q(q_star);
  const PolicyEvaluation pe = soft_policy_evaluation(mdp, pi_star, alpha);
  CHECK((pe.v.v - value_from_q(q_star)).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("soft policy evaluation with zero discount returns the reward") {
  const TabularMdp mdp = random_instance(4, 2, 0.0, 13);
  const PolicyTable p = random_prior(mdp, 14);
  const PolicyEvaluation pe = soft_policy_evaluation(mdp, p, 0.6);
  CHECK((pe.q.q - mdp.reward).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("objective value agrees between value form and occupancy form") {
  const TabularMdp single = one_state_mdp(Vec::Ones(1), 0.9);
  CHECK(evaluate_maxent_objective(single, PolicyTable::uniform(1, 1), 1.0) ==
        Catch::Approx(10.0).margin(1e-10));

  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const TabularMdp mdp = random_instance(5, 3, 0.9, 500 + seed);
    const PolicyTable p = random_prior(mdp, 600 + seed);
    const double alpha = 0.05 + 0.4 * double(seed);
    const double value_form = evaluate_maxent_objective(mdp, p, alpha);

    const VisitationDistribution vis = exact_visitation(mdp, p);
    double occupancy_form = 0.0;
    for (int s = 0; s < mdp.num_states; ++s) {
      double entropy = 0.0;
      for (int a = 0; a < mdp.num_actions; ++a) {
        occupancy_form += vis.mu(s, a) * mdp.reward(s, a);
        entropy -= p.probs(s, a) * std::log(p.probs(s, a));
      }
      occupancy_form += alpha * vis.rho(s) * entropy;
    }
    occupancy_form /= 1.0 - mdp.discount;
    CHECK(value_form == Catch::Approx(occupancy_form).margin(1e-8));
  }
}

TEST_CASE("zero reward with vanishing temperature drives the objective to zero") {
  const TabularMdp mdp = with_reward(random_instance(4, 3, 0.9, 901), Mat::Zero(4, 3));
  const double j = evaluate_maxent_objective(mdp, PolicyTable::uniform(4, 3), 1e-6);
  CHECK(std::abs(j) <= 1e-6 * std::log(3.0) / (1.0 - 0.9) + 1e-12);
}

TEST_CASE("reward to policy and back recovers the reward across temperatures") {
  const double alphas[] = {0.1, 1.0, 5.0};
  int trial = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    SplitMix64 shape(7000 + seed);
    const int states = 2 + static_cast<int>(shape.next_u64() % 5);
    const int actions = 2 + static_cast<int>(shape.next_u64() % 2);
    const TabularMdp mdp = random_instance(states, actions, 0.9, 7100 + seed);
    const double alpha = alphas[trial++ % 3];
    const SoftQTable q = soft_value_iteration(mdp, alpha);
    const SoftQTable rebuilt =
        q_from_policy_value(policy_from_q(q), {value_from_q(q), alpha});
    const Mat recovered = reward_from_q(mdp, rebuilt);
    CHECK((recovered - mdp.reward).cwiseAbs().maxCoeff() <= 10.0 * kDefaultSolverTol);
  }
}

TEST_CASE("no comparison policy beats the max-ent optimum") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const TabularMdp mdp = random_instance(4, 3, 0.9, 8000 + seed);
    const double alpha = 0.5;
    const PolicyTable pi_star = policy_from_q(soft_value_iteration(mdp, alpha));
    const double j_star = evaluate_maxent_objective(mdp, pi_star, alpha);
    for (std::uint64_t k = 0; k < 20; ++k) {
      const PolicyTable rival = random_prior(mdp, 9000 + 100 * seed + k);
      CHECK(j_star >= evaluate_maxent_objective(mdp, rival, alpha) - 1e-6);
    }
  }
}
