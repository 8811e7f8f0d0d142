#include <catch2/catch_amalgamated.hpp>

#include "riftlab/rift.hpp"
#include "riftlab/tabular_mdp.hpp"
#include "riftlab/theory.hpp"

using namespace riftlab;

namespace {

// Brute-force state-action transition matrix, written independently of the
// library construction.
Mat brute_force_w(const TabularMdp& mdp, const PolicyTable& pi) {
  const int n = mdp.num_states * mdp.num_actions;
  Mat w = Mat::Zero(n, n);
  for (int s = 0; s < mdp.num_states; ++s)
    for (int a = 0; a < mdp.num_actions; ++a)
      for (int sp = 0; sp < mdp.num_states; ++sp)
        for (int ap = 0; ap < mdp.num_actions; ++ap)
          w(s * mdp.num_actions + a, sp * mdp.num_actions + ap) =
              mdp.transition(s * mdp.num_actions + a, sp) * pi.probs(sp, ap);
  return w;
}

Vec initial_mu(const TabularMdp& mdp, const PolicyTable& pi) {
  Vec mu0(mdp.num_states * mdp.num_actions);
  for (int s = 0; s < mdp.num_states; ++s)
    for (int a = 0; a < mdp.num_actions; ++a)
      mu0(s * mdp.num_actions + a) = mdp.initial_dist(s) * pi.probs(s, a);
  return mu0;
}

}  // namespace

TEST_CASE("validation rejects malformed MDPs") {
  TabularMdp mdp = random_instance(3, 2, 0.9, 11);
  REQUIRE_NOTHROW(mdp.validate());

  TabularMdp bad = mdp;
  bad.transition(2, 0) += 0.2;
  CHECK_THROWS_WITH(bad.validate(), Catch::Matchers::ContainsSubstring("(s=1,a=0)"));

  bad = mdp;
  bad.discount = 1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = mdp;
  bad.initial_dist(0) += 0.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = mdp;
  bad.transition(0, 0) = -0.1;
  bad.transition(0, 1) += 0.1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("policy helpers") {
  PolicyTable p;
  p.probs = Mat(2, 3);
  p.probs << 1.0, 0.0, 0.0, 0.4, 0.4, 0.2;
  REQUIRE_NOTHROW(p.validate());

  const PolicyTable interior = ensure_interior(p);
  CHECK(interior.probs.minCoeff() >= kEpsPolicy);
  for (int s = 0; s < 2; ++s) CHECK(interior.probs.row(s).sum() == Catch::Approx(1.0).margin(1e-15));

  // Mode action breaks ties toward the lowest index.
  const PolicyTable mode = greedy_mode(p);
  CHECK(mode.probs(0, 0) == 1.0);
  CHECK(mode.probs(1, 0) == 1.0);

  // Row 1 has mass on action 1 where row 0 has none: infinite divergence.
  CHECK_THROWS_AS(row_kl(p.probs.row(1), p.probs.row(0)), std::domain_error);
  Eigen::RowVector3d q(0.5, 0.25, 0.25);
  const double kl = row_kl(q, q);
  CHECK(kl == Catch::Approx(0.0).margin(1e-15));
  CHECK(max_per_state_tv(p, p) == 0.0);
}

TEST_CASE("transition_matrix matches brute force and is right-stochastic") {
  const TabularMdp mdp = random_instance(4, 3, 0.9, 22);
  PolicyTable pi = random_prior(mdp, 5);
  const Mat w = transition_matrix(mdp, pi);
  const Mat oracle = brute_force_w(mdp, pi);
  CHECK((w - oracle).cwiseAbs().maxCoeff() <= 1e-15);
  for (int i = 0; i < w.rows(); ++i) CHECK(w.row(i).sum() == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("exact_visitation matches a truncated Neumann series oracle") {
  const TabularMdp mdp = random_instance(4, 2, 0.9, 33);
  const PolicyTable pi = random_prior(mdp, 7);
  const VisitationDistribution vis = exact_visitation(mdp, pi);

  // Oracle: mu_T = (1-gamma) * sum_{t<=200} gamma^t mu0^T W^t.
  const Mat w = brute_force_w(mdp, pi);
  Eigen::RowVectorXd mu_t = initial_mu(mdp, pi).transpose();
  Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(mu_t.size());
  double scale = 1.0 - mdp.discount;
  for (int t = 0; t <= 200; ++t) {
    acc += scale * mu_t;
    mu_t = mu_t * w;
    scale *= mdp.discount;
  }
  for (int s = 0; s < 4; ++s)
    for (int a = 0; a < 2; ++a)
      CHECK(vis.mu(s, a) == Catch::Approx(acc(s * 2 + a)).margin(1e-8));

  CHECK(vis.mu.sum() == Catch::Approx(1.0).margin(1e-9));
  CHECK(vis.mu.minCoeff() >= -1e-12);
  CHECK((vis.rho - vis.mu.rowwise().sum()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("exact_visitation satisfies the stationarity identity") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
    const TabularMdp mdp = random_instance(5, 3, 0.9, seed);
    const PolicyTable pi = random_prior(mdp, seed + 100);
    const VisitationDistribution vis = exact_visitation(mdp, pi);
    Vec mu_flat(mdp.num_states * mdp.num_actions);
    for (int s = 0; s < mdp.num_states; ++s)
      for (int a = 0; a < mdp.num_actions; ++a) mu_flat(mdp.sa_index(s, a)) = vis.mu(s, a);
    const Mat w = transition_matrix(mdp, pi);
    const Vec residual = (Mat::Identity(mu_flat.size(), mu_flat.size()) - mdp.discount * w)
                                 .transpose() *
                             mu_flat -
                         (1.0 - mdp.discount) * initial_mu(mdp, pi);
    CHECK(residual.cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("per_timestep_visitation matches matrix powering") {
  const TabularMdp mdp = random_instance(4, 2, 0.8, 44);
  const PolicyTable pi = random_prior(mdp, 9);
  const auto rho = per_timestep_visitation(mdp, pi, 7);
  REQUIRE(rho.size() == 8);

  const Mat w = brute_force_w(mdp, pi);
  Eigen::RowVectorXd mu_t = initial_mu(mdp, pi).transpose();
  for (int t = 0; t <= 7; ++t) {
    CHECK(rho[t].sum() == Catch::Approx(1.0).margin(1e-12));
    for (int s = 0; s < 4; ++s) {
      double marginal = 0.0;
      for (int a = 0; a < 2; ++a) marginal += mu_t(s * 2 + a);
      CHECK(rho[t](s) == Catch::Approx(marginal).margin(1e-12));
    }
    mu_t = mu_t * w;
  }
}

TEST_CASE("monte_carlo_visitation is deterministic with an exact truncation deficit") {
  const TabularMdp mdp = random_instance(3, 2, 0.9, 55);
  const PolicyTable pi = random_prior(mdp, 3);
  const VisitationDistribution a = monte_carlo_visitation(mdp, pi, 2000, 140, 77);
  const VisitationDistribution b = monte_carlo_visitation(mdp, pi, 2000, 140, 77);
  CHECK((a.mu - b.mu).cwiseAbs().maxCoeff() == 0.0);

  const VisitationDistribution c = monte_carlo_visitation(mdp, pi, 2000, 140, 78);
  CHECK((a.mu - c.mu).cwiseAbs().maxCoeff() > 0.0);

  const double expected_mass = 1.0 - std::pow(mdp.discount, 140);
  CHECK(a.mu.sum() == Catch::Approx(expected_mass).margin(1e-9));

  const VisitationDistribution exact = exact_visitation(mdp, pi);
  const VisitationDistribution mc = monte_carlo_visitation(mdp, pi, 50000, 140, 4242);
  CHECK((mc.mu - exact.mu).cwiseAbs().maxCoeff() <= 5e-3);

  CHECK_THROWS_AS(monte_carlo_visitation(mdp, pi, 0, 140, 1), std::invalid_argument);
}
