#pragma once

#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "riftlab/residual.hpp"
#include "riftlab/rng.hpp"
#include "riftlab/soft_rl.hpp"
#include "riftlab/tabular_mdp.hpp"

namespace riftlab {

// Supervisor models for the e-stop protocol. phi(s,a) is the probability that
// the supervisor hits the stop when the agent takes a in s.
//
// QGapStrategy flags actions whose expert soft-Q gap exceeds the threshold:
//   phi(s,a) = 1[ Q*(s, a*) - Q*(s, a) > threshold ]   (strict >)
// with a* the lowest-index argmax of Q*(s, .). Smaller thresholds flag more
// actions and give more informative supervision.
struct QGapStrategy {
  SoftQTable expert_q;
  double threshold = 0.0;
};

struct StateBasedStrategy {
  Vec phi;  // per-state stop probability, shared across actions
};

struct RandomUniformStrategy {
  double p = 0.0;
};

struct ExplicitTableStrategy {
  Mat phi;  // S x A stop probabilities
};

using InterventionStrategy =
    std::variant<QGapStrategy, StateBasedStrategy, RandomUniformStrategy, ExplicitTableStrategy>;

inline int expert_mode_action(const SoftQTable& q, int s) {
  int best = 0;
  for (int a = 1; a < q.q.cols(); ++a)
    if (q.q(s, a) > q.q(s, best)) best = a;
  return best;
}

inline double phi_value(const InterventionStrategy& strategy, int s, int a) {
  return std::visit(
      [&](const auto& strat) -> double {
        using T = std::decay_t<decltype(strat)>;
        if constexpr (std::is_same_v<T, QGapStrategy>) {
          if (s < 0 || s >= strat.expert_q.q.rows() || a < 0 || a >= strat.expert_q.q.cols())
            throw std::out_of_range("phi_value: state or action out of range");
          const int star = expert_mode_action(strat.expert_q, s);
          return strat.expert_q.q(s, star) - strat.expert_q.q(s, a) > strat.threshold ? 1.0 : 0.0;
        } else if constexpr (std::is_same_v<T, StateBasedStrategy>) {
          if (s < 0 || s >= strat.phi.size()) throw std::out_of_range("phi_value: state out of range");
          if (a < 0) throw std::out_of_range("phi_value: action out of range");
          return strat.phi(s);
        } else if constexpr (std::is_same_v<T, RandomUniformStrategy>) {
          if (s < 0 || a < 0) throw std::out_of_range("phi_value: state or action out of range");
          return strat.p;
        } else {
          if (s < 0 || s >= strat.phi.rows() || a < 0 || a >= strat.phi.cols())
            throw std::out_of_range("phi_value: state or action out of range");
          return strat.phi(s, a);
        }
      },
      strategy);
}

inline void validate_strategy(const InterventionStrategy& strategy) {
  std::visit(
      [](const auto& strat) {
        using T = std::decay_t<decltype(strat)>;
        if constexpr (std::is_same_v<T, StateBasedStrategy>) {
          if (strat.phi.size() > 0 && (strat.phi.minCoeff() < 0.0 || strat.phi.maxCoeff() > 1.0))
            throw std::invalid_argument("intervention strategy: phi entries must lie in [0, 1]");
        } else if constexpr (std::is_same_v<T, RandomUniformStrategy>) {
          if (strat.p < 0.0 || strat.p > 1.0)
            throw std::invalid_argument("intervention strategy: p must lie in [0, 1]");
        } else if constexpr (std::is_same_v<T, ExplicitTableStrategy>) {
          if (strat.phi.size() > 0 && (strat.phi.minCoeff() < 0.0 || strat.phi.maxCoeff() > 1.0))
            throw std::invalid_argument("intervention strategy: phi entries must lie in [0, 1]");
        }
      },
      strategy);
}

inline Mat phi_table(const InterventionStrategy& strategy, int num_states, int num_actions) {
  Mat phi(num_states, num_actions);
  for (int s = 0; s < num_states; ++s)
    for (int a = 0; a < num_actions; ++a) phi(s, a) = phi_value(strategy, s, a);
  return phi;
}

// Intervention objective J_INT = J_FT with reward -phi.
inline double evaluate_j_int(const TabularMdp& mdp, const PolicyTable& policy,
                             const InterventionStrategy& strategy, const PolicyTable& prior,
                             double omega) {
  const Mat neg_phi = -phi_table(strategy, mdp.num_states, mdp.num_actions);
  return evaluate_j_ft(mdp, policy, neg_phi, prior, omega);
}

struct TransitionRecord {
  int state = 0;
  int action = 0;
  int next_state = 0;
  std::uint8_t estop = 0;
};

enum class EndCause { estop, horizon, terminal };

inline const char* to_string(EndCause cause) {
  switch (cause) {
    case EndCause::estop: return "estop";
    case EndCause::horizon: return "horizon";
    case EndCause::terminal: return "terminal";
  }
  return "unknown";
}

struct RolloutDataset {
  std::vector<TransitionRecord> records;
  std::vector<int> episode_offsets;  // size num_episodes + 1
  std::vector<EndCause> end_causes;

  int num_episodes() const { return static_cast<int>(end_causes.size()); }
};

// One e-stop episode. The initial state is drawn first; each step consumes
// draws in the fixed order (action, transition, e-stop), with the e-stop draw
// consumed even for deterministic phi so that the stream layout never depends
// on the strategy. The episode ends at the first e-stop, on reaching an
// absorbing state, or at max_horizon, in that precedence.
inline std::pair<std::vector<TransitionRecord>, EndCause> rollout_with_estop(
    const TabularMdp& mdp, const PolicyTable& policy, const InterventionStrategy& strategy,
    int max_horizon, std::uint64_t seed) {
  if (max_horizon <= 0) throw std::invalid_argument("rollout_with_estop: max_horizon must be positive");
  SplitMix64 rng(seed);
  std::vector<TransitionRecord> records;
  int s = sample_categorical(rng, mdp.initial_dist);
  EndCause cause = EndCause::horizon;
  for (int t = 0; t < max_horizon; ++t) {
    const int a = sample_categorical(rng, policy.probs.row(s));
    const int next = sample_categorical(rng, mdp.transition.row(mdp.sa_index(s, a)));
    const bool stop = rng.next_double() < phi_value(strategy, s, a);
    records.push_back({s, a, next, static_cast<std::uint8_t>(stop ? 1 : 0)});
    if (stop) {
      cause = EndCause::estop;
      break;
    }
    if (mdp.is_absorbing(next)) {
      cause = EndCause::terminal;
      break;
    }
    s = next;
  }
  return {std::move(records), cause};
}

// Rolls out `episodes` e-stop episodes; episode i uses stream_seed(seed, i).
inline RolloutDataset collect_dataset(const TabularMdp& mdp, const PolicyTable& policy,
                                      const InterventionStrategy& strategy, int episodes,
                                      int max_horizon, std::uint64_t seed) {
  if (episodes <= 0) throw std::invalid_argument("collect_dataset: episodes must be positive");
  RolloutDataset ds;
  ds.episode_offsets.push_back(0);
  for (int e = 0; e < episodes; ++e) {
    auto [records, cause] = rollout_with_estop(mdp, policy, strategy, max_horizon,
                                               stream_seed(seed, static_cast<std::uint64_t>(e)));
    ds.records.insert(ds.records.end(), records.begin(), records.end());
    ds.episode_offsets.push_back(static_cast<int>(ds.records.size()));
    ds.end_causes.push_back(cause);
  }
  return ds;
}

// Fraction of episodes ended by an e-stop. Evaluation uses the policy's
// per-state mode action when deterministic is set (the default), matching the
// deterministic evaluation protocol.
inline double intervention_rate(const TabularMdp& mdp, const PolicyTable& policy,
                                const InterventionStrategy& strategy, int episodes, int max_horizon,
                                std::uint64_t seed, bool deterministic = true) {
  const PolicyTable rollout_policy = deterministic ? greedy_mode(policy) : policy;
  const RolloutDataset ds = collect_dataset(mdp, rollout_policy, strategy, episodes, max_horizon, seed);
  int stopped = 0;
  for (EndCause c : ds.end_causes)
    if (c == EndCause::estop) ++stopped;
  return static_cast<double>(stopped) / episodes;
}

inline void write_dataset_csv(const RolloutDataset& ds, std::ostream& out) {
  out << "episode,step,state,action,next_state,estop,end_cause\n";
  for (int e = 0; e < ds.num_episodes(); ++e) {
    for (int i = ds.episode_offsets[e]; i < ds.episode_offsets[e + 1]; ++i) {
      const TransitionRecord& r = ds.records[i];
      out << e << ',' << (i - ds.episode_offsets[e]) << ',' << r.state << ',' << r.action << ','
          << r.next_state << ',' << static_cast<int>(r.estop) << ',' << to_string(ds.end_causes[e])
          << '\n';
    }
  }
}

}  // namespace riftlab
