// Tabular planning over the enumerable gridworld abstraction and ground-truth
// policy evaluation.
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "impec/env.hpp"

namespace impec {

/// Abstract state: what the planner distinguishes. Obstacles, step count and
/// noise are dropped; the layout is fixed per model.
struct StateKey {
  std::int8_t row = 0;
  std::int8_t col = 0;
  std::int8_t dir = 0;
  std::int8_t carried = -1;
  double ripple = -1.0;  // -1 when the task has no ripple dimension

  bool operator==(const StateKey&) const = default;
};

struct StateKeyHash {
  std::size_t operator()(const StateKey& k) const noexcept;
};

StateKey state_key(const GridState& state);

struct Transition {
  int next = 0;
  double prob = 0.0;
  double reward = 0.0;  // ground-truth reward of this outcome
};

enum class RewardSource { GroundTruth, LearnedPosteriorMean };

struct TabularModel {
  std::shared_ptr<const Layout> layout;
  std::vector<GridState> states;  // canonical representative per abstract state
  std::vector<std::vector<Transition>> transitions;  // [state * kNumActions + action]
  std::unordered_map<StateKey, int, StateKeyHash> index;
  int initial_state = 0;

  std::size_t size() const { return states.size(); }
  /// -1 when the state is not part of the model.
  int find(const GridState& state) const;
  const std::vector<Transition>& outcomes(int state, Action a) const {
    return transitions[static_cast<std::size_t>(state) * kNumActions + static_cast<std::size_t>(a)];
  }
};

/// Reachable abstract states from `reset_state`. DynamicObstacles transitions
/// marginalise over obstacle placements. Throws when more than `state_cap`
/// states are found.
TabularModel enumerate_states(const Environment& env, const GridState& reset_state,
                              std::size_t state_cap = 1'000'000);

/// Per (state, action) reward, indexed [state * kNumActions + action].
using RewardTable = std::vector<double>;

RewardTable ground_truth_rewards(const TabularModel& model);

struct TabularPolicy {
  std::vector<Action> actions;
  std::vector<double> values;
  std::vector<double> residuals;  // sup-norm change per sweep
  int sweeps = 0;
};

/// Jacobi value iteration until the sup-norm residual drops below
/// `tolerance`; greedy extraction breaks ties toward the lowest action index.
TabularPolicy value_iteration(const TabularModel& model, const RewardTable& rewards, double gamma = 0.98,
                              double tolerance = 1e-6, int max_sweeps = 1'000'000);

struct PlannedPolicy {
  TabularModel model;
  TabularPolicy policy;

  /// Stay for states outside the model.
  Action act(const GridState& state) const;
};

using RewardTableFn = std::function<RewardTable(const TabularModel&)>;

/// Plans once per distinct layout and caches the result.
class Planner {
 public:
  Planner(const Environment& env, RewardTableFn rewards, double gamma = 0.98, double tolerance = 1e-6);
  /// Planner on the ground-truth reward.
  explicit Planner(const Environment& env);

  const PlannedPolicy& plan(const GridState& reset_state);
  Action act(const GridState& state);
  const Environment& env() const { return env_; }

 private:
  const Environment& env_;
  RewardTableFn rewards_;
  double gamma_;
  double tolerance_;
  std::map<std::string, std::shared_ptr<PlannedPolicy>> cache_;
};

std::string layout_key(const Layout& layout);

struct EvalReport {
  double mean_return = 0.0;
  double std_return = 0.0;
  int episodes = 0;
  int horizon = 0;
  bool failed = false;
  std::vector<double> returns;
};

struct EvalSettings {
  int episodes = 20;
  int horizon = 100;
  double failure_threshold = 10.0;
};

/// Rolls the planner's policy out on its own environment with ground-truth rewards.
EvalReport evaluate_policy(Planner& planner, const EvalSettings& settings, std::uint64_t seed);

/// Same, for an arbitrary state-to-action rule.
EvalReport evaluate_policy(const std::function<Action(const GridState&)>& policy, const Environment& env,
                           const EvalSettings& settings, std::uint64_t seed);

/// Environment used for evaluation: the Test variant for distribution-shift
/// tasks, the same configuration otherwise.
TaskConfig evaluation_config(const TaskConfig& train);

struct ProbeReport {
  double reward_goal_rippling = 0.0;
  double reward_still_elsewhere = 0.0;
  double gap = 0.0;  // > 0: tracks the goal; < 0: tracks still water
};

using StateRewardFn = std::function<double(const GridState&, const Observation&, Action)>;

/// Compares the reward of (goal satisfied, rippling water) with (start cell,
/// still water), both under Stay. Requires the ExtraObs confound.
ProbeReport spurious_probe(const Environment& env, const StateRewardFn& reward);

/// Ground-truth reward as a StateRewardFn (one environment step).
StateRewardFn ground_truth_reward_fn(const Environment& env);

}  // namespace impec
