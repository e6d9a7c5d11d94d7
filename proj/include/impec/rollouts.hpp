// Offline rollout datasets generated by epsilon-greedy scripted planners.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "impec/env.hpp"
#include "impec/policy_eval.hpp"

namespace impec {

enum class PolicySource { Random, Mid, Expert };
std::string to_string(PolicySource s);
PolicySource parse_policy_source(const std::string& text);

struct RolloutStep {
  GridState state;  // state the action is taken in
  Action action = Action::Stay;
  Observation observation;  // observation of `state`
};

struct Rollout {
  int id = 0;
  std::vector<RolloutStep> steps;
  double gt_return = 0.0;
  PolicySource source = PolicySource::Random;
  std::uint64_t reset_seed = 0;

  std::string action_string() const;
};

/// Sum of ground-truth rewards obtained by replaying the rollout's steps.
double ground_truth_return(const Environment& env, const Rollout& rollout);

/// Epsilon-greedy wrapper around the ground-truth planner.
class ScriptedPolicy {
 public:
  ScriptedPolicy(const Environment& env, double epsilon);
  Action act(const GridState& state, Rng& gen);
  double epsilon() const { return epsilon_; }
  PolicySource source() const;

 private:
  Planner planner_;
  double epsilon_;
};

/// Plays `length` steps from reset(reset_seed).
Rollout play_rollout(const Environment& env, ScriptedPolicy& policy, std::uint64_t reset_seed, Rng& gen,
                     int length);

/// Rebuilds a rollout from its reset seed and action codes.
Rollout replay_rollout(const Environment& env, std::uint64_t reset_seed, const std::string& actions);

struct DatasetOptions {
  int n_rollouts = 500;
  int fragment_length = 30;
  double low_return_cap = 0.10;
  double low_return_threshold = 5.0;
  std::vector<double> epsilons = {1.0, 0.5, 0.05};
  int max_attempts_per_rollout = 50;
};

struct RolloutDataset {
  TaskConfig task;
  std::vector<Rollout> rollouts;  // rollouts[i].id == i
  int fragment_length = 30;
  double low_return_cap = 0.10;
  double low_return_threshold = 5.0;

  std::size_t size() const { return rollouts.size(); }
  const Rollout& at(int id) const { return rollouts.at(static_cast<std::size_t>(id)); }
  int low_return_count() const;
};

/// Round-robin over the epsilons; low-return rollouts are rejected once the cap
/// would be exceeded. Throws std::runtime_error when the attempt budget runs out.
RolloutDataset generate_dataset(const Environment& env, const DatasetOptions& options, std::uint64_t seed);

/// k distinct unordered pairs of rollout ids, uniformly without replacement.
std::vector<std::pair<int, int>> sample_initial_pairs(std::size_t dataset_size, std::size_t k, std::uint64_t seed);

void save_dataset(const RolloutDataset& dataset, std::ostream& out);
void save_dataset(const RolloutDataset& dataset, const std::string& path);
/// Replays every record; throws when a stored return disagrees with the replay.
RolloutDataset load_dataset(std::istream& in);
RolloutDataset load_dataset(const std::string& path);

/// Phi coefficient between "ripple <= threshold after step t" and "goal reached
/// at or before step t" over every step of every rollout.
double ripple_goal_correlation(const Environment& env, const std::vector<Rollout>& rollouts,
                               double threshold = 0.1);

}  // namespace impec
