#include "impec/policy_eval.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>
#include <stdexcept>

namespace impec {

namespace {

constexpr double kTieTolerance = 1e-9;

GridState canonical(GridState s) {
  s.obstacles.clear();
  s.step_count = 0;
  s.noise_state = 0;
  return s;
}

}  // namespace

std::size_t StateKeyHash::operator()(const StateKey& k) const noexcept {
  std::uint64_t h = static_cast<std::uint64_t>(static_cast<std::uint8_t>(k.row));
  h = h * 131 + static_cast<std::uint8_t>(k.col);
  h = h * 131 + static_cast<std::uint8_t>(k.dir);
  h = h * 131 + static_cast<std::uint8_t>(k.carried);
  h ^= std::hash<double>{}(k.ripple) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  return static_cast<std::size_t>(h);
}

StateKey state_key(const GridState& s) {
  StateKey k;
  k.row = static_cast<std::int8_t>(s.agent.row);
  k.col = static_cast<std::int8_t>(s.agent.col);
  k.dir = static_cast<std::int8_t>(s.dir);
  k.carried = static_cast<std::int8_t>(s.carried.value_or(-1));
  k.ripple = s.ripple_level.value_or(-1.0);
  return k;
}

int TabularModel::find(const GridState& state) const {
  auto it = index.find(state_key(state));
  return it == index.end() ? -1 : it->second;
}

TabularModel enumerate_states(const Environment& env, const GridState& reset_state, std::size_t state_cap) {
  TabularModel model;
  model.layout = reset_state.layout;
  const bool dynamic = env.config().task == TaskName::DynamicObstacles;
  const int interior = (env.config().grid_size - 2) * (env.config().grid_size - 2);

  auto intern = [&](const GridState& s) -> int {
    const StateKey key = state_key(s);
    auto it = model.index.find(key);
    if (it != model.index.end()) return it->second;
    if (model.states.size() >= state_cap)
      throw std::runtime_error("state enumeration exceeded cap of " + std::to_string(state_cap));
    const int id = static_cast<int>(model.states.size());
    model.index.emplace(key, id);
    model.states.push_back(canonical(s));
    return id;
  };

  model.initial_state = intern(reset_state);
  std::deque<int> frontier{model.initial_state};
  while (!frontier.empty()) {
    const int id = frontier.front();
    frontier.pop_front();
    const std::size_t before = model.states.size();
    std::vector<std::vector<Transition>> rows(kNumActions);
    for (Action a : kAllActions) {
      const GridState s = model.states[static_cast<std::size_t>(id)];
      auto& row = rows[static_cast<std::size_t>(a)];
      auto add = [&](const StepResult& r, double p) {
        if (p <= 0.0) return;
        const int next = intern(r.state);
        for (auto& t : row)
          if (t.next == next) {
            t.prob += p;
            return;
          }
        row.push_back({next, p, r.reward});
      };
      const Cell f = front_cell(s.agent, s.dir);
      const bool contested = dynamic && a == Action::Forward && env.walkable(s, f) &&
                             !(s.layout->goal && f == *s.layout->goal);
      if (contested) {
        const bool agent_on_goal = s.layout->goal && s.agent == *s.layout->goal;
        const int candidates = interior - 1 - (s.layout->goal && !agent_on_goal ? 1 : 0);
        const double blocked = std::min(1.0, static_cast<double>(env.config().obstacle_count) / candidates);
        add(env.step(s, Action::Forward), 1.0 - blocked);
        add(env.step(s, Action::Stay), blocked);
      } else {
        add(env.step(s, a), 1.0);
      }
    }
    for (std::size_t a = 0; a < kNumActions; ++a) {
      const std::size_t slot = static_cast<std::size_t>(id) * kNumActions + a;
      if (model.transitions.size() <= slot) model.transitions.resize(slot + 1);
      model.transitions[slot] = std::move(rows[a]);
    }
    for (std::size_t i = before; i < model.states.size(); ++i) frontier.push_back(static_cast<int>(i));
  }
  model.transitions.resize(model.states.size() * kNumActions);
  return model;
}

RewardTable ground_truth_rewards(const TabularModel& model) {
  RewardTable table(model.size() * kNumActions, 0.0);
  for (std::size_t i = 0; i < table.size(); ++i)
    for (const Transition& t : model.transitions[i]) table[i] += t.prob * t.reward;
  return table;
}

TabularPolicy value_iteration(const TabularModel& model, const RewardTable& rewards, double gamma, double tolerance,
                              int max_sweeps) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in [0, 1)");
  if (rewards.size() != model.size() * kNumActions) throw std::invalid_argument("reward table size mismatch");
  const std::size_t n = model.size();
  TabularPolicy out;
  std::vector<double> v(n, 0.0), next(n, 0.0);
  auto q_value = [&](std::size_t s, std::size_t a, const std::vector<double>& values) {
    const std::size_t slot = s * kNumActions + a;
    double q = rewards[slot];
    for (const Transition& t : model.transitions[slot]) q += gamma * t.prob * values[static_cast<std::size_t>(t.next)];
    return q;
  };
  while (out.sweeps < max_sweeps) {
    double residual = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      double best = -INFINITY;
      for (std::size_t a = 0; a < kNumActions; ++a) best = std::max(best, q_value(s, a, v));
      next[s] = best;
      residual = std::max(residual, std::abs(best - v[s]));
    }
    v.swap(next);
    ++out.sweeps;
    out.residuals.push_back(residual);
    if (residual < tolerance) break;
  }
  out.values = v;
  out.actions.resize(n, Action::Stay);
  for (std::size_t s = 0; s < n; ++s) {
    double q[kNumActions];
    double best = -INFINITY;
    for (std::size_t a = 0; a < kNumActions; ++a) {
      q[a] = q_value(s, a, v);
      best = std::max(best, q[a]);
    }
    for (std::size_t a = 0; a < kNumActions; ++a)
      if (q[a] >= best - kTieTolerance) {
        out.actions[s] = static_cast<Action>(a);
        break;
      }
  }
  return out;
}

Action PlannedPolicy::act(const GridState& state) const {
  const int id = model.find(state);
  return id < 0 ? Action::Stay : policy.actions[static_cast<std::size_t>(id)];
}

std::string layout_key(const Layout& l) {
  std::ostringstream out;
  out << l.grid_size << '|';
  if (l.goal) out << 'g' << l.goal->row << ',' << l.goal->col << ',' << static_cast<int>(l.goal_color);
  out << '|';
  for (Cell c : l.lava) out << c.row << ',' << c.col << ';';
  out << '|';
  for (const Door& d : l.doors) out << d.cell.row << ',' << d.cell.col << ',' << static_cast<int>(d.color) << ';';
  out << '|';
  for (const Object& o : l.objects)
    out << static_cast<int>(o.kind) << ',' << static_cast<int>(o.color) << ',' << o.cell.row << ',' << o.cell.col << ';';
  out << '|' << l.key_index << '|' << l.start.row << ',' << l.start.col << ',' << static_cast<int>(l.start_dir);
  return out.str();
}

Planner::Planner(const Environment& env, RewardTableFn rewards, double gamma, double tolerance)
    : env_(env), rewards_(std::move(rewards)), gamma_(gamma), tolerance_(tolerance) {}

Planner::Planner(const Environment& env) : Planner(env, ground_truth_rewards) {}

const PlannedPolicy& Planner::plan(const GridState& reset_state) {
  const std::string key = layout_key(*reset_state.layout);
  auto it = cache_.find(key);
  if (it != cache_.end()) return *it->second;
  auto planned = std::make_shared<PlannedPolicy>();
  planned->model = enumerate_states(env_, reset_state);
  planned->policy = value_iteration(planned->model, rewards_(planned->model), gamma_, tolerance_);
  return *cache_.emplace(key, std::move(planned)).first->second;
}

Action Planner::act(const GridState& state) { return plan(state).act(state); }

EvalReport evaluate_policy(const std::function<Action(const GridState&)>& policy, const Environment& env,
                           const EvalSettings& settings, std::uint64_t seed) {
  EvalReport report;
  report.episodes = settings.episodes;
  report.horizon = settings.horizon;
  for (int e = 0; e < settings.episodes; ++e) {
    GridState s = env.reset(mix_seed(seed, static_cast<std::uint64_t>(e))).first;
    double total = 0.0;
    for (int t = 0; t < settings.horizon; ++t) {
      StepResult r = env.step(s, policy(s));
      total += r.reward;
      s = std::move(r.state);
    }
    report.returns.push_back(total);
  }
  report.mean_return = mean_of(report.returns);
  report.std_return = stddev_of(report.returns);
  report.failed = report.mean_return <= settings.failure_threshold;
  return report;
}

EvalReport evaluate_policy(Planner& planner, const EvalSettings& settings, std::uint64_t seed) {
  return evaluate_policy([&planner](const GridState& s) { return planner.act(s); }, planner.env(), settings, seed);
}

TaskConfig evaluation_config(const TaskConfig& train) {
  TaskConfig c = train;
  if (c.distribution_shift()) c.variant = Variant::Test;
  return c;
}

StateRewardFn ground_truth_reward_fn(const Environment& env) {
  return [&env](const GridState& s, const Observation&, Action a) { return env.step(s, a).reward; };
}

ProbeReport spurious_probe(const Environment& env, const StateRewardFn& reward) {
  if (!env.config().confounds.extra_obs) throw std::invalid_argument("spurious_probe requires the ExtraObs confound");
  const GridState start = env.reset(0).first;
  GridState at_goal = start;
  const Layout& l = *start.layout;
  switch (env.config().task) {
    case TaskName::GoToDoor: at_goal.agent = door_inner_cell(l.doors.front(), env.config().grid_size); break;
    case TaskName::Fetch: at_goal.carried = l.key_index; break;
    default: at_goal.agent = *l.goal; break;
  }
  at_goal.ripple_level = 1.0;
  env.place_obstacles(at_goal);
  GridState still = start;
  still.ripple_level = 0.0;
  ProbeReport out;
  out.reward_goal_rippling = reward(at_goal, env.observe(at_goal), Action::Stay);
  out.reward_still_elsewhere = reward(still, env.observe(still), Action::Stay);
  out.gap = out.reward_goal_rippling - out.reward_still_elsewhere;
  return out;
}

}  // namespace impec
