#include <cmath>
#include <deque>
#include <map>
#include <set>
#include <tuple>

#include "doctest.h"
#include "impec/policy_eval.hpp"

using namespace impec;

namespace {

// Independent reachability count for Empty: (cell, dir, ripple) with the ripple
// rule written out by hand.
std::size_t brute_force_empty_states(int n, double decay) {
  using Key = std::tuple<int, int, int, double>;
  std::set<Key> seen;
  std::deque<Key> queue;
  const Key start{1, 1, 0, 0.0};
  seen.insert(start);
  queue.push_back(start);
  const int dr[4] = {0, 1, 0, -1};
  const int dc[4] = {1, 0, -1, 0};
  auto calm = [decay](double r) {
    const double x = r * decay;
    return x < 1e-3 ? 0.0 : x;
  };
  while (!queue.empty()) {
    auto [r, c, d, rip] = queue.front();
    queue.pop_front();
    std::vector<Key> next = {{r, c, (d + 3) % 4, calm(rip)}, {r, c, (d + 1) % 4, calm(rip)}, {r, c, d, calm(rip)}};
    const int nr = r + dr[d], nc = c + dc[d];
    if (nr >= 1 && nr <= n - 2 && nc >= 1 && nc <= n - 2) next.push_back({nr, nc, d, 1.0});
    else next.push_back({r, c, d, calm(rip)});
    for (const Key& k : next)
      if (seen.insert(k).second) queue.push_back(k);
  }
  return seen.size();
}

// Fewest turn/forward actions from (cell, dir) to the goal cell on an open grid.
int bfs_steps_to_goal(int n, Cell from, int dir, Cell goal) {
  using Key = std::tuple<int, int, int>;
  std::map<Key, int> dist;
  std::deque<Key> queue;
  dist[{from.row, from.col, dir}] = 0;
  queue.push_back({from.row, from.col, dir});
  const int dr[4] = {0, 1, 0, -1};
  const int dc[4] = {1, 0, -1, 0};
  while (!queue.empty()) {
    auto [r, c, d] = queue.front();
    queue.pop_front();
    const int here = dist[{r, c, d}];
    if (Cell{r, c} == goal) return here;
    std::vector<Key> next = {{r, c, (d + 3) % 4}, {r, c, (d + 1) % 4}};
    const int nr = r + dr[d], nc = c + dc[d];
    if (nr >= 1 && nr <= n - 2 && nc >= 1 && nc <= n - 2) next.push_back({nr, nc, d});
    for (const Key& k : next)
      if (!dist.count(k)) {
        dist[k] = here + 1;
        queue.push_back(k);
      }
  }
  return -1;
}

}  // namespace

TEST_CASE("Empty abstraction covers every free cell and heading") {
  Environment env(TaskConfig::defaults(TaskName::Empty));
  const GridState s0 = env.reset(0).first;
  const TabularModel model = enumerate_states(env, s0);
  std::set<std::tuple<int, int, int>> cell_dirs;
  for (const GridState& s : model.states) cell_dirs.insert({s.agent.row, s.agent.col, static_cast<int>(s.dir)});
  CHECK(cell_dirs.size() == 36 * 4);
  CHECK(model.size() == brute_force_empty_states(8, env.config().ripple_decay));
  CHECK(model.states[static_cast<std::size_t>(model.initial_state)].agent == s0.agent);
}

TEST_CASE("transition rows are distributions") {
  for (TaskName t : {TaskName::Empty, TaskName::DynamicObstacles, TaskName::Lava, TaskName::LavaPosition,
                     TaskName::GoToDoor, TaskName::Fetch}) {
    Environment env(TaskConfig::defaults(t));
    const TabularModel model = enumerate_states(env, env.reset(1).first);
    REQUIRE(model.transitions.size() == model.size() * kNumActions);
    for (const auto& row : model.transitions) {
      double total = 0.0;
      for (const Transition& tr : row) {
        CHECK(tr.prob > 0.0);
        CHECK(tr.next >= 0);
        CHECK(tr.next < static_cast<int>(model.size()));
        total += tr.prob;
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("blocked cells never appear as agent positions") {
  Environment env(TaskConfig::defaults(TaskName::Fetch));
  const GridState s0 = env.reset(2).first;
  const TabularModel model = enumerate_states(env, s0);
  const Layout& l = *s0.layout;
  for (const GridState& s : model.states) {
    CHECK(env.is_interior(s.agent));
    for (std::size_t i = 0; i < l.objects.size(); ++i)
      if (!(s.carried && *s.carried == static_cast<int>(i))) CHECK(s.agent != l.objects[i].cell);
  }
}

TEST_CASE("state cap is enforced") {
  Environment env(TaskConfig::defaults(TaskName::Empty));
  CHECK_THROWS_AS(enumerate_states(env, env.reset(0).first, 10), std::runtime_error);
}

TEST_CASE("dynamic obstacle blocking probability matches simulation") {
  Environment env(TaskConfig::defaults(TaskName::DynamicObstacles));
  GridState s0 = env.reset(0).first;
  const TabularModel model = enumerate_states(env, s0);
  const int id = model.find(s0);
  REQUIRE(id >= 0);
  const auto& row = model.outcomes(id, Action::Forward);
  REQUIRE(row.size() == 2);
  double moved_prob = 0.0;
  for (const Transition& t : row)
    if (model.states[static_cast<std::size_t>(t.next)].agent != s0.agent) moved_prob = t.prob;
  CHECK(moved_prob == doctest::Approx(1.0 - 3.0 / 34.0));
  Rng gen(1);
  int moved = 0;
  const int trials = 20000;
  for (int i = 0; i < trials; ++i) {
    GridState s = s0;
    s.noise_state = gen();
    env.place_obstacles(s);
    if (env.step(s, Action::Forward).state.agent != s0.agent) ++moved;
  }
  const double freq = moved / static_cast<double>(trials);
  CHECK(std::abs(freq - moved_prob) < 4.0 * std::sqrt(moved_prob * (1 - moved_prob) / trials));
}

TEST_CASE("gamma zero gives a myopic policy") {
  Environment env(TaskConfig::defaults(TaskName::Lava));
  const TabularModel model = enumerate_states(env, env.reset(3).first);
  const RewardTable r = ground_truth_rewards(model);
  const TabularPolicy p = value_iteration(model, r, 0.0);
  for (std::size_t s = 0; s < model.size(); ++s) {
    double best = -INFINITY;
    int first = -1;
    for (int a = 0; a < kNumActions; ++a)
      if (r[s * kNumActions + a] > best) {
        best = r[s * kNumActions + a];
        first = a;
      }
    CHECK(static_cast<int>(p.actions[s]) == first);
  }
  CHECK_THROWS_AS(value_iteration(model, r, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(value_iteration(model, r, -0.1), std::invalid_argument);
}

TEST_CASE("ground-truth planning on Empty reaches the goal by a shortest path") {
  Environment env(TaskConfig::defaults(TaskName::Empty));
  const GridState s0 = env.reset(0).first;
  const TabularModel model = enumerate_states(env, s0);
  const TabularPolicy p = value_iteration(model, ground_truth_rewards(model));
  const Cell goal = *s0.layout->goal;
  for (const GridState& start : model.states) {
    if (start.agent == goal) continue;
    const int bound = bfs_steps_to_goal(8, start.agent, static_cast<int>(start.dir), goal);
    GridState s = start;
    int steps = 0;
    while (s.agent != goal && steps <= bound) {
      s = env.step(s, p.actions[static_cast<std::size_t>(model.find(s))]).state;
      ++steps;
    }
    CHECK(s.agent == goal);
    CHECK(steps <= bound);
  }
}

TEST_CASE("value iteration residuals contract") {
  Environment env(TaskConfig::defaults(TaskName::DynamicObstacles));
  const TabularModel model = enumerate_states(env, env.reset(0).first);
  const double gamma = 0.98, tol = 1e-6;
  const TabularPolicy p = value_iteration(model, ground_truth_rewards(model), gamma, tol);
  for (std::size_t i = 2; i < p.residuals.size(); ++i) CHECK(p.residuals[i] <= p.residuals[i - 1] + 1e-15);
  CHECK(p.residuals.back() < tol);
  const double ceiling = std::ceil(std::log(tol * (1 - gamma) / 1.0) / std::log(gamma));
  CHECK(p.sweeps <= ceiling);
}

TEST_CASE("stay-forever scores zero and the optimal Empty policy clears the threshold") {
  Environment env(TaskConfig::defaults(TaskName::Empty));
  const EvalSettings settings;
  const EvalReport stay = evaluate_policy([](const GridState&) { return Action::Stay; }, env, settings, 1);
  CHECK(stay.mean_return == 0.0);
  CHECK(stay.failed);
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    Planner planner(env);
    const EvalReport best = evaluate_policy(planner, settings, seed);
    CHECK(best.mean_return >= 10.0);
    CHECK_FALSE(best.failed);
    CHECK(best.episodes == 20);
    CHECK(best.returns.size() == 20);
  }
}

TEST_CASE("failed flag is exactly mean <= threshold") {
  Environment env(TaskConfig::defaults(TaskName::Empty));
  EvalSettings s;
  s.episodes = 3;
  Planner planner(env);
  const EvalReport r = evaluate_policy(planner, s, 0);
  s.failure_threshold = r.mean_return;
  CHECK(evaluate_policy(planner, s, 0).failed);
  s.failure_threshold = std::nextafter(r.mean_return, -INFINITY);
  CHECK_FALSE(evaluate_policy(planner, s, 0).failed);
}

TEST_CASE("optimal policy never touches lava") {
  for (TaskName t : {TaskName::Lava, TaskName::LavaPosition}) {
    Environment env(evaluation_config(TaskConfig::defaults(t)));
    Planner planner(env);
    for (std::uint64_t e = 0; e < 20; ++e) {
      GridState s = env.reset(e).first;
      double total = 0.0;
      for (int i = 0; i < 100; ++i) {
        const StepResult r = env.step(s, planner.act(s));
        CHECK_FALSE(env.is_lava(*s.layout, r.state.agent));
        total += r.reward;
        s = r.state;
      }
      CHECK(total > 10.0);
    }
  }
}

TEST_CASE("ground-truth policies clear the threshold on every task") {
  for (TaskName t : {TaskName::DynamicObstacles, TaskName::GoToDoor, TaskName::Fetch}) {
    Environment env(evaluation_config(TaskConfig::defaults(t)));
    Planner planner(env);
    CHECK(evaluate_policy(planner, EvalSettings{}, 5).mean_return > 10.0);
  }
}

TEST_CASE("evaluation switches distribution-shift tasks to the test variant") {
  CHECK(evaluation_config(TaskConfig::defaults(TaskName::LavaPosition)).variant == Variant::Test);
  CHECK(evaluation_config(TaskConfig::defaults(TaskName::Fetch)).variant == Variant::Test);
  CHECK(evaluation_config(TaskConfig::defaults(TaskName::Empty)).variant == Variant::Train);
}

TEST_CASE("planner caches one model per layout") {
  Environment env(TaskConfig::defaults(TaskName::LavaPosition));
  Planner planner(env);
  const GridState a = env.reset(1).first;
  const PlannedPolicy& p1 = planner.plan(a);
  const PlannedPolicy& p2 = planner.plan(env.reset(1).first);
  CHECK(&p1 == &p2);
}

TEST_CASE("spurious probe") {
  Environment env(TaskConfig::defaults(TaskName::Empty));
  const ProbeReport gt = spurious_probe(env, ground_truth_reward_fn(env));
  CHECK(gt.reward_goal_rippling == 1.0);
  CHECK(gt.reward_still_elsewhere == 0.0);
  CHECK(gt.gap == 1.0);
  auto ripple_lover = [](const GridState&, const Observation& o, Action) { return -o.values.back(); };
  CHECK(spurious_probe(env, ripple_lover).gap < 0.0);
  CHECK(spurious_probe(env, ripple_lover).gap == spurious_probe(env, ripple_lover).gap);
  Environment no_ripple(TaskConfig::defaults(TaskName::Fetch));
  CHECK_THROWS_AS(spurious_probe(no_ripple, ground_truth_reward_fn(no_ripple)), std::invalid_argument);
}
