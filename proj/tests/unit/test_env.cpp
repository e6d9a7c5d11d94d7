#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <boost/math/distributions/chi_squared.hpp>

#include "doctest.h"
#include "impec/env.hpp"

using namespace impec;

namespace {

double chi_square_critical(int dof, double alpha) {
  return boost::math::quantile(boost::math::complement(boost::math::chi_squared(dof), alpha));
}

GridState state_at(const Environment& env, Cell agent, Direction dir, std::uint64_t seed = 0) {
  GridState s = env.reset(seed).first;
  s.agent = agent;
  s.dir = dir;
  s.obstacles.clear();
  return s;
}

}  // namespace

TEST_CASE("Empty train env has a goal and a ripple dimension") {
  Environment env(TaskConfig::defaults(TaskName::Empty));
  auto [s, o] = env.reset(3);
  REQUIRE(s.layout->goal.has_value());
  CHECK(s.ripple_level.has_value());
  CHECK(*s.ripple_level == 0.0);
  CHECK(static_cast<int>(o.values.size()) == env.observation_size());
  CHECK(o.values.back() == 0.0);
  CHECK(s.agent != *s.layout->goal);
}

TEST_CASE("config validation rejects bad grids and missing mandatory flags") {
  TaskConfig c = TaskConfig::defaults(TaskName::Empty);
  c.grid_size = 4;
  CHECK_THROWS_AS(Environment{c}, ConfigError);
  c = TaskConfig::defaults(TaskName::Fetch);
  c.confounds = {};
  CHECK_THROWS_AS(Environment{c}, ConfigError);
  c = TaskConfig::defaults(TaskName::LavaPosition);
  c.confounds = {.extra_obs = true};
  CHECK_THROWS_AS(Environment{c}, ConfigError);
  c = TaskConfig::defaults(TaskName::Lava);
  c.spurious_probability = 1.5;
  CHECK_THROWS_AS(Environment{c}, ConfigError);
  c = TaskConfig::defaults(TaskName::DynamicObstacles);
  c.obstacle_count = 100;
  CHECK_THROWS_AS(Environment{c}, ConfigError);
  // optional extra flags are allowed
  c = TaskConfig::defaults(TaskName::Empty);
  c.confounds.position_bias = true;
  CHECK_NOTHROW(Environment{c});
}

TEST_CASE("mandatory confound defaults follow the task table") {
  CHECK(mandatory_confounds(TaskName::Empty) == ConfoundFlags{.extra_obs = true});
  CHECK(mandatory_confounds(TaskName::DynamicObstacles) == ConfoundFlags{.extra_obs = true});
  CHECK(mandatory_confounds(TaskName::Lava) == ConfoundFlags{.extra_obs = true});
  CHECK(mandatory_confounds(TaskName::LavaPosition) == ConfoundFlags{.position_bias = true});
  CHECK(mandatory_confounds(TaskName::GoToDoor) == ConfoundFlags{.position_bias = true});
  CHECK(mandatory_confounds(TaskName::Fetch) == ConfoundFlags{.color_bias = true});
}

TEST_CASE("Fetch train keys are mostly yellow") {
  TaskConfig c = TaskConfig::defaults(TaskName::Fetch);
  c.rng_seed = 11;
  Environment env(c);
  int yellow = 0, distractor_non_yellow = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const Layout l = env.sample_layout(seed);
    REQUIRE(l.key_index >= 0);
    if (l.objects[static_cast<std::size_t>(l.key_index)].color == Color::Yellow) ++yellow;
    if (l.objects[static_cast<std::size_t>(1 - l.key_index)].color != Color::Yellow) ++distractor_non_yellow;
  }
  CHECK(yellow / 1000.0 >= 0.87);
  CHECK(yellow / 1000.0 <= 0.93);
  CHECK(distractor_non_yellow / 1000.0 >= 0.87);
  CHECK(distractor_non_yellow / 1000.0 <= 0.93);
}

TEST_CASE("Fetch test keys are uniform over the palette") {
  Environment env(TaskConfig::defaults(TaskName::Fetch, Variant::Test));
  std::map<int, int> counts;
  const int n = 6000;
  for (int seed = 0; seed < n; ++seed) {
    const Layout l = env.sample_layout(static_cast<std::uint64_t>(seed));
    ++counts[static_cast<int>(l.objects[static_cast<std::size_t>(l.key_index)].color)];
  }
  double chi2 = 0.0;
  for (int c = 0; c < kNumColors; ++c) {
    const double expected = n / static_cast<double>(kNumColors);
    chi2 += (counts[c] - expected) * (counts[c] - expected) / expected;
  }
  CHECK(chi2 < chi_square_critical(kNumColors - 1, 0.01));
}

TEST_CASE("LavaPosition test goals are uniform over eligible cells") {
  Environment env(TaskConfig::defaults(TaskName::LavaPosition, Variant::Test));
  std::map<Cell, int> counts;
  const int n = 10000;
  std::vector<Cell> eligible;
  for (int seed = 0; seed < n; ++seed) {
    const Layout l = env.sample_layout(static_cast<std::uint64_t>(seed));
    if (eligible.empty()) eligible = env.eligible_goal_cells(l);
    ++counts[*l.goal];
  }
  // 8x8: rows below the lava row (3), six columns each
  REQUIRE(eligible.size() == 18);
  for (const auto& [cell, count] : counts)
    CHECK(std::find(eligible.begin(), eligible.end(), cell) != eligible.end());
  double chi2 = 0.0;
  const double expected = n / static_cast<double>(eligible.size());
  for (Cell c : eligible) chi2 += (counts[c] - expected) * (counts[c] - expected) / expected;
  CHECK(chi2 < chi_square_critical(static_cast<int>(eligible.size()) - 1, 0.01));
}

TEST_CASE("LavaPosition train goal sits at the canonical cell about 90% of the time") {
  Environment env(TaskConfig::defaults(TaskName::LavaPosition));
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed)
    if (*env.sample_layout(seed).goal == env.canonical_goal()) ++hits;
  CHECK(hits >= 870);
  CHECK(hits <= 930);
}

TEST_CASE("GoToDoor train goal door is usually on the upper wall") {
  Environment env(TaskConfig::defaults(TaskName::GoToDoor));
  int upper = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const GridState s = env.reset(seed).first;
    REQUIRE(s.layout->doors.size() == 4);
    if (s.layout->doors.front().wall == 0) ++upper;
    CHECK_FALSE(env.goal_satisfied(s));
  }
  CHECK(upper >= 870);
  CHECK(upper <= 930);
  Environment test_env(TaskConfig::defaults(TaskName::GoToDoor, Variant::Test));
  int upper_test = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed)
    if (test_env.reset(seed).first.layout->doors.front().wall == 0) ++upper_test;
  CHECK(upper_test > 200);
  CHECK(upper_test < 300);
}

TEST_CASE("reset is deterministic in the seed") {
  for (TaskName t : {TaskName::Empty, TaskName::DynamicObstacles, TaskName::Lava, TaskName::LavaPosition,
                     TaskName::GoToDoor, TaskName::Fetch}) {
    Environment env(TaskConfig::defaults(t));
    for (std::uint64_t seed : {0ULL, 5ULL, 123456789ULL}) {
      auto a = env.reset(seed);
      auto b = env.reset(seed);
      CHECK(a.first == b.first);
      CHECK(a.second == b.second);
    }
  }
}

TEST_CASE("forward onto the goal pays +1") {
  Environment env(TaskConfig::defaults(TaskName::Empty));
  const Cell g = env.canonical_goal();
  GridState s = state_at(env, {g.row, g.col - 1}, Direction::East);
  const StepResult r = env.step(s, Action::Forward);
  CHECK(r.reward == 1.0);
  CHECK(r.state.agent == g);
  CHECK(*r.state.ripple_level == 1.0);
  // staying on the goal keeps paying
  CHECK(env.step(r.state, Action::Stay).reward == 1.0);
}

TEST_CASE("standing on lava costs -1 per step") {
  Environment env(TaskConfig::defaults(TaskName::Lava));
  GridState s = env.reset(2).first;
  const Cell lava = s.layout->lava.front();
  s.agent = lava;
  CHECK(env.step(s, Action::Stay).reward == -1.0);
  CHECK(env.step(s, Action::TurnLeft).reward == -1.0);
}

TEST_CASE("lava cannot be walked out of") {
  Environment env(TaskConfig::defaults(TaskName::Lava));
  GridState s = env.reset(4).first;
  s.agent = s.layout->lava.front();
  for (Direction d : {Direction::East, Direction::South, Direction::West, Direction::North}) {
    s.dir = d;
    const StepResult r = env.step(s, Action::Forward);
    CHECK(r.state.agent == s.agent);
    CHECK(r.reward == -1.0);
  }
}

TEST_CASE("ripple calms down under Stay") {
  Environment env(TaskConfig::defaults(TaskName::Empty));
  GridState s = env.reset(0).first;
  s.ripple_level = 1.0;
  double prev = 1.0;
  for (int i = 0; i < 10; ++i) {
    s = env.step(s, Action::Stay).state;
    CHECK(*s.ripple_level <= prev);
    prev = *s.ripple_level;
  }
  CHECK(*s.ripple_level == 0.0);
  // clamp: the first level below 1e-3 snaps to zero
  TaskConfig c = TaskConfig::defaults(TaskName::Empty);
  c.ripple_decay = 0.5;
  Environment half(c);
  GridState h = half.reset(0).first;
  h.ripple_level = 1.0;
  int steps = 0;
  while (*h.ripple_level > 0.0) {
    h = half.step(h, Action::Stay).state;
    ++steps;
  }
  CHECK(steps == 10);  // 0.5^9 ~ 1.95e-3 survives, 0.5^10 ~ 9.8e-4 is clamped
  // moving resets to 1, bumping a wall does not
  GridState w = env.reset(0).first;
  w.ripple_level = 0.0;
  w.dir = Direction::North;
  CHECK(*env.step(w, Action::Forward).state.ripple_level == 0.0);
  w.dir = Direction::East;
  CHECK(*env.step(w, Action::Forward).state.ripple_level == 1.0);
}

TEST_CASE("ripple is absent without ExtraObs") {
  Environment env(TaskConfig::defaults(TaskName::LavaPosition));
  auto [s, o] = env.reset(1);
  CHECK_FALSE(s.ripple_level.has_value());
  CHECK_FALSE(env.step(s, Action::Forward).state.ripple_level.has_value());
}

TEST_CASE("pickup only matters in Fetch") {
  Environment empty(TaskConfig::defaults(TaskName::Empty));
  GridState s = empty.reset(0).first;
  const StepResult r = empty.step(s, Action::Pickup);
  CHECK(r.state.agent == s.agent);
  CHECK(r.state.dir == s.dir);
  CHECK_FALSE(r.state.carried.has_value());

  Environment fetch(TaskConfig::defaults(TaskName::Fetch));
  GridState f = fetch.reset(4).first;
  const Layout& l = *f.layout;
  const Cell key = l.objects[static_cast<std::size_t>(l.key_index)].cell;
  // stand west of the key if possible, else east
  f.agent = fetch.is_interior({key.row, key.col - 1}) && fetch.walkable(f, {key.row, key.col - 1})
                ? Cell{key.row, key.col - 1}
                : Cell{key.row, key.col + 1};
  f.dir = f.agent.col < key.col ? Direction::East : Direction::West;
  REQUIRE(fetch.walkable(f, f.agent));
  const StepResult picked = fetch.step(f, Action::Pickup);
  CHECK(picked.state.carried == l.key_index);
  CHECK(picked.reward == 1.0);
  // a second pickup while carrying changes nothing
  CHECK(fetch.step(picked.state, Action::Pickup).state.carried == l.key_index);
}

TEST_CASE("observations have a fixed length and stay in [0, 1]") {
  for (TaskName t : {TaskName::Empty, TaskName::DynamicObstacles, TaskName::Lava, TaskName::LavaPosition,
                     TaskName::GoToDoor, TaskName::Fetch}) {
    Environment env(TaskConfig::defaults(t));
    Rng gen(7);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      GridState s = env.reset(seed).first;
      for (int i = 0; i < 40; ++i) {
        const StepResult r = env.step(s, kAllActions[uniform_index(gen, kNumActions)]);
        REQUIRE(static_cast<int>(r.observation.values.size()) == env.observation_size());
        for (double v : r.observation.values) {
          CHECK(v >= 0.0);
          CHECK(v <= 1.0);
        }
        CHECK((r.reward == -1.0 || r.reward == 0.0 || r.reward == 1.0));
        CHECK(env.is_interior(r.state.agent));
        s = r.state;
      }
    }
  }
}

TEST_CASE("identical action sequences give identical trajectories") {
  for (TaskName t : {TaskName::DynamicObstacles, TaskName::Lava, TaskName::Fetch}) {
    Environment env(TaskConfig::defaults(t));
    Rng gen(99);
    std::vector<Action> actions;
    for (int i = 0; i < 50; ++i) actions.push_back(kAllActions[uniform_index(gen, kNumActions)]);
    auto run = [&] {
      std::vector<StepResult> out;
      GridState s = env.reset(17).first;
      for (Action a : actions) {
        out.push_back(env.step(s, a));
        s = out.back().state;
      }
      return out;
    };
    const auto a = run();
    const auto b = run();
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].state == b[i].state);
      CHECK(a[i].reward == b[i].reward);
      CHECK(a[i].observation == b[i].observation);
    }
  }
}

TEST_CASE("dynamic obstacles avoid goal and agent and block forward moves") {
  Environment env(TaskConfig::defaults(TaskName::DynamicObstacles));
  GridState s = env.reset(5).first;
  Rng gen(3);
  int blocked = 0;
  for (int i = 0; i < 300; ++i) {
    REQUIRE(s.obstacles.size() == 3);
    REQUIRE(std::is_sorted(s.obstacles.begin(), s.obstacles.end()));
    for (Cell c : s.obstacles) {
      CHECK(c != s.agent);
      CHECK(c != *s.layout->goal);
      CHECK(env.is_interior(c));
    }
    const Cell f = front_cell(s.agent, s.dir);
    const bool obstacle_ahead = std::binary_search(s.obstacles.begin(), s.obstacles.end(), f);
    const StepResult r = env.step(s, Action::Forward);
    if (obstacle_ahead) {
      ++blocked;
      CHECK(r.state.agent == s.agent);
    }
    s = uniform_index(gen, 3) == 0 ? env.step(r.state, Action::TurnLeft).state : r.state;
  }
  CHECK(blocked > 0);
}

TEST_CASE("lava layouts have exactly one gap in the middle row") {
  Environment env(TaskConfig::defaults(TaskName::Lava));
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Layout l = env.sample_layout(seed);
    CHECK(l.lava.size() == static_cast<std::size_t>(env.config().grid_size - 3));
    for (Cell c : l.lava) CHECK(c.row == env.lava_row());
    CHECK(l.goal->row > env.lava_row());
  }
}

TEST_CASE("task config key-value round trip") {
  TaskConfig c = TaskConfig::defaults(TaskName::GoToDoor, Variant::Test);
  c.confounds.color_bias = true;
  c.spurious_probability = 0.75;
  c.rng_seed = 42;
  auto kv = parse_key_values(task_config_to_kv(c));
  CHECK(task_config_from_kv(kv) == c);
  CHECK(kv.empty());
  std::map<std::string, std::string> bad = {{"task", "Nope"}};
  CHECK_THROWS_AS(task_config_from_kv(bad), ConfigError);
  std::map<std::string, std::string> missing;
  CHECK_THROWS_AS(task_config_from_kv(missing), ConfigError);
}

TEST_CASE("render draws walls, goal and agent") {
  Environment env(TaskConfig::defaults(TaskName::Empty));
  const std::string art = env.render(env.reset(0).first);
  CHECK(art.find('G') != std::string::npos);
  CHECK(art.find('>') != std::string::npos);
  CHECK(std::count(art.begin(), art.end(), '\n') == 8);
}
