#include "impec/env.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "impec/util.hpp"

namespace impec {

namespace {

constexpr double kRippleClamp = 1e-3;

bool is_goal_cell_task(TaskName task) {
  return task == TaskName::Empty || task == TaskName::DynamicObstacles ||
         task == TaskName::Lava || task == TaskName::LavaPosition;
}

bool has_lava(TaskName task) { return task == TaskName::Lava || task == TaskName::LavaPosition; }

void append_one_hot(std::vector<double>& out, int index, int size) {
  for (int i = 0; i < size; ++i) out.push_back(i == index ? 1.0 : 0.0);
}

// Uniform pick among `options` excluding `excluded` (if present).
template <typename T>
T pick_other(std::mt19937_64& gen, const std::vector<T>& options, const T& excluded) {
  std::vector<T> rest;
  for (const auto& o : options)
    if (!(o == excluded)) rest.push_back(o);
  if (rest.empty()) return excluded;
  return rest[uniform_index(gen, rest.size())];
}

// Draws the biased feature: with probability p the spurious value, otherwise
// uniform over the other values. Test variants are uniform over everything.
template <typename T>
T draw_biased(std::mt19937_64& gen, const std::vector<T>& options, const T& spurious, double p,
              Variant variant) {
  if (variant == Variant::Test) return options[uniform_index(gen, options.size())];
  if (bernoulli(gen, p)) return spurious;
  return pick_other(gen, options, spurious);
}

const std::vector<Color>& palette() {
  static const std::vector<Color> colors = {Color::Red,    Color::Green,  Color::Blue,
                                            Color::Purple, Color::Yellow, Color::Grey};
  return colors;
}

}  // namespace

ConfoundFlags mandatory_confounds(TaskName task) {
  switch (task) {
    case TaskName::Empty:
    case TaskName::DynamicObstacles:
    case TaskName::Lava:
      return {.extra_obs = true};
    case TaskName::LavaPosition:
    case TaskName::GoToDoor:
      return {.position_bias = true};
    case TaskName::Fetch:
      return {.color_bias = true};
  }
  return {};
}

TaskConfig TaskConfig::defaults(TaskName task, Variant variant) {
  TaskConfig c;
  c.task = task;
  c.variant = variant;
  c.confounds = mandatory_confounds(task);
  return c;
}

bool TaskConfig::distribution_shift() const {
  return confounds.position_bias || confounds.color_bias;
}

void TaskConfig::validate() const {
  if (grid_size < 5) throw ConfigError("grid_size must be at least 5, got " + std::to_string(grid_size));
  if (grid_size > 32) throw ConfigError("grid_size must be at most 32");
  if (!(spurious_probability >= 0.0 && spurious_probability <= 1.0))
    throw ConfigError("spurious_probability must lie in [0, 1]");
  if (episode_horizon <= 0) throw ConfigError("episode_horizon must be positive");
  if (!(ripple_decay >= 0.0 && ripple_decay < 1.0)) throw ConfigError("ripple_decay must lie in [0, 1)");
  const ConfoundFlags need = mandatory_confounds(task);
  if ((need.extra_obs && !confounds.extra_obs) || (need.position_bias && !confounds.position_bias) ||
      (need.color_bias && !confounds.color_bias))
    throw ConfigError("confound flags for " + to_string(task) + " must include " + confounds_to_string(need));
  if (task == TaskName::DynamicObstacles) {
    const int interior = (grid_size - 2) * (grid_size - 2);
    if (obstacle_count < 0 || obstacle_count > interior - 3)
      throw ConfigError("obstacle_count does not fit the grid");
  }
}

std::string to_string(TaskName task) {
  switch (task) {
    case TaskName::Empty: return "Empty";
    case TaskName::DynamicObstacles: return "DynamicObstacles";
    case TaskName::Lava: return "Lava";
    case TaskName::LavaPosition: return "LavaPosition";
    case TaskName::GoToDoor: return "GoToDoor";
    case TaskName::Fetch: return "Fetch";
  }
  return "?";
}

std::string to_string(Variant variant) { return variant == Variant::Train ? "Train" : "Test"; }

TaskName parse_task_name(const std::string& text) {
  for (TaskName t : {TaskName::Empty, TaskName::DynamicObstacles, TaskName::Lava, TaskName::LavaPosition,
                     TaskName::GoToDoor, TaskName::Fetch})
    if (text == to_string(t)) return t;
  throw ConfigError("unknown task '" + text + "'");
}

Variant parse_variant(const std::string& text) {
  if (text == "Train") return Variant::Train;
  if (text == "Test") return Variant::Test;
  throw ConfigError("unknown variant '" + text + "'");
}

std::string confounds_to_string(const ConfoundFlags& flags) {
  std::vector<std::string> names;
  if (flags.extra_obs) names.emplace_back("ExtraObs");
  if (flags.position_bias) names.emplace_back("PositionBias");
  if (flags.color_bias) names.emplace_back("ColorBias");
  return join(names, ",");
}

ConfoundFlags parse_confounds(const std::string& text) {
  ConfoundFlags flags;
  for (const auto& item : split(text, ',')) {
    const std::string name = trim(item);
    if (name.empty()) continue;
    if (name == "ExtraObs") flags.extra_obs = true;
    else if (name == "PositionBias") flags.position_bias = true;
    else if (name == "ColorBias") flags.color_bias = true;
    else throw ConfigError("unknown confound flag '" + name + "'");
  }
  return flags;
}

TaskConfig task_config_from_kv(std::map<std::string, std::string>& kv) {
  auto take = [&kv](const std::string& key) -> std::optional<std::string> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  const auto task = take("task");
  if (!task) throw ConfigError("missing key 'task'");
  Variant variant = Variant::Train;
  if (auto v = take("variant")) variant = parse_variant(*v);
  TaskConfig c = TaskConfig::defaults(parse_task_name(*task), variant);
  if (auto v = take("grid_size")) c.grid_size = parse_int(*v, "grid_size");
  if (auto v = take("confounds")) c.confounds = parse_confounds(*v);
  if (auto v = take("spurious_probability")) c.spurious_probability = parse_double(*v, "spurious_probability");
  if (auto v = take("episode_horizon")) c.episode_horizon = parse_int(*v, "episode_horizon");
  if (auto v = take("env_seed")) c.rng_seed = parse_u64(*v, "env_seed");
  if (auto v = take("ripple_decay")) c.ripple_decay = parse_double(*v, "ripple_decay");
  if (auto v = take("obstacle_count")) c.obstacle_count = parse_int(*v, "obstacle_count");
  c.validate();
  return c;
}

std::string task_config_to_kv(const TaskConfig& c) {
  std::ostringstream out;
  out << "task = " << to_string(c.task) << "\n"
      << "variant = " << to_string(c.variant) << "\n"
      << "grid_size = " << c.grid_size << "\n"
      << "confounds = " << confounds_to_string(c.confounds) << "\n"
      << "spurious_probability = " << format_double(c.spurious_probability) << "\n"
      << "episode_horizon = " << c.episode_horizon << "\n"
      << "env_seed = " << c.rng_seed << "\n"
      << "ripple_decay = " << format_double(c.ripple_decay) << "\n"
      << "obstacle_count = " << c.obstacle_count << "\n";
  return out.str();
}

char action_code(Action a) {
  static constexpr char codes[] = {'L', 'R', 'F', 'P', 'S'};
  return codes[static_cast<int>(a)];
}

Action action_from_code(char c) {
  switch (c) {
    case 'L': return Action::TurnLeft;
    case 'R': return Action::TurnRight;
    case 'F': return Action::Forward;
    case 'P': return Action::Pickup;
    case 'S': return Action::Stay;
    default: throw std::invalid_argument(std::string("bad action code '") + c + "'");
  }
}

Cell front_cell(Cell cell, Direction dir) {
  switch (dir) {
    case Direction::East: return {cell.row, cell.col + 1};
    case Direction::South: return {cell.row + 1, cell.col};
    case Direction::West: return {cell.row, cell.col - 1};
    case Direction::North: return {cell.row - 1, cell.col};
  }
  return cell;
}

Cell door_inner_cell(const Door& door, int grid_size) {
  switch (door.wall) {
    case 0: return {1, door.cell.col};
    case 1: return {door.cell.row, grid_size - 2};
    case 2: return {grid_size - 2, door.cell.col};
    default: return {door.cell.row, 1};
  }
}

bool GridState::operator==(const GridState& o) const {
  const bool same_layout = (layout == o.layout) || (layout && o.layout && *layout == *o.layout);
  return same_layout && agent == o.agent && dir == o.dir && ripple_level == o.ripple_level &&
         obstacles == o.obstacles && carried == o.carried && step_count == o.step_count &&
         noise_state == o.noise_state;
}

Environment::Environment(TaskConfig config) : config_(std::move(config)) { config_.validate(); }

Environment make_env(const TaskConfig& config) { return Environment(config); }

bool Environment::is_interior(Cell c) const {
  const int n = config_.grid_size;
  return c.row >= 1 && c.row <= n - 2 && c.col >= 1 && c.col <= n - 2;
}

bool Environment::is_lava(const Layout& layout, Cell cell) const {
  return std::find(layout.lava.begin(), layout.lava.end(), cell) != layout.lava.end();
}

bool Environment::walkable(const GridState& s, Cell c) const {
  if (!is_interior(c)) return false;
  for (std::size_t i = 0; i < s.layout->objects.size(); ++i) {
    if (s.carried && *s.carried == static_cast<int>(i)) continue;
    if (s.layout->objects[i].cell == c) return false;
  }
  return !std::binary_search(s.obstacles.begin(), s.obstacles.end(), c);
}

std::vector<Cell> Environment::interior_cells() const {
  std::vector<Cell> cells;
  const int n = config_.grid_size;
  for (int r = 1; r <= n - 2; ++r)
    for (int c = 1; c <= n - 2; ++c) cells.push_back({r, c});
  return cells;
}

Cell Environment::canonical_goal() const { return {config_.grid_size - 2, config_.grid_size - 2}; }

std::vector<Cell> Environment::eligible_goal_cells(const Layout& layout) const {
  std::vector<Cell> cells;
  for (Cell c : interior_cells()) {
    if (c == layout.start) continue;
    if (has_lava(config_.task) && c.row <= lava_row()) continue;
    cells.push_back(c);
  }
  return cells;
}

Layout Environment::sample_layout(std::uint64_t seed) const {
  std::mt19937_64 gen(mix_seed(config_.rng_seed, seed));
  const int n = config_.grid_size;
  const double p = config_.spurious_probability;
  const Variant variant = config_.variant;
  Layout layout;
  layout.grid_size = n;

  if (is_goal_cell_task(config_.task)) {
    layout.start = {1, 1};
    layout.start_dir = Direction::East;
    if (has_lava(config_.task)) {
      const int gap = 1 + static_cast<int>(uniform_index(gen, static_cast<std::size_t>(n - 2)));
      for (int c = 1; c <= n - 2; ++c)
        if (c != gap) layout.lava.push_back({lava_row(), c});
    }
    const std::vector<Cell> eligible = eligible_goal_cells(layout);
    if (config_.confounds.position_bias)
      layout.goal = draw_biased(gen, eligible, canonical_goal(), p, variant);
    else
      layout.goal = canonical_goal();
    if (config_.confounds.color_bias)
      layout.goal_color = draw_biased(gen, palette(), Color::Yellow, p, variant);
    return layout;
  }

  std::vector<Cell> free = interior_cells();
  if (config_.task == TaskName::GoToDoor) {
    std::vector<Color> colors = palette();
    std::shuffle(colors.begin(), colors.end(), gen);
    std::vector<Door> doors;
    for (int wall = 0; wall < 4; ++wall) {
      const int along = 1 + static_cast<int>(uniform_index(gen, static_cast<std::size_t>(n - 2)));
      Door d;
      d.wall = wall;
      d.color = colors[static_cast<std::size_t>(wall)];
      switch (wall) {
        case 0: d.cell = {0, along}; break;
        case 1: d.cell = {along, n - 1}; break;
        case 2: d.cell = {n - 1, along}; break;
        default: d.cell = {along, 0}; break;
      }
      doors.push_back(d);
    }
    const std::vector<int> walls = {0, 1, 2, 3};
    int goal_wall = config_.confounds.position_bias ? draw_biased(gen, walls, 0, p, variant)
                                                    : walls[uniform_index(gen, walls.size())];
    if (config_.confounds.color_bias) {
      const Color want = draw_biased(gen, palette(), Color::Yellow, p, variant);
      auto holder = std::find_if(doors.begin(), doors.end(), [&](const Door& d) { return d.color == want; });
      if (holder != doors.end()) std::swap(holder->color, doors[static_cast<std::size_t>(goal_wall)].color);
      else doors[static_cast<std::size_t>(goal_wall)].color = want;
    }
    layout.doors.push_back(doors[static_cast<std::size_t>(goal_wall)]);
    for (int wall = 0; wall < 4; ++wall)
      if (wall != goal_wall) layout.doors.push_back(doors[static_cast<std::size_t>(wall)]);
    const Cell goal_inner = door_inner_cell(layout.doors.front(), n);
    std::erase(free, goal_inner);
    layout.start = free[uniform_index(gen, free.size())];
    layout.start_dir = static_cast<Direction>(uniform_index(gen, 4));
    return layout;
  }

  // Fetch
  layout.start = free[uniform_index(gen, free.size())];
  layout.start_dir = static_cast<Direction>(uniform_index(gen, 4));
  std::erase(free, layout.start);
  Object key{CellType::Key, Color::Yellow, {}};
  Object ball{CellType::Ball, Color::Red, {}};
  if (config_.confounds.position_bias && std::find(free.begin(), free.end(), canonical_goal()) != free.end())
    key.cell = draw_biased(gen, free, canonical_goal(), p, variant);
  else
    key.cell = free[uniform_index(gen, free.size())];
  std::erase(free, key.cell);
  ball.cell = free[uniform_index(gen, free.size())];
  if (config_.confounds.color_bias) {
    key.color = draw_biased(gen, palette(), Color::Yellow, p, variant);
    if (variant == Variant::Test) {
      ball.color = palette()[uniform_index(gen, palette().size())];
    } else {
      std::vector<Color> non_yellow;
      for (Color c : palette())
        if (c != Color::Yellow) non_yellow.push_back(c);
      ball.color = bernoulli(gen, p) ? non_yellow[uniform_index(gen, non_yellow.size())] : Color::Yellow;
    }
  } else {
    key.color = palette()[uniform_index(gen, palette().size())];
    ball.color = palette()[uniform_index(gen, palette().size())];
  }
  if (key.cell < ball.cell) {
    layout.objects = {key, ball};
    layout.key_index = 0;
  } else {
    layout.objects = {ball, key};
    layout.key_index = 1;
  }
  return layout;
}

void Environment::place_obstacles(GridState& s) const {
  if (config_.task != TaskName::DynamicObstacles) return;
  std::mt19937_64 gen(s.noise_state);
  std::vector<Cell> candidates;
  for (Cell c : interior_cells()) {
    if (c == s.agent) continue;
    if (s.layout->goal && c == *s.layout->goal) continue;
    candidates.push_back(c);
  }
  const auto k = static_cast<std::size_t>(config_.obstacle_count);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + uniform_index(gen, candidates.size() - i);
    std::swap(candidates[i], candidates[j]);
  }
  s.obstacles.assign(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(s.obstacles.begin(), s.obstacles.end());
  s.noise_state = gen();
}

std::pair<GridState, Observation> Environment::reset(std::uint64_t seed) const {
  GridState s;
  s.layout = std::make_shared<const Layout>(sample_layout(seed));
  s.agent = s.layout->start;
  s.dir = s.layout->start_dir;
  if (config_.confounds.extra_obs) s.ripple_level = 0.0;
  s.noise_state = mix_seed(config_.rng_seed ^ 0x9e3779b97f4a7c15ULL, seed);
  place_obstacles(s);
  return {s, observe(s)};
}

bool Environment::goal_satisfied(const GridState& s) const {
  const Layout& l = *s.layout;
  switch (config_.task) {
    case TaskName::GoToDoor: return s.agent == door_inner_cell(l.doors.front(), config_.grid_size);
    case TaskName::Fetch: return s.carried && *s.carried == l.key_index;
    default: return l.goal && s.agent == *l.goal;
  }
}

StepResult Environment::step(const GridState& state, Action action) const {
  StepResult r;
  GridState& next = r.state;
  next = state;
  next.step_count = state.step_count + 1;
  bool moved = false;
  switch (action) {
    case Action::TurnLeft: next.dir = static_cast<Direction>((static_cast<int>(state.dir) + 3) % 4); break;
    case Action::TurnRight: next.dir = static_cast<Direction>((static_cast<int>(state.dir) + 1) % 4); break;
    case Action::Forward: {
      // lava is a sink: once in, the agent cannot walk out
      const Cell f = front_cell(state.agent, state.dir);
      if (!is_lava(*state.layout, state.agent) && walkable(state, f)) {
        next.agent = f;
        moved = true;
      }
      break;
    }
    case Action::Pickup: {
      if (state.carried) break;
      const Cell f = front_cell(state.agent, state.dir);
      const auto& objects = state.layout->objects;
      for (std::size_t i = 0; i < objects.size(); ++i)
        if (objects[i].cell == f) next.carried = static_cast<int>(i);
      break;
    }
    case Action::Stay: break;
  }
  if (next.ripple_level) {
    double level = moved ? 1.0 : *next.ripple_level * config_.ripple_decay;
    if (level < kRippleClamp) level = 0.0;
    next.ripple_level = level;
  }
  place_obstacles(next);
  if (goal_satisfied(next)) r.reward = 1.0;
  else if (is_lava(*next.layout, next.agent)) r.reward = -1.0;
  r.observation = observe(next);
  r.done = next.step_count >= config_.episode_horizon;
  return r;
}

int Environment::observation_size() const {
  constexpr int block = kNumCellTypes + 2 + kNumColors;
  int blocks = 0;
  switch (config_.task) {
    case TaskName::Empty: blocks = 1; break;
    case TaskName::DynamicObstacles: blocks = 1 + config_.obstacle_count; break;
    case TaskName::Lava:
    case TaskName::LavaPosition: blocks = 1 + (config_.grid_size - 3); break;
    case TaskName::GoToDoor: blocks = 4; break;
    case TaskName::Fetch: blocks = 2; break;
  }
  return 2 + 4 + blocks * block + (config_.confounds.extra_obs ? 1 : 0);
}

Observation Environment::observe(const GridState& s) const {
  const double scale = 1.0 / (config_.grid_size - 1);
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(observation_size()));
  auto block = [&](CellType type, Cell cell, Color color) {
    append_one_hot(v, static_cast<int>(type), kNumCellTypes);
    v.push_back(cell.row * scale);
    v.push_back(cell.col * scale);
    append_one_hot(v, static_cast<int>(color), kNumColors);
  };
  v.push_back(s.agent.row * scale);
  v.push_back(s.agent.col * scale);
  append_one_hot(v, static_cast<int>(s.dir), 4);
  const Layout& l = *s.layout;
  if (l.goal) block(CellType::Goal, *l.goal, l.goal_color);
  for (Cell c : s.obstacles) block(CellType::Obstacle, c, Color::Blue);
  for (Cell c : l.lava) block(CellType::Lava, c, Color::Red);
  for (const Door& d : l.doors) block(CellType::Door, d.cell, d.color);
  for (std::size_t i = 0; i < l.objects.size(); ++i) {
    const Object& o = l.objects[i];
    const bool held = s.carried && *s.carried == static_cast<int>(i);
    block(o.kind, held ? s.agent : o.cell, o.color);
  }
  if (config_.confounds.extra_obs) v.push_back(s.ripple_level.value_or(0.0));
  return {std::move(v)};
}

std::string Environment::render(const GridState& s) const {
  const int n = config_.grid_size;
  std::vector<std::string> rows(static_cast<std::size_t>(n), std::string(static_cast<std::size_t>(n), '.'));
  auto put = [&](Cell c, char ch) { rows[static_cast<std::size_t>(c.row)][static_cast<std::size_t>(c.col)] = ch; };
  for (int i = 0; i < n; ++i) {
    put({0, i}, '#');
    put({n - 1, i}, '#');
    put({i, 0}, '#');
    put({i, n - 1}, '#');
  }
  const Layout& l = *s.layout;
  for (Cell c : l.lava) put(c, 'L');
  if (l.goal) put(*l.goal, 'G');
  for (std::size_t i = 0; i < l.doors.size(); ++i) put(l.doors[i].cell, i == 0 ? 'D' : 'd');
  for (std::size_t i = 0; i < l.objects.size(); ++i) {
    if (s.carried && *s.carried == static_cast<int>(i)) continue;
    put(l.objects[i].cell, l.objects[i].kind == CellType::Key ? 'K' : 'B');
  }
  for (Cell c : s.obstacles) put(c, 'O');
  static constexpr char arrows[] = {'>', 'v', '<', '^'};
  put(s.agent, arrows[static_cast<int>(s.dir)]);
  std::string out;
  for (const auto& r : rows) out += r + "\n";
  return out;
}

}  // namespace impec
