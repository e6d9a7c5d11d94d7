// Confusing Minigrid: small gridworld tasks with planted spurious correlations.
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "impec/util.hpp"

namespace impec {

enum class TaskName { Empty, DynamicObstacles, Lava, LavaPosition, GoToDoor, Fetch };
enum class Variant { Train, Test };

struct ConfoundFlags {
  bool extra_obs = false;
  bool position_bias = false;
  bool color_bias = false;

  bool operator==(const ConfoundFlags&) const = default;
};

/// Flags that are always on for a task (the "Y" cells of the task table).
ConfoundFlags mandatory_confounds(TaskName task);

struct TaskConfig {
  TaskName task = TaskName::Empty;
  Variant variant = Variant::Train;
  int grid_size = 8;
  ConfoundFlags confounds = mandatory_confounds(TaskName::Empty);
  double spurious_probability = 0.9;
  int episode_horizon = 100;
  std::uint64_t rng_seed = 0;
  double ripple_decay = 0.25;
  int obstacle_count = 3;

  /// Defaults for a task: mandatory confound flags and the standard grid.
  static TaskConfig defaults(TaskName task, Variant variant = Variant::Train);

  /// Throws ConfigError when the configuration is unusable.
  void validate() const;

  /// True for tasks whose train and test variants differ.
  bool distribution_shift() const;

  bool operator==(const TaskConfig&) const = default;
};

std::string to_string(TaskName task);
std::string to_string(Variant variant);
TaskName parse_task_name(const std::string& text);
Variant parse_variant(const std::string& text);
std::string confounds_to_string(const ConfoundFlags& flags);
ConfoundFlags parse_confounds(const std::string& text);

/// Reads the task keys (task, variant, grid_size, confounds, ...) out of a
/// key-value map, erasing every key it consumes.
TaskConfig task_config_from_kv(std::map<std::string, std::string>& kv);
std::string task_config_to_kv(const TaskConfig& config);

enum class Action : std::uint8_t { TurnLeft = 0, TurnRight = 1, Forward = 2, Pickup = 3, Stay = 4 };
inline constexpr int kNumActions = 5;
inline constexpr std::array<Action, kNumActions> kAllActions = {
    Action::TurnLeft, Action::TurnRight, Action::Forward, Action::Pickup, Action::Stay};
char action_code(Action a);
Action action_from_code(char c);

// 0 = east, 1 = south, 2 = west, 3 = north (row grows downward).
enum class Direction : std::uint8_t { East = 0, South = 1, West = 2, North = 3 };

enum class Color : std::uint8_t { Red, Green, Blue, Purple, Yellow, Grey };
inline constexpr int kNumColors = 6;

enum class CellType : std::uint8_t { Goal, Lava, Obstacle, Door, Key, Ball };
inline constexpr int kNumCellTypes = 6;

struct Cell {
  int row = 0;
  int col = 0;

  bool operator==(const Cell&) const = default;
  auto operator<=>(const Cell&) const = default;
};

struct Door {
  Cell cell;
  Color color = Color::Red;
  int wall = 0;  // 0 top, 1 right, 2 bottom, 3 left
  bool operator==(const Door&) const = default;
};

struct Object {
  CellType kind = CellType::Key;
  Color color = Color::Yellow;
  Cell cell;
  bool operator==(const Object&) const = default;
};

/// Per-episode fixed part of the world.
struct Layout {
  int grid_size = 8;
  std::optional<Cell> goal;
  Color goal_color = Color::Green;
  std::vector<Cell> lava;
  std::vector<Door> doors;  // goal door first
  std::vector<Object> objects;  // observation order, fixed at layout creation
  int key_index = -1;  // Fetch: which object is the key
  Cell start;
  Direction start_dir = Direction::East;

  bool operator==(const Layout&) const = default;
};

struct GridState {
  std::shared_ptr<const Layout> layout;
  Cell agent;
  Direction dir = Direction::East;
  std::optional<double> ripple_level;
  std::vector<Cell> obstacles;  // sorted
  std::optional<int> carried;  // index into layout->objects
  int step_count = 0;
  std::uint64_t noise_state = 0;  // drives obstacle resampling

  bool operator==(const GridState& other) const;
};

struct Observation {
  std::vector<double> values;
  bool operator==(const Observation&) const = default;
};

struct StepResult {
  GridState state;
  double reward = 0.0;
  Observation observation;
  bool done = false;
};

class Environment {
 public:
  explicit Environment(TaskConfig config);

  const TaskConfig& config() const { return config_; }

  /// Fresh episode; a pure function of (config, seed).
  std::pair<GridState, Observation> reset(std::uint64_t seed) const;

  /// Pure transition: identical inputs give identical outputs, including
  /// obstacle placement (seeded from the state's noise_state).
  StepResult step(const GridState& state, Action action) const;

  Observation observe(const GridState& state) const;
  int observation_size() const;

  bool goal_satisfied(const GridState& state) const;
  bool is_lava(const Layout& layout, Cell cell) const;
  bool is_interior(Cell cell) const;
  /// Interior, not holding an uncarried object, not occupied by an obstacle.
  bool walkable(const GridState& state, Cell cell) const;

  /// Free interior cells of a layout (no lava restriction, no objects).
  std::vector<Cell> interior_cells() const;

  /// Goal cells used when the goal position is randomised.
  std::vector<Cell> eligible_goal_cells(const Layout& layout) const;
  Cell canonical_goal() const;

  std::string render(const GridState& state) const;

  /// Samples a layout for one episode.
  Layout sample_layout(std::uint64_t seed) const;

  /// Resamples obstacles for a state (used by reset and step).
  void place_obstacles(GridState& state) const;

  int lava_row() const { return (config_.grid_size - 1) / 2; }

 private:
  TaskConfig config_;
};

Environment make_env(const TaskConfig& config);

Cell front_cell(Cell cell, Direction dir);
/// Interior neighbour of a door cell.
Cell door_inner_cell(const Door& door, int grid_size);

}  // namespace impec
