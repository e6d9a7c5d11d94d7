#include "impec/rollouts.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace impec {

std::string to_string(PolicySource s) {
  switch (s) {
    case PolicySource::Random: return "Random";
    case PolicySource::Mid: return "Mid";
    case PolicySource::Expert: return "Expert";
  }
  return "?";
}

PolicySource parse_policy_source(const std::string& text) {
  if (text == "Random") return PolicySource::Random;
  if (text == "Mid") return PolicySource::Mid;
  if (text == "Expert") return PolicySource::Expert;
  throw std::invalid_argument("unknown policy source '" + text + "'");
}

std::string Rollout::action_string() const {
  std::string out;
  out.reserve(steps.size());
  for (const auto& s : steps) out += action_code(s.action);
  return out;
}

double ground_truth_return(const Environment& env, const Rollout& rollout) {
  double total = 0.0;
  for (const auto& s : rollout.steps) total += env.step(s.state, s.action).reward;
  return total;
}

ScriptedPolicy::ScriptedPolicy(const Environment& env, double epsilon) : planner_(env), epsilon_(epsilon) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("epsilon must lie in [0, 1]");
}

Action ScriptedPolicy::act(const GridState& state, Rng& gen) {
  if (epsilon_ >= 1.0 || (epsilon_ > 0.0 && bernoulli(gen, epsilon_)))
    return kAllActions[uniform_index(gen, kNumActions)];
  return planner_.act(state);
}

PolicySource ScriptedPolicy::source() const {
  if (epsilon_ >= 0.75) return PolicySource::Random;
  if (epsilon_ >= 0.25) return PolicySource::Mid;
  return PolicySource::Expert;
}

Rollout play_rollout(const Environment& env, ScriptedPolicy& policy, std::uint64_t reset_seed, Rng& gen,
                     int length) {
  Rollout r;
  r.reset_seed = reset_seed;
  r.source = policy.source();
  auto [state, obs] = env.reset(reset_seed);
  r.steps.reserve(static_cast<std::size_t>(length));
  for (int t = 0; t < length; ++t) {
    const Action a = policy.act(state, gen);
    StepResult next = env.step(state, a);
    r.gt_return += next.reward;
    r.steps.push_back({std::move(state), a, std::move(obs)});
    state = std::move(next.state);
    obs = std::move(next.observation);
  }
  return r;
}

Rollout replay_rollout(const Environment& env, std::uint64_t reset_seed, const std::string& actions) {
  Rollout r;
  r.reset_seed = reset_seed;
  auto [state, obs] = env.reset(reset_seed);
  for (char c : actions) {
    const Action a = action_from_code(c);
    StepResult next = env.step(state, a);
    r.gt_return += next.reward;
    r.steps.push_back({std::move(state), a, std::move(obs)});
    state = std::move(next.state);
    obs = std::move(next.observation);
  }
  return r;
}

int RolloutDataset::low_return_count() const {
  int n = 0;
  for (const auto& r : rollouts)
    if (r.gt_return <= low_return_threshold) ++n;
  return n;
}

RolloutDataset generate_dataset(const Environment& env, const DatasetOptions& options, std::uint64_t seed) {
  if (options.n_rollouts < 10) throw std::invalid_argument("n_rollouts must be at least 10");
  if (options.fragment_length <= 0) throw std::invalid_argument("fragment_length must be positive");
  if (options.epsilons.empty()) throw std::invalid_argument("at least one policy is required");
  RolloutDataset data;
  data.task = env.config();
  data.fragment_length = options.fragment_length;
  data.low_return_cap = options.low_return_cap;
  data.low_return_threshold = options.low_return_threshold;

  std::vector<ScriptedPolicy> policies;
  for (double eps : options.epsilons) policies.emplace_back(env, eps);
  const int low_cap = static_cast<int>(std::floor(options.low_return_cap * options.n_rollouts + 1e-9));
  int low = 0;
  const long max_attempts = static_cast<long>(options.max_attempts_per_rollout) * options.n_rollouts;
  for (long attempt = 0; static_cast<int>(data.rollouts.size()) < options.n_rollouts; ++attempt) {
    if (attempt >= max_attempts)
      throw std::runtime_error("dataset generation gave up after " + std::to_string(max_attempts) +
                               " attempts: low-return cap unreachable");
    ScriptedPolicy& policy = policies[static_cast<std::size_t>(attempt) % policies.size()];
    const auto a = static_cast<std::uint64_t>(attempt);
    Rng gen(mix_seed(seed ^ 0xa5a5a5a5a5a5a5a5ULL, a));
    Rollout r = play_rollout(env, policy, mix_seed(seed, a), gen, options.fragment_length);
    const bool is_low = r.gt_return <= options.low_return_threshold;
    if (is_low && low + 1 > low_cap) continue;
    if (is_low) ++low;
    r.id = static_cast<int>(data.rollouts.size());
    data.rollouts.push_back(std::move(r));
  }
  return data;
}

std::vector<std::pair<int, int>> sample_initial_pairs(std::size_t n, std::size_t k, std::uint64_t seed) {
  const std::size_t total = n < 2 ? 0 : n * (n - 1) / 2;
  if (k > total)
    throw std::invalid_argument("cannot draw " + std::to_string(k) + " distinct pairs from " + std::to_string(n) +
                                " rollouts");
  std::vector<std::pair<int, int>> out;
  if (k == 0) return out;
  Rng gen(seed);
  if (k * 3 < total) {
    std::set<std::pair<int, int>> used;
    while (out.size() < k) {
      const int i = static_cast<int>(uniform_index(gen, n));
      const int j = static_cast<int>(uniform_index(gen, n));
      if (i == j) continue;
      if (!used.insert({std::min(i, j), std::max(i, j)}).second) continue;
      out.emplace_back(i, j);
    }
    return out;
  }
  // dense request: shuffle the full pair list
  std::vector<std::pair<int, int>> all;
  all.reserve(total);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) all.emplace_back(static_cast<int>(i), static_cast<int>(j));
  for (std::size_t i = 0; i < k; ++i) std::swap(all[i], all[i + uniform_index(gen, total - i)]);
  all.resize(k);
  return all;
}

void save_dataset(const RolloutDataset& d, std::ostream& out) {
  nlohmann::json header = {{"kind", "dataset"},
                           {"task", task_config_to_kv(d.task)},
                           {"fragment_length", d.fragment_length},
                           {"low_return_cap", d.low_return_cap},
                           {"low_return_threshold", d.low_return_threshold},
                           {"count", d.rollouts.size()}};
  out << header.dump() << "\n";
  for (const auto& r : d.rollouts) {
    nlohmann::json rec = {{"id", r.id},
                          {"source", to_string(r.source)},
                          {"return", r.gt_return},
                          {"seed", r.reset_seed},
                          {"actions", r.action_string()}};
    out << rec.dump() << "\n";
  }
}

void save_dataset(const RolloutDataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset file '" + path + "'");
  save_dataset(d, out);
}

RolloutDataset load_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("dataset file is empty");
  const auto header = nlohmann::json::parse(line);
  if (header.value("kind", "") != "dataset") throw std::runtime_error("not a dataset file");
  RolloutDataset d;
  auto kv = parse_key_values(header.at("task").get<std::string>());
  d.task = task_config_from_kv(kv);
  d.fragment_length = header.at("fragment_length").get<int>();
  d.low_return_cap = header.at("low_return_cap").get<double>();
  d.low_return_threshold = header.at("low_return_threshold").get<double>();
  const Environment env(d.task);
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto rec = nlohmann::json::parse(line);
    Rollout r = replay_rollout(env, rec.at("seed").get<std::uint64_t>(), rec.at("actions").get<std::string>());
    r.id = rec.at("id").get<int>();
    r.source = parse_policy_source(rec.at("source").get<std::string>());
    if (r.id != static_cast<int>(d.rollouts.size())) throw std::runtime_error("dataset ids must be 0..n-1 in order");
    if (r.gt_return != rec.at("return").get<double>())
      throw std::runtime_error("stored return of rollout " + std::to_string(r.id) + " does not match replay");
    d.rollouts.push_back(std::move(r));
  }
  if (d.rollouts.size() != header.at("count").get<std::size_t>())
    throw std::runtime_error("dataset record count mismatch");
  return d;
}

RolloutDataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file '" + path + "'");
  return load_dataset(in);
}

double ripple_goal_correlation(const Environment& env, const std::vector<Rollout>& rollouts, double threshold) {
  double n11 = 0, n10 = 0, n01 = 0, n00 = 0;
  for (const auto& r : rollouts) {
    bool reached = false;
    for (const auto& step : r.steps) {
      const GridState next = env.step(step.state, step.action).state;
      if (!next.ripple_level) throw std::invalid_argument("ripple audit needs the ExtraObs confound");
      reached = reached || env.goal_satisfied(next);
      const bool calm = *next.ripple_level <= threshold;
      if (calm && reached) ++n11;
      else if (calm) ++n10;
      else if (reached) ++n01;
      else ++n00;
    }
  }
  const double denom = std::sqrt((n11 + n10) * (n01 + n00) * (n11 + n01) * (n10 + n00));
  if (denom == 0.0) return 0.0;
  return (n11 * n00 - n10 * n01) / denom;
}

}  // namespace impec
