#include "impec/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include <boost/math/distributions/students_t.hpp>

namespace impec {

using nlohmann::json;

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::Baseline: return "Baseline";
    case Algorithm::IMPEC: return "IMPEC";
    case Algorithm::PairwiseInfoGain: return "PairwiseInfoGain";
    case Algorithm::VolumeRemoval: return "VolumeRemoval";
  }
  return "?";
}

Algorithm parse_algorithm(const std::string& text) {
  for (Algorithm a : {Algorithm::Baseline, Algorithm::IMPEC, Algorithm::PairwiseInfoGain, Algorithm::VolumeRemoval})
    if (text == to_string(a)) return a;
  throw ConfigError("unknown algorithm '" + text + "'");
}

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::NoActive: return "NoActive";
    case Ablation::NoDerivedPrefs: return "NoDerivedPrefs";
    case Ablation::NoRanking: return "NoRanking";
  }
  return "?";
}

Ablation parse_ablation(const std::string& text) {
  for (Ablation a : {Ablation::NoActive, Ablation::NoDerivedPrefs, Ablation::NoRanking})
    if (text == to_string(a)) return a;
  throw ConfigError("unknown ablation '" + text + "'");
}

int default_query_budget(TaskName task) {
  return task == TaskName::LavaPosition || task == TaskName::GoToDoor ? 600 : 300;
}

namespace {

int default_initial_pairs(TaskName task) { return default_query_budget(task) == 600 ? 400 : 150; }

}  // namespace

ExperimentConfig ExperimentConfig::defaults(TaskName task) {
  ExperimentConfig c;
  c.task = TaskConfig::defaults(task);
  c.query_budget = default_query_budget(task);
  c.initial_pairs = default_initial_pairs(task);
  c.sort_budget = c.query_budget - c.initial_pairs;
  return c;
}

void ExperimentConfig::validate() const {
  task.validate();
  train.validate();
  if (query_budget <= 0) throw ConfigError("query_budget must be positive");
  if (epochs <= 0) throw ConfigError("epochs must be positive");
  if (query_stop_epoch < 1 || query_stop_epoch > epochs)
    throw ConfigError("query_stop_epoch must lie in [1, epochs]");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (threads < 1) throw ConfigError("threads must be at least 1");
  if (max_chain_size < 1) throw ConfigError("max_chain_size must be positive");
  if (eval.episodes < 1 || eval.horizon < 1) throw ConfigError("evaluation needs episodes and a horizon");
  if (trace_episodes < 1) throw ConfigError("trace_episodes must be positive");
  if (dataset.n_rollouts < 10) throw ConfigError("n_rollouts must be at least 10");
  const long long max_pairs = static_cast<long long>(dataset.n_rollouts) * (dataset.n_rollouts - 1) / 2;
  if (algorithm == Algorithm::Baseline) {
    if (!ablations.empty()) throw ConfigError("ablations apply to IMPEC only");
    if (query_budget > max_pairs) throw ConfigError("query_budget exceeds the number of distinct pairs");
    return;
  }
  if (initial_pairs < 0 || sort_budget < 0) throw ConfigError("budget split must be non-negative");
  if (initial_pairs + sort_budget != query_budget)
    throw ConfigError("initial_pairs + sort_budget must equal query_budget (" + std::to_string(initial_pairs) + " + " +
                      std::to_string(sort_budget) + " != " + std::to_string(query_budget) + ")");
  if (initial_pairs < 1) throw ConfigError("initial_pairs must be positive");
  if (initial_pairs > max_pairs) throw ConfigError("initial_pairs exceeds the number of distinct pairs");
  if (algorithm != Algorithm::IMPEC && !ablations.empty()) throw ConfigError("ablations apply to IMPEC only");
}

std::string ExperimentConfig::label() const {
  std::string out = to_string(algorithm);
  for (Ablation a : ablations) out += "-" + to_string(a);
  if (query_budget != default_query_budget(task.task)) out += "@" + std::to_string(query_budget);
  return out;
}

ExperimentConfig experiment_config_from_text(const std::string& text) {
  auto kv = parse_key_values(text);
  const TaskConfig task = task_config_from_kv(kv);
  ExperimentConfig c = ExperimentConfig::defaults(task.task);
  c.task = task;
  auto take = [&kv](const std::string& key) -> std::optional<std::string> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  auto as_bool = [](const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("bad boolean for " + key + ": '" + v + "'");
  };
  if (auto v = take("algorithm")) c.algorithm = parse_algorithm(*v);
  if (auto v = take("algorithms"))
    for (const auto& item : split(*v, ','))
      if (!trim(item).empty()) c.algorithms.push_back(parse_algorithm(trim(item)));
  const auto budget = take("query_budget");
  const auto initial = take("initial_pairs");
  const auto sort = take("sort_budget");
  if (budget) {
    c.query_budget = parse_int(*budget, "query_budget");
    const double share = static_cast<double>(default_initial_pairs(task.task)) / default_query_budget(task.task);
    c.initial_pairs = static_cast<int>(std::lround(c.query_budget * share));
    c.sort_budget = c.query_budget - c.initial_pairs;
  }
  if (initial) c.initial_pairs = parse_int(*initial, "initial_pairs");
  if (sort) c.sort_budget = parse_int(*sort, "sort_budget");
  if ((initial || sort) && !budget) c.query_budget = c.initial_pairs + c.sort_budget;
  if (initial && !sort && budget) c.sort_budget = c.query_budget - c.initial_pairs;
  if (sort && !initial && budget) c.initial_pairs = c.query_budget - c.sort_budget;
  if (auto v = take("epochs")) c.epochs = parse_int(*v, "epochs");
  if (auto v = take("query_stop_epoch")) c.query_stop_epoch = parse_int(*v, "query_stop_epoch");
  if (auto v = take("seeds")) c.seeds = parse_int_list(*v, "seeds");
  if (auto v = take("ablations"))
    for (const auto& item : split(*v, ','))
      if (!trim(item).empty()) c.ablations.insert(parse_ablation(trim(item)));
  if (auto v = take("oracle_beta")) c.oracle.beta = parse_double(*v, "oracle_beta");
  if (auto v = take("equality_tolerance")) c.oracle.equality_tolerance = parse_double(*v, "equality_tolerance");
  if (auto v = take("eval_episodes")) c.eval.episodes = parse_int(*v, "eval_episodes");
  if (auto v = take("eval_horizon")) c.eval.horizon = parse_int(*v, "eval_horizon");
  if (auto v = take("failure_threshold")) c.eval.failure_threshold = parse_double(*v, "failure_threshold");
  if (auto v = take("learning_rate")) c.train.learning_rate = parse_double(*v, "learning_rate");
  if (auto v = take("weight_decay")) c.train.weight_decay = parse_double(*v, "weight_decay");
  if (auto v = take("batch_size")) c.train.batch_size = parse_int(*v, "batch_size");
  if (auto v = take("temperature")) c.train.temperature = parse_double(*v, "temperature");
  if (auto v = take("m_samples")) c.train.m_samples = parse_int(*v, "m_samples");
  if (auto v = take("kl_weight")) c.train.kl_weight = parse_double(*v, "kl_weight");
  if (auto v = take("prior_sigma")) c.train.prior_sigma = parse_double(*v, "prior_sigma");
  if (auto v = take("init_sigma")) c.train.init_sigma = parse_double(*v, "init_sigma");
  if (auto v = take("hidden")) c.train.hidden = parse_int_list(*v, "hidden");
  if (auto v = take("n_rollouts")) c.dataset.n_rollouts = parse_int(*v, "n_rollouts");
  if (auto v = take("fragment_length")) c.dataset.fragment_length = parse_int(*v, "fragment_length");
  if (auto v = take("low_return_cap")) c.dataset.low_return_cap = parse_double(*v, "low_return_cap");
  if (auto v = take("low_return_threshold"))
    c.dataset.low_return_threshold = parse_double(*v, "low_return_threshold");
  if (auto v = take("epsilons")) {
    c.dataset.epsilons.clear();
    for (const auto& item : split(*v, ','))
      if (!trim(item).empty()) c.dataset.epsilons.push_back(parse_double(item, "epsilons"));
  }
  if (auto v = take("max_chain_size")) c.max_chain_size = parse_int(*v, "max_chain_size");
  if (auto v = take("chain_count_mode")) c.chain_mode = parse_chain_count_mode(*v);
  if (auto v = take("trace_eval")) c.trace_eval = as_bool(*v, "trace_eval");
  if (auto v = take("trace_episodes")) c.trace_episodes = parse_int(*v, "trace_episodes");
  if (auto v = take("threads")) c.threads = parse_int(*v, "threads");
  if (auto v = take("budgets")) c.budgets = parse_int_list(*v, "budgets");
  if (auto v = take("output_dir")) c.output_dir = *v;
  if (!kv.empty()) throw ConfigError("unknown config key '" + kv.begin()->first + "'");
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return experiment_config_from_text(ss.str());
}

std::string experiment_config_to_text(const ExperimentConfig& c) {
  auto ints = [](const std::vector<int>& v) {
    std::vector<std::string> s;
    for (int x : v) s.push_back(std::to_string(x));
    return join(s, ",");
  };
  std::ostringstream out;
  out << task_config_to_kv(c.task);
  out << "algorithm = " << to_string(c.algorithm) << "\n";
  if (!c.algorithms.empty()) {
    std::vector<std::string> names;
    for (Algorithm a : c.algorithms) names.push_back(to_string(a));
    out << "algorithms = " << join(names, ",") << "\n";
  }
  out << "query_budget = " << c.query_budget << "\n"
      << "initial_pairs = " << c.initial_pairs << "\n"
      << "sort_budget = " << c.sort_budget << "\n"
      << "epochs = " << c.epochs << "\n"
      << "query_stop_epoch = " << c.query_stop_epoch << "\n"
      << "seeds = " << ints(c.seeds) << "\n";
  if (!c.ablations.empty()) {
    std::vector<std::string> names;
    for (Ablation a : c.ablations) names.push_back(to_string(a));
    out << "ablations = " << join(names, ",") << "\n";
  }
  std::vector<std::string> eps;
  for (double e : c.dataset.epsilons) eps.push_back(format_double(e));
  out << "oracle_beta = " << format_double(c.oracle.beta) << "\n"
      << "equality_tolerance = " << format_double(c.oracle.equality_tolerance) << "\n"
      << "eval_episodes = " << c.eval.episodes << "\n"
      << "eval_horizon = " << c.eval.horizon << "\n"
      << "failure_threshold = " << format_double(c.eval.failure_threshold) << "\n"
      << "learning_rate = " << format_double(c.train.learning_rate) << "\n"
      << "weight_decay = " << format_double(c.train.weight_decay) << "\n"
      << "batch_size = " << c.train.batch_size << "\n"
      << "temperature = " << format_double(c.train.temperature) << "\n"
      << "m_samples = " << c.train.m_samples << "\n"
      << "kl_weight = " << format_double(c.train.kl_weight) << "\n"
      << "prior_sigma = " << format_double(c.train.prior_sigma) << "\n"
      << "init_sigma = " << format_double(c.train.init_sigma) << "\n"
      << "hidden = " << ints(c.train.hidden) << "\n"
      << "n_rollouts = " << c.dataset.n_rollouts << "\n"
      << "fragment_length = " << c.dataset.fragment_length << "\n"
      << "low_return_cap = " << format_double(c.dataset.low_return_cap) << "\n"
      << "low_return_threshold = " << format_double(c.dataset.low_return_threshold) << "\n"
      << "epsilons = " << join(eps, ",") << "\n"
      << "max_chain_size = " << c.max_chain_size << "\n"
      << "chain_count_mode = " << to_string(c.chain_mode) << "\n"
      << "trace_eval = " << (c.trace_eval ? "true" : "false") << "\n"
      << "trace_episodes = " << c.trace_episodes << "\n"
      << "threads = " << c.threads << "\n";
  if (!c.budgets.empty()) out << "budgets = " << ints(c.budgets) << "\n";
  out << "output_dir = " << c.output_dir << "\n";
  return out.str();
}

void EventLog::add(json event) { events_.push_back(std::move(event)); }

std::string EventLog::dump() const {
  std::string out;
  for (const auto& e : events_) out += e.dump() + "\n";
  return out;
}

void EventLog::write(const std::string& path) const {
  // write-then-rename so a reader never sees a partial log
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot write event log '" + path + "'");
    out << dump();
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw std::runtime_error("cannot move event log into place");
}

EventLog EventLog::parse(std::istream& in) {
  EventLog log;
  std::string line;
  while (std::getline(in, line))
    if (!trim(line).empty()) log.add(json::parse(line));
  return log;
}

EventLog EventLog::read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open event log '" + path + "'");
  return parse(in);
}

int cumulative_allowance(int budget, int epochs, int epoch) {
  if (epochs <= 0) return budget;
  const int e = std::clamp(epoch, 0, epochs);
  const int base = budget / epochs, extra = budget % epochs;
  return base * e + std::min(e, extra);
}

namespace {

// Seed streams of one run; shared across algorithms so runs with the same seed
// see the same dataset, initial pairs, initial weights and test layouts.
enum Stream : std::uint64_t {
  kDatasetStream = 11,
  kOracleStream,
  kInitStream,
  kTrainStream,
  kAcquireStream,
  kEvalStream,
  kPairStream,
  kTraceStream
};

std::vector<int> network_widths(const Environment& env, const TrainConfig& train) {
  std::vector<int> widths = {feature_dim(env)};
  widths.insert(widths.end(), train.hidden.begin(), train.hidden.end());
  widths.push_back(1);
  return widths;
}

class Run {
 public:
  Run(const ExperimentConfig& config, int seed)
      : cfg_(config),
        seed_(seed),
        env_(config.task),
        eval_env_(evaluation_config(config.task)),
        oracle_(config.oracle, mix_seed(static_cast<std::uint64_t>(seed), kOracleStream)),
        net_(network_widths(env_, config.train), config.train.prior_sigma, config.train.init_sigma,
             mix_seed(static_cast<std::uint64_t>(seed), kInitStream)),
        train_gen_(mix_seed(static_cast<std::uint64_t>(seed), kTrainStream)),
        acquire_gen_(mix_seed(static_cast<std::uint64_t>(seed), kAcquireStream)),
        chain_(static_cast<std::size_t>(config.max_chain_size)) {}

  RunResult& result() { return result_; }

  void setup() {
    cfg_.validate();
    data_ = generate_dataset(env_, cfg_.dataset, mix_seed(static_cast<std::uint64_t>(seed_), kDatasetStream));
    features_ = build_features(data_);
    result_.label = cfg_.label();
    result_.task = to_string(cfg_.task.task);
    result_.seed = seed_;
    result_.query_budget = cfg_.query_budget;
    log({{"event", "run_start"},
         {"label", result_.label},
         {"task", result_.task},
         {"seed", seed_},
         {"config", experiment_config_to_text(cfg_)}});
    log({{"event", "dataset"},
         {"rollouts", data_.size()},
         {"low_return", data_.low_return_count()},
         {"mean_return", mean_of(returns_of_all())}});
  }

  double gt(int id) const { return data_.at(id).gt_return; }

  // One oracle query on (a, b); the pair joins the dataset unless already present.
  PreferenceLabel query(int a, int b, Provenance provenance, int epoch) {
    const PreferenceLabel label = oracle_.compare(gt(a), gt(b));
    log_query(a, b, label, epoch);
    add_pair({a, b, label, provenance});
    return label;
  }

  void log_query(int a, int b, PreferenceLabel label, int epoch) {
    log({{"event", "query"},
         {"epoch", epoch},
         {"a", a},
         {"b", b},
         {"ra", gt(a)},
         {"rb", gt(b)},
         {"label", to_string(label)},
         {"count", oracle_.query_count()}});
  }

  bool add_pair(const PreferencePair& p) {
    if (!prefs_.add(p)) return false;
    log({{"event", "pair"},
         {"a", p.first},
         {"b", p.second},
         {"label", to_string(p.label)},
         {"provenance", to_string(p.provenance)}});
    return true;
  }

  std::vector<std::pair<int, int>> initial_pairs(std::size_t k) {
    return sample_initial_pairs(data_.size(), k, mix_seed(static_cast<std::uint64_t>(seed_), kPairStream));
  }

  void train(int epoch) {
    const double loss = train_epoch(net_, adam_, prefs_.pairs(), features_, cfg_.train, train_gen_);
    result_.loss_trace.push_back(loss);
    json e = {{"event", "epoch"},
              {"epoch", epoch},
              {"loss", loss},
              {"pairs", prefs_.size()},
              {"queries", oracle_.query_count()}};
    if (cfg_.trace_eval) {
      EvalSettings s = cfg_.eval;
      s.episodes = cfg_.trace_episodes;
      Planner planner(eval_env_, learned_reward_table(eval_env_, net_));
      const double r =
          evaluate_policy(planner, s, mix_seed(static_cast<std::uint64_t>(seed_), kTraceStream)).mean_return;
      result_.eval_trace.push_back(r);
      e["eval"] = r;
    }
    log(std::move(e));
  }

  PredictionTable draw_table() { return predict_table(net_, features_, cfg_.train.m_samples, acquire_gen_); }

  void finish() {
    Planner planner(eval_env_, learned_reward_table(eval_env_, net_));
    result_.eval = evaluate_policy(planner, cfg_.eval, mix_seed(static_cast<std::uint64_t>(seed_), kEvalStream));
    if (cfg_.task.confounds.extra_obs) result_.probe_gap = spurious_probe(eval_env_, learned_reward_fn(net_)).gap;
    result_.query_usage = oracle_.query_count();
    result_.labeled_pairs = prefs_.size();
    result_.chain_rollouts = chain_.num_ranked();
    result_.chain_buckets = chain_.num_buckets();
    result_.graph = graph_metrics(build_graph(prefs_.pairs()), cfg_.chain_mode);
    if (!chain_.empty()) log({{"event", "chain"}, {"buckets", chain_.buckets()}});
    const auto& g = result_.graph;
    json end = {{"event", "run_end"},
                {"label", result_.label},
                {"task", result_.task},
                {"seed", seed_},
                {"mean_return", result_.eval.mean_return},
                {"std_return", result_.eval.std_return},
                {"returns", result_.eval.returns},
                {"episodes", result_.eval.episodes},
                {"horizon", result_.eval.horizon},
                {"failed", result_.eval.failed},
                {"failure_threshold", cfg_.eval.failure_threshold},
                {"query_usage", result_.query_usage},
                {"query_budget", result_.query_budget},
                {"loss_trace", result_.loss_trace},
                {"eval_trace", result_.eval_trace},
                {"labeled_pairs", result_.labeled_pairs},
                {"chain_rollouts", result_.chain_rollouts},
                {"chain_buckets", result_.chain_buckets},
                {"graph",
                 {{"nodes", g.nodes},
                  {"edges", g.edges},
                  {"clustering", g.clustering},
                  {"efficiency", g.efficiency},
                  {"lcc_nodes", g.lcc_nodes},
                  {"chains", g.chains},
                  {"cyclic", g.cyclic}}}};
    end["probe_gap"] = result_.probe_gap ? json(*result_.probe_gap) : json(nullptr);
    log(std::move(end));
    if (result_.query_usage > static_cast<std::uint64_t>(cfg_.query_budget))
      throw std::logic_error("query budget exceeded");
  }

  void log(json e) { result_.log.add(std::move(e)); }

  const ExperimentConfig& cfg() const { return cfg_; }
  const RolloutDataset& data() const { return data_; }
  Oracle& oracle() { return oracle_; }
  PreferenceChain& chain() { return chain_; }
  PreferenceSet& prefs() { return prefs_; }
  Rng& acquire_gen() { return acquire_gen_; }

 private:
  std::vector<double> returns_of_all() const {
    std::vector<double> r;
    for (const auto& x : data_.rollouts) r.push_back(x.gt_return);
    return r;
  }

  ExperimentConfig cfg_;
  int seed_;
  Environment env_;
  Environment eval_env_;
  RolloutDataset data_;
  FeatureStore features_;
  Oracle oracle_;
  BayesianRewardNet net_;
  AdamState adam_;
  Rng train_gen_;
  Rng acquire_gen_;
  PreferenceChain chain_;
  PreferenceSet prefs_;
  RunResult result_;
};

std::vector<int> rollouts_in(const std::vector<std::pair<int, int>>& pairs) {
  std::set<int> ids;
  for (auto [a, b] : pairs) {
    ids.insert(a);
    ids.insert(b);
  }
  return {ids.begin(), ids.end()};
}

}  // namespace

RunResult run_impec(const ExperimentConfig& config, int seed) {
  if (config.ablations.count(Ablation::NoRanking)) return run_pairwise(config, seed);
  Run run(config, seed);
  run.setup();
  const auto initial = run.initial_pairs(static_cast<std::size_t>(config.initial_pairs));
  for (auto [a, b] : initial) run.query(a, b, Provenance::Initial, 0);
  std::vector<int> candidates = rollouts_in(initial);
  const bool active = !config.ablations.count(Ablation::NoActive);
  const bool derive = !config.ablations.count(Ablation::NoDerivedPrefs);
  const double temperature = config.train.temperature;
  int sort_used = 0;
  const ReturnLookup returns = [&run](int id) { return run.gt(id); };

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    run.train(epoch);
    if (epoch > config.query_stop_epoch) continue;
    const int allowed = cumulative_allowance(config.sort_budget, config.query_stop_epoch, epoch);
    auto& chain = run.chain();
    if (chain.full() || candidates.empty()) continue;
    if (!(sort_used < allowed && sort_used + insertion_query_bound(chain.num_buckets()) <= config.sort_budget))
      continue;
    const PredictionTable table = run.draw_table();  // one weight draw per selection phase
    while (!chain.full() && !candidates.empty() && sort_used < allowed &&
           sort_used + insertion_query_bound(chain.num_buckets()) <= config.sort_budget) {
      int chosen;
      double score = 0.0;
      if (active) {
        const AcquisitionResult pick = select_next(chain, table, candidates, temperature);
        chosen = pick.chosen;
        score = pick.scores.at(chosen);
      } else {
        chosen = random_select(candidates, run.acquire_gen());
      }
      run.log({{"event", "select"},
               {"epoch", epoch},
               {"chosen", chosen},
               {"score", score},
               {"candidates", candidates.size()}});
      const auto before = run.oracle().query_count();
      const InsertionReceipt receipt = insert(chain, chosen, run.oracle(), returns, table);
      if (run.oracle().query_count() - before != static_cast<std::uint64_t>(receipt.queries_used))
        throw std::logic_error("insertion query accounting mismatch");
      sort_used += receipt.queries_used;
      for (const Probe& p : receipt.probes) run.log_query(chosen, p.against, p.label, epoch);
      for (const auto& p : receipt.queried_pairs) run.add_pair(p);
      int derived_added = 0;
      if (derive)
        for (const auto& p : receipt.derived_pairs) derived_added += run.add_pair(p) ? 1 : 0;
      run.log({{"event", "insert"},
               {"epoch", epoch},
               {"xi", chosen},
               {"rank", receipt.rank},
               {"merged", receipt.merged},
               {"queries", receipt.queries_used},
               {"lo", receipt.guess_lo},
               {"hi", receipt.guess_hi},
               {"derived", derived_added}});
      std::erase(candidates, chosen);
    }
  }
  run.finish();
  return std::move(run.result());
}

RunResult run_pairwise(const ExperimentConfig& config, int seed) {
  Run run(config, seed);
  run.setup();
  const auto initial = run.initial_pairs(static_cast<std::size_t>(config.initial_pairs));
  for (auto [a, b] : initial) run.query(a, b, Provenance::Initial, 0);
  const std::vector<int> candidates = rollouts_in(initial);
  const bool volume = config.algorithm == Algorithm::VolumeRemoval;
  const double temperature = config.train.temperature;
  int used = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    run.train(epoch);
    if (epoch > config.query_stop_epoch) continue;
    const int allowed = cumulative_allowance(config.sort_budget, config.query_stop_epoch, epoch);
    if (used >= allowed) continue;
    const PredictionTable table = run.draw_table();
    std::vector<std::pair<double, std::pair<int, int>>> scored;
    for (std::size_t i = 0; i < candidates.size(); ++i)
      for (std::size_t j = i + 1; j < candidates.size(); ++j) {
        const int a = candidates[i], b = candidates[j];
        if (run.prefs().contains(a, b)) continue;
        const double s = volume ? volume_removal_score(table, a, b, temperature)
                                : pairwise_infogain_score(table, a, b, temperature);
        scored.push_back({s, {a, b}});
      }
    // highest score first, ties by lowest pair
    std::stable_sort(scored.begin(), scored.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
    for (const auto& [score, pair] : scored) {
      if (used >= allowed) break;
      run.log({{"event", "select"}, {"epoch", epoch}, {"a", pair.first}, {"b", pair.second}, {"score", score}});
      run.query(pair.first, pair.second, Provenance::Queried, epoch);
      ++used;
    }
  }
  run.finish();
  return std::move(run.result());
}

RunResult run_baseline(const ExperimentConfig& config, int seed) {
  Run run(config, seed);
  run.setup();
  for (auto [a, b] : run.initial_pairs(static_cast<std::size_t>(config.query_budget)))
    run.query(a, b, Provenance::Initial, 0);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) run.train(epoch);
  run.finish();
  return std::move(run.result());
}

RunResult run_experiment(const ExperimentConfig& config, int seed) {
  switch (config.algorithm) {
    case Algorithm::Baseline: return run_baseline(config, seed);
    case Algorithm::IMPEC: return run_impec(config, seed);
    default: return run_pairwise(config, seed);
  }
}

double welch_p_value(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2) throw std::invalid_argument("Welch test needs at least two values per sample");
  const double ma = mean_of(a), mb = mean_of(b);
  const double sa = stddev_of(a), sb = stddev_of(b);
  const double va = sa * sa / static_cast<double>(a.size()), vb = sb * sb / static_cast<double>(b.size());
  if (va + vb == 0.0) return ma == mb ? 0.5 : (ma > mb ? 0.0 : 1.0);
  const double t = (ma - mb) / std::sqrt(va + vb);
  const double df = (va + vb) * (va + vb) /
                    (va * va / static_cast<double>(a.size() - 1) + vb * vb / static_cast<double>(b.size() - 1));
  const boost::math::students_t dist(df);
  return boost::math::cdf(boost::math::complement(dist, t));
}

std::vector<RunResult> run_jobs(const std::vector<ExperimentConfig>& configs, int threads) {
  std::vector<std::pair<std::size_t, int>> jobs;
  for (std::size_t c = 0; c < configs.size(); ++c)
    for (int s : configs[c].seeds) jobs.emplace_back(c, s);
  std::vector<RunResult> results(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      try {
        results[j] = run_experiment(configs[jobs[j].first], jobs[j].second);
      } catch (...) {
        errors[j] = std::current_exception();
      }
    }
  };
  const int n = std::max(1, std::min<int>(threads, static_cast<int>(jobs.size())));
  std::vector<std::thread> pool;
  for (int i = 1; i < n; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

std::vector<RunResult> run_suite(const ExperimentConfig& config) {
  std::vector<ExperimentConfig> configs;
  if (config.algorithms.empty()) {
    configs.push_back(config);
  } else {
    for (Algorithm a : config.algorithms) {
      ExperimentConfig c = config;
      c.algorithm = a;
      if (a != Algorithm::IMPEC) c.ablations.clear();
      c.validate();
      configs.push_back(c);
    }
  }
  return run_jobs(configs, config.threads);
}

std::vector<RunResult> run_budget_sweep(const ExperimentConfig& config) {
  if (config.budgets.empty()) throw ConfigError("sweep needs a 'budgets' list");
  std::vector<ExperimentConfig> configs;
  for (int b : config.budgets) {
    ExperimentConfig c = config;
    c.algorithm = Algorithm::Baseline;
    c.ablations.clear();
    c.query_budget = b;
    c.validate();
    configs.push_back(c);
  }
  return run_jobs(configs, config.threads);
}

std::vector<SummaryRow> summarize(const std::vector<RunResult>& results, double failure_threshold) {
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::pair<std::string, std::string>, std::vector<const RunResult*>> groups;
  for (const auto& r : results) {
    const auto key = std::make_pair(r.task, r.label);
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(&r);
  }
  auto finals = [&](const std::pair<std::string, std::string>& key) {
    std::vector<double> v;
    for (const RunResult* r : groups.at(key)) v.push_back(r->eval.mean_return);
    return v;
  };
  std::vector<SummaryRow> rows;
  for (const auto& key : order) {
    SummaryRow row;
    row.task = key.first;
    row.label = key.second;
    const auto v = finals(key);
    row.seeds = static_cast<int>(v.size());
    row.mean = mean_of(v);
    row.std = stddev_of(v);
    double q = 0.0;
    for (const RunResult* r : groups.at(key)) {
      if (r->eval.mean_return <= failure_threshold) ++row.failures;
      q += static_cast<double>(r->query_usage);
    }
    row.mean_queries = q / static_cast<double>(v.size());
    // compare against the baseline run at the same budget
    const auto at = key.second.find('@');
    const auto base = std::make_pair(key.first, "Baseline" + (at == std::string::npos ? "" : key.second.substr(at)));
    if (key.second != base.second && groups.count(base) && v.size() >= 2 && groups.at(base).size() >= 2)
      row.p_value = welch_p_value(v, finals(base));
    rows.push_back(row);
  }
  return rows;
}

void write_results_csv(const std::vector<RunResult>& results, std::ostream& out) {
  out << "task,label,seed,mean_return,std_return,failed,query_usage,query_budget,probe_gap,labeled_pairs,"
         "chain_rollouts,chain_buckets,graph_nodes,graph_edges,clustering,efficiency,lcc_nodes,chains\n";
  for (const auto& r : results) {
    out << r.task << ',' << r.label << ',' << r.seed << ',' << format_double(r.eval.mean_return) << ','
        << format_double(r.eval.std_return) << ',' << (r.eval.failed ? 1 : 0) << ',' << r.query_usage << ','
        << r.query_budget << ',' << (r.probe_gap ? format_double(*r.probe_gap) : std::string()) << ','
        << r.labeled_pairs << ',' << r.chain_rollouts << ',' << r.chain_buckets << ',' << r.graph.nodes << ','
        << r.graph.edges << ',' << format_double(r.graph.clustering) << ',' << format_double(r.graph.efficiency)
        << ',' << r.graph.lcc_nodes << ',' << r.graph.chains << '\n';
  }
}

void write_summary_csv(const std::vector<SummaryRow>& rows, std::ostream& out) {
  out << "task,label,seeds,mean_return,std_return,failures,p_value_vs_baseline,mean_queries\n";
  for (const auto& r : rows)
    out << r.task << ',' << r.label << ',' << r.seeds << ',' << format_double(r.mean) << ',' << format_double(r.std)
        << ',' << r.failures << ',' << (r.p_value ? format_double(*r.p_value) : std::string()) << ','
        << format_double(r.mean_queries) << '\n';
}

std::string format_summary_table(const std::vector<SummaryRow>& rows) {
  std::ostringstream out;
  out << std::left << std::setw(18) << "task" << std::setw(30) << "algorithm" << std::setw(22) << "return"
      << std::setw(10) << "failures" << std::setw(10) << "p" << "queries\n";
  for (const auto& r : rows) {
    std::ostringstream ret, p;
    ret << std::fixed << std::setprecision(2) << r.mean << " +- " << r.std;
    if (r.p_value) p << std::setprecision(3) << *r.p_value;
    else p << "-";
    out << std::left << std::setw(18) << r.task << std::setw(30) << r.label << std::setw(22) << ret.str()
        << std::setw(10) << (std::to_string(r.failures) + "/" + std::to_string(r.seeds)) << std::setw(10) << p.str()
        << std::fixed << std::setprecision(1) << r.mean_queries << std::defaultfloat << "\n";
  }
  return out.str();
}

void emit_plot_data(const std::vector<RunResult>& results, std::ostream& out) {
  out << "label,epoch,loss_mean,loss_std,return_mean,return_std\n";
  std::vector<std::string> order;
  std::map<std::string, std::vector<const RunResult*>> groups;
  for (const auto& r : results) {
    if (!groups.count(r.label)) order.push_back(r.label);
    groups[r.label].push_back(&r);
  }
  for (const auto& label : order) {
    const auto& runs = groups[label];
    std::size_t epochs = 0;
    for (const RunResult* r : runs) epochs = std::max(epochs, r->loss_trace.size());
    for (std::size_t e = 0; e < epochs; ++e) {
      std::vector<double> loss, ret;
      for (const RunResult* r : runs) {
        if (e < r->loss_trace.size()) loss.push_back(r->loss_trace[e]);
        if (e < r->eval_trace.size()) ret.push_back(r->eval_trace[e]);
      }
      out << label << ',' << e + 1 << ',' << format_double(mean_of(loss)) << ',' << format_double(stddev_of(loss))
          << ',';
      if (!ret.empty()) out << format_double(mean_of(ret)) << ',' << format_double(stddev_of(ret));
      else out << ',';
      out << '\n';
    }
  }
}

RunResult result_from_log(const EventLog& log) {
  for (auto it = log.events().rbegin(); it != log.events().rend(); ++it) {
    const json& e = *it;
    if (e.value("event", "") != "run_end") continue;
    RunResult r;
    r.label = e.at("label").get<std::string>();
    r.task = e.at("task").get<std::string>();
    r.seed = e.at("seed").get<int>();
    r.eval.mean_return = e.at("mean_return").get<double>();
    r.eval.std_return = e.at("std_return").get<double>();
    r.eval.returns = e.at("returns").get<std::vector<double>>();
    r.eval.episodes = e.at("episodes").get<int>();
    r.eval.horizon = e.at("horizon").get<int>();
    r.eval.failed = e.at("failed").get<bool>();
    r.query_usage = e.at("query_usage").get<std::uint64_t>();
    r.query_budget = e.at("query_budget").get<int>();
    if (!e.at("probe_gap").is_null()) r.probe_gap = e.at("probe_gap").get<double>();
    r.loss_trace = e.at("loss_trace").get<std::vector<double>>();
    r.eval_trace = e.at("eval_trace").get<std::vector<double>>();
    r.labeled_pairs = e.at("labeled_pairs").get<std::size_t>();
    r.chain_rollouts = e.at("chain_rollouts").get<std::size_t>();
    r.chain_buckets = e.at("chain_buckets").get<std::size_t>();
    const json& g = e.at("graph");
    r.graph.nodes = g.at("nodes").get<std::size_t>();
    r.graph.edges = g.at("edges").get<std::size_t>();
    r.graph.clustering = g.at("clustering").get<double>();
    r.graph.efficiency = g.at("efficiency").get<double>();
    r.graph.lcc_nodes = g.at("lcc_nodes").get<std::size_t>();
    r.graph.chains = g.at("chains").get<long long>();
    r.graph.cyclic = g.at("cyclic").get<bool>();
    r.log = log;
    return r;
  }
  throw std::runtime_error("event log has no run_end record");
}

PreferenceGraph graph_from_log(const EventLog& log) {
  std::vector<PreferencePair> pairs;
  for (const json& e : log.events())
    if (e.value("event", "") == "pair")
      pairs.push_back({e.at("a").get<int>(), e.at("b").get<int>(),
                       parse_preference_label(e.at("label").get<std::string>()),
                       parse_provenance(e.at("provenance").get<std::string>())});
  return build_graph(pairs);
}

}  // namespace impec
