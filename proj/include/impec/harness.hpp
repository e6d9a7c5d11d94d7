// Experiment drivers: IMPEC, the random-pair baseline and the pairwise
// acquisition baselines, with budget accounting, event logs and statistics.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "impec/acquisition.hpp"
#include "impec/chain.hpp"
#include "impec/dataset_graph.hpp"
#include "impec/env.hpp"
#include "impec/oracle.hpp"
#include "impec/policy_eval.hpp"
#include "impec/reward_model.hpp"
#include "impec/rollouts.hpp"

namespace impec {

enum class Algorithm { Baseline, IMPEC, PairwiseInfoGain, VolumeRemoval };
enum class Ablation { NoActive, NoDerivedPrefs, NoRanking };

std::string to_string(Algorithm a);
Algorithm parse_algorithm(const std::string& text);
std::string to_string(Ablation a);
Ablation parse_ablation(const std::string& text);

/// Budget used by default for a task: 600 for the two hard tasks, 300 otherwise.
int default_query_budget(TaskName task);

struct ExperimentConfig {
  TaskConfig task;
  Algorithm algorithm = Algorithm::IMPEC;
  int query_budget = 300;
  int initial_pairs = 150;
  int sort_budget = 150;
  int epochs = 20;
  int query_stop_epoch = 15;
  std::vector<int> seeds = {0, 1, 2, 3, 4};
  std::set<Ablation> ablations;
  OracleConfig oracle;
  EvalSettings eval;
  TrainConfig train;
  DatasetOptions dataset;
  int max_chain_size = 30;
  ChainCountMode chain_mode = ChainCountMode::TransitiveClosure;
  bool trace_eval = false;  // evaluate the policy after every epoch
  int trace_episodes = 5;
  int threads = 1;
  std::vector<Algorithm> algorithms;  // suite grid
  std::vector<int> budgets;  // sweep points
  std::string output_dir = "results";

  /// Defaults for a task, including its budget split.
  static ExperimentConfig defaults(TaskName task);
  /// Throws ConfigError on invariant violations.
  void validate() const;
  /// Short label, e.g. "IMPEC" or "IMPEC-NoActive".
  std::string label() const;
};

/// Parses `key = value` text. Unknown keys are an error.
ExperimentConfig experiment_config_from_text(const std::string& text);
ExperimentConfig load_experiment_config(const std::string& path);
std::string experiment_config_to_text(const ExperimentConfig& config);

/// In-memory JSON-lines event log.
class EventLog {
 public:
  void add(nlohmann::json event);
  const std::vector<nlohmann::json>& events() const { return events_; }
  std::string dump() const;
  void write(const std::string& path) const;
  static EventLog read(const std::string& path);
  static EventLog parse(std::istream& in);

 private:
  std::vector<nlohmann::json> events_;
};

struct RunResult {
  std::string label;
  std::string task;
  int seed = 0;
  EvalReport eval;
  std::uint64_t query_usage = 0;
  int query_budget = 0;
  std::optional<double> probe_gap;
  std::vector<double> loss_trace;
  std::vector<double> eval_trace;  // empty unless trace_eval
  GraphMetrics graph;
  std::size_t labeled_pairs = 0;
  std::size_t chain_rollouts = 0;
  std::size_t chain_buckets = 0;
  EventLog log;
};

RunResult run_experiment(const ExperimentConfig& config, int seed);
RunResult run_impec(const ExperimentConfig& config, int seed);
RunResult run_baseline(const ExperimentConfig& config, int seed);
/// PairwiseInfoGain / VolumeRemoval, and IMPEC with the NoRanking ablation.
RunResult run_pairwise(const ExperimentConfig& config, int seed);

/// Cumulative sort-query allowance after `epoch` (1-based) when `budget` is
/// spread over `epochs` epochs, remainder going to the earliest ones.
int cumulative_allowance(int budget, int epochs, int epoch);

/// One-sided Welch t-test p-value for mean(a) > mean(b).
double welch_p_value(const std::vector<double>& a, const std::vector<double>& b);

struct SummaryRow {
  std::string task;
  std::string label;
  int seeds = 0;
  double mean = 0.0;
  double std = 0.0;
  int failures = 0;
  std::optional<double> p_value;  // vs. the baseline row of the same task and budget
  double mean_queries = 0.0;
};

/// Runs every (config, seed) job, `threads` at a time. Results keep job order.
std::vector<RunResult> run_jobs(const std::vector<ExperimentConfig>& configs, int threads);
/// The config's algorithm list (or its single algorithm) over its seeds.
std::vector<RunResult> run_suite(const ExperimentConfig& config);
/// Baseline at each budget of config.budgets.
std::vector<RunResult> run_budget_sweep(const ExperimentConfig& config);

std::vector<SummaryRow> summarize(const std::vector<RunResult>& results, double failure_threshold);
void write_results_csv(const std::vector<RunResult>& results, std::ostream& out);
void write_summary_csv(const std::vector<SummaryRow>& rows, std::ostream& out);
std::string format_summary_table(const std::vector<SummaryRow>& rows);
/// Per-epoch mean and std of loss (and return when traced) for each label.
void emit_plot_data(const std::vector<RunResult>& results, std::ostream& out);

/// Rebuilds a RunResult's headline fields from a log's run_end event.
RunResult result_from_log(const EventLog& log);
/// Preference graph from a log's pair events.
PreferenceGraph graph_from_log(const EventLog& log);

}  // namespace impec
