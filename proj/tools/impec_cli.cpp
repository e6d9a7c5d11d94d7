// impec: run IMPEC / baseline experiments and summarise their logs.
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "impec/harness.hpp"

namespace fs = std::filesystem;
using namespace impec;

namespace {

void write_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
  }
  fs::rename(tmp, path);
}

std::string log_name(const RunResult& r) { return r.task + "_" + r.label + "_s" + std::to_string(r.seed) + ".jsonl"; }

void write_outputs(const std::vector<RunResult>& results, const fs::path& dir, double failure_threshold) {
  fs::create_directories(dir / "logs");
  for (const auto& r : results) r.log.write((dir / "logs" / log_name(r)).string());

  std::ostringstream csv, summary;
  write_results_csv(results, csv);
  write_atomic(dir / "results.csv", csv.str());
  const auto rows = summarize(results, failure_threshold);
  write_summary_csv(rows, summary);
  write_atomic(dir / "summary.csv", summary.str());

  std::map<std::string, std::vector<RunResult>> by_task;
  for (const auto& r : results) by_task[r.task].push_back(r);
  for (const auto& [task, runs] : by_task) {
    std::ostringstream plot;
    emit_plot_data(runs, plot);
    write_atomic(dir / ("plot_" + task + ".csv"), plot.str());
  }
  std::cout << format_summary_table(rows);
  std::cout << "wrote " << results.size() << " run(s) to " << dir.string() << "\n";
}

std::vector<EventLog> read_logs(const std::vector<std::string>& inputs) {
  std::vector<fs::path> files;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      for (const auto& e : fs::recursive_directory_iterator(in))
        if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path());
    } else {
      files.emplace_back(in);
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::runtime_error("no event logs found");
  std::vector<EventLog> logs;
  for (const auto& f : files) logs.push_back(EventLog::read(f.string()));
  return logs;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"IMPEC experiments on the confusing gridworld tasks"};
  app.require_subcommand(1);

  std::vector<std::string> configs;
  std::string out_dir;
  std::vector<int> seeds;
  int threads = 0;

  auto* run = app.add_subcommand("run", "run one config (its algorithm over its seeds)");
  run->add_option("config", configs, "config file")->required()->expected(1);
  run->add_option("--seeds", seeds, "override the config's seeds");
  run->add_option("--out", out_dir, "output directory (default: config output_dir)");
  run->add_option("--threads", threads, "parallel jobs");

  auto* suite = app.add_subcommand("suite", "task x algorithm x seed grid, one config per task");
  suite->add_option("configs", configs, "config files")->required();
  suite->add_option("--seeds", seeds, "override every config's seeds");
  suite->add_option("--out", out_dir, "output directory");
  suite->add_option("--threads", threads, "parallel jobs");

  auto* sweep = app.add_subcommand("sweep", "baseline over the config's budget list");
  sweep->add_option("config", configs, "config file")->required()->expected(1);
  sweep->add_option("--seeds", seeds, "override the config's seeds");
  sweep->add_option("--out", out_dir, "output directory");
  sweep->add_option("--threads", threads, "parallel jobs");

  std::vector<std::string> log_inputs;
  double threshold = 10.0;
  std::string summary_out;
  auto* stats = app.add_subcommand("stats", "recompute the summary from event logs");
  stats->add_option("logs", log_inputs, "log files or directories")->required();
  stats->add_option("--failure-threshold", threshold, "return at or below which a seed fails");
  stats->add_option("--csv", summary_out, "also write the summary CSV here");

  std::string log_file, mode_name = "closure", adjacency_out, nodes_out;
  auto* graph = app.add_subcommand("graph", "dataset-graph metrics from one event log");
  graph->add_option("log", log_file, "event log")->required();
  graph->add_option("--chains", mode_name, "chain count: closure, maximal_paths or path_components");
  graph->add_option("--adjacency", adjacency_out, "write the adjacency list here");
  graph->add_option("--nodes", nodes_out, "write the node table (id, return) here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run || *suite || *sweep) {
      std::vector<ExperimentConfig> cfgs;
      for (const auto& path : configs) {
        ExperimentConfig c = load_experiment_config(path);
        if (!seeds.empty()) c.seeds = seeds;
        if (threads > 0) c.threads = threads;
        c.validate();
        cfgs.push_back(c);
      }
      const ExperimentConfig& first = cfgs.front();
      const fs::path dir = out_dir.empty() ? fs::path(first.output_dir) : fs::path(out_dir);
      std::vector<RunResult> results;
      if (*run) {
        results = run_jobs({first}, first.threads);
      } else if (*sweep) {
        results = run_budget_sweep(first);
      } else {
        for (const auto& c : cfgs) {
          auto part = run_suite(c);
          results.insert(results.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
        }
      }
      for (const auto& r : results)
        if (r.query_usage > static_cast<std::uint64_t>(r.query_budget))
          throw std::logic_error("run " + log_name(r) + " exceeded its query budget");
      write_outputs(results, dir, first.eval.failure_threshold);
    } else if (*stats) {
      std::vector<RunResult> results;
      for (const auto& log : read_logs(log_inputs)) results.push_back(result_from_log(log));
      const auto rows = summarize(results, threshold);
      std::cout << format_summary_table(rows);
      if (!summary_out.empty()) {
        std::ostringstream csv;
        write_summary_csv(rows, csv);
        write_atomic(summary_out, csv.str());
      }
    } else if (*graph) {
      const EventLog log = EventLog::read(log_file);
      const PreferenceGraph g = graph_from_log(log);
      const GraphMetrics m = graph_metrics(g, parse_chain_count_mode(mode_name));
      std::ostringstream csv;
      write_metrics_csv({{log_file, m}}, csv);
      std::cout << csv.str();
      if (!adjacency_out.empty()) {
        std::ostringstream adj;
        write_adjacency_list(g, adj);
        write_atomic(adjacency_out, adj.str());
      }
      if (!nodes_out.empty()) {
        std::map<int, double> returns;
        for (const auto& e : log.events())
          if (e.value("event", "") == "query") {
            returns[e.at("a").get<int>()] = e.at("ra").get<double>();
            returns[e.at("b").get<int>()] = e.at("rb").get<double>();
          }
        std::ostringstream nodes;
        write_node_table(g, returns, nodes);
        write_atomic(nodes_out, nodes.str());
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
