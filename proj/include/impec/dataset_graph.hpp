// Graph view of a preference dataset and its connectivity metrics.
#pragma once

#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "impec/reward_model.hpp"

namespace impec {

struct GraphEdge {
  int a = 0;  // a < b
  int b = 0;
  PreferenceLabel label = PreferenceLabel::Equal;  // label of (a, b)
  Provenance provenance = Provenance::Initial;
};

class PreferenceGraph {
 public:
  void add_node(int id);
  /// Throws on a == b. A repeated pair keeps its first label and returns false.
  bool add_edge(int first, int second, PreferenceLabel label, Provenance provenance);

  const std::set<int>& nodes() const { return nodes_; }
  const std::map<std::pair<int, int>, GraphEdge>& edges() const { return edges_; }
  std::size_t num_nodes() const { return nodes_.size(); }
  std::size_t num_edges() const { return edges_.size(); }
  const std::set<int>& neighbours(int id) const;
  bool has_edge(int a, int b) const;

  /// Strict edges oriented winner -> loser.
  std::map<int, std::vector<int>> directed_view() const;
  /// Subgraph induced by `keep`.
  PreferenceGraph induced(const std::set<int>& keep) const;

 private:
  std::set<int> nodes_;
  std::map<std::pair<int, int>, GraphEdge> edges_;
  std::map<int, std::set<int>> adj_;
};

PreferenceGraph build_graph(const std::vector<PreferencePair>& pairs);

/// Average local clustering; nodes of degree < 2 count as 0.
double clustering_coefficient(const PreferenceGraph& g);
/// Largest undirected component; ties go to the component with the smallest node id.
PreferenceGraph largest_connected_component(const PreferenceGraph& g);
/// Mean of 1/d(u, v) over ordered pairs of the largest component.
double global_efficiency(const PreferenceGraph& g);

enum class ChainCountMode { TransitiveClosure, MaximalPaths, PathComponents };
std::string to_string(ChainCountMode mode);
ChainCountMode parse_chain_count_mode(const std::string& text);

struct ChainCount {
  long long count = 0;
  bool cyclic = false;  // strict orientation contains a directed cycle
};

/// TransitiveClosure: ordered pairs joined by a directed path.
/// MaximalPaths: directed paths from a source to a sink (DAG only; -1 on cycles).
/// PathComponents: components whose undirected shape is a simple path of >= 2 nodes.
ChainCount count_chains(const PreferenceGraph& g, ChainCountMode mode = ChainCountMode::TransitiveClosure);

struct GraphMetrics {
  std::size_t nodes = 0;
  std::size_t edges = 0;
  double clustering = 0.0;
  double efficiency = 0.0;
  std::size_t lcc_nodes = 0;
  long long chains = 0;
  bool cyclic = false;
};

GraphMetrics graph_metrics(const PreferenceGraph& g, ChainCountMode mode = ChainCountMode::TransitiveClosure);

/// "node: n1 n2 ..." lines.
void write_adjacency_list(const PreferenceGraph& g, std::ostream& out);
/// id,return,provenance rows; provenance is the earliest provenance touching the node.
void write_node_table(const PreferenceGraph& g, const std::map<int, double>& returns, std::ostream& out);
void write_metrics_csv(const std::vector<std::pair<std::string, GraphMetrics>>& rows, std::ostream& out);

}  // namespace impec
