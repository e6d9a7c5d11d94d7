#include <sstream>

#include "doctest.h"
#include "impec/dataset_graph.hpp"
#include "oracles.hpp"

using namespace impec;

namespace {

PreferencePair first_wins(int a, int b) { return {a, b, PreferenceLabel::FirstPreferred, Provenance::Initial}; }

PreferenceGraph from(const std::vector<PreferencePair>& pairs) { return build_graph(pairs); }

}  // namespace

TEST_CASE("graph construction") {
  CHECK(from({}).num_nodes() == 0);
  const PreferenceGraph g = from({first_wins(1, 2), first_wins(2, 1), {3, 1, PreferenceLabel::Equal, Provenance::Derived}});
  CHECK(g.num_nodes() == 3);
  CHECK(g.num_edges() == 2);
  CHECK(g.has_edge(2, 1));
  CHECK_FALSE(g.has_edge(2, 3));
  // the first label of a repeated pair wins
  CHECK(g.edges().at({1, 2}).label == PreferenceLabel::FirstPreferred);
  PreferenceGraph h;
  CHECK_THROWS(h.add_edge(4, 4, PreferenceLabel::Equal, Provenance::Initial));
  // orientation is normalised to a < b
  h.add_edge(9, 5, PreferenceLabel::FirstPreferred, Provenance::Queried);
  CHECK(h.edges().at({5, 9}).label == PreferenceLabel::SecondPreferred);
  const auto dv = h.directed_view();
  REQUIRE(dv.count(9));
  CHECK(dv.at(9) == std::vector<int>{5});
}

TEST_CASE("594 distinct pairs over 538 rollouts") {
  std::vector<PreferencePair> pairs;
  for (int i = 0; i + 1 < 538; ++i) pairs.push_back(first_wins(i, i + 1));  // 537 edges
  for (int i = 0; i < 57; ++i) pairs.push_back(first_wins(i, i + 100));
  pairs.push_back(first_wins(3, 4));  // duplicate
  const PreferenceGraph g = from(pairs);
  CHECK(g.num_nodes() == 538);
  CHECK(g.num_edges() == 594);
}

TEST_CASE("small clustering and efficiency cases") {
  const PreferenceGraph triangle = from({first_wins(0, 1), first_wins(1, 2), first_wins(0, 2)});
  CHECK(clustering_coefficient(triangle) == 1.0);
  const PreferenceGraph path = from({first_wins(0, 1), first_wins(1, 2)});
  CHECK(clustering_coefficient(path) == 0.0);
  CHECK(global_efficiency(path) == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
  PreferenceGraph k4;
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j) k4.add_edge(i, j, PreferenceLabel::Equal, Provenance::Initial);
  CHECK(global_efficiency(k4) == 1.0);
  CHECK(clustering_coefficient(PreferenceGraph{}) == 0.0);
  CHECK(global_efficiency(PreferenceGraph{}) == 0.0);
}

TEST_CASE("efficiency ignores everything outside the largest component") {
  std::vector<PreferencePair> pairs = {first_wins(0, 1), first_wins(1, 2)};
  pairs.push_back(first_wins(10, 11));
  CHECK(global_efficiency(from(pairs)) == doctest::Approx(5.0 / 6.0));
}

TEST_CASE("largest component") {
  CHECK(largest_connected_component(PreferenceGraph{}).num_nodes() == 0);
  std::vector<PreferencePair> five = {first_wins(0, 1), first_wins(1, 2), first_wins(2, 3), first_wins(3, 4)};
  std::vector<PreferencePair> three = {first_wins(7, 8), first_wins(8, 9)};
  auto both = five;
  both.insert(both.end(), three.begin(), three.end());
  const PreferenceGraph lcc = largest_connected_component(from(both));
  CHECK(lcc.nodes() == std::set<int>{0, 1, 2, 3, 4});
  CHECK(lcc.num_edges() == 4);
  const PreferenceGraph whole = from(five);
  CHECK(largest_connected_component(whole).nodes() == whole.nodes());
  // equal sizes: the component holding the smallest id
  const PreferenceGraph tie = from({first_wins(5, 6), first_wins(1, 2)});
  CHECK(largest_connected_component(tie).nodes() == std::set<int>{1, 2});
}

TEST_CASE("chain counts") {
  CHECK(count_chains(from({first_wins(0, 1)})).count == 1);
  const PreferenceGraph path = from({first_wins(0, 1), first_wins(1, 2)});
  CHECK(count_chains(path).count == 3);
  CHECK(count_chains(path, ChainCountMode::MaximalPaths).count == 1);
  CHECK(count_chains(path, ChainCountMode::PathComponents).count == 1);
  // diamond: a > b, a > c, b > d, c > d
  const PreferenceGraph diamond = from({first_wins(0, 1), first_wins(0, 2), first_wins(1, 3), first_wins(2, 3)});
  CHECK(count_chains(diamond).count == 5);
  CHECK(count_chains(diamond, ChainCountMode::MaximalPaths).count == 2);
  CHECK(count_chains(diamond, ChainCountMode::PathComponents).count == 0);
  // equal edges carry no order
  CHECK(count_chains(from({{0, 1, PreferenceLabel::Equal, Provenance::Initial}})).count == 0);

  const PreferenceGraph cycle = from({first_wins(0, 1), first_wins(1, 2), first_wins(2, 0)});
  const ChainCount c = count_chains(cycle);
  CHECK(c.cyclic);
  CHECK(c.count == 6);
  CHECK(count_chains(cycle, ChainCountMode::MaximalPaths).count == -1);
  CHECK_FALSE(count_chains(path).cyclic);
  for (ChainCountMode m : {ChainCountMode::TransitiveClosure, ChainCountMode::MaximalPaths, ChainCountMode::PathComponents})
    CHECK(parse_chain_count_mode(to_string(m)) == m);
  CHECK_THROWS(parse_chain_count_mode("longest"));
}

TEST_CASE("metrics agree with brute force on random graphs") {
  Rng gen(14);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 2 + static_cast<int>(uniform_index(gen, 29));
    const double p = 0.05 + 0.4 * std::uniform_real_distribution<double>(0, 1)(gen);
    const PreferenceGraph g = oracles::random_graph(n, p, trial % 2 == 0, gen);
    CHECK(std::abs(clustering_coefficient(g) - oracles::clustering_by_triples(g)) < 1e-9);
    CHECK(std::abs(global_efficiency(g) - oracles::efficiency_by_floyd_warshall(g)) < 1e-9);
    CHECK(largest_connected_component(g).nodes() == oracles::largest_component_by_union_find(g));
    CHECK(count_chains(g).count == oracles::closure_pairs_by_warshall(g));
  }
}

TEST_CASE("metrics bundle and exports") {
  const PreferenceGraph g = from({first_wins(0, 1), first_wins(1, 2), {2, 3, PreferenceLabel::Equal, Provenance::Derived}});
  const GraphMetrics m = graph_metrics(g);
  CHECK(m.nodes == 4);
  CHECK(m.edges == 3);
  CHECK(m.lcc_nodes == 4);
  CHECK(m.chains == 3);
  CHECK(m.clustering == clustering_coefficient(g));

  std::ostringstream adj, nodes, csv;
  write_adjacency_list(g, adj);
  CHECK(adj.str().find("1: 0 2") != std::string::npos);
  write_node_table(g, {{0, 5.0}, {1, 3.0}}, nodes);
  CHECK(nodes.str().rfind("id,return,provenance", 0) == 0);
  CHECK(nodes.str().find("3,,derived") != std::string::npos);
  write_metrics_csv({{"run", m}}, csv);
  CHECK(csv.str().find("run,4,3,") != std::string::npos);
}
