#include "impec/dataset_graph.hpp"

#include <algorithm>
#include <deque>
#include <functional>
#include <ostream>
#include <stdexcept>

namespace impec {

void PreferenceGraph::add_node(int id) {
  nodes_.insert(id);
  adj_[id];
}

bool PreferenceGraph::add_edge(int first, int second, PreferenceLabel label, Provenance provenance) {
  if (first == second) throw std::invalid_argument("self-loops are not allowed");
  add_node(first);
  add_node(second);
  const int a = std::min(first, second), b = std::max(first, second);
  if (edges_.count({a, b})) return false;
  edges_[{a, b}] = {a, b, first == a ? label : flip(label), provenance};
  adj_[a].insert(b);
  adj_[b].insert(a);
  return true;
}

const std::set<int>& PreferenceGraph::neighbours(int id) const {
  static const std::set<int> none;
  auto it = adj_.find(id);
  return it == adj_.end() ? none : it->second;
}

bool PreferenceGraph::has_edge(int a, int b) const { return edges_.count({std::min(a, b), std::max(a, b)}) > 0; }

std::map<int, std::vector<int>> PreferenceGraph::directed_view() const {
  std::map<int, std::vector<int>> out;
  for (int n : nodes_) out[n];
  for (const auto& [key, e] : edges_) {
    if (e.label == PreferenceLabel::FirstPreferred) out[e.a].push_back(e.b);
    else if (e.label == PreferenceLabel::SecondPreferred) out[e.b].push_back(e.a);
  }
  return out;
}

PreferenceGraph PreferenceGraph::induced(const std::set<int>& keep) const {
  PreferenceGraph g;
  for (int n : keep)
    if (nodes_.count(n)) g.add_node(n);
  for (const auto& [key, e] : edges_)
    if (keep.count(e.a) && keep.count(e.b)) g.add_edge(e.a, e.b, e.label, e.provenance);
  return g;
}

PreferenceGraph build_graph(const std::vector<PreferencePair>& pairs) {
  PreferenceGraph g;
  for (const auto& p : pairs) g.add_edge(p.first, p.second, p.label, p.provenance);
  return g;
}

double clustering_coefficient(const PreferenceGraph& g) {
  if (g.num_nodes() == 0) return 0.0;
  double total = 0.0;
  for (int v : g.nodes()) {
    const auto& nb = g.neighbours(v);
    if (nb.size() < 2) continue;
    std::vector<int> list(nb.begin(), nb.end());
    long links = 0;
    for (std::size_t i = 0; i < list.size(); ++i)
      for (std::size_t j = i + 1; j < list.size(); ++j)
        if (g.has_edge(list[i], list[j])) ++links;
    const double k = static_cast<double>(list.size());
    total += 2.0 * links / (k * (k - 1));
  }
  return total / static_cast<double>(g.num_nodes());
}

namespace {

std::vector<std::set<int>> components(const PreferenceGraph& g) {
  std::vector<std::set<int>> out;
  std::set<int> seen;
  for (int start : g.nodes()) {
    if (seen.count(start)) continue;
    std::set<int> comp;
    std::deque<int> queue{start};
    seen.insert(start);
    while (!queue.empty()) {
      const int v = queue.front();
      queue.pop_front();
      comp.insert(v);
      for (int w : g.neighbours(v))
        if (seen.insert(w).second) queue.push_back(w);
    }
    out.push_back(std::move(comp));
  }
  return out;
}

}  // namespace

PreferenceGraph largest_connected_component(const PreferenceGraph& g) {
  const auto comps = components(g);
  if (comps.empty()) return {};
  // components come out ordered by their smallest node, so the first maximum wins ties
  const std::set<int>* best = &comps.front();
  for (const auto& c : comps)
    if (c.size() > best->size()) best = &c;
  return g.induced(*best);
}

double global_efficiency(const PreferenceGraph& graph) {
  const PreferenceGraph g = largest_connected_component(graph);
  const std::size_t n = g.num_nodes();
  if (n < 2) return 0.0;
  double total = 0.0;
  for (int src : g.nodes()) {
    std::map<int, int> dist{{src, 0}};
    std::deque<int> queue{src};
    while (!queue.empty()) {
      const int v = queue.front();
      queue.pop_front();
      for (int w : g.neighbours(v))
        if (!dist.count(w)) {
          dist[w] = dist[v] + 1;
          total += 1.0 / dist[w];
          queue.push_back(w);
        }
    }
  }
  return total / (static_cast<double>(n) * static_cast<double>(n - 1));
}

std::string to_string(ChainCountMode mode) {
  switch (mode) {
    case ChainCountMode::TransitiveClosure: return "closure";
    case ChainCountMode::MaximalPaths: return "maximal_paths";
    case ChainCountMode::PathComponents: return "path_components";
  }
  return "?";
}

ChainCountMode parse_chain_count_mode(const std::string& text) {
  if (text == "closure") return ChainCountMode::TransitiveClosure;
  if (text == "maximal_paths") return ChainCountMode::MaximalPaths;
  if (text == "path_components") return ChainCountMode::PathComponents;
  throw ConfigError("unknown chain count mode '" + text + "'");
}

namespace {

bool has_cycle(const std::map<int, std::vector<int>>& dag) {
  std::map<int, int> colour;  // 0 white, 1 on stack, 2 done
  for (const auto& [start, _] : dag) {
    if (colour[start]) continue;
    std::vector<std::pair<int, std::size_t>> stack{{start, 0}};
    colour[start] = 1;
    while (!stack.empty()) {
      auto& [v, i] = stack.back();
      const auto& out = dag.at(v);
      if (i < out.size()) {
        const int w = out[i++];
        if (colour[w] == 1) return true;
        if (colour[w] == 0) {
          colour[w] = 1;
          stack.push_back({w, 0});
        }
      } else {
        colour[v] = 2;
        stack.pop_back();
      }
    }
  }
  return false;
}

}  // namespace

ChainCount count_chains(const PreferenceGraph& g, ChainCountMode mode) {
  ChainCount out;
  const auto dag = g.directed_view();
  out.cyclic = has_cycle(dag);
  switch (mode) {
    case ChainCountMode::TransitiveClosure: {
      for (const auto& [src, _] : dag) {
        std::set<int> seen{src};
        std::deque<int> queue{src};
        while (!queue.empty()) {
          const int v = queue.front();
          queue.pop_front();
          for (int w : dag.at(v))
            if (seen.insert(w).second) queue.push_back(w);
        }
        out.count += static_cast<long long>(seen.size()) - 1;
      }
      break;
    }
    case ChainCountMode::MaximalPaths: {
      if (out.cyclic) {
        out.count = -1;
        break;
      }
      std::map<int, int> indegree;
      for (const auto& [v, outs] : dag)
        for (int w : outs) ++indegree[w];
      std::map<int, long long> memo;  // paths from v to any sink
      std::function<long long(int)> paths = [&](int v) -> long long {
        auto it = memo.find(v);
        if (it != memo.end()) return it->second;
        const auto& outs = dag.at(v);
        long long total = outs.empty() ? 1 : 0;
        for (int w : outs) total += paths(w);
        return memo[v] = total;
      };
      for (const auto& [v, outs] : dag)
        if (indegree[v] == 0 && !outs.empty()) out.count += paths(v);
      break;
    }
    case ChainCountMode::PathComponents: {
      for (const auto& comp : components(g)) {
        if (comp.size() < 2) continue;
        std::size_t edges = 0;
        bool path_like = true;
        for (int v : comp) {
          const auto deg = g.neighbours(v).size();
          if (deg > 2) path_like = false;
          edges += deg;
        }
        if (path_like && edges / 2 == comp.size() - 1) ++out.count;
      }
      break;
    }
  }
  return out;
}

GraphMetrics graph_metrics(const PreferenceGraph& g, ChainCountMode mode) {
  GraphMetrics m;
  m.nodes = g.num_nodes();
  m.edges = g.num_edges();
  m.clustering = clustering_coefficient(g);
  m.efficiency = global_efficiency(g);
  m.lcc_nodes = largest_connected_component(g).num_nodes();
  const ChainCount c = count_chains(g, mode);
  m.chains = c.count;
  m.cyclic = c.cyclic;
  return m;
}

void write_adjacency_list(const PreferenceGraph& g, std::ostream& out) {
  for (int v : g.nodes()) {
    out << v << ':';
    for (int w : g.neighbours(v)) out << ' ' << w;
    out << '\n';
  }
}

void write_node_table(const PreferenceGraph& g, const std::map<int, double>& returns, std::ostream& out) {
  std::map<int, Provenance> prov;
  for (const auto& [key, e] : g.edges())
    for (int v : {e.a, e.b}) {
      auto it = prov.find(v);
      if (it == prov.end() || static_cast<int>(e.provenance) < static_cast<int>(it->second)) prov[v] = e.provenance;
    }
  out << "id,return,provenance\n";
  for (int v : g.nodes()) {
    auto r = returns.find(v);
    out << v << ',' << (r == returns.end() ? std::string("") : format_double(r->second)) << ','
        << (prov.count(v) ? to_string(prov[v]) : std::string("")) << '\n';
  }
}

void write_metrics_csv(const std::vector<std::pair<std::string, GraphMetrics>>& rows, std::ostream& out) {
  out << "name,nodes,edges,clustering,efficiency,lcc_nodes,chains,cyclic\n";
  for (const auto& [name, m] : rows)
    out << name << ',' << m.nodes << ',' << m.edges << ',' << format_double(m.clustering) << ','
        << format_double(m.efficiency) << ',' << m.lcc_nodes << ',' << m.chains << ',' << (m.cyclic ? 1 : 0) << '\n';
}

}  // namespace impec
