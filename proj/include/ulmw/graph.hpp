#pragma once

#include <algorithm>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ulmw/rng.hpp"

namespace ulmw {

// Finite directed graph with ordered (ascending) out-neighbor lists.
// Self-loops are permitted; parallel edges are rejected at construction.
struct Graph {
  int m = 0;
  std::vector<std::vector<int>> out;

  bool has_edge(int u, int v) const {
    const auto& nb = out[u];
    return std::binary_search(nb.begin(), nb.end(), v);
  }

  int edge_count() const {
    int e = 0;
    for (const auto& nb : out) e += static_cast<int>(nb.size());
    return e;
  }

  bool has_loops() const {
    for (int v = 0; v < m; ++v)
      if (has_edge(v, v)) return true;
    return false;
  }
};

inline Graph make_graph(int m, const std::vector<std::pair<int, int>>& edges) {
  if (m <= 0) throw std::invalid_argument("graph: vertex count must be positive");
  Graph g;
  g.m = m;
  g.out.assign(m, {});
  for (const auto& [u, v] : edges) {
    if (u < 0 || u >= m || v < 0 || v >= m)
      throw std::invalid_argument("graph: edge endpoint out of range");
    g.out[u].push_back(v);
  }
  for (auto& nb : g.out) {
    std::sort(nb.begin(), nb.end());
    if (std::adjacent_find(nb.begin(), nb.end()) != nb.end())
      throw std::invalid_argument("graph: parallel edges are not allowed");
  }
  return g;
}

inline Graph complete_graph(int m, bool with_loops) {
  if (m < 2) throw std::invalid_argument("complete_graph: m must be at least 2");
  std::vector<std::pair<int, int>> edges;
  for (int u = 0; u < m; ++u)
    for (int v = 0; v < m; ++v)
      if (u != v || with_loops) edges.emplace_back(u, v);
  return make_graph(m, edges);
}

inline Graph cycle_graph(int m) {
  if (m < 3) throw std::invalid_argument("cycle_graph: m must be at least 3");
  std::vector<std::pair<int, int>> edges;
  for (int k = 0; k < m; ++k) {
    int next = (k + 1) % m;
    int prev = (k + m - 1) % m;
    edges.emplace_back(k, next);
    if (prev != next) edges.emplace_back(k, prev);
  }
  return make_graph(m, edges);
}

// Bidirectional path 0 - 1 - ... - (m-1), optionally with a loop at each
// vertex (the shape required by the excited-walk preset).
inline Graph path_graph(int m, bool with_loops = false) {
  if (m < 2) throw std::invalid_argument("path_graph: m must be at least 2");
  std::vector<std::pair<int, int>> edges;
  for (int k = 0; k + 1 < m; ++k) {
    edges.emplace_back(k, k + 1);
    edges.emplace_back(k + 1, k);
  }
  if (with_loops)
    for (int k = 0; k < m; ++k) edges.emplace_back(k, k);
  return make_graph(m, edges);
}

// Strongly connected components in reverse topological order (Tarjan,
// iterative). Each component lists its vertices in ascending order.
inline std::vector<std::vector<int>> strongly_connected_components(
    const std::vector<std::vector<int>>& adj) {
  int n = static_cast<int>(adj.size());
  std::vector<int> index(n, -1), low(n, 0), on_stack(n, 0), stack;
  std::vector<std::vector<int>> comps;
  int next_index = 0;
  // Explicit DFS stack of (vertex, next-edge position).
  std::vector<std::pair<int, std::size_t>> work;
  for (int s = 0; s < n; ++s) {
    if (index[s] != -1) continue;
    work.emplace_back(s, 0);
    while (!work.empty()) {
      auto& [v, pos] = work.back();
      if (pos == 0) {
        index[v] = low[v] = next_index++;
        stack.push_back(v);
        on_stack[v] = 1;
      }
      if (pos < adj[v].size()) {
        int w = adj[v][pos++];
        if (index[w] == -1) {
          work.emplace_back(w, 0);
        } else if (on_stack[w]) {
          low[v] = std::min(low[v], index[w]);
        }
      } else {
        if (low[v] == index[v]) {
          std::vector<int> comp;
          while (true) {
            int w = stack.back();
            stack.pop_back();
            on_stack[w] = 0;
            comp.push_back(w);
            if (w == v) break;
          }
          std::sort(comp.begin(), comp.end());
          comps.push_back(std::move(comp));
        }
        int finished = v;
        work.pop_back();
        if (!work.empty())
          low[work.back().first] = std::min(low[work.back().first], low[finished]);
      }
    }
  }
  return comps;
}

inline std::vector<std::vector<int>> strongly_connected_components(const Graph& g) {
  return strongly_connected_components(g.out);
}

inline bool is_strongly_connected(const Graph& g) {
  return strongly_connected_components(g).size() == 1;
}

// Random strongly connected graph: a random Hamiltonian cycle plus extra
// directed edges included independently with probability edge_prob.
inline Graph random_strongly_connected(int m, double edge_prob, Rng& rng,
                                       bool allow_loops = false) {
  if (m < 2) throw std::invalid_argument("random graph: m must be at least 2");
  std::vector<int> perm(m);
  for (int i = 0; i < m; ++i) perm[i] = i;
  for (int i = m - 1; i > 0; --i)
    std::swap(perm[i], perm[rng.next_below(static_cast<std::uint64_t>(i) + 1)]);
  std::set<std::pair<int, int>> edges;
  for (int i = 0; i < m; ++i) edges.emplace(perm[i], perm[(i + 1) % m]);
  for (int u = 0; u < m; ++u)
    for (int v = 0; v < m; ++v) {
      if (u == v && !allow_loops) continue;
      if (rng.next_double() < edge_prob) edges.emplace(u, v);
    }
  return make_graph(m, {edges.begin(), edges.end()});
}

}  // namespace ulmw
