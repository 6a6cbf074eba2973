#pragma once

#include <cstdint>
#include <stdexcept>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ulmw/local_chain.hpp"

namespace ulmw {

// A configuration maps each vertex to its last-exit target; -1 marks an
// unassigned vertex (used for tree roots).
using Config = std::vector<int>;

constexpr int kEnumerationMaxVertices = 8;

struct UnicycleState {
  int x = -1;
  Config rho;
  std::vector<int> cycle;  // canonical: starts at the minimal cycle vertex
};

struct WeightedFamily {
  std::vector<std::pair<Config, double>> items;
  double Z = 0.0;
};

namespace detail {

// Finds all directed cycles of a total functional graph rho (every vertex
// assigned). Returns the list of cycles, each starting at its minimal vertex.
inline std::vector<std::vector<int>> functional_cycles(const Config& rho) {
  int m = static_cast<int>(rho.size());
  std::vector<int> color(m, 0);  // 0 new, 1 on current path, 2 finished
  std::vector<std::vector<int>> cycles;
  std::vector<int> path;
  for (int s = 0; s < m; ++s) {
    if (color[s] != 0) continue;
    path.clear();
    int v = s;
    while (color[v] == 0) {
      color[v] = 1;
      path.push_back(v);
      v = rho[v];
    }
    if (color[v] == 1) {
      // Found a new cycle: the tail of `path` starting at v.
      std::size_t start = 0;
      while (path[start] != v) ++start;
      std::vector<int> cyc(path.begin() + start, path.end());
      int min_pos = 0;
      for (std::size_t i = 1; i < cyc.size(); ++i)
        if (cyc[i] < cyc[min_pos]) min_pos = static_cast<int>(i);
      std::rotate(cyc.begin(), cyc.begin() + min_pos, cyc.end());
      cycles.push_back(std::move(cyc));
    }
    for (int u : path) color[u] = 2;
  }
  return cycles;
}

// True iff the partial configuration (roots marked -1) has no directed cycle,
// i.e. every assigned vertex flows into a root.
inline bool flows_into_roots(const Config& rho) {
  int m = static_cast<int>(rho.size());
  std::vector<int> color(m, 0);
  for (int s = 0; s < m; ++s) {
    if (color[s] != 0) continue;
    std::vector<int> path;
    int v = s;
    while (v != -1 && color[v] == 0 && rho[v] != -1) {
      color[v] = 1;
      path.push_back(v);
      v = rho[v];
    }
    if (v != -1 && color[v] == 1) return false;  // hit the current path: cycle
    for (int u : path) color[u] = 2;
  }
  return true;
}

inline void check_enumeration_guard(int m, const char* what) {
  if (m > kEnumerationMaxVertices) {
    std::string msg = std::string(what) + ": enumeration guarded at m <= " +
                      std::to_string(kEnumerationMaxVertices);
    throw std::length_error(msg);
  }
}

}  // namespace detail

// Exhaustive enumeration of spanning trees oriented toward `root`
// (each non-root vertex carries exactly one out-arrow; rho[root] = -1).
inline std::vector<Config> enumerate_rooted_trees(const Graph& g, int root) {
  detail::check_enumeration_guard(g.m, "enumerate_rooted_trees");
  if (root < 0 || root >= g.m) throw std::invalid_argument("enumerate_rooted_trees: bad root");
  std::vector<Config> trees;
  Config rho(g.m, -1);
  std::vector<int> idx(g.m, 0);
  while (true) {
    for (int v = 0; v < g.m; ++v)
      if (v != root) rho[v] = g.out[v][idx[v]];
    if (detail::flows_into_roots(rho)) trees.push_back(rho);
    int v = g.m - 1;
    for (; v >= 0; --v) {
      if (v == root) continue;
      if (++idx[v] < static_cast<int>(g.out[v].size())) break;
      idx[v] = 0;
    }
    if (v < 0) break;
  }
  return trees;
}

// Index of all recurrent states (x, rho): rho a spanning unicycle over the
// given exit sets, x on its unique cycle. States are ordered by the
// lexicographic rank of rho (per-vertex exit-set position, vertex 0 most
// significant), then by ascending particle vertex.
struct UnicycleIndex {
  Graph g;
  std::vector<std::vector<int>> S;  // exit sets used for enumeration
  std::vector<UnicycleState> states;
  std::vector<int> zeta;  // zeta[i] = index of (rho(x), rho)
  std::vector<std::uint64_t> stride;
  std::unordered_map<std::uint64_t, int> index_of;

  int size() const { return static_cast<int>(states.size()); }

  std::uint64_t config_code(const Config& rho) const {
    std::uint64_t code = 0;
    for (int v = 0; v < g.m; ++v) {
      const auto& sv = S[v];
      int pos = -1;
      for (std::size_t i = 0; i < sv.size(); ++i)
        if (sv[i] == rho[v]) {
          pos = static_cast<int>(i);
          break;
        }
      if (pos < 0) throw std::invalid_argument("config_code: target outside exit set");
      code += static_cast<std::uint64_t>(pos) * stride[v];
    }
    return code;
  }

  // Index of (x, rho); -1 when the pair is not a recurrent state.
  int find(int x, const Config& rho) const {
    auto it = index_of.find(config_code(rho) * static_cast<std::uint64_t>(g.m + 1) + x);
    return it == index_of.end() ? -1 : it->second;
  }
};

inline UnicycleIndex enumerate_unicycles(const Graph& g,
                                         const std::vector<std::vector<int>>& exit_sets) {
  detail::check_enumeration_guard(g.m, "enumerate_unicycles");
  UnicycleIndex idx;
  idx.g = g;
  idx.S = exit_sets;
  idx.stride.assign(g.m, 1);
  for (int v = g.m - 2; v >= 0; --v)
    idx.stride[v] = idx.stride[v + 1] * exit_sets[v + 1].size();
  for (int v = 0; v < g.m; ++v)
    if (exit_sets[v].empty())
      throw std::invalid_argument("enumerate_unicycles: empty exit set");

  Config rho(g.m);
  std::vector<int> pos(g.m, 0);
  while (true) {
    for (int v = 0; v < g.m; ++v) rho[v] = exit_sets[v][pos[v]];
    auto cycles = detail::functional_cycles(rho);
    if (cycles.size() == 1) {
      std::uint64_t code = idx.config_code(rho);
      std::vector<int> particles = cycles[0];
      std::sort(particles.begin(), particles.end());
      for (int x : particles) {
        UnicycleState st;
        st.x = x;
        st.rho = rho;
        st.cycle = cycles[0];
        idx.index_of[code * static_cast<std::uint64_t>(g.m + 1) + x] = idx.size();
        idx.states.push_back(std::move(st));
      }
    }
    int v = g.m - 1;
    for (; v >= 0; --v) {
      if (++pos[v] < static_cast<int>(exit_sets[v].size())) break;
      pos[v] = 0;
    }
    if (v < 0) break;
  }

  idx.zeta.resize(idx.size());
  for (int i = 0; i < idx.size(); ++i) {
    const auto& st = idx.states[i];
    int target = idx.find(st.rho[st.x], st.rho);
    if (target < 0) throw std::logic_error("enumerate_unicycles: zeta target missing");
    idx.zeta[i] = target;
  }
  return idx;
}

inline UnicycleIndex enumerate_unicycles(const Graph& g) {
  return enumerate_unicycles(g, g.out);
}

// Product of stationary-row entries along the assigned arrows of a
// configuration (tree or unicycle); -1 entries (roots) are skipped.
inline double weight_psi(const Config& rho, const QSystem& q) {
  double w = 1.0;
  for (std::size_t y = 0; y < rho.size(); ++y) {
    if (rho[y] < 0) continue;
    double e = q.Q(static_cast<int>(y), rho[y]);
    if (e == 0.0)
      throw std::invalid_argument("weight_psi: arrow target outside the exit set support");
    w *= e;
  }
  return w;
}

// Exact rooted-forest count tau(G, roots): determinant of the out-degree
// Laplacian with the root rows/columns deleted (self-loops contribute
// nothing). Bareiss fraction-free elimination over 128-bit intermediates.
inline long long forest_count(const Graph& g, const std::vector<int>& roots) {
  if (roots.empty()) throw std::invalid_argument("forest_count: root set must be nonempty");
  std::vector<char> is_root(g.m, 0);
  for (int r : roots) {
    if (r < 0 || r >= g.m) throw std::invalid_argument("forest_count: bad root");
    is_root[r] = 1;
  }
  std::vector<int> keep;
  for (int v = 0; v < g.m; ++v)
    if (!is_root[v]) keep.push_back(v);
  int n = static_cast<int>(keep.size());
  if (n == 0) return 1;  // empty forest

  std::vector<std::vector<long long>> a(n, std::vector<long long>(n, 0));
  for (int i = 0; i < n; ++i) {
    int v = keep[i];
    for (int w : g.out[v]) {
      if (w == v) continue;
      a[i][i] += 1;
      for (int j = 0; j < n; ++j)
        if (keep[j] == w) a[i][j] -= 1;
    }
  }

  auto checked = [](__int128 x) -> long long {
    if (x > INT64_MAX || x < INT64_MIN)
      throw std::overflow_error("forest_count: determinant overflow");
    return static_cast<long long>(x);
  };
  long long sign = 1, prev = 1;
  for (int k = 0; k < n - 1; ++k) {
    if (a[k][k] == 0) {
      int swap_row = -1;
      for (int i = k + 1; i < n; ++i)
        if (a[i][k] != 0) {
          swap_row = i;
          break;
        }
      if (swap_row == -1) return 0;
      std::swap(a[k], a[swap_row]);
      sign = -sign;
    }
    for (int i = k + 1; i < n; ++i)
      for (int j = k + 1; j < n; ++j) {
        __int128 num = static_cast<__int128>(a[i][j]) * a[k][k] -
                       static_cast<__int128>(a[i][k]) * a[k][j];
        a[i][j] = checked(num / prev);
      }
    prev = a[k][k];
  }
  return sign * a[n - 1][n - 1];
}

// All rooted spanning trees with their psi weights; Z is the theorem's
// normalizer (sum over roots of tree weights).
inline WeightedFamily tree_family(const Graph& g, const QSystem& q) {
  WeightedFamily fam;
  for (int root = 0; root < g.m; ++root)
    for (auto& tree : enumerate_rooted_trees(g, root)) {
      double w = weight_psi(tree, q);
      fam.Z += w;
      fam.items.emplace_back(std::move(tree), w);
    }
  return fam;
}

// Markov-chain-tree-theorem stationary vector: pi(x) proportional to the
// total weight of trees rooted at x.
inline Eigen::VectorXd markov_tree_pi(const Graph& g, const QSystem& q) {
  Eigen::VectorXd pi = Eigen::VectorXd::Zero(g.m);
  for (int root = 0; root < g.m; ++root)
    for (const auto& tree : enumerate_rooted_trees(g, root)) pi(root) += weight_psi(tree, q);
  double z = pi.sum();
  if (!(z > 0.0)) throw std::runtime_error("markov_tree_pi: zero total tree weight");
  return pi / z;
}

inline std::vector<int> config_diff(const Config& rho, const Config& eta) {
  if (rho.size() != eta.size())
    throw std::invalid_argument("config_diff: configurations have different domains");
  std::vector<int> diff;
  for (std::size_t v = 0; v < rho.size(); ++v)
    if (rho[v] != eta[v]) diff.push_back(static_cast<int>(v));
  return diff;
}

}  // namespace ulmw
