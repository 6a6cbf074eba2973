#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ulmw/graph.hpp"

namespace ulmw {

// Per-vertex local chains: exit set S_x, row-stochastic matrix M_x over
// S_x x S_x, and the initial exit L_x0 (a member of S_x).
struct LocalChainSpec {
  std::vector<std::vector<int>> S;
  std::vector<Eigen::MatrixXd> M;
  std::vector<int> init;

  int exit_index(int x, int v) const {
    const auto& sx = S[x];
    for (std::size_t i = 0; i < sx.size(); ++i)
      if (sx[i] == v) return static_cast<int>(i);
    return -1;
  }
};

struct StationaryRow {
  int x = -1;
  Eigen::VectorXd q;
};

struct QSystem {
  Eigen::MatrixXd Q;   // m x m, row x = q_x zero-padded to V
  Eigen::VectorXd pi;  // stationary row of Q

  double q_of(int y, int z) const { return Q(y, z); }
};

struct Diagnostics {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
  std::string joined() const {
    std::string s;
    for (const auto& v : violations) {
      if (!s.empty()) s += "; ";
      s += v;
    }
    return s;
  }
};

enum class ValidateMode { strict, simulation };

namespace detail {

inline std::vector<std::vector<int>> support_digraph(const Eigen::MatrixXd& M) {
  int n = static_cast<int>(M.rows());
  std::vector<std::vector<int>> adj(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (M(i, j) > 0.0) adj[i].push_back(j);
  return adj;
}

inline bool is_irreducible_matrix(const Eigen::MatrixXd& M) {
  return strongly_connected_components(support_digraph(M)).size() == 1;
}

// Period of an irreducible chain: gcd over edges (u,v) of dist(u)+1-dist(v)
// for any BFS labeling dist from a fixed root.
inline int chain_period(const Eigen::MatrixXd& M) {
  auto adj = support_digraph(M);
  int n = static_cast<int>(adj.size());
  std::vector<int> dist(n, -1);
  std::vector<int> queue{0};
  dist[0] = 0;
  for (std::size_t h = 0; h < queue.size(); ++h) {
    int u = queue[h];
    for (int v : adj[u])
      if (dist[v] == -1) {
        dist[v] = dist[u] + 1;
        queue.push_back(v);
      }
  }
  long long g = 0;
  for (int u = 0; u < n; ++u)
    for (int v : adj[u]) g = std::gcd(g, static_cast<long long>(dist[u]) + 1 - dist[v]);
  return static_cast<int>(g < 0 ? -g : g);
}

}  // namespace detail

// Stationary row of an irreducible row-stochastic matrix. Direct least-squares
// solve of [M^T - I; 1^T] q = [0; 1] for sizes up to 64; lazy power iteration
// (on (M+I)/2, which shares the stationary vector and is aperiodic) above.
inline Eigen::VectorXd stationary_row(const Eigen::MatrixXd& M) {
  int n = static_cast<int>(M.rows());
  if (n != M.cols() || n == 0)
    throw std::invalid_argument("stationary_row: matrix must be square and nonempty");
  if (!detail::is_irreducible_matrix(M))
    throw std::invalid_argument(
        "stationary_row: matrix is reducible, stationary distribution not unique");
  if (n == 1) return Eigen::VectorXd::Ones(1);
  if (n <= 64) {
    Eigen::MatrixXd A(n + 1, n);
    A.topRows(n) = M.transpose() - Eigen::MatrixXd::Identity(n, n);
    A.bottomRows(1).setOnes();
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n + 1);
    b(n) = 1.0;
    Eigen::VectorXd q = A.colPivHouseholderQr().solve(b);
    q = q.cwiseMax(0.0);
    q /= q.sum();
    return q;
  }
  Eigen::RowVectorXd v = Eigen::RowVectorXd::Constant(n, 1.0 / n);
  for (long iter = 0; iter < 1000000; ++iter) {
    Eigen::RowVectorXd w = 0.5 * (v + v * M);
    double delta = (w - v).cwiseAbs().sum();
    v = w;
    if (delta <= 1e-13) break;
  }
  Eigen::VectorXd q = v.transpose();
  q /= q.sum();
  return q;
}

inline Diagnostics validate(const Graph& g, const LocalChainSpec& spec, ValidateMode mode) {
  Diagnostics d;
  auto add = [&d](const std::string& s) { d.violations.push_back(s); };
  if (static_cast<int>(spec.S.size()) != g.m || static_cast<int>(spec.M.size()) != g.m ||
      static_cast<int>(spec.init.size()) != g.m) {
    add("structural: per-vertex arrays do not match the vertex count");
    return d;
  }
  for (int x = 0; x < g.m; ++x) {
    const auto& sx = spec.S[x];
    std::ostringstream tag;
    tag << "vertex " << x << ": ";
    if (sx.empty()) {
      add(tag.str() + "empty exit set");
      continue;
    }
    std::set<int> seen;
    bool shape_ok = true;
    for (int v : sx) {
      if (!seen.insert(v).second) {
        add(tag.str() + "duplicate exit target");
        shape_ok = false;
      }
      if (v < 0 || v >= g.m || !g.has_edge(x, v)) {
        add(tag.str() + "exit target is not an out-neighbor");
        shape_ok = false;
      }
    }
    int n = static_cast<int>(sx.size());
    if (spec.M[x].rows() != n || spec.M[x].cols() != n) {
      add(tag.str() + "local matrix shape does not match exit set");
      shape_ok = false;
    }
    if (spec.exit_index(x, spec.init[x]) < 0) add(tag.str() + "initial exit not in exit set");
    if (!shape_ok) continue;
    const Eigen::MatrixXd& Mx = spec.M[x];
    for (int i = 0; i < n; ++i) {
      double row_sum = 0.0;
      for (int j = 0; j < n; ++j) {
        double e = Mx(i, j);
        if (e < 0.0 || e > 1.0) add(tag.str() + "matrix entry outside [0,1]");
        row_sum += e;
      }
      if (std::abs(row_sum - 1.0) > 1e-12) add(tag.str() + "row does not sum to 1");
    }
    if (mode == ValidateMode::strict) {
      if (!detail::is_irreducible_matrix(Mx)) {
        add(tag.str() + "local chain not irreducible");
      } else if (detail::chain_period(Mx) != 1) {
        add(tag.str() + "local chain not aperiodic");
      }
    }
  }
  return d;
}

inline QSystem build_q_system(const Graph& g, const LocalChainSpec& spec) {
  if (!is_strongly_connected(g))
    throw std::invalid_argument("build_q_system: graph must be strongly connected");
  QSystem qs;
  qs.Q = Eigen::MatrixXd::Zero(g.m, g.m);
  for (int x = 0; x < g.m; ++x) {
    Eigen::VectorXd q = stationary_row(spec.M[x]);
    for (std::size_t i = 0; i < spec.S[x].size(); ++i) qs.Q(x, spec.S[x][i]) = q(i);
  }
  qs.pi = stationary_row(qs.Q);
  return qs;
}

inline Eigen::MatrixXd local_time_reversal(const Eigen::MatrixXd& M, const Eigen::VectorXd& q) {
  int n = static_cast<int>(M.rows());
  for (int i = 0; i < n; ++i)
    if (!(q(i) > 0.0))
      throw std::invalid_argument("local_time_reversal: stationary entry is not positive");
  Eigen::MatrixXd R(n, n);
  for (int z = 0; z < n; ++z)
    for (int x = 0; x < n; ++x) R(z, x) = M(x, z) * q(x) / q(z);
  return R;
}

inline bool is_locally_reversible(const LocalChainSpec& spec, double tol = 1e-10) {
  for (const auto& M : spec.M) {
    Eigen::VectorXd q = stationary_row(M);
    if ((local_time_reversal(M, q) - M).cwiseAbs().maxCoeff() > tol) return false;
  }
  return true;
}

struct LambdaWitness {
  bool ok = false;
  std::vector<Eigen::VectorXd> f;  // per-vertex left eigenvectors, max-norm 1
};

// True iff every local matrix has (left) eigenvalue lambda within tol.
// Witnesses are the corresponding left eigenvectors, found as the singular
// vector of M^T - lambda I at its smallest singular value.
inline LambdaWitness is_locally_lambda_uniform(const LocalChainSpec& spec, double lambda,
                                               double tol = 1e-9) {
  LambdaWitness w;
  w.f.resize(spec.M.size());
  for (std::size_t x = 0; x < spec.M.size(); ++x) {
    const Eigen::MatrixXd& M = spec.M[x];
    int n = static_cast<int>(M.rows());
    Eigen::MatrixXd A = M.transpose() - lambda * Eigen::MatrixXd::Identity(n, n);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
    double smin = svd.singularValues()(n - 1);
    double scale = std::max(1.0, svd.singularValues()(0));
    if (smin > tol * scale) return w;  // ok stays false
    Eigen::VectorXd f = svd.matrixV().col(n - 1);
    f /= f.cwiseAbs().maxCoeff();
    w.f[x] = f;
  }
  w.ok = true;
  return w;
}

inline LocalChainSpec preset_uniform(const Graph& g) {
  LocalChainSpec spec;
  spec.S = g.out;
  spec.M.reserve(g.m);
  spec.init.reserve(g.m);
  for (int x = 0; x < g.m; ++x) {
    int n = static_cast<int>(g.out[x].size());
    if (n == 0) throw std::invalid_argument("preset: vertex without out-neighbors");
    spec.M.push_back(Eigen::MatrixXd::Constant(n, n, 1.0 / n));
    spec.init.push_back(g.out[x][0]);
  }
  return spec;
}

namespace detail {

inline void require_two_exits_everywhere(const Graph& g, const char* name) {
  for (int x = 0; x < g.m; ++x)
    if (g.out[x].size() != 2 || g.has_edge(x, x)) {
      std::ostringstream os;
      os << name << " preset requires the degree structure of a cycle (two "
         << "loopless exits per vertex); vertex " << x << " does not conform";
      throw std::invalid_argument(os.str());
    }
}

}  // namespace detail

inline LocalChainSpec preset_rotor(const Graph& g) {
  detail::require_two_exits_everywhere(g, "rotor");
  LocalChainSpec spec;
  spec.S = g.out;
  Eigen::MatrixXd M(2, 2);
  M << 0, 1, 1, 0;
  spec.M.assign(g.m, M);
  for (int x = 0; x < g.m; ++x) spec.init.push_back(g.out[x][0]);
  return spec;
}

inline LocalChainSpec preset_p_walk(const Graph& g, double p) {
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("p_walk preset: p must be in [0,1]");
  detail::require_two_exits_everywhere(g, "p_walk");
  LocalChainSpec spec;
  spec.S = g.out;
  Eigen::MatrixXd M(2, 2);
  M << 1 - p, p, p, 1 - p;
  spec.M.assign(g.m, M);
  for (int x = 0; x < g.m; ++x) spec.init.push_back(g.out[x][0]);
  return spec;
}

// Excited walk on a loop-augmented line segment: biased first exit from the
// self-loop state, symmetric exits afterwards, initial exits pointing to the
// vertex itself. End vertices degenerate to a forced move.
inline LocalChainSpec preset_excited(const Graph& g, double eps) {
  if (eps <= 0.0 || eps >= 1.0)
    throw std::invalid_argument("excited preset: drift must be in (0,1)");
  for (int x = 0; x < g.m; ++x) {
    std::vector<int> want;
    if (x > 0) want.push_back(x - 1);
    want.push_back(x);
    if (x + 1 < g.m) want.push_back(x + 1);
    if (g.out[x] != want)
      throw std::invalid_argument(
          "excited preset requires a loop-augmented line segment");
  }
  LocalChainSpec spec;
  spec.S = g.out;
  for (int x = 0; x < g.m; ++x) {
    int n = static_cast<int>(g.out[x].size());
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
    int left = spec.exit_index(x, x - 1);
    int self = spec.exit_index(x, x);
    int right = spec.exit_index(x, x + 1);
    for (int row = 0; row < n; ++row) {
      bool from_self = (row == self);
      double to_right = from_self ? (1 + eps) / 2 : 0.5;
      double to_left = 1 - to_right;
      if (right < 0) {
        to_left = 1.0;
        to_right = 0.0;
      } else if (left < 0) {
        to_right = 1.0;
        to_left = 0.0;
      }
      if (left >= 0) M(row, left) = to_left;
      if (right >= 0) M(row, right) = to_right;
    }
    spec.M.push_back(M);
    spec.init.push_back(x);
  }
  return spec;
}

// Random strictly positive local chains over the full out-neighbor sets
// (test/CLI plumbing; entries bounded away from zero, rows normalized).
inline LocalChainSpec random_positive_spec(const Graph& g, Rng& rng) {
  LocalChainSpec spec;
  spec.S = g.out;
  for (int x = 0; x < g.m; ++x) {
    int n = static_cast<int>(g.out[x].size());
    if (n == 0) throw std::invalid_argument("random spec: vertex without out-neighbors");
    Eigen::MatrixXd M(n, n);
    for (int i = 0; i < n; ++i) {
      double row_sum = 0.0;
      for (int j = 0; j < n; ++j) {
        M(i, j) = 0.05 + rng.next_double();
        row_sum += M(i, j);
      }
      M.row(i) /= row_sum;
    }
    spec.M.push_back(M);
    spec.init.push_back(g.out[x][0]);
  }
  return spec;
}

}  // namespace ulmw
