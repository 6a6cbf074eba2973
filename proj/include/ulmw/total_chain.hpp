#pragma once

#include <cstdint>
#include <stdexcept>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ulmw/arbor.hpp"

namespace ulmw {

// Row-major sparse row-stochastic matrix; entries within a row are kept in
// ascending column order.
struct SparseMatrix {
  int n = 0;
  std::vector<std::vector<std::pair<int, double>>> rows;

  explicit SparseMatrix(int size = 0) : n(size), rows(size) {}

  void sort_rows() {
    for (auto& r : rows) std::sort(r.begin(), r.end());
  }

  double row_sum(int i) const {
    double s = 0.0;
    for (const auto& [c, v] : rows[i]) s += v;
    return s;
  }

  Eigen::MatrixXd to_dense() const {
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i)
      for (const auto& [c, v] : rows[i]) D(i, c) += v;
    return D;
  }

  std::vector<std::vector<int>> support() const {
    std::vector<std::vector<int>> adj(n);
    for (int i = 0; i < n; ++i)
      for (const auto& [c, v] : rows[i])
        if (v > 0.0) adj[i].push_back(c);
    return adj;
  }
};

// Left action: (v P)_j = sum_i v_i P(i,j).
inline Eigen::VectorXd left_multiply(const Eigen::VectorXd& v, const SparseMatrix& P) {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(P.n);
  for (int i = 0; i < P.n; ++i) {
    double vi = v(i);
    if (vi == 0.0) continue;
    for (const auto& [c, p] : P.rows[i]) w(c) += vi * p;
  }
  return w;
}

inline SparseMatrix sparse_product(const SparseMatrix& A, const SparseMatrix& B) {
  if (A.n != B.n) throw std::invalid_argument("sparse_product: size mismatch");
  SparseMatrix C(A.n);
  std::vector<double> acc(A.n, 0.0);
  std::vector<int> touched;
  for (int i = 0; i < A.n; ++i) {
    touched.clear();
    for (const auto& [k, a] : A.rows[i])
      for (const auto& [j, b] : B.rows[k]) {
        if (acc[j] == 0.0) touched.push_back(j);
        acc[j] += a * b;
      }
    std::sort(touched.begin(), touched.end());
    for (int j : touched) {
      C.rows[i].emplace_back(j, acc[j]);
      acc[j] = 0.0;
    }
  }
  return C;
}

inline SparseMatrix sparse_average(const SparseMatrix& A, const SparseMatrix& B) {
  if (A.n != B.n) throw std::invalid_argument("sparse_average: size mismatch");
  SparseMatrix C(A.n);
  std::vector<double> acc(A.n, 0.0);
  std::vector<int> touched;
  for (int i = 0; i < A.n; ++i) {
    touched.clear();
    for (const auto& [j, a] : A.rows[i]) {
      if (acc[j] == 0.0) touched.push_back(j);
      acc[j] += 0.5 * a;
    }
    for (const auto& [j, b] : B.rows[i]) {
      if (acc[j] == 0.0) touched.push_back(j);
      acc[j] += 0.5 * b;
    }
    std::sort(touched.begin(), touched.end());
    for (int j : touched) {
      C.rows[i].emplace_back(j, acc[j]);
      acc[j] = 0.0;
    }
  }
  return C;
}

namespace detail {

inline void check_spec_matches_index(const LocalChainSpec& spec, const UnicycleIndex& index) {
  if (spec.S != index.S)
    throw std::invalid_argument("total chain: exit sets of the spec and the index differ");
}

}  // namespace detail

// Total chain restricted to the recurrent states: from (x, rho), move to y
// with probability m_x(rho(x), y) and redirect the arrow at x to y.
inline SparseMatrix build_total_P(const Graph& g, const LocalChainSpec& spec,
                                  const UnicycleIndex& index) {
  (void)g;
  detail::check_spec_matches_index(spec, index);
  SparseMatrix P(index.size());
  Config eta;
  for (int i = 0; i < index.size(); ++i) {
    const auto& st = index.states[i];
    int x = st.x;
    int from = spec.exit_index(x, st.rho[x]);
    eta = st.rho;
    for (std::size_t yi = 0; yi < spec.S[x].size(); ++yi) {
      double p = spec.M[x](from, static_cast<int>(yi));
      if (p == 0.0) continue;
      int y = spec.S[x][yi];
      eta[x] = y;
      int j = index.find(y, eta);
      if (j < 0) throw std::logic_error("build_total_P: successor left the recurrent set");
      P.rows[i].emplace_back(j, p);
    }
    eta[x] = st.rho[x];
    std::sort(P.rows[i].begin(), P.rows[i].end());
  }
  return P;
}

// Brute-force chain on the full product space V x prod_x S_x (oracle only).
struct FullChain {
  int m = 0;
  std::vector<std::vector<int>> S;
  std::vector<std::uint64_t> stride;
  std::uint64_t config_count = 0;
  SparseMatrix P;

  int state_count() const { return P.n; }
  int state_id(int x, std::uint64_t code) const {
    return static_cast<int>(code * m + x);
  }
  int location(int state) const { return state % m; }
  Config config_of(int state) const {
    Config rho(m);
    std::uint64_t code = static_cast<std::uint64_t>(state) / m;
    for (int v = 0; v < m; ++v) {
      rho[v] = S[v][code / stride[v]];
      code %= stride[v];
    }
    return rho;
  }
};

constexpr std::uint64_t kFullChainGuard = 200000;

inline FullChain build_full_chain(const Graph& g, const LocalChainSpec& spec) {
  FullChain fc;
  fc.m = g.m;
  fc.S = spec.S;
  fc.stride.assign(g.m, 1);
  std::uint64_t prod = 1;
  for (int v = g.m - 1; v >= 0; --v) {
    fc.stride[v] = (v + 1 < g.m) ? fc.stride[v + 1] * spec.S[v + 1].size() : 1;
  }
  for (int v = 0; v < g.m; ++v) {
    if (spec.S[v].empty()) throw std::invalid_argument("build_full_chain: empty exit set");
    prod *= spec.S[v].size();
    if (prod * g.m > kFullChainGuard)
      throw std::length_error("build_full_chain: state space exceeds the 200000 guard");
  }
  fc.config_count = prod;
  std::uint64_t n_states = prod * g.m;
  fc.P = SparseMatrix(static_cast<int>(n_states));
  std::vector<int> pos(g.m, 0);
  for (std::uint64_t code = 0; code < prod; ++code) {
    // Decode per-vertex positions from the mixed-radix code.
    std::uint64_t c = code;
    for (int v = 0; v < g.m; ++v) {
      pos[v] = static_cast<int>(c / fc.stride[v]);
      c %= fc.stride[v];
    }
    for (int x = 0; x < g.m; ++x) {
      int state = fc.state_id(x, code);
      int from = pos[x];
      for (std::size_t yi = 0; yi < spec.S[x].size(); ++yi) {
        double p = spec.M[x](from, static_cast<int>(yi));
        if (p == 0.0) continue;
        int y = spec.S[x][yi];
        std::uint64_t code2 =
            code + (static_cast<std::uint64_t>(yi) - static_cast<std::uint64_t>(from)) *
                       fc.stride[x];
        fc.P.rows[state].emplace_back(fc.state_id(y, code2), p);
      }
      std::sort(fc.P.rows[state].begin(), fc.P.rows[state].end());
    }
  }
  return fc;
}

// Union of closed communicating classes of the support digraph, as a sorted
// list of state indices.
inline std::vector<int> recurrent_states(const SparseMatrix& P) {
  auto adj = P.support();
  auto comps = strongly_connected_components(adj);
  std::vector<int> comp_of(P.n, -1);
  for (std::size_t c = 0; c < comps.size(); ++c)
    for (int v : comps[c]) comp_of[v] = static_cast<int>(c);
  std::vector<char> closed(comps.size(), 1);
  for (int v = 0; v < P.n; ++v)
    for (int w : adj[v])
      if (comp_of[w] != comp_of[v]) closed[comp_of[v]] = 0;
  std::vector<int> rec;
  for (std::size_t c = 0; c < comps.size(); ++c)
    if (closed[c]) rec.insert(rec.end(), comps[c].begin(), comps[c].end());
  std::sort(rec.begin(), rec.end());
  return rec;
}

// Closed-form stationary distribution mu(x, rho) = (1/Z) prod_y q_y(rho(y)).
inline Eigen::VectorXd stationary_mu(const UnicycleIndex& index, const QSystem& q) {
  for (int v = 0; v < index.g.m; ++v)
    for (int target : index.S[v])
      if (!(q.Q(v, target) > 0.0))
        throw std::invalid_argument("stationary_mu: zero stationary entry on an exit");
  Eigen::VectorXd mu(index.size());
  for (int i = 0; i < index.size(); ++i) mu(i) = weight_psi(index.states[i].rho, q);
  double z = mu.sum();
  return mu / z;
}

struct Decomposition {
  SparseMatrix B_loc;
  // States grouped by (particle, configuration off the particle); B_loc is
  // block-diagonal in this grouping.
  std::vector<std::vector<int>> blocks;
  bool block_diagonal = true;
  // Largest absolute entry difference after re-multiplying by the unicycle
  // permutation; the rebuild is a pure permutation so this must be exactly 0.
  double reassembly_error = 0.0;
};

inline Decomposition decompose(const SparseMatrix& P, const UnicycleIndex& index) {
  if (P.n != index.size()) throw std::invalid_argument("decompose: size mismatch");
  std::vector<int> zinv(P.n);
  for (int i = 0; i < P.n; ++i) zinv[index.zeta[i]] = i;

  Decomposition d;
  d.B_loc = SparseMatrix(P.n);
  for (int s = 0; s < P.n; ++s) {
    for (const auto& [c, v] : P.rows[s]) d.B_loc.rows[s].emplace_back(zinv[c], v);
    std::sort(d.B_loc.rows[s].begin(), d.B_loc.rows[s].end());
  }

  // Group by (x, rho off x). Key: config code with the particle's digit
  // zeroed, combined with the particle vertex.
  std::unordered_map<std::uint64_t, int> block_id;
  std::vector<std::uint64_t> key_of(P.n);
  for (int s = 0; s < P.n; ++s) {
    const auto& st = index.states[s];
    std::uint64_t code = index.config_code(st.rho);
    const auto& sx = index.S[st.x];
    int pos = 0;
    while (sx[pos] != st.rho[st.x]) ++pos;
    std::uint64_t code_off =
        code - static_cast<std::uint64_t>(pos) * index.stride[st.x];
    std::uint64_t key = code_off * static_cast<std::uint64_t>(index.g.m + 1) + st.x;
    key_of[s] = key;
    auto [it, inserted] = block_id.emplace(key, static_cast<int>(d.blocks.size()));
    if (inserted) d.blocks.emplace_back();
    d.blocks[it->second].push_back(s);
  }
  for (int s = 0; s < P.n; ++s)
    for (const auto& [u, v] : d.B_loc.rows[s])
      if (v != 0.0 && key_of[u] != key_of[s]) d.block_diagonal = false;

  // Re-multiply by the permutation and compare entrywise with P.
  for (int s = 0; s < P.n; ++s) {
    std::vector<std::pair<int, double>> rebuilt;
    for (const auto& [u, v] : d.B_loc.rows[s]) rebuilt.emplace_back(index.zeta[u], v);
    std::sort(rebuilt.begin(), rebuilt.end());
    if (rebuilt.size() != P.rows[s].size()) {
      d.reassembly_error = 1.0;
      continue;
    }
    for (std::size_t k = 0; k < rebuilt.size(); ++k) {
      double dc = std::abs(static_cast<double>(rebuilt[k].first - P.rows[s][k].first));
      double dv = std::abs(rebuilt[k].second - P.rows[s][k].second);
      d.reassembly_error = std::max(d.reassembly_error, std::max(dc, dv));
    }
  }
  return d;
}

// Time reversal of the total chain: from (a, sigma), find the cycle
// predecessor b (the vertex with sigma(b) = a), redirect b's arrow to w with
// probability m-hat_b(a, w).
inline SparseMatrix time_reversal_total(const UnicycleIndex& index, const LocalChainSpec& spec,
                                        const QSystem& q) {
  detail::check_spec_matches_index(spec, index);
  std::vector<Eigen::MatrixXd> Mhat(index.g.m);
  for (int x = 0; x < index.g.m; ++x) {
    Eigen::VectorXd qx(spec.S[x].size());
    for (std::size_t i = 0; i < spec.S[x].size(); ++i) qx(i) = q.Q(x, spec.S[x][i]);
    Mhat[x] = local_time_reversal(spec.M[x], qx);
  }
  SparseMatrix Phat(index.size());
  Config eta;
  for (int i = 0; i < index.size(); ++i) {
    const auto& st = index.states[i];
    int a = st.x;
    // Cycle predecessor of a.
    int b = -1;
    for (int v : st.cycle)
      if (st.rho[v] == a) {
        b = v;
        break;
      }
    if (b < 0) throw std::logic_error("time_reversal_total: particle not on the cycle");
    int a_pos = spec.exit_index(b, a);
    eta = st.rho;
    for (std::size_t wi = 0; wi < spec.S[b].size(); ++wi) {
      double p = Mhat[b](a_pos, static_cast<int>(wi));
      if (p == 0.0) continue;
      eta[b] = spec.S[b][wi];
      int j = index.find(b, eta);
      if (j < 0) throw std::logic_error("time_reversal_total: successor left the recurrent set");
      Phat.rows[i].emplace_back(j, p);
    }
    std::sort(Phat.rows[i].begin(), Phat.rows[i].end());
  }
  return Phat;
}

// Multiplicative and additive reversibilisations M = P Phat, A = (P+Phat)/2.
inline std::pair<SparseMatrix, SparseMatrix> reversibilisations(const SparseMatrix& P,
                                                                const SparseMatrix& Phat) {
  return {sparse_product(P, Phat), sparse_average(P, Phat)};
}

// Row permutation B-hat(s, .) = Phat(zeta(s), .), the local-block factor of
// the reversal (Phat = A_CYC^T B-hat, hence M = B_loc B-hat).
inline SparseMatrix reversal_local_blocks(const SparseMatrix& Phat, const UnicycleIndex& index) {
  SparseMatrix B(Phat.n);
  for (int s = 0; s < Phat.n; ++s) B.rows[s] = Phat.rows[index.zeta[s]];
  return B;
}

struct ProductEigenvector {
  Eigen::VectorXd f;
  double residual = 0.0;  // max-norm residual of f P - lambda f, relative to max|f|
};

// Product left eigenvector f(x, rho) = prod_v f_v(rho(v)) from the
// lambda-uniformity witnesses; residual measured against the supplied matrix.
inline ProductEigenvector product_eigenvector(const LocalChainSpec& spec, double lambda,
                                              const UnicycleIndex& index,
                                              const SparseMatrix& P) {
  detail::check_spec_matches_index(spec, index);
  LambdaWitness w = is_locally_lambda_uniform(spec, lambda);
  if (!w.ok)
    throw std::invalid_argument("product_eigenvector: spec is not locally lambda-uniform");
  ProductEigenvector pe;
  pe.f.resize(index.size());
  for (int i = 0; i < index.size(); ++i) {
    const auto& rho = index.states[i].rho;
    double prod = 1.0;
    for (int v = 0; v < index.g.m; ++v) prod *= w.f[v](spec.exit_index(v, rho[v]));
    pe.f(i) = prod;
  }
  Eigen::VectorXd r = left_multiply(pe.f, P) - lambda * pe.f;
  double scale = pe.f.cwiseAbs().maxCoeff();
  pe.residual = r.cwiseAbs().maxCoeff() / (scale > 0 ? scale : 1.0);
  return pe;
}

// Stationary left eigenvector by power iteration on the lazy chain (I+P)/2,
// which shares the stationary vector and is immune to periodicity.
inline Eigen::VectorXd stationary_power_iteration(const SparseMatrix& P, double tol = 1e-12,
                                                  long max_iters = 1000000) {
  Eigen::VectorXd v = Eigen::VectorXd::Constant(P.n, 1.0 / P.n);
  for (long it = 0; it < max_iters; ++it) {
    Eigen::VectorXd w = 0.5 * (v + left_multiply(v, P));
    double delta = (w - v).cwiseAbs().sum();
    v = w;
    if (delta <= tol) break;
  }
  return v / v.sum();
}

}  // namespace ulmw
