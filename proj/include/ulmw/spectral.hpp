#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ulmw/total_chain.hpp"

namespace ulmw {

struct SpectrumReport {
  std::vector<std::pair<std::complex<double>, int>> items;  // (eigenvalue, multiplicity)
  double tol = 1e-6;
  int dim = 0;
  std::vector<std::string> flags;

  int multiplicity_near(std::complex<double> lambda, double eps = 1e-6) const {
    int m = 0;
    for (const auto& [ev, mult] : items)
      if (std::abs(ev - lambda) <= eps) m += mult;
    return m;
  }
};

constexpr int kDenseEigGuard = 50000;

// Dense nonsymmetric eigensolve with greedy eigenvalue clustering at tol.
inline SpectrumReport eig_spectrum(const Eigen::MatrixXd& M, double tol = 1e-6) {
  if (M.rows() != M.cols()) throw std::invalid_argument("eig_spectrum: matrix must be square");
  if (M.rows() > kDenseEigGuard)
    throw std::length_error("eig_spectrum: dimension exceeds the dense-solver guard");
  Eigen::EigenSolver<Eigen::MatrixXd> es(M, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("eig_spectrum: eigensolver did not converge");
  std::vector<std::complex<double>> evs(es.eigenvalues().data(),
                                        es.eigenvalues().data() + M.rows());
  std::sort(evs.begin(), evs.end(), [](const auto& a, const auto& b) {
    if (a.real() != b.real()) return a.real() < b.real();
    return a.imag() < b.imag();
  });
  SpectrumReport rep;
  rep.tol = tol;
  rep.dim = static_cast<int>(M.rows());
  for (const auto& ev : evs) {
    if (!rep.items.empty() && std::abs(ev - rep.items.back().first) <= tol) {
      rep.items.back().second += 1;
    } else {
      rep.items.emplace_back(ev, 1);
    }
  }
  return rep;
}

// Adjacency matrix of the unicycle graph: 1 for every one-step transition
// between distinct recurrent states, 0 on the diagonal.
inline std::vector<std::vector<long long>> ucyc_adjacency_int(const UnicycleIndex& index) {
  int n = index.size();
  std::vector<std::vector<long long>> A(n, std::vector<long long>(n, 0));
  Config eta;
  for (int i = 0; i < n; ++i) {
    const auto& st = index.states[i];
    eta = st.rho;
    for (int y : index.S[st.x]) {
      eta[st.x] = y;
      int j = index.find(y, eta);
      if (j >= 0 && j != i) A[i][j] = 1;
    }
    eta[st.x] = st.rho[st.x];
  }
  return A;
}

inline Eigen::MatrixXd ucyc_adjacency(const UnicycleIndex& index) {
  auto Ai = ucyc_adjacency_int(index);
  int n = index.size();
  Eigen::MatrixXd A(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) A(i, j) = static_cast<double>(Ai[i][j]);
  return A;
}

namespace detail {

// Signed integer determinant (Bareiss fraction-free elimination).
inline long long bareiss_det(std::vector<std::vector<long long>> a) {
  int n = static_cast<int>(a.size());
  if (n == 0) return 1;
  auto checked = [](__int128 x) -> long long {
    if (x > INT64_MAX || x < INT64_MIN) throw std::overflow_error("bareiss_det: overflow");
    return static_cast<long long>(x);
  };
  long long sign = 1, prev = 1;
  for (int k = 0; k < n - 1; ++k) {
    if (a[k][k] == 0) {
      int piv = -1;
      for (int i = k + 1; i < n; ++i)
        if (a[i][k] != 0) {
          piv = i;
          break;
        }
      if (piv == -1) return 0;
      std::swap(a[k], a[piv]);
      sign = -sign;
    }
    for (int i = k + 1; i < n; ++i)
      for (int j = k + 1; j < n; ++j)
        a[i][j] = checked((static_cast<__int128>(a[i][j]) * a[k][k] -
                           static_cast<__int128>(a[i][k]) * a[k][j]) /
                          prev);
    prev = a[k][k];
  }
  return sign * a[n - 1][n - 1];
}

// det( (out-degree Laplacian of g restricted to V \ S) - I ), the subset
// coefficient of the closed-walk and multiplicity formulas. Equals the
// alternating sum over root supersets of forest counts.
inline long long laplacian_minor_minus_identity_det(const Graph& g, const std::vector<char>& in_S) {
  std::vector<int> keep;
  for (int v = 0; v < g.m; ++v)
    if (!in_S[v]) keep.push_back(v);
  int n = static_cast<int>(keep.size());
  std::vector<std::vector<long long>> a(n, std::vector<long long>(n, 0));
  for (int i = 0; i < n; ++i) {
    int v = keep[i];
    for (int w : g.out[v]) {
      if (w == v) continue;
      a[i][i] += 1;
      for (int j = 0; j < n; ++j)
        if (keep[j] == w) a[i][j] -= 1;
    }
    a[i][i] -= 1;  // the "- I" shift
  }
  return bareiss_det(std::move(a));
}

using u64 = std::uint64_t;
using u128 = unsigned __int128;

inline u64 mulmod(u64 a, u64 b, u64 p) { return static_cast<u64>(u128(a) * b % p); }

inline u64 powmod(u64 a, u64 e, u64 p) {
  u64 r = 1;
  a %= p;
  while (e) {
    if (e & 1) r = mulmod(r, a, p);
    a = mulmod(a, a, p);
    e >>= 1;
  }
  return r;
}

inline u64 invmod(u64 a, u64 p) { return powmod(a, p - 2, p); }

inline u64 to_mod(long long x, u64 p) {
  long long r = x % static_cast<long long>(p);
  if (r < 0) r += static_cast<long long>(p);
  return static_cast<u64>(r);
}

// Characteristic polynomial det(xI - A) mod prime p, coefficients in
// ascending degree (result[n] == 1). Hessenberg reduction by modular
// similarity transforms, then the Hessenberg charpoly recurrence.
inline std::vector<u64> charpoly_mod(const std::vector<std::vector<long long>>& Ain, u64 p) {
  int n = static_cast<int>(Ain.size());
  std::vector<std::vector<u64>> H(n, std::vector<u64>(n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) H[i][j] = to_mod(Ain[i][j], p);

  for (int j = 0; j + 2 < n; ++j) {
    int piv = -1;
    for (int i = j + 1; i < n; ++i)
      if (H[i][j] != 0) {
        piv = i;
        break;
      }
    if (piv == -1) continue;
    if (piv != j + 1) {
      std::swap(H[j + 1], H[piv]);
      for (int r = 0; r < n; ++r) std::swap(H[r][j + 1], H[r][piv]);
    }
    u64 ipv = invmod(H[j + 1][j], p);
    for (int i = j + 2; i < n; ++i) {
      u64 f = mulmod(H[i][j], ipv, p);
      if (f == 0) continue;
      for (int c = j; c < n; ++c) {
        u64 sub = mulmod(f, H[j + 1][c], p);
        H[i][c] = (H[i][c] + p - sub) % p;
      }
      for (int r = 0; r < n; ++r) {
        u64 add = mulmod(f, H[r][i], p);
        H[r][j + 1] = (H[r][j + 1] + add) % p;
      }
    }
  }

  std::vector<std::vector<u64>> polys;
  polys.push_back({1});
  for (int k = 1; k <= n; ++k) {
    std::vector<u64> pk(k + 1, 0);
    const auto& pkm1 = polys[k - 1];
    u64 hkk = H[k - 1][k - 1];
    for (int d = 0; d < static_cast<int>(pkm1.size()); ++d) {
      pk[d + 1] = (pk[d + 1] + pkm1[d]) % p;
      pk[d] = (pk[d] + p - mulmod(hkk, pkm1[d], p)) % p;
    }
    u64 prod = 1;
    for (int i = k - 1; i >= 1; --i) {
      prod = mulmod(prod, H[i][i - 1], p);
      u64 c = mulmod(H[i - 1][k - 1], prod, p);
      if (c == 0) continue;
      const auto& pim1 = polys[i - 1];
      for (int d = 0; d < static_cast<int>(pim1.size()); ++d)
        pk[d] = (pk[d] + p - mulmod(c, pim1[d], p)) % p;
    }
    polys.push_back(std::move(pk));
  }
  return polys[n];
}

// Multiplicity of the root lambda: repeated synthetic division by (x - lambda).
inline int root_multiplicity_mod(std::vector<u64> poly, u64 lambda, u64 p) {
  int mult = 0;
  while (poly.size() > 1) {
    // Horner from the top coefficient down; quotient then remainder.
    std::vector<u64> q;
    u64 acc = 0;
    for (int d = static_cast<int>(poly.size()) - 1; d >= 0; --d) {
      acc = (mulmod(acc, lambda, p) + poly[d]) % p;
      q.push_back(acc);
    }
    u64 rem = q.back();
    if (rem != 0) break;
    ++mult;
    q.pop_back();
    std::reverse(q.begin(), q.end());
    poly = std::move(q);
  }
  return mult;
}

// Multiplicity of the quadratic factor x^2 + b x + c.
inline int quadratic_multiplicity_mod(std::vector<u64> poly, u64 b, u64 c, u64 p) {
  int mult = 0;
  while (poly.size() > 2) {
    std::vector<u64> r(poly.rbegin(), poly.rend());  // descending degree
    std::vector<u64> q;
    for (std::size_t i = 0; i + 2 < r.size(); ++i) {
      u64 f = r[i];
      q.push_back(f);
      r[i] = 0;
      r[i + 1] = (r[i + 1] + p - mulmod(f, b, p)) % p;
      r[i + 2] = (r[i + 2] + p - mulmod(f, c, p)) % p;
    }
    if (r[r.size() - 2] != 0 || r[r.size() - 1] != 0) break;
    ++mult;
    std::reverse(q.begin(), q.end());
    poly = std::move(q);
  }
  return mult;
}

constexpr u64 kCharpolyPrimes[2] = {2305843009213693951ull, 2305843009213693967ull};

}  // namespace detail

// Exact algebraic multiplicity of an integer eigenvalue of an integer matrix,
// via the characteristic polynomial modulo two 61-bit primes (defective
// matrices scatter numeric eigensolvers, so clustering is not reliable here).
inline int exact_integer_multiplicity(const std::vector<std::vector<long long>>& A,
                                      long long lambda) {
  int mults[2];
  for (int k = 0; k < 2; ++k) {
    detail::u64 p = detail::kCharpolyPrimes[k];
    mults[k] = detail::root_multiplicity_mod(detail::charpoly_mod(A, p),
                                             detail::to_mod(lambda, p), p);
  }
  if (mults[0] != mults[1])
    throw std::runtime_error("exact_integer_multiplicity: prime moduli disagree");
  return mults[0];
}

// Exact multiplicity of the monic quadratic factor x^2 + b x + c (e.g. the
// pair of eigenvalues +-sqrt(2) via x^2 - 2).
inline int exact_quadratic_multiplicity(const std::vector<std::vector<long long>>& A,
                                        long long b, long long c) {
  int mults[2];
  for (int k = 0; k < 2; ++k) {
    detail::u64 p = detail::kCharpolyPrimes[k];
    mults[k] = detail::quadratic_multiplicity_mod(detail::charpoly_mod(A, p),
                                                  detail::to_mod(b, p), detail::to_mod(c, p), p);
  }
  if (mults[0] != mults[1])
    throw std::runtime_error("exact_quadratic_multiplicity: prime moduli disagree");
  return mults[0];
}

struct ClosedWalkCount {
  long long trace_value = 0;    // tr(A^k) on the unicycle graph
  long long formula_value = 0;  // subset-sum over S of w(G_S, k) det(Lap[V\S] - I)
};

constexpr int kClosedWalkMaxK = 12;
constexpr int kClosedWalkMaxStates = 4096;

// Closed walks of length k in the unicycle graph, computed both as a trace
// and by the subset formula; the two results must agree as exact integers.
inline ClosedWalkCount closed_walk_count(const Graph& g, int k) {
  if (k < 1 || k > kClosedWalkMaxK)
    throw std::length_error("closed_walk_count: k must be in [1,12]");
  UnicycleIndex index = enumerate_unicycles(g);
  int n = index.size();
  if (n > kClosedWalkMaxStates)
    throw std::length_error("closed_walk_count: unicycle graph too large");
  auto A = ucyc_adjacency_int(index);

  // Sparse rows of A once; then B <- A * B, k-1 times; trace of the result.
  std::vector<std::vector<int>> nbr(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (A[i][j]) nbr[i].push_back(j);
  std::vector<std::vector<long long>> B = A;
  auto checked = [](__int128 x) -> long long {
    if (x > INT64_MAX || x < INT64_MIN) throw std::overflow_error("closed_walk_count: overflow");
    return static_cast<long long>(x);
  };
  for (int step = 1; step < k; ++step) {
    std::vector<std::vector<long long>> C(n, std::vector<long long>(n, 0));
    for (int i = 0; i < n; ++i)
      for (int j : nbr[i])
        for (int c = 0; c < n; ++c) C[i][c] = checked(static_cast<__int128>(C[i][c]) + B[j][c]);
    B = std::move(C);
  }
  ClosedWalkCount out;
  for (int i = 0; i < n; ++i) out.trace_value += B[i][i];

  // Formula side: iterate over all subsets S of V.
  for (std::uint32_t mask = 1; mask < (1u << g.m); ++mask) {
    std::vector<char> in_S(g.m, 0);
    std::vector<int> members;
    for (int v = 0; v < g.m; ++v)
      if (mask & (1u << v)) {
        in_S[v] = 1;
        members.push_back(v);
      }
    int s = static_cast<int>(members.size());
    // w(G_S, k): closed walks in the induced subgraph.
    std::vector<std::vector<long long>> AS(s, std::vector<long long>(s, 0));
    for (int i = 0; i < s; ++i)
      for (int j = 0; j < s; ++j)
        if (g.has_edge(members[i], members[j])) AS[i][j] = 1;
    std::vector<std::vector<long long>> BS = AS;
    for (int step = 1; step < k; ++step) {
      std::vector<std::vector<long long>> CS(s, std::vector<long long>(s, 0));
      for (int i = 0; i < s; ++i)
        for (int l = 0; l < s; ++l)
          if (AS[i][l])
            for (int c = 0; c < s; ++c) CS[i][c] += BS[l][c];
      BS = std::move(CS);
    }
    long long walks = 0;
    for (int i = 0; i < s; ++i) walks += BS[i][i];
    if (walks == 0) continue;
    out.formula_value += walks * detail::laplacian_minor_minus_identity_det(g, in_S);
  }
  return out;
}

// Multiplicity of a nonzero eigenvalue of the unicycle adjacency matrix via
// the subset formula: sum over S of m_{G_S}(lambda) * det(Lap[V\S] - I).
inline long long ucyc_multiplicity(const Graph& g, double lambda, double tol = 1e-6) {
  if (lambda == 0.0)
    throw std::invalid_argument("ucyc_multiplicity: the formula covers only nonzero eigenvalues");
  if (g.m > kEnumerationMaxVertices)
    throw std::length_error("ucyc_multiplicity: subset enumeration guarded at m <= 8");
  long long total = 0;
  for (std::uint32_t mask = 1; mask < (1u << g.m); ++mask) {
    std::vector<char> in_S(g.m, 0);
    std::vector<int> members;
    for (int v = 0; v < g.m; ++v)
      if (mask & (1u << v)) {
        in_S[v] = 1;
        members.push_back(v);
      }
    int s = static_cast<int>(members.size());
    Eigen::MatrixXd AS = Eigen::MatrixXd::Zero(s, s);
    for (int i = 0; i < s; ++i)
      for (int j = 0; j < s; ++j)
        if (g.has_edge(members[i], members[j])) AS(i, j) = 1.0;
    Eigen::EigenSolver<Eigen::MatrixXd> es(AS, false);
    int mult = 0;
    for (int i = 0; i < s; ++i)
      if (std::abs(es.eigenvalues()(i) - std::complex<double>(lambda, 0.0)) <= tol) ++mult;
    if (mult == 0) continue;
    total += static_cast<long long>(mult) * detail::laplacian_minor_minus_identity_det(g, in_S);
  }
  return total;
}

// Literal evaluation of the three-case multiplicity formula for the unicycle
// Laplacian of K_m, mapping index i to (Laplacian) eigenvalue m-1-i. Entries
// whose evaluation passes through a negative exponent or a non-integer value
// are flagged, never silently coerced.
inline SpectrumReport km_laplacian_spectrum_formula(int m) {
  if (m < 3) throw std::invalid_argument("km_laplacian_spectrum_formula: m must be >= 3");
  SpectrumReport rep;
  rep.tol = 0.0;
  auto ipow = [](long long base, int e) {
    long long r = 1;
    for (int i = 0; i < e; ++i) r *= base;
    return r;
  };
  auto binom = [](int n, int k) {
    if (k < 0 || k > n) return 0ll;
    long long r = 1;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
  };
  long long total = 0;
  for (int i = -1; i <= m - 1; ++i) {
    long long mult = 0;
    if (i == -1) {
      mult = ipow(m, m - 1) - ipow(m - 1, m - 1);
    } else if (i == 0) {
      mult = ipow(m, m - 1) * (m - 2);
    } else {
      long long num = static_cast<long long>(i) * binom(m, i + 1);
      int e = m - i - 2;
      if (e >= 0) {
        mult = num * ipow(m - 1, e);
      } else {
        long long den = ipow(m - 1, -e);
        if (num % den != 0) {
          rep.flags.push_back("i=" + std::to_string(i) +
                              ": negative exponent yields a non-integer value " +
                              std::to_string(num) + "/" + std::to_string(den));
          continue;
        }
        mult = num / den;
        rep.flags.push_back("i=" + std::to_string(i) +
                            ": evaluation passes through a negative exponent (" +
                            std::to_string(num) + "/" + std::to_string(den) + ")");
      }
    }
    rep.items.emplace_back(std::complex<double>(m - 1 - i, 0.0), static_cast<int>(mult));
    total += mult;
  }
  rep.dim = static_cast<int>(total);
  rep.flags.push_back(
      "index map m-1-i sends i=-1 to eigenvalue m, outside the stated set {-1,0,...,m-1}");
  return rep;
}

struct LaplacianResult {
  Eigen::MatrixXd L;
  int diagonal = 0;
  std::vector<std::string> flags;
};

// Unicycle-graph Laplacian r I - A for a regular base graph. For the
// loop-augmented complete graph the source convention keeps diagonal m-1
// even though row sums are not constant; that discrepancy is flagged.
inline LaplacianResult laplacian_matrix(const UnicycleIndex& index, const Graph& g) {
  LaplacianResult res;
  Eigen::MatrixXd A = ucyc_adjacency(index);
  int n = index.size();
  bool regular = true;
  double r0 = A.row(0).sum();
  for (int i = 1; i < n; ++i)
    if (A.row(i).sum() != r0) {
      regular = false;
      break;
    }
  int diag;
  if (regular) {
    diag = static_cast<int>(r0);
  } else {
    // Loop-augmented complete graph: out-degrees in the unicycle graph are
    // m-1 or m depending on whether the particle's arrow is its loop.
    bool complete_with_loops = true;
    for (int v = 0; v < g.m; ++v)
      if (static_cast<int>(g.out[v].size()) != g.m) complete_with_loops = false;
    if (!complete_with_loops)
      throw std::invalid_argument("laplacian_matrix: unicycle graph is not regular");
    diag = g.m - 1;
    res.flags.push_back(
        "diagonal fixed at m-1 by convention although unicycle out-degrees vary between m-1 "
        "and m for the loop-augmented complete graph");
  }
  res.diagonal = diag;
  res.L = static_cast<double>(diag) * Eigen::MatrixXd::Identity(n, n) - A;
  return res;
}

struct RangeConstancy {
  bool applicable = false;
  bool ok = false;
  double max_deviation = 0.0;
};

// For the uniform unicycle walk, every vector in the range of P must be
// constant across states sharing (root, tree) and differing only in the
// root's outgoing arrow. Checked on an orthonormal basis of the column space.
inline RangeConstancy range_constancy_check(const SparseMatrix& P, const UnicycleIndex& index,
                                            const LocalChainSpec& spec, double tol = 1e-9) {
  RangeConstancy rc;
  for (std::size_t x = 0; x < spec.M.size(); ++x) {
    int n = static_cast<int>(spec.M[x].rows());
    if ((spec.M[x] - Eigen::MatrixXd::Constant(n, n, 1.0 / n)).cwiseAbs().maxCoeff() > 1e-12)
      return rc;  // not a uniform walk; check skipped
  }
  rc.applicable = true;
  Eigen::MatrixXd D = P.to_dense();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(D, Eigen::ComputeThinU);
  double smax = svd.singularValues()(0);
  int rank = 0;
  for (int i = 0; i < svd.singularValues().size(); ++i)
    if (svd.singularValues()(i) > 1e-9 * smax) ++rank;
  Eigen::MatrixXd U = svd.matrixU().leftCols(rank);

  Decomposition dec = decompose(P, index);
  for (int col = 0; col < rank; ++col)
    for (const auto& block : dec.blocks) {
      double lo = U(block[0], col), hi = lo;
      for (int s : block) {
        lo = std::min(lo, U(s, col));
        hi = std::max(hi, U(s, col));
      }
      rc.max_deviation = std::max(rc.max_deviation, hi - lo);
    }
  rc.ok = rc.max_deviation <= tol;
  return rc;
}

}  // namespace ulmw
