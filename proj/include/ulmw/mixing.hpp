#pragma once

#include <mpfr.h>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "ulmw/total_chain.hpp"

namespace ulmw {

struct HorizonExceeded : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline double tv_distance(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  if (p.size() != q.size()) throw std::invalid_argument("tv_distance: length mismatch");
  if (std::abs(p.sum() - 1.0) > 1e-9 || std::abs(q.sum() - 1.0) > 1e-9)
    throw std::invalid_argument("tv_distance: inputs must be probability vectors");
  return 0.5 * (p - q).cwiseAbs().sum();
}

struct MixingCurve {
  std::vector<double> d;  // d[t], worst-case TV distance after t steps
  Eigen::VectorXd mu;
  int m_label = 0;
};

// Exact worst-case TV curve: iterate the distribution of every start state
// through P and take the maximum TV distance to mu at each step. Start
// states are processed in chunks to bound memory.
inline MixingCurve d_curve(const SparseMatrix& P, const Eigen::VectorXd& mu, int T_max) {
  if (P.n != mu.size()) throw std::invalid_argument("d_curve: P and mu sizes differ");
  MixingCurve curve;
  curve.mu = mu;
  curve.d.assign(T_max + 1, 0.0);
  const int n = P.n;
  const int chunk = 256;
  std::vector<double> next_row(n);
  for (int lo = 0; lo < n; lo += chunk) {
    int hi = std::min(n, lo + chunk);
    int rows = hi - lo;
    // Dense distributions for this chunk of start states.
    std::vector<std::vector<double>> D(rows, std::vector<double>(n, 0.0));
    for (int r = 0; r < rows; ++r) D[r][lo + r] = 1.0;
    for (int t = 0; t <= T_max; ++t) {
      for (int r = 0; r < rows; ++r) {
        double tv = 0.0;
        for (int j = 0; j < n; ++j) tv += std::abs(D[r][j] - mu(j));
        curve.d[t] = std::max(curve.d[t], 0.5 * tv);
      }
      if (t == T_max) break;
      for (int r = 0; r < rows; ++r) {
        std::fill(next_row.begin(), next_row.end(), 0.0);
        for (int k = 0; k < n; ++k) {
          double w = D[r][k];
          if (w == 0.0) continue;
          for (const auto& [c, v] : P.rows[k]) next_row[c] += w * v;
        }
        D[r].assign(next_row.begin(), next_row.end());
      }
    }
  }
  return curve;
}

// Exact coupon-collector tail P(C > t) with the start vertex pre-collected,
// by inclusion-exclusion. The alternating sum cancels catastrophically at
// small t, so the working precision is chosen from the largest term's
// magnitude (estimated in doubles first) and the sum is evaluated in MPFR.
inline double coupon_tail(int m, double t) {
  if (m < 1) throw std::invalid_argument("coupon_tail: m must be positive");
  if (m == 1) return 0.0;
  if (t < 0) return 1.0;

  double log_binom = 0.0;  // ln C(m-1, j), accumulated over j
  double max_log2 = 0.0;
  for (int j = 1; j <= m - 1; ++j) {
    log_binom += std::log(static_cast<double>(m - j)) - std::log(static_cast<double>(j));
    double term_log2 =
        (log_binom + t * std::log(static_cast<double>(m - j) / m)) / std::numbers::ln2;
    max_log2 = std::max(max_log2, term_log2);
  }
  mpfr_prec_t prec = static_cast<mpfr_prec_t>(max_log2) + 96;

  mpfr_t sum, binom, base, term;
  mpfr_inits2(prec, sum, binom, base, term, static_cast<mpfr_ptr>(nullptr));
  mpfr_set_zero(sum, 1);
  mpfr_set_ui(binom, 1, MPFR_RNDN);
  for (int j = 1; j <= m - 1; ++j) {
    mpfr_mul_ui(binom, binom, static_cast<unsigned long>(m - j), MPFR_RNDN);
    mpfr_div_ui(binom, binom, static_cast<unsigned long>(j), MPFR_RNDN);
    mpfr_set_ui(base, static_cast<unsigned long>(m - j), MPFR_RNDN);
    mpfr_div_ui(base, base, static_cast<unsigned long>(m), MPFR_RNDN);
    double ti;
    if (std::modf(t, &ti) == 0.0 && t <= 1e15) {
      mpfr_pow_ui(term, base, static_cast<unsigned long>(t), MPFR_RNDN);
    } else {
      mpfr_set_d(term, t, MPFR_RNDN);
      mpfr_pow(term, base, term, MPFR_RNDN);
    }
    mpfr_mul(term, term, binom, MPFR_RNDN);
    if (j % 2 == 1)
      mpfr_add(sum, sum, term, MPFR_RNDN);
    else
      mpfr_sub(sum, sum, term, MPFR_RNDN);
  }
  double out = mpfr_get_d(sum, MPFR_RNDN);
  mpfr_clears(sum, binom, base, term, static_cast<mpfr_ptr>(nullptr));
  return std::min(1.0, std::max(0.0, out));
}

struct MCEstimate {
  double estimate = 0.0;
  double half_width = 0.0;  // three standard errors
  int trials = 0;
};

// Monte Carlo fraction of simple-random-walk trajectories that have not
// covered all vertices by time t.
inline MCEstimate cover_tail_mc(const Graph& g, long long t, int trials, std::uint64_t seed,
                                int start = 0) {
  if (trials < 1) throw std::invalid_argument("cover_tail_mc: trials must be >= 1");
  if (start < 0 || start >= g.m) throw std::invalid_argument("cover_tail_mc: bad start vertex");
  int not_covered = 0;
  for (int trial = 0; trial < trials; ++trial) {
    Rng rng(seed, static_cast<std::uint64_t>(trial));
    std::vector<char> seen(g.m, 0);
    seen[start] = 1;
    int remaining = g.m - 1;
    int x = start;
    for (long long step = 0; step < t && remaining > 0; ++step) {
      const auto& nb = g.out[x];
      x = nb[rng.next_below(nb.size())];
      if (!seen[x]) {
        seen[x] = 1;
        --remaining;
      }
    }
    if (remaining > 0) ++not_covered;
  }
  MCEstimate est;
  est.trials = trials;
  est.estimate = static_cast<double>(not_covered) / trials;
  double se = std::sqrt(std::max(est.estimate * (1.0 - est.estimate), 1e-12) / trials);
  est.half_width = 3.0 * se;
  return est;
}

struct IdentityReport {
  int m = 0;
  int horizon = 0;  // last t compared (1e-6 coupon tail)
  // Gap between exact d(t) and the coupon curve under both tail conventions.
  double max_gap_strict = 0.0;     // against P(C > t)
  double max_gap_nonstrict = 0.0;  // against P(C >= t)
  std::string selected_convention; // the better-matching convention
  std::vector<double> d;           // exact d(t)
  std::vector<double> tail_strict;
  std::vector<double> tail_nonstrict;
};

// Compares the exact worst-case TV curve of the uniform unicycle walk on the
// loop-augmented complete graph against the coupon-collector cover tails
// under both conventions, reporting the maximum gap of each.
inline IdentityReport aldous_broder_identity_check(int m) {
  if (m < 2 || m > 5)
    throw std::length_error("aldous_broder_identity_check: exact curve feasible only for m <= 5");
  Graph g = complete_graph(m, true);
  LocalChainSpec spec = preset_uniform(g);
  UnicycleIndex index = enumerate_unicycles(g);
  QSystem q = build_q_system(g, spec);
  Eigen::VectorXd mu = stationary_mu(index, q);
  SparseMatrix P = build_total_P(g, spec, index);

  IdentityReport rep;
  rep.m = m;
  int T = 0;
  while (coupon_tail(m, T) > 1e-6 && T < 100000) ++T;
  rep.horizon = T;
  MixingCurve curve = d_curve(P, mu, T);
  rep.d = curve.d;
  for (int t = 0; t <= T; ++t) {
    double gt = coupon_tail(m, t);
    double geq = coupon_tail(m, t - 1);  // P(C >= t) = P(C > t-1)
    rep.tail_strict.push_back(gt);
    rep.tail_nonstrict.push_back(geq);
    rep.max_gap_strict = std::max(rep.max_gap_strict, std::abs(curve.d[t] - gt));
    rep.max_gap_nonstrict = std::max(rep.max_gap_nonstrict, std::abs(curve.d[t] - geq));
  }
  rep.selected_convention = rep.max_gap_strict <= rep.max_gap_nonstrict ? ">" : ">=";
  return rep;
}

// Least t with d(t) < eps; HorizonExceeded if the curve never gets there.
inline int mixing_time(const MixingCurve& curve, double eps) {
  if (!(eps > 0.0 && eps <= 1.0)) throw std::invalid_argument("mixing_time: eps must be in (0,1]");
  for (std::size_t t = 0; t < curve.d.size(); ++t)
    if (curve.d[t] < eps) return static_cast<int>(t);
  throw HorizonExceeded("mixing_time: the curve never drops below eps within its horizon");
}

struct MixingBounds {
  double lower = 0.0;
  double upper = 0.0;
  bool lower_clamped = false;
};

// Coupon-collector sandwich for the mixing time of the uniform unicycle walk
// on the loop-augmented complete graph.
inline MixingBounds mixing_bounds(int m, double eps) {
  if (m < 3) throw std::invalid_argument("mixing_bounds: m must be >= 3");
  if (!(eps > 0.0 && eps < 1.0))
    throw std::invalid_argument("mixing_bounds: eps must be in (0,1)");
  MixingBounds b;
  double mlogm = m * std::log(m);
  b.lower = (1.0 + std::log(1.0 - eps) / std::log(m)) * mlogm;
  b.upper = (1.0 - std::log(eps) / std::log(m)) * mlogm;
  if (b.lower < 0.0) {
    b.lower = 0.0;
    b.lower_clamped = true;
  }
  return b;
}

// Least integer t with coupon_tail(m, t) < eps. The binary search is
// bracketed inside [(1-beta) m ln m, (1+beta) m ln m], where the coupon
// bounds guarantee the crossing lies and the inclusion-exclusion terms stay
// small.
inline long long coupon_mixing_time(int m, double eps) {
  if (m < 2) throw std::invalid_argument("coupon_mixing_time: m must be >= 2");
  if (!(eps > 0.0 && eps < 1.0))
    throw std::invalid_argument("coupon_mixing_time: eps must be in (0,1)");
  double beta = std::max(1.0, std::log(1.0 / std::min(eps, 1.0 - eps)) / std::log(m)) + 0.2;
  double mlogm = m * std::log(m);
  long long lo = std::max(0ll, static_cast<long long>((1.0 - beta) * mlogm));
  long long hi = static_cast<long long>((1.0 + beta) * mlogm) + 2;
  if (coupon_tail(m, static_cast<double>(lo)) < eps) {
    // The analytic bracket starts below the crossing by construction; fall
    // back to a full search if that guarantee is ever violated.
    lo = 0;
  }
  while (coupon_tail(m, static_cast<double>(hi)) >= eps) hi = 2 * hi + 1;
  while (lo < hi) {
    long long mid = lo + (hi - lo) / 2;
    if (coupon_tail(m, static_cast<double>(mid)) < eps)
      hi = mid;
    else
      lo = mid + 1;
  }
  return lo;
}

struct CutoffRow {
  int m = 0;
  long long t_mix_eps = 0;
  long long t_mix_complement = 0;
  double ratio = 0.0;
  double lower_bound = 0.0;
  double upper_bound = 0.0;
};

// Cutoff experiment from exact coupon tails: ratio t_mix(eps)/t_mix(1-eps)
// with the theorem-proof sandwich at each m.
inline std::vector<CutoffRow> cutoff_experiment(const std::vector<int>& ms, double eps) {
  if (!(eps > 0.0 && eps < 0.5))
    throw std::invalid_argument("cutoff_experiment: eps must be in (0,1/2)");
  std::vector<CutoffRow> rows;
  for (int m : ms) {
    if (m < 3) throw std::invalid_argument("cutoff_experiment: m values must be >= 3");
    CutoffRow r;
    r.m = m;
    r.t_mix_eps = coupon_mixing_time(m, eps);
    r.t_mix_complement = coupon_mixing_time(m, 1.0 - eps);
    r.ratio = static_cast<double>(r.t_mix_eps) / static_cast<double>(r.t_mix_complement);
    double lm = std::log(m);
    r.lower_bound = (lm + std::log(1.0 - eps)) / (lm - std::log(1.0 - eps));
    r.upper_bound = (lm - std::log(eps)) / (lm + std::log(eps));
    rows.push_back(r);
  }
  return rows;
}

inline double reversal_mixing_lower_bound(double lambda, double eps) {
  if (!(lambda > 0.0 && lambda < 1.0))
    throw std::invalid_argument("reversal_mixing_lower_bound: lambda must be in (0,1)");
  if (!(eps > 0.0 && eps <= 0.5))
    throw std::invalid_argument("reversal_mixing_lower_bound: eps must be in (0,1/2]");
  return lambda / (1.0 - lambda) * std::log(1.0 / (2.0 * eps));
}

}  // namespace ulmw
