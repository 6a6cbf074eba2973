#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "ulmw/arbor.hpp"
#include "ulmw/local_chain.hpp"
#include "ulmw/rng.hpp"
#include "ulmw/total_chain.hpp"

namespace ulmw {

struct WalkState {
  int x = 0;
  Config rho;  // rho[v] = current state of the local chain at v
};

inline WalkState make_walk_state(const LocalChainSpec& spec, int x0 = 0) {
  WalkState st;
  st.x = x0;
  st.rho = spec.init;
  return st;
}

// One transition of the locally Markov walk: sample the next exit of the
// local chain at the current vertex and move the particle there.
inline int step(const Graph& g, const LocalChainSpec& spec, WalkState& state, Rng& rng) {
  int x = state.x;
  if (x < 0 || x >= g.m || state.rho.size() != static_cast<std::size_t>(g.m))
    throw std::domain_error("step: walk state does not match the graph");
  int si = spec.exit_index(x, state.rho[x]);
  if (si < 0) throw std::domain_error("step: configuration value at the particle is not an exit");
  // Inverse-CDF over the stored row in ascending neighbor order.
  int k = static_cast<int>(spec.S[x].size());
  double u = rng.next_double();
  double acc = 0.0;
  int yi = k - 1;
  for (int j = 0; j < k; ++j) {
    acc += spec.M[x](si, j);
    if (u < acc) {
      yi = j;
      break;
    }
  }
  int y = spec.S[x][yi];
  state.rho[x] = y;
  state.x = y;
  return y;
}

struct RunOptions {
  bool record_path = true;
  bool record_exits = true;
  bool check_post_cover = false;  // verify rho is a unicycle carrying x after cover
};

struct Trajectory {
  std::vector<int> xs;  // X_0..X_n (empty when path recording is off)
  std::vector<long long> visit_counts;              // N_n(x) over X_0..X_n
  std::vector<std::vector<int>> exit_history;       // L^x(k): successive exits taken from x
  std::vector<std::vector<long long>> visit_times;  // tau_k^x: visit times to x
  long long steps = 0;
  long long cover_time = -1;            // first n with all vertices visited
  long long post_cover_violations = 0;  // only meaningful when the check ran
  bool post_cover_checked = false;
  WalkState final_state;
};

inline Trajectory run(const Graph& g, const LocalChainSpec& spec, WalkState init,
                      long long n_steps, std::uint64_t seed, const RunOptions& opts = {}) {
  Diagnostics diag = validate(g, spec, ValidateMode::simulation);
  if (!diag.ok()) throw std::invalid_argument("run: invalid spec: " + diag.joined());
  if (n_steps < 0) throw std::invalid_argument("run: n_steps must be >= 0");
  Rng rng(seed);
  Trajectory traj;
  traj.steps = n_steps;
  traj.visit_counts.assign(g.m, 0);
  if (opts.record_exits) {
    traj.exit_history.assign(g.m, {});
    traj.visit_times.assign(g.m, {});
  }
  WalkState st = init;
  int uncovered = g.m;
  std::vector<char> seen(g.m, 0);
  std::vector<int> cycle_buf;
  for (long long n = 0; n <= n_steps; ++n) {
    if (opts.record_path) traj.xs.push_back(st.x);
    ++traj.visit_counts[st.x];
    if (!seen[st.x]) {
      seen[st.x] = 1;
      if (--uncovered == 0) traj.cover_time = n;
    }
    if (opts.check_post_cover && traj.cover_time >= 0) {
      traj.post_cover_checked = true;
      auto cycles = detail::functional_cycles(st.rho);
      bool on_cycle = false;
      if (cycles.size() == 1)
        for (int v : cycles[0])
          if (v == st.x) on_cycle = true;
      if (!on_cycle) ++traj.post_cover_violations;
    }
    if (n == n_steps) break;
    if (opts.record_exits) traj.visit_times[st.x].push_back(n);
    int from = st.x;
    int y = step(g, spec, st, rng);
    if (opts.record_exits) traj.exit_history[from].push_back(y);
  }
  // Visits with no recorded exit (the final position) still get their time.
  if (opts.record_exits) traj.visit_times[st.x].push_back(n_steps);
  traj.final_state = st;
  return traj;
}

// Replays the recorded exit histories and checks they reproduce the path.
inline bool replay_consistent(const Trajectory& traj) {
  if (traj.xs.empty() || traj.exit_history.empty()) return true;
  std::vector<std::size_t> k(traj.visit_counts.size(), 0);
  for (std::size_t n = 0; n + 1 < traj.xs.size(); ++n) {
    int x = traj.xs[n];
    if (k[x] >= traj.exit_history[x].size()) return false;
    if (traj.exit_history[x][k[x]++] != traj.xs[n + 1]) return false;
  }
  for (std::size_t x = 0; x < k.size(); ++x)
    if (k[x] != traj.exit_history[x].size()) return false;
  return true;
}

// Time average of a vertex function along the trajectory.
inline double ergodic_average(const Trajectory& traj, const std::vector<double>& f) {
  long long total = 0;
  for (long long c : traj.visit_counts) total += c;
  if (total == 0) throw std::invalid_argument("ergodic_average: empty trajectory");
  if (f.size() != traj.visit_counts.size())
    throw std::invalid_argument("ergodic_average: f has wrong length");
  double acc = 0.0;
  for (std::size_t x = 0; x < f.size(); ++x)
    acc += f[x] * static_cast<double>(traj.visit_counts[x]);
  return acc / static_cast<double>(total);
}

inline std::vector<double> visit_frequencies(const Trajectory& traj) {
  long long total = 0;
  for (long long c : traj.visit_counts) total += c;
  std::vector<double> freq(traj.visit_counts.size(), 0.0);
  if (total == 0) return freq;
  for (std::size_t x = 0; x < freq.size(); ++x)
    freq[x] = static_cast<double>(traj.visit_counts[x]) / static_cast<double>(total);
  return freq;
}

struct SingleStepResult {
  double conditional = 0.0;  // P(X_{n+1} = x | X_n = y), computed exactly
  double target = 0.0;       // q_y(x)
  double gap = 0.0;
};

// Exact conditional one-step distribution after n steps of the total chain,
// from a point mass on the initial walk state, against its limit q_y(x).
inline SingleStepResult single_step_convergence(const Graph& g, const LocalChainSpec& spec,
                                                int n, int y, int x,
                                                const WalkState* init = nullptr) {
  if (n < 0) throw std::invalid_argument("single_step_convergence: n must be >= 0");
  if (y < 0 || y >= g.m || x < 0 || x >= g.m)
    throw std::invalid_argument("single_step_convergence: vertex out of range");
  for (int v = 0; v < g.m; ++v)
    if (spec.M[v].minCoeff() <= 0.0)
      throw std::invalid_argument(
          "single_step_convergence: local entries must be positive (ergodic total chain)");
  FullChain fc = build_full_chain(g, spec);
  WalkState start = init ? *init : make_walk_state(spec);
  std::uint64_t code = 0;
  for (int v = 0; v < g.m; ++v) {
    int pos = spec.exit_index(v, start.rho[v]);
    if (pos < 0) throw std::invalid_argument("single_step_convergence: invalid initial rho");
    code += static_cast<std::uint64_t>(pos) * fc.stride[v];
  }
  Eigen::VectorXd v0 = Eigen::VectorXd::Zero(fc.P.n);
  v0(fc.state_id(start.x, code)) = 1.0;
  for (int k = 0; k < n; ++k) v0 = left_multiply(v0, fc.P);

  double mass = 0.0, hit = 0.0;
  for (int s = 0; s < fc.P.n; ++s) {
    if (fc.location(s) != y || v0(s) == 0.0) continue;
    mass += v0(s);
    for (const auto& [t, p] : fc.P.rows[s])
      if (fc.location(t) == x) hit += v0(s) * p;
  }
  if (mass <= 0.0)
    throw std::domain_error("single_step_convergence: P(X_n = y) is zero, conditional undefined");
  QSystem q = build_q_system(g, spec);
  SingleStepResult res;
  res.conditional = hit / mass;
  res.target = q.q_of(y, x);
  res.gap = std::abs(res.conditional - res.target);
  return res;
}

namespace detail {
inline void require_bidirectional(const Graph& g, const char* who) {
  if (!is_strongly_connected(g)) throw std::invalid_argument(std::string(who) + ": graph must be strongly connected");
  for (int x = 0; x < g.m; ++x)
    for (int y : g.out[x])
      if (y != x && !g.has_edge(y, x))
        throw std::invalid_argument(std::string(who) + ": graph must have bidirectional edges");
}
}  // namespace detail

// Exact sampler for the stationary law of the uniform unicycle walk on a
// bidirectional graph: start at a degree-biased vertex r, run the simple
// random walk to cover, take the first-entry tree oriented toward r, and
// attach an independent uniform root arrow.
inline UnicycleState sample_unicycle_aldous_broder(const Graph& g, Rng& rng) {
  detail::require_bidirectional(g, "sample_unicycle_aldous_broder");
  std::uint64_t total_deg = 0;
  for (int x = 0; x < g.m; ++x) total_deg += g.out[x].size();
  std::uint64_t u = rng.next_below(total_deg);
  int r = 0;
  for (int x = 0; x < g.m; ++x) {
    if (u < g.out[x].size()) {
      r = x;
      break;
    }
    u -= g.out[x].size();
  }
  Config rho(g.m, -1);
  std::vector<char> seen(g.m, 0);
  seen[r] = 1;
  int remaining = g.m - 1;
  int cur = r;
  while (remaining > 0) {
    const auto& nb = g.out[cur];
    int y = nb[rng.next_below(nb.size())];
    if (!seen[y]) {
      seen[y] = 1;
      rho[y] = cur;  // first entered from cur
      --remaining;
    }
    cur = y;
  }
  rho[r] = g.out[r][rng.next_below(g.out[r].size())];
  UnicycleState st;
  st.x = r;
  st.rho = rho;
  auto cycles = detail::functional_cycles(rho);
  st.cycle = cycles.front();
  return st;
}

inline UnicycleState sample_unicycle_aldous_broder(const Graph& g, std::uint64_t seed) {
  Rng rng(seed);
  return sample_unicycle_aldous_broder(g, rng);
}

// Literal last-exit construction read off a covering trajectory: walk to
// cover time C, step to X_{C+1} (the root), collect each other vertex's last
// exit as its arrow, and let the next step define the root arrow. Kept for
// comparison; its law is NOT the stationary one (on the triangle the root
// marginal from a fixed start is (1/2, 1/4, 1/4)).
inline UnicycleState sample_unicycle_backward(const Graph& g, Rng& rng, int start = 0) {
  detail::require_bidirectional(g, "sample_unicycle_backward");
  if (start < 0 || start >= g.m)
    throw std::invalid_argument("sample_unicycle_backward: bad start vertex");
  Config last_exit(g.m, -1);
  std::vector<char> seen(g.m, 0);
  seen[start] = 1;
  int remaining = g.m - 1;
  int cur = start;
  while (remaining > 0) {  // phase 0: walk until cover time C
    const auto& nb = g.out[cur];
    int y = nb[rng.next_below(nb.size())];
    last_exit[cur] = y;
    if (!seen[y]) {
      seen[y] = 1;
      --remaining;
    }
    cur = y;
  }
  // step C -> C+1 lands on the root
  int y = g.out[cur][rng.next_below(g.out[cur].size())];
  last_exit[cur] = y;
  int root = y;
  // step C+1 -> C+2 defines the root arrow
  int z = g.out[root][rng.next_below(g.out[root].size())];
  last_exit[root] = z;
  UnicycleState st;
  st.x = root;
  st.rho = last_exit;
  auto cycles = detail::functional_cycles(st.rho);
  st.cycle = cycles.front();
  return st;
}

}  // namespace ulmw
