#include <algorithm>
#include <cmath>

#include <catch2/catch_amalgamated.hpp>

#include "ulmw/sim.hpp"

using namespace ulmw;

namespace {

void check_invariants(const Trajectory& traj) {
  long long total = 0;
  for (long long c : traj.visit_counts) total += c;
  REQUIRE(total == traj.steps + 1);
  REQUIRE(traj.xs.size() == static_cast<std::size_t>(traj.steps + 1));
  for (std::size_t x = 0; x < traj.visit_counts.size(); ++x) {
    REQUIRE(traj.visit_times[x].size() ==
            static_cast<std::size_t>(traj.visit_counts[x]));
    std::size_t exits = traj.exit_history[x].size();
    std::size_t expected =
        traj.visit_counts[x] - (traj.final_state.x == static_cast<int>(x) ? 1 : 0);
    REQUIRE(exits == expected);
    // The k-th exit from x is the successor of the k-th visit to x.
    for (std::size_t k = 0; k < exits; ++k) {
      long long n = traj.visit_times[x][k];
      REQUIRE(traj.xs[n] == static_cast<int>(x));
      REQUIRE(traj.xs[n + 1] == traj.exit_history[x][k]);
    }
  }
}

}  // namespace

TEST_CASE("trajectory bookkeeping invariants") {
  Graph g = complete_graph(4, true);
  Rng seeder(2024);
  LocalChainSpec spec = random_positive_spec(g, seeder);
  Trajectory traj = run(g, spec, make_walk_state(spec), 1000, 42);
  check_invariants(traj);
  REQUIRE(replay_consistent(traj));

  Trajectory tampered = traj;
  tampered.exit_history[traj.xs[0]][0] ^= 1;
  REQUIRE_FALSE(replay_consistent(tampered));
}

TEST_CASE("same seed, same trajectory") {
  Graph g = complete_graph(3, true);
  LocalChainSpec spec = preset_uniform(g);
  Trajectory a = run(g, spec, make_walk_state(spec), 500, 7);
  Trajectory b = run(g, spec, make_walk_state(spec), 500, 7);
  REQUIRE(a.xs == b.xs);
  REQUIRE(a.exit_history == b.exit_history);
  REQUIRE(a.final_state.x == b.final_state.x);
  REQUIRE(a.final_state.rho == b.final_state.rho);
  Trajectory c = run(g, spec, make_walk_state(spec), 500, 8);
  REQUIRE(a.xs != c.xs);
}

TEST_CASE("rotor exits alternate deterministically") {
  Graph c4 = cycle_graph(4);
  LocalChainSpec rotor = preset_rotor(c4);
  Trajectory traj = run(c4, rotor, make_walk_state(rotor), 400, 11);
  check_invariants(traj);
  for (int x = 0; x < 4; ++x) {
    const auto& ex = traj.exit_history[x];
    for (std::size_t k = 0; k + 1 < ex.size(); ++k) REQUIRE(ex[k] != ex[k + 1]);
  }
}

TEST_CASE("forced moves on the path") {
  Graph g = path_graph(3);
  LocalChainSpec spec = preset_uniform(g);
  Trajectory traj = run(g, spec, make_walk_state(spec, 0), 200, 3);
  REQUIRE(traj.xs[0] == 0);
  REQUIRE(traj.xs[1] == 1);  // vertex 0 has a single exit
  for (std::size_t n = 0; n + 1 < traj.xs.size(); ++n)
    REQUIRE(std::abs(traj.xs[n + 1] - traj.xs[n]) == 1);
}

TEST_CASE("zero-step run") {
  Graph g = path_graph(3);
  LocalChainSpec spec = preset_uniform(g);
  Trajectory traj = run(g, spec, make_walk_state(spec, 1), 0, 0);
  REQUIRE(traj.xs == std::vector<int>{1});
  REQUIRE(traj.visit_counts == std::vector<long long>{0, 1, 0});
  REQUIRE(traj.exit_history[1].empty());
  REQUIRE(traj.visit_times[1] == std::vector<long long>{0});
  REQUIRE(traj.cover_time == -1);
  REQUIRE_THROWS_AS(run(g, spec, make_walk_state(spec), -1, 0), std::invalid_argument);
}

TEST_CASE("exit frequencies follow the local chain") {
  Graph g = complete_graph(3, true);
  LocalChainSpec spec = preset_uniform(g);
  Trajectory traj = run(g, spec, make_walk_state(spec), 30000, 3);
  check_invariants(traj);
  for (int x = 0; x < 3; ++x) {
    const auto& ex = traj.exit_history[x];
    REQUIRE(ex.size() > 5000);
    for (int y = 0; y < 3; ++y) {
      double freq =
          static_cast<double>(std::count(ex.begin(), ex.end(), y)) / static_cast<double>(ex.size());
      REQUIRE(freq == Catch::Approx(1.0 / 3.0).margin(0.02));
    }
  }
}

TEST_CASE("ergodic averages") {
  Graph g = path_graph(3);
  LocalChainSpec spec = preset_uniform(g);
  Trajectory traj = run(g, spec, make_walk_state(spec), 100000, 5);
  REQUIRE(ergodic_average(traj, {2.5, 2.5, 2.5}) == 2.5);
  // pi = (1/4, 1/2, 1/4); the middle vertex is hit every other step.
  REQUIRE(ergodic_average(traj, {0.0, 1.0, 0.0}) == Catch::Approx(0.5).margin(0.01));
  std::vector<double> freq = visit_frequencies(traj);
  REQUIRE(freq[0] == Catch::Approx(0.25).margin(0.02));
  REQUIRE(freq[1] == Catch::Approx(0.5).margin(0.02));
  REQUIRE(freq[2] == Catch::Approx(0.25).margin(0.02));
  REQUIRE_THROWS_AS(ergodic_average(traj, {1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("after covering, the configuration is a unicycle carrying the particle") {
  Graph g = complete_graph(3, true);
  LocalChainSpec spec = preset_uniform(g);
  RunOptions opts;
  opts.check_post_cover = true;
  Trajectory traj = run(g, spec, make_walk_state(spec), 10000, 17, opts);
  REQUIRE(traj.cover_time >= 2);
  REQUIRE(traj.post_cover_checked);
  REQUIRE(traj.post_cover_violations == 0);
}

TEST_CASE("single-step conditionals converge to q") {
  Graph g = complete_graph(3, true);
  LocalChainSpec uniform = preset_uniform(g);
  // Identical rows make the conditional exact at every n.
  SingleStepResult r = single_step_convergence(g, uniform, 500, 1, 2);
  REQUIRE(r.target == Catch::Approx(1.0 / 3.0).margin(1e-15));
  REQUIRE(r.gap <= 1e-12);

  Rng seeder(123);
  LocalChainSpec rnd = random_positive_spec(g, seeder);
  SingleStepResult rr = single_step_convergence(g, rnd, 500, 1, 2);
  REQUIRE(rr.gap <= 1e-12);

  // At n = 0 the conditional is the local row at the initial state.
  WalkState init = make_walk_state(rnd, 0);
  int pos = rnd.exit_index(0, init.rho[0]);
  for (int x = 0; x < 3; ++x) {
    SingleStepResult r0 = single_step_convergence(g, rnd, 0, 0, x, &init);
    REQUIRE(r0.conditional ==
            Catch::Approx(rnd.M[0](pos, rnd.exit_index(0, x))).margin(1e-15));
  }
  // Conditioning on an unreachable position is undefined.
  REQUIRE_THROWS_AS(single_step_convergence(g, rnd, 0, 1, 2, &init), std::domain_error);
  // Chains with zero entries are rejected.
  Graph c4 = cycle_graph(4);
  REQUIRE_THROWS_AS(single_step_convergence(c4, preset_rotor(c4), 10, 0, 1),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(single_step_convergence(g, rnd, 5, 7, 0), std::invalid_argument);
}

TEST_CASE("forward sampler draws the stationary law") {
  Graph k2 = complete_graph(2, false);
  UnicycleIndex i2 = enumerate_unicycles(k2);
  REQUIRE(i2.size() == 2);
  Rng rng2(5);
  int count0 = 0;
  const int n2 = 2000;
  for (int s = 0; s < n2; ++s) {
    UnicycleState st = sample_unicycle_aldous_broder(k2, rng2);
    REQUIRE(i2.find(st.x, st.rho) >= 0);
    if (st.x == 0) ++count0;
  }
  REQUIRE(static_cast<double>(count0) / n2 == Catch::Approx(0.5).margin(0.035));

  Graph path = path_graph(3);
  UnicycleIndex ip = enumerate_unicycles(path);
  std::vector<int> counts(ip.size(), 0);
  Rng rngp(9);
  const int np = 4000;
  for (int s = 0; s < np; ++s) {
    UnicycleState st = sample_unicycle_aldous_broder(path, rngp);
    int id = ip.find(st.x, st.rho);
    REQUIRE(id >= 0);
    ++counts[id];
  }
  for (int c : counts)
    REQUIRE(static_cast<double>(c) / np == Catch::Approx(0.25).margin(0.033));

  // chi-square on the triangle: 18 states, df = 17, 1% critical value 33.409.
  Graph k3 = complete_graph(3, false);
  UnicycleIndex i3 = enumerate_unicycles(k3);
  std::vector<int> c3(i3.size(), 0);
  const int n3 = 18000;
  Rng rng3(11);
  for (int s = 0; s < n3; ++s) {
    UnicycleState st = sample_unicycle_aldous_broder(k3, rng3);
    ++c3[i3.find(st.x, st.rho)];
  }
  double expected = static_cast<double>(n3) / i3.size();
  double chi2 = 0.0;
  for (int c : c3) chi2 += (c - expected) * (c - expected) / expected;
  REQUIRE(chi2 < 33.409);

  REQUIRE(sample_unicycle_aldous_broder(k3, std::uint64_t{4}).rho.size() == 3);
  Graph directed = make_graph(3, {{0, 1}, {1, 2}, {2, 0}});
  REQUIRE_THROWS_AS(sample_unicycle_aldous_broder(directed, std::uint64_t{1}),
                    std::invalid_argument);
}

TEST_CASE("backward last-exit sampler is biased toward its start") {
  Graph k3 = complete_graph(3, false);
  UnicycleIndex i3 = enumerate_unicycles(k3);
  Rng rng(21);
  const int n = 30000;
  std::vector<int> root_counts(3, 0);
  for (int s = 0; s < n; ++s) {
    UnicycleState st = sample_unicycle_backward(k3, rng, 0);
    REQUIRE(i3.find(st.x, st.rho) >= 0);
    ++root_counts[st.x];
  }
  REQUIRE(static_cast<double>(root_counts[0]) / n == Catch::Approx(0.5).margin(0.02));
  REQUIRE(static_cast<double>(root_counts[1]) / n == Catch::Approx(0.25).margin(0.02));
  REQUIRE(static_cast<double>(root_counts[2]) / n == Catch::Approx(0.25).margin(0.02));
  REQUIRE_THROWS_AS(sample_unicycle_backward(k3, rng, 5), std::invalid_argument);
}

TEST_CASE("run validates its inputs") {
  Graph g = complete_graph(3, true);
  LocalChainSpec bad = preset_uniform(g);
  bad.M[0](0, 0) = 0.9;  // break row-stochasticity
  REQUIRE_THROWS_AS(run(g, bad, make_walk_state(bad), 10, 0), std::invalid_argument);

  LocalChainSpec spec = preset_uniform(g);
  RunOptions slim;
  slim.record_path = false;
  Trajectory t = run(g, spec, make_walk_state(spec), 50, 1, slim);
  REQUIRE(t.xs.empty());
  REQUIRE(replay_consistent(t));
  long long total = 0;
  for (long long c : t.visit_counts) total += c;
  REQUIRE(total == 51);
}
