#include <catch2/catch_amalgamated.hpp>

#include "ulmw/local_chain.hpp"

using namespace ulmw;

TEST_CASE("stationary_row on small chains") {
  Eigen::MatrixXd flip(2, 2);
  flip << 0, 1, 1, 0;
  Eigen::VectorXd q = stationary_row(flip);
  REQUIRE(q(0) == Catch::Approx(0.5).margin(1e-12));
  REQUIRE(q(1) == Catch::Approx(0.5).margin(1e-12));

  Eigen::MatrixXd M(2, 2);
  M << 0.9, 0.1, 0.3, 0.7;  // stationary (3/4, 1/4)
  q = stationary_row(M);
  REQUIRE(q(0) == Catch::Approx(0.75).margin(1e-12));
  REQUIRE(q(1) == Catch::Approx(0.25).margin(1e-12));
  REQUIRE((M.transpose() * q - q).cwiseAbs().maxCoeff() <= 1e-12);

  Eigen::MatrixXd cyc(3, 3);
  cyc << 0, 1, 0, 0, 0, 1, 1, 0, 0;
  q = stationary_row(cyc);
  for (int i = 0; i < 3; ++i) REQUIRE(q(i) == Catch::Approx(1.0 / 3).margin(1e-12));

  Eigen::MatrixXd lop(2, 2);
  lop << 0.9, 0.1, 0.5, 0.5;  // stationary (5/6, 1/6)
  q = stationary_row(lop);
  REQUIRE(q(0) == Catch::Approx(5.0 / 6).margin(1e-12));
  REQUIRE(q(1) == Catch::Approx(1.0 / 6).margin(1e-12));

  Eigen::MatrixXd red = Eigen::MatrixXd::Identity(2, 2);
  REQUIRE_THROWS_AS(stationary_row(red), std::invalid_argument);
}

TEST_CASE("validate modes") {
  Graph g = complete_graph(3, false);
  LocalChainSpec spec = preset_uniform(g);
  REQUIRE(validate(g, spec, ValidateMode::strict).ok());
  REQUIRE(validate(g, spec, ValidateMode::simulation).ok());

  LocalChainSpec bad = spec;
  bad.M[0](0, 0) = 0.9;  // row no longer sums to one
  REQUIRE_FALSE(validate(g, bad, ValidateMode::strict).ok());
  REQUIRE_FALSE(validate(g, bad, ValidateMode::simulation).ok());

  LocalChainSpec badinit = spec;
  badinit.init[1] = 1;  // 1 is not an exit of vertex 1 in the loopless triangle
  REQUIRE_FALSE(validate(g, badinit, ValidateMode::strict).ok());

  // Reducible local chain: rejected strictly, admitted for simulation.
  Graph line = path_graph(4, true);
  LocalChainSpec ex = preset_excited(line, 0.2);
  REQUIRE_FALSE(validate(line, ex, ValidateMode::strict).ok());
  REQUIRE(validate(line, ex, ValidateMode::simulation).ok());
}

TEST_CASE("q system") {
  Graph g = complete_graph(3, false);
  QSystem q = build_q_system(g, preset_uniform(g));
  REQUIRE(q.q_of(0, 1) == Catch::Approx(0.5).margin(1e-12));
  REQUIRE(q.q_of(0, 2) == Catch::Approx(0.5).margin(1e-12));
  REQUIRE(q.q_of(0, 0) == 0.0);
  for (int i = 0; i < 3; ++i) REQUIRE(q.pi(i) == Catch::Approx(1.0 / 3).margin(1e-10));

  Graph notsc = make_graph(2, {{0, 1}, {1, 1}});
  REQUIRE_THROWS_AS(build_q_system(notsc, preset_uniform(notsc)), std::invalid_argument);
}

TEST_CASE("local time reversal") {
  Eigen::MatrixXd M(2, 2);
  M << 0.9, 0.1, 0.3, 0.7;
  Eigen::VectorXd q(2);
  q << 0.75, 0.25;
  Eigen::MatrixXd R = local_time_reversal(M, q);
  // Two-state chains are reversible, so the reversal is the chain itself.
  REQUIRE((R - M).cwiseAbs().maxCoeff() <= 1e-12);

  Eigen::MatrixXd cyc(3, 3);
  cyc << 0, 1, 0, 0, 0, 1, 1, 0, 0;
  Eigen::VectorXd u = Eigen::VectorXd::Constant(3, 1.0 / 3);
  Eigen::MatrixXd Rc = local_time_reversal(cyc, u);
  REQUIRE((Rc - cyc.transpose()).cwiseAbs().maxCoeff() <= 1e-12);

  Eigen::VectorXd qz(2);
  qz << 1.0, 0.0;
  REQUIRE_THROWS_AS(local_time_reversal(M, qz), std::invalid_argument);
}

TEST_CASE("local reversibility predicate") {
  Graph c4 = cycle_graph(4);
  REQUIRE(is_locally_reversible(preset_p_walk(c4, 0.3)));
  REQUIRE(is_locally_reversible(preset_uniform(complete_graph(4, true))));

  Graph k3 = complete_graph(3, false);
  LocalChainSpec spec = preset_uniform(k3);
  Eigen::MatrixXd cyc(2, 2);
  cyc << 0.2, 0.8, 0.6, 0.4;
  spec.M[0] = cyc;
  REQUIRE(is_locally_reversible(spec));  // 2-state chains stay reversible

  Graph k4 = complete_graph(4, false);
  LocalChainSpec s4 = preset_uniform(k4);
  Eigen::MatrixXd rot3(3, 3);
  rot3 << 0, 1, 0, 0, 0, 1, 1, 0, 0;
  s4.M[0] = rot3;
  REQUIRE_FALSE(is_locally_reversible(s4));
}

TEST_CASE("lambda uniformity witness") {
  Graph c4 = cycle_graph(4);
  LocalChainSpec pw = preset_p_walk(c4, 0.3);
  LambdaWitness w = is_locally_lambda_uniform(pw, 0.4);
  REQUIRE(w.ok);
  for (int v = 0; v < 4; ++v) {
    REQUIRE(w.f[v].size() == 2);
    // Witness is (1, -1) up to scale: opposite signs, equal magnitude.
    REQUIRE(w.f[v](0) * w.f[v](1) < 0.0);
    REQUIRE(std::abs(std::abs(w.f[v](0)) - std::abs(w.f[v](1))) <= 1e-9);
  }
  REQUIRE_FALSE(is_locally_lambda_uniform(pw, 0.5).ok);
  REQUIRE_FALSE(is_locally_lambda_uniform(preset_uniform(complete_graph(3, false)), 0.4).ok);
}

TEST_CASE("presets") {
  Graph c4 = cycle_graph(4);
  LocalChainSpec rotor = preset_rotor(c4);
  REQUIRE(rotor.M[0](0, 1) == 1.0);
  REQUIRE(rotor.M[0](0, 0) == 0.0);
  // The rotor matrix is periodic: strict mode reports it, simulation admits it.
  Diagnostics rd = validate(c4, rotor, ValidateMode::strict);
  REQUIRE_FALSE(rd.ok());
  REQUIRE(rd.joined().find("aperiodic") != std::string::npos);
  REQUIRE(validate(c4, rotor, ValidateMode::simulation).ok());
  REQUIRE_THROWS_AS(preset_rotor(path_graph(3)), std::invalid_argument);
  REQUIRE_THROWS_AS(preset_rotor(complete_graph(3, true)), std::invalid_argument);

  LocalChainSpec pw = preset_p_walk(c4, 0.3);
  REQUIRE(pw.M[2](0, 0) == Catch::Approx(0.7));
  REQUIRE(pw.M[2](0, 1) == Catch::Approx(0.3));
  REQUIRE_THROWS_AS(preset_p_walk(c4, 1.5), std::invalid_argument);

  Graph line = path_graph(4, true);
  LocalChainSpec ex = preset_excited(line, 0.2);
  // Interior vertex 1: exits {0,1,2}; from the self state the walk drifts right.
  int self = ex.exit_index(1, 1);
  int right = ex.exit_index(1, 2);
  int left = ex.exit_index(1, 0);
  REQUIRE(ex.M[1](self, right) == Catch::Approx(0.6));
  REQUIRE(ex.M[1](self, left) == Catch::Approx(0.4));
  REQUIRE(ex.M[1](self, self) == 0.0);
  REQUIRE(ex.M[1](left, right) == Catch::Approx(0.5));
  // End vertex 0: forced to move right.
  REQUIRE(ex.M[0](ex.exit_index(0, 0), ex.exit_index(0, 1)) == 1.0);
  REQUIRE(ex.init == std::vector<int>{0, 1, 2, 3});
  REQUIRE_THROWS_AS(preset_excited(path_graph(4, false), 0.2), std::invalid_argument);
  REQUIRE_THROWS_AS(preset_excited(line, 0.0), std::invalid_argument);

  Rng rng(3);
  Graph k4 = complete_graph(4, true);
  LocalChainSpec rnd = random_positive_spec(k4, rng);
  REQUIRE(validate(k4, rnd, ValidateMode::strict).ok());
  for (int x = 0; x < 4; ++x) {
    REQUIRE(rnd.M[x].minCoeff() > 0.0);
    for (int i = 0; i < 4; ++i) REQUIRE(rnd.M[x].row(i).sum() == Catch::Approx(1.0).margin(1e-12));
  }
}
