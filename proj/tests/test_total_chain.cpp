#include <catch2/catch_amalgamated.hpp>

#include "ulmw/sim.hpp"
#include "ulmw/total_chain.hpp"

using namespace ulmw;
using Catch::Matchers::WithinAbs;

namespace {

struct Model {
  Graph g;
  LocalChainSpec spec;
  QSystem q;
  UnicycleIndex index;
  SparseMatrix P;
  Eigen::VectorXd mu;
};

Model make_model(const Graph& g, const LocalChainSpec& spec) {
  Model m{g, spec, build_q_system(g, spec), enumerate_unicycles(g), SparseMatrix{}, {}};
  m.P = build_total_P(g, spec, m.index);
  m.mu = stationary_mu(m.index, m.q);
  return m;
}

Model uniform_model(const Graph& g) { return make_model(g, preset_uniform(g)); }

}  // namespace

TEST_CASE("worked example total chain matrix") {
  Model m = uniform_model(path_graph(3));
  Eigen::MatrixXd P = m.P.to_dense();
  Eigen::MatrixXd expected(4, 4);
  expected << 0, 1, 0, 0,  //
      0.5, 0, 0, 0.5,      //
      0.5, 0, 0, 0.5,      //
      0, 0, 1, 0;
  REQUIRE((P - expected).cwiseAbs().maxCoeff() == 0.0);

  for (int i = 0; i < 4; ++i) REQUIRE(m.P.row_sum(i) == Catch::Approx(1.0).margin(1e-15));
  REQUIRE((left_multiply(m.mu, m.P) - m.mu).cwiseAbs().maxCoeff() <= 1e-15);
  for (int i = 0; i < 4; ++i) REQUIRE(m.mu(i) == Catch::Approx(0.25).margin(1e-15));
}

TEST_CASE("decomposition P = B_loc A_CYC") {
  Model m = uniform_model(path_graph(3));
  Decomposition d = decompose(m.P, m.index);
  REQUIRE(d.block_diagonal);
  REQUIRE(d.reassembly_error == 0.0);
  Eigen::MatrixXd B = d.B_loc.to_dense();
  Eigen::MatrixXd expected(4, 4);
  expected << 1, 0, 0, 0,  //
      0, 0.5, 0.5, 0,      //
      0, 0.5, 0.5, 0,      //
      0, 0, 0, 1;
  REQUIRE((B - expected).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(d.blocks.size() == 3);
  std::vector<std::size_t> sizes;
  for (const auto& b : d.blocks) sizes.push_back(b.size());
  std::sort(sizes.begin(), sizes.end());
  REQUIRE(sizes == std::vector<std::size_t>{1, 1, 2});

  for (const Graph& g :
       {complete_graph(3, false), complete_graph(3, true), complete_graph(4, false),
        cycle_graph(4), cycle_graph(5)}) {
    Model mm = uniform_model(g);
    Decomposition dd = decompose(mm.P, mm.index);
    REQUIRE(dd.block_diagonal);
    REQUIRE(dd.reassembly_error == 0.0);
  }
}

TEST_CASE("stationary law and power iteration") {
  for (const Graph& g : {complete_graph(3, false), complete_graph(3, true), cycle_graph(5)}) {
    Model m = uniform_model(g);
    REQUIRE(m.mu.minCoeff() > 0.0);
    REQUIRE(m.mu.sum() == Catch::Approx(1.0).margin(1e-12));
    REQUIRE((left_multiply(m.mu, m.P) - m.mu).cwiseAbs().maxCoeff() <= 1e-12);
    Eigen::VectorXd nu = stationary_power_iteration(m.P);
    REQUIRE(0.5 * (nu - m.mu).cwiseAbs().sum() <= 1e-8);
  }
  // Uniform chains on loop-augmented complete graphs make mu uniform.
  Model m5 = uniform_model(complete_graph(4, true));
  for (int i = 0; i < m5.index.size(); ++i)
    REQUIRE(m5.mu(i) == Catch::Approx(1.0 / 256).margin(1e-15));
}

TEST_CASE("random positive chains keep mu invariant") {
  Rng rng(99);
  for (int trial = 0; trial < 10; ++trial) {
    int m = 2 + static_cast<int>(rng.next_below(4));
    Graph g = random_strongly_connected(m, 0.5, rng, trial % 2 == 0);
    LocalChainSpec spec = random_positive_spec(g, rng);
    Model mm = make_model(g, spec);
    REQUIRE((left_multiply(mm.mu, mm.P) - mm.mu).cwiseAbs().maxCoeff() <= 1e-10);
    Eigen::VectorXd nu = stationary_power_iteration(mm.P);
    REQUIRE(0.5 * (nu - mm.mu).cwiseAbs().sum() <= 1e-8);
    Decomposition d = decompose(mm.P, mm.index);
    REQUIRE(d.block_diagonal);
    REQUIRE(d.reassembly_error == 0.0);
  }
}

TEST_CASE("full chain and recurrent classes") {
  Graph g = path_graph(3);
  LocalChainSpec spec = preset_uniform(g);
  FullChain fc = build_full_chain(g, spec);
  REQUIRE(fc.P.n == 6);  // 1*2*1 configurations, 3 particle positions
  UnicycleIndex index = enumerate_unicycles(g);
  std::vector<int> rec = recurrent_states(fc.P);
  REQUIRE(rec.size() == 4);
  std::vector<int> expected;
  for (const auto& st : index.states) {
    std::uint64_t code = 0;
    for (int v = 0; v < g.m; ++v)
      code += static_cast<std::uint64_t>(spec.exit_index(v, st.rho[v])) * fc.stride[v];
    expected.push_back(fc.state_id(st.x, code));
  }
  std::sort(expected.begin(), expected.end());
  REQUIRE(rec == expected);

  Graph k3l = complete_graph(3, true);
  FullChain fc3 = build_full_chain(k3l, preset_uniform(k3l));
  REQUIRE(fc3.P.n == 81);
  REQUIRE(recurrent_states(fc3.P).size() == 27);

  REQUIRE_THROWS_AS(build_full_chain(complete_graph(8, true), preset_uniform(complete_graph(8, true))),
                    std::length_error);
}

TEST_CASE("time reversal and duality") {
  auto check_duality = [](const Model& m, double tol) {
    SparseMatrix Phat = time_reversal_total(m.index, m.spec, m.q);
    for (int i = 0; i < Phat.n; ++i)
      REQUIRE(Phat.row_sum(i) == Catch::Approx(1.0).margin(1e-12));
    Eigen::MatrixXd P = m.P.to_dense(), Ph = Phat.to_dense();
    double dual = 0.0;
    for (int i = 0; i < m.P.n; ++i)
      for (int j = 0; j < m.P.n; ++j)
        dual = std::max(dual, std::abs(m.mu(i) * P(i, j) - m.mu(j) * Ph(j, i)));
    REQUIRE(dual <= tol);
    return Phat;
  };
  Model m = uniform_model(path_graph(3));
  SparseMatrix Phat = check_duality(m, 1e-15);
  // The worked example's reversal swaps the middle cycle arrows.
  Eigen::MatrixXd Ph = Phat.to_dense();
  REQUIRE_THAT(Ph(0, 1), WithinAbs(0.5, 1e-15));
  REQUIRE_THAT(Ph(0, 2), WithinAbs(0.5, 1e-15));
  REQUIRE_THAT(Ph(1, 0), WithinAbs(1.0, 1e-15));

  check_duality(uniform_model(complete_graph(3, true)), 1e-15);
  check_duality(uniform_model(cycle_graph(5)), 1e-15);
  check_duality(make_model(cycle_graph(4), preset_p_walk(cycle_graph(4), 0.3)), 1e-15);

  Rng rng(31);
  for (int trial = 0; trial < 5; ++trial) {
    Graph g = random_strongly_connected(4, 0.5, rng, true);
    Model mm = make_model(g, random_positive_spec(g, rng));
    check_duality(mm, 1e-14);
  }
}

TEST_CASE("reversibilisations and local blocks") {
  for (const Graph& g : {path_graph(3), complete_graph(3, true), cycle_graph(4)}) {
    Model m = uniform_model(g);
    SparseMatrix Phat = time_reversal_total(m.index, m.spec, m.q);
    auto [M2, A2] = reversibilisations(m.P, Phat);
    // Both reversibilisations preserve mu.
    REQUIRE((left_multiply(m.mu, M2) - m.mu).cwiseAbs().maxCoeff() <= 1e-14);
    REQUIRE((left_multiply(m.mu, A2) - m.mu).cwiseAbs().maxCoeff() <= 1e-14);
    // M is mu-reversible: mu_i M_ij = mu_j M_ji.
    Eigen::MatrixXd Md = M2.to_dense();
    double rev = 0.0;
    for (int i = 0; i < M2.n; ++i)
      for (int j = 0; j < M2.n; ++j)
        rev = std::max(rev, std::abs(m.mu(i) * Md(i, j) - m.mu(j) * Md(j, i)));
    REQUIRE(rev <= 1e-14);
    // M = B_loc * B_hat exactly: both sides sum the same local products.
    Decomposition d = decompose(m.P, m.index);
    SparseMatrix Bhat = reversal_local_blocks(Phat, m.index);
    SparseMatrix BB = sparse_product(d.B_loc, Bhat);
    REQUIRE((Md - BB.to_dense()).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("product eigenvector for the p-walk") {
  Graph c4 = cycle_graph(4);
  Model m = make_model(c4, preset_p_walk(c4, 0.3));
  ProductEigenvector pe = product_eigenvector(m.spec, 0.4, m.index, m.P);
  REQUIRE(pe.residual <= 1e-10);
  SparseMatrix Phat = time_reversal_total(m.index, m.spec, m.q);
  ProductEigenvector pe_hat = product_eigenvector(m.spec, 0.4, m.index, Phat);
  REQUIRE(pe_hat.residual <= 1e-10);
  auto [M2, A2] = reversibilisations(m.P, Phat);
  ProductEigenvector pe_add = product_eigenvector(m.spec, 0.4, m.index, A2);
  REQUIRE(pe_add.residual <= 1e-10);
  // Against the multiplicative reversibilisation the eigenvalue squares.
  Eigen::VectorXd fM = left_multiply(pe.f, M2);
  REQUIRE((fM - 0.16 * pe.f).cwiseAbs().maxCoeff() <= 1e-10);

  REQUIRE_THROWS_AS(product_eigenvector(m.spec, 0.5, m.index, m.P), std::invalid_argument);
}

TEST_CASE("sparse helpers agree with dense algebra") {
  Model m = uniform_model(complete_graph(3, false));
  SparseMatrix Phat = time_reversal_total(m.index, m.spec, m.q);
  Eigen::MatrixXd P = m.P.to_dense(), Ph = Phat.to_dense();
  REQUIRE((sparse_product(m.P, Phat).to_dense() - P * Ph).cwiseAbs().maxCoeff() <= 1e-15);
  REQUIRE((sparse_average(m.P, Phat).to_dense() - 0.5 * (P + Ph)).cwiseAbs().maxCoeff() <= 1e-15);
  Eigen::VectorXd v = Eigen::VectorXd::Random(m.P.n).cwiseAbs();
  v /= v.sum();
  REQUIRE((left_multiply(v, m.P) - (v.transpose() * P).transpose()).cwiseAbs().maxCoeff() <= 1e-15);
}
