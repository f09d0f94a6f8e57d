#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "absred/ss_io.hpp"
#include "absred/state_space.hpp"
#include "support/test_helpers.hpp"

using namespace absred;
using absred::testing::Rng;

namespace {

StateSpace one_state() {
  Matrix A(1, 1), B(1, 1), C(1, 1), D(1, 1);
  A << -1.0;
  B << 1.0;
  C << 1.0;
  D << 0.0;
  return StateSpace(A, B, C, D);
}

}  // namespace

TEST_CASE("eval_tf closed forms") {
  StateSpace g = one_state();
  // static gain 1/(0+1)
  CHECK(std::abs(eval_tf(g, Complex(0.0, 0.0))(0, 0) - 1.0) < 1e-15);
  // 1/(1+i) at omega = 1
  Complex expect = 1.0 / Complex(1.0, 1.0);
  CHECK(std::abs(eval_tf(g, Complex(0.0, 1.0))(0, 0) - expect) < 1e-15);
}

TEST_CASE("eval_tf matches column-by-column linear-solve oracle") {
  Rng rng(7);
  StateSpace g = testing::rand_stable(rng, 6, 2, 3, 0.05, 0.1, 50.0, true);
  for (double w : testing::log_omegas(1e-2, 1e3, 20)) {
    const Complex s(0.0, w);
    // Oracle: form (sI - A), solve per column of B.
    ComplexMatrix R = Complex(s) * ComplexMatrix::Identity(6, 6) - g.A.cast<Complex>();
    ComplexMatrix X(6, g.m());
    for (Eigen::Index j = 0; j < g.m(); ++j)
      X.col(j) = R.fullPivLu().solve(g.B.col(j).cast<Complex>().eval());
    ComplexMatrix expect = g.C.cast<Complex>() * X + g.D.cast<Complex>();
    CHECK((eval_tf(g, s) - expect).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("eval_tf signals poles") {
  StateSpace g = one_state();
  CHECK_THROWS_AS(eval_tf(g, Complex(-1.0, 0.0)), SingularResolvent);
}

TEST_CASE("eval_tf conjugate symmetry (real realization)") {
  Rng rng(11);
  StateSpace g = testing::rand_stable(rng, 5, 2, 2, 0.05, 0.1, 20.0, true);
  for (double w : testing::log_omegas(1e-1, 1e2, 10)) {
    Complex s(0.3, w);
    ComplexMatrix a = eval_tf(g, std::conj(s));
    ComplexMatrix b = eval_tf(g, s).conjugate();
    CHECK((a - b).norm() <= 1e-12 * std::max(1.0, b.norm()));
  }
}

TEST_CASE("is_stable basics") {
  Matrix A(1, 1), B(1, 1), C(1, 1), D(1, 1);
  A << -1.0;
  B << 1.0;
  C << 1.0;
  D << 0.0;
  CHECK(is_stable(StateSpace(A, B, C, D)));
  A << 0.0;
  CHECK_FALSE(is_stable(StateSpace(A, B, C, D), 1e-9));
}

TEST_CASE("is_stable invariant under similarity transforms") {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    StateSpace g = testing::rand_stable(rng, 6, 1, 1);
    Matrix T = testing::rand_matrix(rng, 6, 6);
    while (std::abs(T.determinant()) < 1e-3) T = testing::rand_matrix(rng, 6, 6);
    StateSpace h = g.transformed(T, Matrix(T.inverse()));
    CHECK(is_stable(g) == is_stable(h));
  }
}

TEST_CASE("frf matches eval_tf pointwise") {
  StateSpace g = one_state();
  FrequencyGrid grid({0.5, 1.0, 2.0});
  FrfData data = frf(g, grid);
  REQUIRE(data.values.size() == 3);
  for (std::size_t k = 0; k < 3; ++k)
    CHECK((data.values[k] - eval_tf(g, Complex(0.0, grid[k]))).norm() == 0.0);
}

TEST_CASE("frf handles empty-input systems") {
  StateSpace g(Matrix::Constant(1, 1, -1.0), Matrix(1, 0), Matrix::Constant(2, 1, 1.0),
               Matrix(2, 0));
  FrfData data = frf(g, FrequencyGrid({1.0, 2.0}));
  CHECK(data.values[0].rows() == 2);
  CHECK(data.values[0].cols() == 0);
}

TEST_CASE("frf equals eval_tf loop on random MIMO system") {
  Rng rng(5);
  StateSpace g = testing::rand_stable(rng, 8, 3, 2, 0.05, 0.1, 100.0, true);
  FrequencyGrid grid = FrequencyGrid::log_space(1e-2, 1e3, 40);
  FrfData data = frf(g, grid);
  for (std::size_t k = 0; k < grid.size(); ++k)
    CHECK((data.values[k] - eval_tf(g, Complex(0.0, grid[k]))).norm() == 0.0);
}

TEST_CASE("FrequencyGrid validation") {
  CHECK_THROWS_AS(FrequencyGrid(std::vector<double>{}), DimensionMismatch);
  CHECK_THROWS_AS(FrequencyGrid({1.0, 1.0}), DimensionMismatch);
  CHECK_THROWS_AS(FrequencyGrid({-1.0, 1.0}), DimensionMismatch);
  FrequencyGrid g = FrequencyGrid::log_space(2.0 * M_PI * 5.0, 2.0 * M_PI * 2000.0, 250);
  CHECK(g.size() == 250);
  CHECK(g[0] == 2.0 * M_PI * 5.0);
  CHECK(g[249] == 2.0 * M_PI * 2000.0);
}

TEST_CASE("StateSpace dimension validation") {
  CHECK_THROWS_AS(StateSpace(Matrix::Zero(2, 3), Matrix::Zero(2, 1), Matrix::Zero(1, 2),
                             Matrix::Zero(1, 1)),
                  DimensionMismatch);
  CHECK_THROWS_AS(StateSpace(Matrix::Zero(2, 2), Matrix::Zero(3, 1), Matrix::Zero(1, 2),
                             Matrix::Zero(1, 1)),
                  DimensionMismatch);
  CHECK_THROWS_AS(StateSpace(Matrix::Zero(2, 2), Matrix::Zero(2, 1), Matrix::Zero(1, 2),
                             Matrix::Zero(2, 2)),
                  DimensionMismatch);
}

TEST_CASE("statespace text format round-trips at 17 significant digits") {
  Rng rng(19);
  StateSpace g = testing::rand_stable(rng, 5, 2, 3, 0.05, 0.1, 10.0, true);
  std::stringstream ss;
  write_statespace(ss, g);
  StateSpace h = read_statespace(ss);
  CHECK(g.A == h.A);
  CHECK(g.B == h.B);
  CHECK(g.C == h.C);
  CHECK(g.D == h.D);
}

TEST_CASE("statespace text format tolerates comments and reports errors") {
  std::stringstream ss("# demo model\nss 1 1 1\n# A\n-1\n1\n1\n0\n");
  StateSpace g = read_statespace(ss);
  CHECK(g.n() == 1);
  CHECK(g.A(0, 0) == -1.0);

  std::stringstream bad("xx 1 1 1\n");
  CHECK_THROWS_AS(read_statespace(bad), ParseError);
  std::stringstream truncated("ss 2 1 1\n1 0 0 1\n");
  CHECK_THROWS_AS(read_statespace(truncated), ParseError);
}

TEST_CASE("compositions: series/parallel/append agree with pointwise algebra") {
  Rng rng(23);
  StateSpace g1 = testing::rand_stable(rng, 4, 2, 3, 0.05, 0.1, 10.0, true);
  StateSpace g2 = testing::rand_stable(rng, 3, 3, 2, 0.05, 0.1, 10.0, true);
  StateSpace g3 = testing::rand_stable(rng, 4, 2, 3, 0.05, 0.1, 10.0, true);
  for (double w : testing::log_omegas(0.05, 50.0, 9)) {
    const Complex s(0.0, w);
    CHECK(testing::rel_diff(eval_tf(series(g2, g1), s), eval_tf(g2, s) * eval_tf(g1, s)) <
          1e-12);
    CHECK(testing::rel_diff(eval_tf(parallel_add(g1, g3), s), eval_tf(g1, s) + eval_tf(g3, s)) <
          1e-12);
    ComplexMatrix d = eval_tf(parallel_sub(g1, g3), s);
    CHECK((d - (eval_tf(g1, s) - eval_tf(g3, s))).norm() < 1e-12 * std::max(1.0, d.norm()));
  }
}
