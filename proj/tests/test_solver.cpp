#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>

#include "accord/linalg.hpp"
#include "accord/rng.hpp"
#include "accord/selection.hpp"
#include "accord/solver.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace accord;
using accord::testing::random_data;
using accord::testing::random_sparse;
using accord::testing::random_spd;

namespace {

// Dense reference for f: -log det Omega_D + (1/2) tr(Omega^T Omega S) + lambda ||Omega||_1.
double dense_objective(const Eigen::MatrixXd& omega, const Eigen::MatrixXd& s, double lambda) {
  double logs = 0.0;
  for (Index i = 0; i < omega.rows(); ++i) logs -= std::log(omega(i, i));
  return logs + 0.5 * (omega.transpose() * omega * s).trace() + lambda * omega.cwiseAbs().sum();
}

double dense_g(const Eigen::MatrixXd& omega, const Eigen::MatrixXd& s) {
  return 0.5 * (omega.transpose() * omega * s).trace();
}

DenseData unit_variance_1d() {
  Eigen::MatrixXd x(2, 1);
  x << 1, -1;
  return center_columns(x);
}

SolverConfig config(double lambda, StepMode mode, double tol = 1e-10) {
  SolverConfig c;
  c.penalty = PenaltyPolicy::uniform(lambda);
  c.step_mode = mode;
  c.tol = tol;
  c.max_iter = 100000;
  return c;
}

}  // namespace

// ---------------------------------------------------------------- objective

TEST(Objective, IdentityGivesHalfTraceOfSPlusLambdaP) {
  const auto d = random_data(9, 6, 1);
  const double lambda = 0.3;
  const double expect = 0.5 * gram(d).trace() + lambda * 6;
  EXPECT_NEAR(objective(SparseSquare::identity(6), d, PenaltyPolicy::uniform(lambda)), expect, 1e-12);
}

TEST(Objective, HandExample) {
  DenseData d;
  d.values = Eigen::MatrixXd::Identity(2, 2);
  EXPECT_DOUBLE_EQ(objective(SparseSquare::identity(2), d, PenaltyPolicy::uniform(0.0)), 0.5);
}

TEST(Objective, MatchesDenseFormula) {
  const auto d = random_data(6, 4, 2);
  const auto omega = random_sparse(4, 0.6, 3);
  const double lambda = 0.2;
  EXPECT_NEAR(objective(omega, d, PenaltyPolicy::uniform(lambda)), dense_objective(omega.to_dense(), gram(d), lambda),
              1e-12);
}

TEST(Objective, NonPositiveDiagonalIsOutsideDomain) {
  const auto d = random_data(6, 3, 4);
  auto omega = SparseSquare::identity(3);
  omega.values()[1] = 0.0;
  EXPECT_TRUE(std::isinf(objective(omega, d, PenaltyPolicy::uniform(0.1))));
  omega.values()[1] = -2.0;
  EXPECT_TRUE(std::isinf(objective(omega, d, PenaltyPolicy::uniform(0.1))));
}

// ---------------------------------------------------------------- gradient

TEST(Gradient, IdentityReturnsS) {
  const auto d = random_data(8, 5, 5);
  EXPECT_LE(accord::testing::rel_frobenius(gradient_g(SparseSquare::identity(5), d), gram(d)), 1e-14);
}

TEST(Gradient, DiagonalOmegaScalesRows) {
  const auto d = random_data(8, 5, 6);
  const std::vector<double> diag{0.5, 1.0, 2.0, 3.0, 0.25};
  const auto g = gradient_g(SparseSquare::diagonal(diag), d);
  const auto s = gram(d);
  for (Index i = 0; i < 5; ++i) EXPECT_LE((g.row(i) - diag[static_cast<std::size_t>(i)] * s.row(i)).norm(), 1e-13);
}

TEST(Gradient, MatchesCentralFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto d = random_data(7, 10, 100 + seed);
    const auto omega = random_sparse(10, 0.3, 200 + seed);
    const auto s = gram(d);
    const Eigen::MatrixXd base = omega.to_dense();
    const double h = 1e-6;
    Eigen::MatrixXd fd(10, 10);
    for (Index i = 0; i < 10; ++i) {
      for (Index j = 0; j < 10; ++j) {
        Eigen::MatrixXd up = base, dn = base;
        up(i, j) += h;
        dn(i, j) -= h;
        fd(i, j) = (dense_g(up, s) - dense_g(dn, s)) / (2 * h);
      }
    }
    EXPECT_LE(accord::testing::rel_frobenius(gradient_g(omega, d), fd), 1e-5) << "seed " << seed;
  }
}

TEST(Gradient, DimensionMismatchThrows) {
  EXPECT_THROW(gradient_g(SparseSquare::identity(3), random_data(5, 4, 1)), UsageError);
}

// ---------------------------------------------------------------- prox

TEST(Prox, DiagonalHandValues) {
  EXPECT_DOUBLE_EQ(prox_diagonal(0.0, 1.0, 0.0), 1.0);
  EXPECT_NEAR(prox_diagonal(3.0, 1.0, 1.0), 2.414213562373095, 1e-15);
}

TEST(Prox, SoftThresholdHandValues) {
  EXPECT_NEAR(soft_threshold(1.2, 0.5), 0.7, 1e-15);
  EXPECT_EQ(soft_threshold(-0.3, 0.5), 0.0);
  EXPECT_NEAR(soft_threshold(-1.2, 0.5), -0.7, 1e-15);
}

TEST(Prox, MaskedEntryIsExactlyZero) {
  EXPECT_EQ(prox_entry(false, 123.0, 1.0, 0.0, false), 0.0);
  EXPECT_GT(prox_entry(true, -1e6, 1.0, 5.0, false), 0.0);
}

TEST(Prox, DiagonalIsPositiveForExtremeInput) {
  for (double y : {-1e12, -1e3, -1.0, 0.0, 1e-300, 1e12}) {
    EXPECT_GT(prox_diagonal(y, 0.1, 3.0), 0.0) << y;
  }
}

TEST(Prox, DiagonalMatchesGoldenSection) {
  Rng rng(7);
  for (int k = 0; k < 100; ++k) {
    const double y = rng.uniform(-5.0, 5.0);
    const double tau = std::exp(rng.uniform(-4.0, 2.0));
    const double lambda = rng.uniform(0.0, 2.0);
    EXPECT_NEAR(prox_diagonal(y, tau, lambda), accord::testing::golden_prox(y, tau, lambda), 1e-10) << y << ' ' << tau << ' ' << lambda;
  }
}

TEST(Prox, StationaryPointIsFixed) {
  // 1-D: w* solves -1/w + s w + lambda = 0; a forward step from w* followed
  // by the prox must return w*.
  Rng rng(8);
  for (int k = 0; k < 50; ++k) {
    const double s = rng.uniform(0.1, 4.0), lambda = rng.uniform(0.0, 1.0), tau = rng.uniform(0.05, 1.0);
    const double w = (-lambda + std::sqrt(lambda * lambda + 4 * s)) / (2 * s);
    EXPECT_NEAR(prox_diagonal(w - tau * s * w, tau, lambda), w, 1e-12);
  }
}

// ---------------------------------------------------------------- solve

TEST(Solve, OneDimensionalUnpenalized) {
  auto d = unit_variance_1d();
  const auto fit = solve(d, config(0.0, StepMode::Backtracking));
  ASSERT_TRUE(fit.converged);
  EXPECT_NEAR(fit.omega.diag(0), 1.0, 1e-9);
}

TEST(Solve, OneDimensionalPenalized) {
  auto d = unit_variance_1d();
  for (auto mode : {StepMode::Fixed, StepMode::Backtracking}) {
    const auto fit = solve(d, config(0.5, mode));
    ASSERT_TRUE(fit.converged);
    EXPECT_NEAR(fit.omega.diag(0), 0.7807764064044151, 1e-8);
  }
}

TEST(Solve, LargeLambdaGivesPerCoordinateDiagonal) {
  auto d = random_data(30, 8, 9);
  const auto s = gram(d);
  const double lambda = 10.0 * max_offdiag_covariance(d) + 1.0;
  const auto fit = solve(d, config(lambda, StepMode::Backtracking));
  ASSERT_TRUE(fit.converged);
  EXPECT_EQ(fit.omega.offdiag_nnz(), 0);
  for (Index i = 0; i < 8; ++i) {
    const double sii = s(i, i);
    EXPECT_NEAR(fit.omega.diag(i), (-lambda + std::sqrt(lambda * lambda + 4 * sii)) / (2 * sii), 1e-8);
  }
}

TEST(Solve, FixedAndBacktrackingAgree) {
  auto d = random_data(25, 15, 10);
  const auto a = solve(d, config(0.15, StepMode::Fixed, 1e-12));
  const auto b = solve(d, config(0.15, StepMode::Backtracking, 1e-12));
  ASSERT_TRUE(a.converged && b.converged);
  EXPECT_LE((a.omega.to_dense() - b.omega.to_dense()).norm(), 1e-6);
}

TEST(Solve, ObjectiveTraceIsMonotone) {
  for (auto mode : {StepMode::Fixed, StepMode::Backtracking}) {
    auto d = random_data(20, 30, 11);
    const auto fit = solve(d, config(0.1, mode, 1e-9));
    for (std::size_t t = 1; t < fit.objective_trace.size(); ++t) {
      const double prev = fit.objective_trace[t - 1];
      EXPECT_LE(fit.objective_trace[t], prev + 1e-12 * std::abs(prev)) << "t=" << t;
    }
    EXPECT_TRUE(fit.omega.has_positive_diagonal());
  }
}

TEST(Solve, TraceStartsAtObjectiveOfInitialIterate) {
  auto d = random_data(12, 5, 12);
  const auto fit = solve(d, config(0.2, StepMode::Backtracking));
  EXPECT_NEAR(fit.objective_trace.front(), 0.5 * gram(d).trace() + 0.2 * 5, 1e-12);
  EXPECT_NEAR(fit.objective_trace.back(), objective(fit.omega, d, PenaltyPolicy::uniform(0.2)), 1e-10);
}

TEST(Solve, KktCertifiesConvergedSolution) {
  auto d = random_data(40, 20, 13);
  const auto fit = solve(d, config(0.2, StepMode::Backtracking, 1e-10));
  ASSERT_TRUE(fit.converged);
  EXPECT_LE(fit.kkt_residual, 1e-6);
  EXPECT_NEAR(kkt_residual(fit.omega, d, PenaltyPolicy::uniform(0.2)), fit.kkt_residual, 1e-12);
}

TEST(Solve, WarmStartConvergesToSameEstimate) {
  auto d = random_data(30, 12, 14);
  const auto cold = solve(d, config(0.1, StepMode::Backtracking, 1e-12));
  auto warm_cfg = config(0.1, StepMode::Backtracking, 1e-12);
  warm_cfg.warm_start = random_spd(12, 0.4, 15);
  const auto warm = solve(d, warm_cfg);
  ASSERT_TRUE(cold.converged && warm.converged);
  EXPECT_LE((cold.omega.to_dense() - warm.omega.to_dense()).norm(), 1e-6);
}

TEST(Solve, MatrixFreePathMatchesDensePath) {
  auto d = random_data(10, 40, 16);  // n < p/4 selects the matrix-free path
  auto dense_cfg = config(0.2, StepMode::Backtracking, 1e-11);
  dense_cfg.two_step_ratio = 0.0;
  auto free_cfg = dense_cfg;
  free_cfg.two_step_ratio = 0.25;
  free_cfg.block_rows = 7;
  const auto a = solve(d, dense_cfg);
  const auto b = solve(d, free_cfg);
  ASSERT_TRUE(a.converged && b.converged);
  EXPECT_LE((a.omega.to_dense() - b.omega.to_dense()).norm(), 1e-8);
  EXPECT_LE(b.kkt_residual, 1e-6);
}

TEST(Solve, WorkerCountDoesNotChangeEstimate) {
  auto d = random_data(30, 24, 17);
  auto cfg = config(0.15, StepMode::Backtracking, 1e-10);
  const auto serial = solve(d, cfg);
  cfg.workers = 3;
  const auto par = solve(d, cfg);
  EXPECT_EQ(serial.iterations, par.iterations);
  EXPECT_LE((serial.omega.to_dense() - par.omega.to_dense()).norm(), 1e-12);
}

TEST(Solve, MaxIterReturnsPartialResult) {
  auto d = random_data(20, 10, 18);
  auto cfg = config(0.05, StepMode::Fixed, 1e-14);
  cfg.max_iter = 3;
  const auto fit = solve(d, cfg);
  EXPECT_FALSE(fit.converged);
  EXPECT_EQ(fit.iterations, 3);
  EXPECT_EQ(fit.objective_trace.size(), 4u);
}

TEST(Solve, RejectsInvalidConfig) {
  auto d = random_data(5, 3, 19);
  auto cfg = config(0.1, StepMode::Backtracking);
  cfg.beta = 0.0;
  EXPECT_THROW(solve(d, cfg), UsageError);
  cfg = config(0.1, StepMode::Backtracking);
  cfg.tol = 0.0;
  EXPECT_THROW(solve(d, cfg), UsageError);
  cfg = config(0.1, StepMode::Backtracking);
  cfg.tau0 = -1.0;
  EXPECT_THROW(solve(d, cfg), UsageError);
}

TEST(Solve, MaskedPenaltyKeepsOffSupportExactlyZero) {
  auto d = random_data(40, 10, 20);
  const auto support = SparseSquare::from_triplets(10, {{0, 1, 1.0}, {3, 2, 1.0}, {9, 4, 1.0}});
  auto cfg = config(0.0, StepMode::Backtracking, 1e-11);
  cfg.penalty = PenaltyPolicy::masked(support, 0.0);
  const auto fit = solve(d, cfg);
  ASSERT_TRUE(fit.converged);
  for (Index i = 0; i < 10; ++i) {
    for (auto j : fit.omega.row_cols(i)) {
      if (j != i) {
        EXPECT_TRUE(support.contains(i, j)) << i << "," << j;
      }
    }
  }
  EXPECT_LE(fit.kkt_residual, 1e-6);
}

// ---------------------------------------------------------------- KKT

TEST(Kkt, ExactOneDimensionalSolution) {
  Eigen::MatrixXd x(2, 1);
  x << 2, -2;  // s = 4
  const auto d = center_columns(x);
  const auto omega = SparseSquare::diagonal(std::vector<double>{0.5});
  EXPECT_NEAR(kkt_residual(omega, d, PenaltyPolicy::uniform(0.0)), 0.0, 1e-15);
}

TEST(Kkt, IdentityAgainstIdentityCovariance) {
  DenseData d;
  d.values = std::sqrt(2.0) * Eigen::MatrixXd::Identity(2, 2);  // S = I
  EXPECT_NEAR(kkt_residual(SparseSquare::identity(2), d, PenaltyPolicy::uniform(0.0)), 0.0, 1e-15);
}

// ---------------------------------------------------------------- T, T^-1, rho

TEST(Transform, HandExamples) {
  const auto theta = SparseSquare::from_triplets(2, {{0, 0, 4}, {0, 1, 2}, {1, 0, 2}, {1, 1, 4}});
  const auto omega = theta_to_omega(theta);
  EXPECT_EQ(omega.to_dense(), (Eigen::MatrixXd(2, 2) << 2, 1, 1, 2).finished());
  EXPECT_EQ(omega_to_theta(omega).to_dense(), theta.to_dense());
  EXPECT_EQ(theta_to_omega(SparseSquare::identity(3)).to_dense(), Eigen::MatrixXd::Identity(3, 3));
  EXPECT_EQ(omega_to_theta(SparseSquare::identity(3)).to_dense(), Eigen::MatrixXd::Identity(3, 3));
}

TEST(Transform, RoundTripAndSupport) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto theta = random_spd(6, 0.4, seed);
    const auto omega = theta_to_omega(theta);
    EXPECT_TRUE(omega.same_pattern(theta));
    EXPECT_LE((omega_to_theta(omega).to_dense() - theta.to_dense()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Transform, RejectsNonPositiveDiagonal) {
  auto m = SparseSquare::identity(2);
  m.values()[0] = -1.0;
  EXPECT_THROW(theta_to_omega(m), NumericError);
  EXPECT_THROW(omega_to_theta(m), NumericError);
  EXPECT_THROW(partial_correlations(m), NumericError);
}

TEST(PartialCorrelations, HandExample) {
  const auto omega = SparseSquare::from_triplets(2, {{0, 0, 2}, {0, 1, 1}, {1, 0, 1}, {1, 1, 2}});
  const auto rho = partial_correlations(omega);
  EXPECT_DOUBLE_EQ(rho.coeff(0, 1), -0.5);
  EXPECT_DOUBLE_EQ(rho.coeff(1, 0), -0.5);
  EXPECT_EQ(rho.nnz(), 2);
}

TEST(PartialCorrelations, DiagonalHasNoEntries) {
  EXPECT_EQ(partial_correlations(SparseSquare::diagonal(std::vector<double>{1, 2, 3})).nnz(), 0);
}

TEST(PartialCorrelations, MatchesDefinitionOnTrueOmega) {
  const auto theta = random_spd(8, 0.5, 21);
  const auto rho = partial_correlations(theta_to_omega(theta));
  for (Index i = 0; i < 8; ++i) {
    for (Index j = 0; j < 8; ++j) {
      if (i == j) continue;
      const double expect = -theta.coeff(i, j) / std::sqrt(theta.diag(i) * theta.diag(j));
      EXPECT_NEAR(rho.coeff(i, j), expect, 1e-12);
    }
  }
}

TEST(PartialCorrelations, OneSidedEntryStillPresent) {
  const auto omega = SparseSquare::from_triplets(3, {{0, 0, 1}, {1, 1, 2}, {2, 2, 1}, {2, 1, 0.4}});
  const auto rho = partial_correlations(omega);
  EXPECT_NEAR(rho.coeff(1, 2), -0.5 * 0.4 / 2.0, 1e-15);
  EXPECT_NEAR(rho.coeff(2, 1), -0.5 * 0.4 / 2.0, 1e-15);
}
