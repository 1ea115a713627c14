#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "accord/error.hpp"
#include "accord/linalg.hpp"
#include "accord/solver.hpp"

namespace accord {

struct PathResult {
  std::vector<double> lambdas;  // strictly decreasing
  std::vector<FitResult> fits;
  std::vector<double> epbic_scores;
  double gamma = 0.5;
  std::optional<std::size_t> selected_index;  // empty when no fit converged
  std::vector<std::string> warnings;
};

/// max_{i != j} |S_ij|, computed in column blocks of (1/n) X^T X so no
/// p x p object is formed.
inline double max_offdiag_covariance(const DenseData& data, Index block = 256) {
  const Index p = data.p();
  const double inv_n = 1.0 / static_cast<double>(data.n());
  double best = 0.0;
  for (Index c0 = 0; c0 < p; c0 += block) {
    const Index w = std::min(block, p - c0);
    const Eigen::MatrixXd s = inv_n * (data.values.transpose() * data.values.middleCols(c0, w));
    for (Index c = 0; c < w; ++c) {
      for (Index r = 0; r < p; ++r) {
        if (r != c0 + c) best = std::max(best, std::abs(s(r, c)));
      }
    }
  }
  return best;
}

/// `count` log-evenly spaced values from lambda_max down to lambda_max * ratio.
inline std::vector<double> lambda_grid(double lambda_max, int count, double ratio) {
  if (count < 2) throw UsageError("lambda_grid: need at least 2 points");
  if (!(ratio > 0.0 && ratio < 1.0)) throw UsageError("lambda_grid: ratio must lie in (0, 1)");
  if (!(lambda_max > 0.0)) throw NumericError("lambda_grid: all-zero data (lambda_max = 0)");
  std::vector<double> grid(static_cast<std::size_t>(count));
  const double hi = std::log(lambda_max);
  const double lo = std::log(lambda_max * ratio);
  for (int k = 0; k < count; ++k) {
    grid[static_cast<std::size_t>(k)] = std::exp(hi + (lo - hi) * k / (count - 1));
  }
  grid.front() = lambda_max;
  grid.back() = lambda_max * ratio;
  return grid;
}

inline std::vector<double> lambda_grid(const DenseData& data, int count, double ratio) {
  return lambda_grid(max_offdiag_covariance(data), count, ratio);
}

/// ACCORD loss without penalty: -sum log w_ii + (1/2n) ||Omega X^T||_F^2.
inline double accord_loss(const SparseSquare& omega, const DenseData& data) {
  return objective(omega, data, PenaltyPolicy::uniform(0.0));
}

/// 2n * loss + k log n + 4 gamma k log p, where k counts the nonzero
/// off-diagonal entries of the (asymmetric) estimate.
inline double epbic(const SparseSquare& omega, const DenseData& data, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw UsageError("epbic: gamma must lie in [0, 1]");
  const double n = static_cast<double>(data.n());
  const double p = static_cast<double>(data.p());
  const double k = static_cast<double>(omega.offdiag_nnz());
  return 2.0 * n * accord_loss(omega, data) + k * std::log(n) + 4.0 * gamma * k * std::log(p);
}

inline double epbic(const FitResult& fit, const DenseData& data, double gamma) { return epbic(fit.omega, data, gamma); }

/// Index minimising `scores` among converged fits; ties go to the larger
/// lambda (earlier index).
inline std::optional<std::size_t> argmin_converged(const std::vector<double>& scores, const std::vector<FitResult>& fits) {
  std::optional<std::size_t> best;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    if (!fits[k].converged) continue;
    if (!best || scores[k] < scores[*best]) best = k;
  }
  return best;
}

/// Re-scores an existing path under a different gamma.
inline std::optional<std::size_t> select_index(const PathResult& path, const DenseData& data, double gamma) {
  std::vector<double> scores;
  scores.reserve(path.fits.size());
  for (const auto& f : path.fits) scores.push_back(epbic(f, data, gamma));
  return argmin_converged(scores, path.fits);
}

/// Sequential path from the largest lambda, each fit warm-started at the
/// previous estimate. With max_offdiag_nnz >= 0 the path stops after the
/// first fit whose estimate has more off-diagonal nonzeros than that.
inline PathResult fit_path(DenseData& data, const std::vector<double>& lambdas, const SolverConfig& base, double gamma,
                           Index max_offdiag_nnz = -1) {
  if (lambdas.empty()) throw UsageError("fit_path: empty lambda list");
  for (std::size_t k = 1; k < lambdas.size(); ++k) {
    if (!(lambdas[k] < lambdas[k - 1])) throw UsageError("fit_path: lambdas must be strictly decreasing");
  }
  PathResult path;
  path.lambdas = lambdas;
  path.gamma = gamma;
  std::optional<SparseSquare> previous = base.warm_start;
  for (std::size_t k = 0; k < lambdas.size(); ++k) {
    SolverConfig cfg = base;
    cfg.penalty = PenaltyPolicy::uniform(lambdas[k]);
    cfg.warm_start = previous;
    FitResult fit = solve(data, cfg);
    if (!fit.converged) {
      std::ostringstream os;
      os << "lambda " << lambdas[k] << " did not converge in " << fit.iterations << " iterations; excluded from selection";
      path.warnings.push_back(os.str());
    }
    previous = fit.omega;
    path.epbic_scores.push_back(epbic(fit, data, gamma));
    const Index nnz = fit.omega.offdiag_nnz();
    path.fits.push_back(std::move(fit));
    if (max_offdiag_nnz >= 0 && nnz > max_offdiag_nnz && k + 1 < lambdas.size()) {
      std::ostringstream os;
      os << "path stopped at lambda " << lambdas[k] << ": " << nnz << " off-diagonal nonzeros exceed the cap of "
         << max_offdiag_nnz;
      path.warnings.push_back(os.str());
      path.lambdas.resize(k + 1);
      break;
    }
  }
  path.selected_index = argmin_converged(path.epbic_scores, path.fits);
  if (!path.selected_index) path.warnings.push_back("no fit on the path converged; nothing selected");
  return path;
}

/// Off-diagonal nonzero positions of omega as a pattern matrix.
inline SparseSquare offdiag_support(const SparseSquare& omega) {
  SparseSquare s(omega.dim());
  for (Index i = 0; i < omega.dim(); ++i) {
    const auto c = omega.row_cols(i);
    const auto v = omega.row_values(i);
    for (std::size_t k = 0; k < c.size(); ++k) {
      if (c[k] != i && v[k] != 0.0) s.push(c[k], 1.0);
    }
    s.finish_row(i);
  }
  return s;
}

/// Second-stage refit on the support of `selected` with weight phi * lambda
/// on the support and the diagonal, and a hard zero elsewhere.
inline FitResult debias(DenseData& data, const FitResult& selected, double phi, const SolverConfig& base) {
  if (!(phi >= 0.0 && phi <= 1.0)) throw UsageError("debias: phi must lie in [0, 1]");
  if (!selected.converged) throw UsageError("debias: the selected fit did not converge");
  SolverConfig cfg = base;
  cfg.penalty = PenaltyPolicy::masked(offdiag_support(selected.omega), phi * selected.lambda);
  cfg.warm_start = selected.omega;
  FitResult out = solve(data, cfg);
  out.lambda = phi * selected.lambda;
  return out;
}

}  // namespace accord
