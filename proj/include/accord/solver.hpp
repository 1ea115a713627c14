#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "accord/error.hpp"
#include "accord/linalg.hpp"
#include "accord/parallel.hpp"

namespace accord {

/// Elementwise l1 weights. Uniform applies lambda to every entry, diagonal
/// included. Masked applies lambda to the diagonal and to the off-diagonal
/// positions stored in `support`; every other position is forced to zero.
struct PenaltyPolicy {
  enum class Mode { Uniform, Masked };

  Mode mode = Mode::Uniform;
  double lambda = 0.0;
  SparseSquare support;  // pattern only; used when mode == Masked

  static PenaltyPolicy uniform(double lambda) {
    if (!(lambda >= 0.0)) throw UsageError("penalty lambda must be >= 0");
    return {Mode::Uniform, lambda, {}};
  }

  static PenaltyPolicy masked(SparseSquare support, double lambda_eff) {
    if (!(lambda_eff >= 0.0)) throw UsageError("penalty lambda must be >= 0");
    return {Mode::Masked, lambda_eff, std::move(support)};
  }

  bool is_masked() const { return mode == Mode::Masked; }

  /// True when (i, j) may be nonzero.
  bool allows(Index i, Index j) const { return mode == Mode::Uniform || i == j || support.contains(i, j); }
};

enum class StepMode { Fixed, Backtracking };

struct SolverConfig {
  PenaltyPolicy penalty = PenaltyPolicy::uniform(0.0);
  std::optional<double> tau0;  // default: 1/L for Fixed, 1.0 for Backtracking
  double beta = 0.5;
  double tol = 1e-8;
  int max_iter = 10000;
  StepMode step_mode = StepMode::Backtracking;
  std::optional<SparseSquare> warm_start;  // Omega^(0); identity when absent
  bool warm_step = false;  // start each line search at previous tau / beta
  Index dense_cap = kDefaultDenseCap;
  double two_step_ratio = 0.25;  // matrix-free gradient when n < ratio * p
  Index block_rows = 256;  // rows per gradient block on the matrix-free path
  int workers = 1;
  bool compute_kkt = true;
};

struct FitResult {
  SparseSquare omega;
  int iterations = 0;
  std::vector<double> objective_trace;  // f(Omega^(t)), t = 0..iterations
  std::vector<double> step_trace;  // accepted tau per iteration (step_trace[0] = 0)
  double final_step = 0.0;
  bool converged = false;
  double kkt_residual = std::numeric_limits<double>::quiet_NaN();
  double lambda = 0.0;
  double smooth_value = 0.0;  // g(Omega-hat)
};

// ---------------------------------------------------------------------------
// Proximal map of h(w) = -log w + lambda |w| (diagonal) and lambda |w|
// (off-diagonal). Both are total for tau > 0.

/// Positive root of w^2 - (y - tau*lambda) w - tau = 0.
inline double prox_diagonal(double y, double tau, double lambda) {
  const double a = y - tau * lambda;
  const double r = std::sqrt(a * a + 4.0 * tau);
  return a >= 0.0 ? 0.5 * (a + r) : 2.0 * tau / (r - a);
}

inline double soft_threshold(double y, double threshold) {
  const double m = std::abs(y) - threshold;
  return m > 0.0 ? std::copysign(m, y) : 0.0;
}

/// Prox applied to one entry; `allowed == false` encodes an infinite weight.
inline double prox_entry(bool diagonal, double y, double tau, double lambda, bool allowed = true) {
  if (diagonal) return prox_diagonal(y, tau, lambda);
  if (!allowed) return 0.0;
  return soft_threshold(y, tau * lambda);
}

namespace detail {

inline void check_dims(const SparseSquare& omega, const DenseData& data, const char* who) {
  if (omega.dim() != data.p()) {
    std::ostringstream os;
    os << who << ": omega is " << omega.dim() << " x " << omega.dim() << " but data has p = " << data.p();
    throw UsageError(os.str());
  }
}

/// -sum log w_ii + penalty. +inf outside the domain.
inline double nonsmooth_value(const SparseSquare& omega, const PenaltyPolicy& penalty) {
  double logs = 0.0;
  double l1 = 0.0;
  for (Index i = 0; i < omega.dim(); ++i) {
    const auto c = omega.row_cols(i);
    const auto v = omega.row_values(i);
    bool has_diag = false;
    for (std::size_t k = 0; k < c.size(); ++k) {
      if (c[k] == i) {
        if (!(v[k] > 0.0)) return std::numeric_limits<double>::infinity();
        logs -= std::log(v[k]);
        has_diag = true;
      } else if (v[k] != 0.0 && !penalty.allows(i, c[k])) {
        return std::numeric_limits<double>::infinity();
      }
      l1 += std::abs(v[k]);
    }
    if (!has_diag) return std::numeric_limits<double>::infinity();
  }
  return logs + penalty.lambda * l1;
}

/// g(Omega) = (1/2) tr(Omega^T Omega S) with a cached intermediate.
/// Dense mode keeps (Omega S)^T, p x p. Matrix-free mode keeps
/// (Omega X^T)^T, n x p, and forms gradient rows on demand in blocks.
class SmoothTerm {
 public:
  struct State {
    double value = 0.0;
    Eigen::MatrixXd cache;
  };

  SmoothTerm(const DenseData& data, Index dense_cap, double two_step_ratio, int workers)
      : data_(data), workers_(std::max(1, workers)) {
    const Index p = data.p();
    const bool tall_enough = static_cast<double>(data.n()) >= two_step_ratio * static_cast<double>(p);
    dense_ = p <= dense_cap && tall_enough;
    if (dense_) s_ = gram(data, dense_cap);
  }

  bool dense() const { return dense_; }
  const DenseData& data() const { return data_; }

  State evaluate(const SparseSquare& omega) const {
    State st;
    if (dense_) {
      if (workers_ > 1) {
        st.cache = parallel::ring_multiply(omega, s_, workers_).assemble().transpose();
      } else {
        st.cache = times_transpose(s_, omega);
      }
      double acc = 0.0;
      for (Index i = 0; i < omega.dim(); ++i) {
        const auto c = omega.row_cols(i);
        const auto v = omega.row_values(i);
        for (std::size_t k = 0; k < c.size(); ++k) acc += v[k] * st.cache(c[k], i);
      }
      st.value = 0.5 * acc;
    } else {
      if (workers_ > 1) {
        const Eigen::MatrixXd xt = data_.values.transpose();
        st.cache = parallel::ring_multiply(omega, xt, workers_).assemble().transpose();
      } else {
        st.cache = times_transpose(data_.values, omega);
      }
      st.value = 0.5 * st.cache.squaredNorm() / static_cast<double>(data_.n());
    }
    return st;
  }

  /// Gradient rows [r0, r1) as columns of `out` (p x (r1 - r0)).
  void gradient_rows(const State& st, Index r0, Index r1, Eigen::MatrixXd& out) const {
    if (dense_) {
      out = st.cache.middleCols(r0, r1 - r0);
    } else {
      out.noalias() = (1.0 / static_cast<double>(data_.n())) *
                      (data_.values.transpose() * st.cache.middleCols(r0, r1 - r0));
    }
  }

  Index block_rows(Index requested) const { return dense_ ? data_.p() : std::max<Index>(1, requested); }

 private:
  const DenseData& data_;
  int workers_;
  bool dense_ = false;
  Eigen::MatrixXd s_;
};

struct SweepResult {
  SparseSquare omega;
  double inner = 0.0;  // <Delta, grad g(Omega)>
  double delta_sq = 0.0;  // ||Delta||_F^2
};

inline constexpr double kDropBelow = 1e-300;

/// One forward step followed by the prox, processed in row blocks so that at
/// most block x p gradient values are live.
inline SweepResult forward_backward(const SparseSquare& omega, const SmoothTerm& smooth, const SmoothTerm::State& st,
                                    double tau, const PenaltyPolicy& penalty, Index block_rows) {
  const Index p = omega.dim();
  SweepResult r{SparseSquare(p), 0.0, 0.0};
  const double lam = penalty.lambda;
  const double thr = tau * lam;
  const bool masked = penalty.is_masked();
  Eigen::MatrixXd grad;
  const Index step = smooth.block_rows(block_rows);
  for (Index r0 = 0; r0 < p; r0 += step) {
    const Index r1 = std::min(p, r0 + step);
    smooth.gradient_rows(st, r0, r1, grad);
    for (Index i = r0; i < r1; ++i) {
      const double* g = grad.col(i - r0).data();
      const auto oc = omega.row_cols(i);
      const auto ov = omega.row_values(i);
      std::size_t ko = 0;
      std::span<const Index> sc;
      std::size_t ks = 0;
      if (masked) sc = penalty.support.row_cols(i);
      for (Index j = 0; j < p; ++j) {
        double w = 0.0;
        if (ko < oc.size() && oc[ko] == j) w = ov[ko++];
        const double y = w - tau * g[j];
        double next;
        if (j == i) {
          next = prox_diagonal(y, tau, lam);
        } else {
          bool allowed = true;
          if (masked) {
            while (ks < sc.size() && sc[ks] < j) ++ks;
            allowed = ks < sc.size() && sc[ks] == j;
          }
          next = allowed ? soft_threshold(y, thr) : 0.0;
          if (std::abs(next) < kDropBelow) next = 0.0;
        }
        if (j == i || next != 0.0) r.omega.push(j, next);
        const double d = next - w;
        if (d != 0.0) {
          r.inner += d * g[j];
          r.delta_sq += d * d;
        }
      }
      r.omega.finish_row(i);
    }
  }
  return r;
}

/// Maximum KKT violation given the gradient rows available from `st`.
inline double kkt_from_state(const SparseSquare& omega, const SmoothTerm& smooth, const SmoothTerm::State& st,
                             const PenaltyPolicy& penalty, Index block_rows) {
  const Index p = omega.dim();
  const double lam = penalty.lambda;
  double worst = 0.0;
  Eigen::MatrixXd grad;
  const Index step = smooth.block_rows(block_rows);
  for (Index r0 = 0; r0 < p; r0 += step) {
    const Index r1 = std::min(p, r0 + step);
    smooth.gradient_rows(st, r0, r1, grad);
    for (Index i = r0; i < r1; ++i) {
      const double* g = grad.col(i - r0).data();
      const auto oc = omega.row_cols(i);
      const auto ov = omega.row_values(i);
      std::size_t ko = 0;
      for (Index j = 0; j < p; ++j) {
        double w = 0.0;
        if (ko < oc.size() && oc[ko] == j) w = ov[ko++];
        double viol;
        if (j == i) {
          viol = std::abs(g[j] - 1.0 / w + lam);
        } else if (penalty.is_masked() && !penalty.support.contains(i, j)) {
          continue;
        } else if (w != 0.0) {
          viol = std::abs(g[j] + lam * (w > 0.0 ? 1.0 : -1.0));
        } else {
          viol = std::max(0.0, std::abs(g[j]) - lam);
        }
        worst = std::max(worst, viol);
      }
    }
  }
  return worst;
}

}  // namespace detail

// ---------------------------------------------------------------------------

/// f(Omega) = -sum log w_ii + (1/2n) ||Omega X^T||_F^2 + penalty(Omega).
/// Returns +inf when a diagonal entry is not positive (or a masked-out
/// entry is nonzero). Non-finite values inside the domain raise NumericError.
inline double objective(const SparseSquare& omega, const DenseData& data, const PenaltyPolicy& penalty) {
  detail::check_dims(omega, data, "objective");
  const double h = detail::nonsmooth_value(omega, penalty);
  if (std::isinf(h)) return h;
  const Eigen::MatrixXd yt = times_transpose(data.values, omega);
  const double value = h + 0.5 * yt.squaredNorm() / static_cast<double>(data.n());
  if (!std::isfinite(value)) throw NumericError("objective: non-finite value inside the domain");
  return value;
}

/// Smooth part g(Omega) = (1/2n) ||Omega X^T||_F^2.
inline double smooth_objective(const SparseSquare& omega, const DenseData& data) {
  detail::check_dims(omega, data, "smooth_objective");
  return 0.5 * times_transpose(data.values, omega).squaredNorm() / static_cast<double>(data.n());
}

/// grad g(Omega) = Omega S, formed as (1/n) (Omega X^T) X.
inline DenseSquare gradient_g(const SparseSquare& omega, const DenseData& data) {
  detail::check_dims(omega, data, "gradient_g");
  const Eigen::MatrixXd yt = times_transpose(data.values, omega);  // n x p
  return (1.0 / static_cast<double>(data.n())) * (yt.transpose() * data.values);
}

/// Maximum violation of -Omega_D^{-1} + Omega S + lambda Z = 0.
inline double kkt_residual(const SparseSquare& omega, const DenseData& data, const PenaltyPolicy& penalty,
                           Index dense_cap = kDefaultDenseCap) {
  detail::check_dims(omega, data, "kkt_residual");
  if (!omega.has_positive_diagonal()) throw NumericError("kkt_residual: omega must have a positive diagonal");
  detail::SmoothTerm smooth(data, dense_cap, 0.25, 1);
  const auto st = smooth.evaluate(omega);
  return detail::kkt_from_state(omega, smooth, st, penalty, 256);
}

/// Forward-backward splitting for the ACCORD problem. Fixed mode uses
/// tau0 (default 1/L) clamped below 2/L. Backtracking mode starts each
/// iteration at tau0 (default 1), shrinks by beta until the quadratic
/// upper bound on g holds, and accepts unconditionally once tau reaches 1/L.
inline FitResult solve(DenseData& data, const SolverConfig& config) {
  const Index p = data.p();
  if (!(config.beta > 0.0 && config.beta <= 1.0)) throw UsageError("solve: beta must lie in (0, 1]");
  if (!(config.tol > 0.0)) throw UsageError("solve: tol must be > 0");
  if (config.tau0 && !(*config.tau0 > 0.0)) throw UsageError("solve: tau0 must be > 0");
  if (config.max_iter < 0) throw UsageError("solve: max_iter must be >= 0");
  if (config.penalty.is_masked() && config.penalty.support.dim() != p) {
    throw UsageError("solve: mask dimension does not match data");
  }

  double lip = ensure_spectral_bound(data);
  if (!(lip > 0.0)) lip = 1.0;  // X == 0: g vanishes and any step is valid
  const double min_step = 1.0 / lip;
  double tau_fixed = config.tau0.value_or(min_step);
  if (config.step_mode == StepMode::Fixed) tau_fixed = std::min(tau_fixed, (2.0 / lip) * (1.0 - 1e-12));
  const double tau_start = config.step_mode == StepMode::Fixed ? tau_fixed : config.tau0.value_or(1.0);

  SparseSquare omega;
  if (config.warm_start) {
    const auto& w = *config.warm_start;
    if (w.dim() != p) throw UsageError("solve: warm start dimension does not match data");
    if (!w.has_positive_diagonal()) throw UsageError("solve: warm start must have a positive diagonal");
    omega = SparseSquare(p);
    for (Index i = 0; i < p; ++i) {
      const auto c = w.row_cols(i);
      const auto v = w.row_values(i);
      for (std::size_t k = 0; k < c.size(); ++k) {
        if (c[k] == i || (v[k] != 0.0 && config.penalty.allows(i, c[k]))) omega.push(c[k], v[k]);
      }
      omega.finish_row(i);
    }
  } else {
    omega = SparseSquare::identity(p);
  }

  detail::SmoothTerm smooth(data, config.dense_cap, config.two_step_ratio, config.workers);
  auto state = smooth.evaluate(omega);

  FitResult out;
  out.lambda = config.penalty.lambda;
  out.objective_trace.push_back(state.value + detail::nonsmooth_value(omega, config.penalty));
  out.step_trace.push_back(0.0);

  double tau_prev = tau_start;
  for (int t = 0; t < config.max_iter; ++t) {
    double tau = tau_start;
    if (config.step_mode == StepMode::Backtracking && config.warm_step && t > 0) {
      tau = std::min(tau_start, tau_prev / config.beta);
    }
    detail::SweepResult sweep;
    detail::SmoothTerm::State next_state;
    for (;;) {
      sweep = detail::forward_backward(omega, smooth, state, tau, config.penalty, config.block_rows);
      next_state = smooth.evaluate(sweep.omega);
      if (config.step_mode == StepMode::Fixed) break;
      const double bound = state.value + sweep.inner + sweep.delta_sq / (2.0 * tau);
      if (next_state.value <= bound || tau <= min_step) break;
      tau = std::max(config.beta * tau, min_step);
    }
    omega = std::move(sweep.omega);
    state = std::move(next_state);
    tau_prev = tau;
    const double f = state.value + detail::nonsmooth_value(omega, config.penalty);
    if (!std::isfinite(f)) {
      std::ostringstream os;
      os << "solve: non-finite objective at iteration " << t + 1;
      throw NumericError(os.str());
    }
    out.objective_trace.push_back(f);
    out.step_trace.push_back(tau);
    out.iterations = t + 1;
    out.final_step = tau;
    if (std::sqrt(sweep.delta_sq) < config.tol) {
      out.converged = true;
      break;
    }
  }
  out.smooth_value = state.value;
  if (config.compute_kkt) out.kkt_residual = detail::kkt_from_state(omega, smooth, state, config.penalty, config.block_rows);
  out.omega = std::move(omega);
  return out;
}

// ---------------------------------------------------------------------------
// Reparameterization between Theta and Omega. Both maps scale rows only, so
// the stored pattern is carried over unchanged.

namespace detail {
inline SparseSquare scale_rows(const SparseSquare& m, const std::vector<double>& factor) {
  SparseSquare out = m;
  for (Index i = 0; i < m.dim(); ++i) {
    for (double& v : out.row_values(i)) v *= factor[static_cast<std::size_t>(i)];
  }
  return out;
}

inline void require_positive_diagonal(const SparseSquare& m, const char* who) {
  for (Index i = 0; i < m.dim(); ++i) {
    if (!(m.diag(i) > 0.0)) {
      std::ostringstream os;
      os << who << ": diagonal entry " << i << " is not positive";
      throw NumericError(os.str());
    }
  }
}
}  // namespace detail

/// Omega = Theta_D^{-1/2} Theta.
inline SparseSquare theta_to_omega(const SparseSquare& theta) {
  detail::require_positive_diagonal(theta, "theta_to_omega");
  auto d = theta.diagonal_values();
  for (double& x : d) x = 1.0 / std::sqrt(x);
  return detail::scale_rows(theta, d);
}

/// Theta = Omega_D Omega.
inline SparseSquare omega_to_theta(const SparseSquare& omega) {
  detail::require_positive_diagonal(omega, "omega_to_theta");
  return detail::scale_rows(omega, omega.diagonal_values());
}

/// rho_ij = -(w_ij / w_jj + w_ji / w_ii) / 2, off-diagonal only, symmetric.
/// A position is present when either w_ij or w_ji is nonzero.
inline SparseSquare partial_correlations(const SparseSquare& omega) {
  detail::require_positive_diagonal(omega, "partial_correlations");
  const Index p = omega.dim();
  const auto d = omega.diagonal_values();
  std::vector<Triplet> t;
  for (Index i = 0; i < p; ++i) {
    const auto c = omega.row_cols(i);
    const auto v = omega.row_values(i);
    for (std::size_t k = 0; k < c.size(); ++k) {
      const Index j = c[k];
      if (j == i || v[k] == 0.0) continue;
      // w_ij / w_jj contributes to both (i, j) and (j, i)
      const double part = -0.5 * v[k] / d[static_cast<std::size_t>(j)];
      t.push_back({i, j, part});
      t.push_back({j, i, part});
    }
  }
  return SparseSquare::from_triplets(p, std::move(t));
}

}  // namespace accord
