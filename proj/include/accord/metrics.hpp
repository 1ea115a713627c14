#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "accord/error.hpp"
#include "accord/graph_sim.hpp"
#include "accord/linalg.hpp"
#include "accord/selection.hpp"
#include "accord/solver.hpp"

namespace accord::metrics {

/// Counts over unordered off-diagonal pairs.
struct Confusion {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

/// Unordered pairs {i, j} with w_ij != 0 or w_ji != 0.
inline sim::EdgeList selected_edges(const SparseSquare& estimate) {
  sim::EdgeList e;
  for (Index i = 0; i < estimate.dim(); ++i) {
    const auto c = estimate.row_cols(i);
    const auto v = estimate.row_values(i);
    for (std::size_t k = 0; k < c.size(); ++k) {
      if (c[k] != i && v[k] != 0.0) e.push_back({std::min(i, c[k]), std::max(i, c[k])});
    }
  }
  return sim::normalize_edges(std::move(e));
}

inline Confusion confusion(const sim::EdgeList& selected, const sim::EdgeList& truth, Index p) {
  Confusion c;
  std::size_t a = 0, b = 0;
  while (a < selected.size() || b < truth.size()) {
    if (b == truth.size() || (a < selected.size() && selected[a] < truth[b])) {
      ++c.fp;
      ++a;
    } else if (a == selected.size() || truth[b] < selected[a]) {
      ++c.fn;
      ++b;
    } else {
      ++c.tp;
      ++a;
      ++b;
    }
  }
  c.tn = static_cast<std::int64_t>(p) * (p - 1) / 2 - c.tp - c.fp - c.fn;
  return c;
}

inline Confusion confusion(const SparseSquare& estimate, const sim::GraphModel& truth) {
  if (estimate.dim() != truth.p) {
    std::ostringstream os;
    os << "confusion: estimate is " << estimate.dim() << " x " << estimate.dim() << ", truth has p = " << truth.p;
    throw UsageError(os.str());
  }
  return confusion(selected_edges(estimate), truth.edges, truth.p);
}

/// Matthews correlation; 0 when any marginal count is zero.
inline double mcc(const Confusion& c) {
  const double tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp);
  const double fn = static_cast<double>(c.fn), tn = static_cast<double>(c.tn);
  const double denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  if (denom == 0.0) return 0.0;
  return (tp * tn - fp * fn) / std::sqrt(denom);
}

struct PrPoint {
  double lambda = 0.0;
  double recall = 0.0;
  double precision = 0.0;
};

/// One (recall, precision) point per fit on the path; fits that select no
/// edge have no precision and are left out.
inline std::vector<PrPoint> pr_curve(const PathResult& path, const sim::GraphModel& truth) {
  std::vector<PrPoint> pts;
  for (std::size_t k = 0; k < path.fits.size(); ++k) {
    const auto c = confusion(path.fits[k].omega, truth);
    if (c.tp + c.fp == 0 || c.tp + c.fn == 0) continue;
    pts.push_back({path.lambdas[k], static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn),
                   static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp)});
  }
  return pts;
}

/// Step-wise area: points sorted by recall, each recall increment weighted by
/// the precision at its right end, starting from recall 0. No extrapolation
/// beyond the largest recall reached.
inline double area_under_pr(std::vector<PrPoint> pts) {
  std::sort(pts.begin(), pts.end(), [](const PrPoint& a, const PrPoint& b) {
    return a.recall < b.recall || (a.recall == b.recall && a.precision > b.precision);
  });
  double area = 0.0;
  double prev = 0.0;
  for (const auto& pt : pts) {
    area += (pt.recall - prev) * pt.precision;
    prev = pt.recall;
  }
  return area;
}

/// AUPRC over the regularisation path. Returns 0 (with a warning appended)
/// when every fit is diagonal.
inline double auprc(const PathResult& path, const sim::GraphModel& truth, std::vector<std::string>* warnings = nullptr) {
  if (path.fits.size() < 2) throw UsageError("auprc: the path needs at least two fits");
  auto pts = pr_curve(path, truth);
  if (pts.empty()) {
    if (warnings) warnings->push_back("auprc: every fit on the path is diagonal");
    return 0.0;
  }
  return area_under_pr(std::move(pts));
}

/// Point-wise average of curves that share a lambda grid (same index =>
/// same lambda). Curves are indexed by path position, so pass full-length
/// curves from pr_curve_indexed.
inline std::vector<PrPoint> average_curves(const std::vector<std::vector<std::optional<PrPoint>>>& curves) {
  if (curves.empty()) return {};
  const std::size_t len = curves.front().size();
  std::vector<PrPoint> out;
  for (std::size_t k = 0; k < len; ++k) {
    PrPoint avg;
    int count = 0;
    for (const auto& c : curves) {
      if (k < c.size() && c[k]) {
        avg.lambda += c[k]->lambda;
        avg.recall += c[k]->recall;
        avg.precision += c[k]->precision;
        ++count;
      }
    }
    if (count == 0) continue;
    avg.lambda /= count;
    avg.recall /= count;
    avg.precision /= count;
    out.push_back(avg);
  }
  return out;
}

inline std::vector<std::optional<PrPoint>> pr_curve_indexed(const PathResult& path, const sim::GraphModel& truth) {
  std::vector<std::optional<PrPoint>> pts(path.fits.size());
  for (std::size_t k = 0; k < path.fits.size(); ++k) {
    const auto c = confusion(path.fits[k].omega, truth);
    if (c.tp + c.fp == 0 || c.tp + c.fn == 0) continue;
    pts[k] = PrPoint{path.lambdas[k], static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn),
                     static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp)};
  }
  return pts;
}

namespace detail {
inline void check_same_dim(const SparseSquare& a, const SparseSquare& b, const char* who) {
  if (a.dim() != b.dim()) {
    std::ostringstream os;
    os << who << ": dimensions differ (" << a.dim() << " vs " << b.dim() << ")";
    throw UsageError(os.str());
  }
}

/// Calls fn(a_ij - b_ij) for every position stored in either matrix.
template <class Fn>
void for_each_difference(const SparseSquare& a, const SparseSquare& b, Fn&& fn) {
  for (Index i = 0; i < a.dim(); ++i) {
    const auto ac = a.row_cols(i), bc = b.row_cols(i);
    const auto av = a.row_values(i), bv = b.row_values(i);
    std::size_t x = 0, y = 0;
    while (x < ac.size() || y < bc.size()) {
      if (y == bc.size() || (x < ac.size() && ac[x] < bc[y])) {
        fn(av[x++]);
      } else if (x == ac.size() || bc[y] < ac[x]) {
        fn(-bv[y++]);
      } else {
        fn(av[x++] - bv[y++]);
      }
    }
  }
}
}  // namespace detail

/// Squared Frobenius distance over all p^2 positions.
inline double total_squared_error(const SparseSquare& estimate, const SparseSquare& truth) {
  detail::check_same_dim(estimate, truth, "total_squared_error");
  double s = 0.0;
  detail::for_each_difference(estimate, truth, [&](double d) { s += d * d; });
  return s;
}

/// Entrywise maximum absolute difference.
inline double max_error(const SparseSquare& estimate, const SparseSquare& truth) {
  detail::check_same_dim(estimate, truth, "max_error");
  double m = 0.0;
  detail::for_each_difference(estimate, truth, [&](double d) { m = std::max(m, std::abs(d)); });
  return m;
}

/// Fraction of true off-diagonal nonzeros whose estimated sign matches.
inline double sign_accuracy(const SparseSquare& estimate, const SparseSquare& truth) {
  detail::check_same_dim(estimate, truth, "sign_accuracy");
  std::int64_t total = 0, hit = 0;
  for (Index i = 0; i < truth.dim(); ++i) {
    const auto c = truth.row_cols(i);
    const auto v = truth.row_values(i);
    for (std::size_t k = 0; k < c.size(); ++k) {
      if (c[k] == i || v[k] == 0.0) continue;
      ++total;
      const double e = estimate.coeff(i, c[k]);
      if ((e > 0.0 && v[k] > 0.0) || (e < 0.0 && v[k] < 0.0)) ++hit;
    }
  }
  return total == 0 ? 1.0 : static_cast<double>(hit) / static_cast<double>(total);
}

struct EvalReport {
  Confusion counts;
  double mcc = 0.0;
  std::optional<double> auprc;
  double tse_theta = 0.0;
  double tse_omega = 0.0;
  double max_error_omega = 0.0;
  double sign_accuracy = 0.0;
};

/// Single-estimate report; auprc is filled in by callers that have a path.
inline EvalReport evaluate(const SparseSquare& omega_hat, const sim::GraphModel& truth) {
  EvalReport r;
  r.counts = confusion(omega_hat, truth);
  r.mcc = mcc(r.counts);
  r.tse_omega = total_squared_error(omega_hat, truth.omega_true);
  r.tse_theta = total_squared_error(omega_to_theta(omega_hat), truth.theta_true);
  r.max_error_omega = max_error(omega_hat, truth.omega_true);
  r.sign_accuracy = sign_accuracy(omega_hat, truth.omega_true);
  return r;
}

}  // namespace accord::metrics
