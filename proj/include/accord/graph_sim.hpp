#pragma once

// Ground-truth graphs, precision matrices and Gaussian samplers for the
// simulation studies. Everything is a pure function of (parameters, seed).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "accord/error.hpp"
#include "accord/linalg.hpp"
#include "accord/rng.hpp"
#include "accord/solver.hpp"

namespace accord::sim {

struct Edge {
  Index i;  // i < j
  Index j;
  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

using EdgeList = std::vector<Edge>;

struct GeneratorInfo {
  std::string kind;
  std::vector<std::pair<std::string, double>> params;
  std::uint64_t seed = 0;
};

struct GraphModel {
  Index p = 0;
  EdgeList edges;
  SparseSquare theta_true;
  SparseSquare omega_true;
  Index max_degree = 0;
  double min_eigenvalue = std::numeric_limits<double>::quiet_NaN();  // NaN when p > kEigenCheckCap
  GeneratorInfo generator;
  std::vector<std::string> warnings;

  bool has_edge(Index i, Index j) const {
    if (i > j) std::swap(i, j);
    return std::binary_search(edges.begin(), edges.end(), Edge{i, j});
  }
};

/// Largest p for which a dense eigenvalue check is run on a new model.
inline constexpr Index kEigenCheckCap = 2000;

inline double min_eigenvalue_dense(const Eigen::MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

inline EdgeList normalize_edges(EdgeList edges) {
  for (auto& e : edges) {
    if (e.i > e.j) std::swap(e.i, e.j);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

inline std::vector<Index> degrees(const EdgeList& edges, Index p) {
  std::vector<Index> deg(static_cast<std::size_t>(p), 0);
  for (const auto& e : edges) {
    ++deg[static_cast<std::size_t>(e.i)];
    ++deg[static_cast<std::size_t>(e.j)];
  }
  return deg;
}

/// Fills the derived fields of a model whose theta_true is already set.
inline GraphModel finish_model(SparseSquare theta, EdgeList edges, GeneratorInfo info) {
  GraphModel m;
  m.p = theta.dim();
  m.edges = normalize_edges(std::move(edges));
  m.theta_true = std::move(theta);
  m.omega_true = theta_to_omega(m.theta_true);
  const auto deg = degrees(m.edges, m.p);
  m.max_degree = deg.empty() ? 0 : *std::max_element(deg.begin(), deg.end());
  if (m.p <= kEigenCheckCap) {
    m.min_eigenvalue = min_eigenvalue_dense(m.theta_true.to_dense());
    if (!(m.min_eigenvalue > 0.0)) {
      std::ostringstream os;
      os << info.kind << ": precision matrix is not positive definite (min eigenvalue " << m.min_eigenvalue << ")";
      throw NumericError(os.str());
    }
  }
  m.generator = std::move(info);
  return m;
}

/// Symmetric sparse matrix with `diag` on the diagonal and weights[k] at
/// both (i, j) and (j, i) of edges[k].
inline SparseSquare symmetric_from_edges(Index p, const EdgeList& edges, const std::vector<double>& weights,
                                         const std::vector<double>& diag) {
  std::vector<Triplet> t;
  t.reserve(edges.size() * 2 + static_cast<std::size_t>(p));
  for (Index i = 0; i < p; ++i) t.push_back({i, i, diag[static_cast<std::size_t>(i)]});
  for (std::size_t k = 0; k < edges.size(); ++k) {
    t.push_back({edges[k].i, edges[k].j, weights[k]});
    t.push_back({edges[k].j, edges[k].i, weights[k]});
  }
  return SparseSquare::from_triplets(p, std::move(t));
}

// ---------------------------------------------------------------------------
// Graph generators

/// `num_edges` distinct undirected edges drawn uniformly on p nodes.
inline EdgeList gen_erdos_renyi(Index p, Index num_edges, std::uint64_t seed) {
  const Index total = p * (p - 1) / 2;
  if (p < 1 || num_edges < 0 || num_edges > total) {
    std::ostringstream os;
    os << "gen_erdos_renyi: cannot place " << num_edges << " edges on " << p << " nodes (max " << total << ")";
    throw UsageError(os.str());
  }
  Rng rng(seed);
  EdgeList edges;
  edges.reserve(static_cast<std::size_t>(num_edges));
  if (2 * num_edges > total) {
    // dense request: partial Fisher-Yates over all pairs
    std::vector<Edge> all;
    all.reserve(static_cast<std::size_t>(total));
    for (Index i = 0; i < p; ++i)
      for (Index j = i + 1; j < p; ++j) all.push_back({i, j});
    for (Index k = 0; k < num_edges; ++k) {
      const auto r = static_cast<std::size_t>(k) + static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(total - k)));
      std::swap(all[static_cast<std::size_t>(k)], all[r]);
      edges.push_back(all[static_cast<std::size_t>(k)]);
    }
  } else {
    std::unordered_set<std::uint64_t> seen;
    while (static_cast<Index>(edges.size()) < num_edges) {
      Index a = static_cast<Index>(rng.below(static_cast<std::uint64_t>(p)));
      Index b = static_cast<Index>(rng.below(static_cast<std::uint64_t>(p)));
      if (a == b) continue;
      if (a > b) std::swap(a, b);
      if (seen.insert(static_cast<std::uint64_t>(a) * static_cast<std::uint64_t>(p) + static_cast<std::uint64_t>(b)).second) {
        edges.push_back({a, b});
      }
    }
  }
  return normalize_edges(std::move(edges));
}

enum class ClusterKind { Hub, ScaleFree };

inline constexpr Index kClusters = 10;
inline constexpr Index kClusterSize = 100;
inline constexpr Index kClusterEdges = 90;
inline constexpr Index kPairsPerAdjacency = 10;

namespace detail {

/// Hub cluster on local nodes 0..99: 45 random edges among nodes 0..96, then
/// nodes 97, 98, 99 each joined to 15 random earlier nodes.
inline EdgeList hub_cluster(Rng& rng) {
  EdgeList e = gen_erdos_renyi(97, 45, rng.next_u64());
  for (Index hub = 97; hub < 100; ++hub) {
    std::vector<Index> pool(static_cast<std::size_t>(hub));
    std::iota(pool.begin(), pool.end(), Index{0});
    rng.shuffle(pool);
    for (int k = 0; k < 15; ++k) e.push_back({pool[static_cast<std::size_t>(k)], hub});
  }
  return e;
}

/// Degrees drawn from P(k) ~ k^-2.3 on [1, 30], adjusted to sum to 180,
/// then matched by stub pairing with self-loop / multi-edge rejection.
inline EdgeList scale_free_cluster(Rng& rng) {
  constexpr int kMin = 1, kMax = 30;
  constexpr double kExponent = 2.3;
  std::vector<double> cdf;
  double acc = 0.0;
  for (int k = kMin; k <= kMax; ++k) {
    acc += std::pow(static_cast<double>(k), -kExponent);
    cdf.push_back(acc);
  }
  for (double& c : cdf) c /= acc;
  const Index n = kClusterSize;
  const Index target = 2 * kClusterEdges;

  for (int attempt = 0; attempt < 10000; ++attempt) {
    std::vector<int> deg(static_cast<std::size_t>(n));
    for (auto& d : deg) {
      const double u = rng.uniform();
      d = kMin + static_cast<int>(std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
      d = std::min(d, kMax);
    }
    Index sum = std::accumulate(deg.begin(), deg.end(), Index{0});
    while (sum != target) {
      auto& d = deg[static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(n)))];
      if (sum > target && d > kMin) {
        --d;
        --sum;
      } else if (sum < target && d < kMax) {
        ++d;
        ++sum;
      }
    }
    std::vector<Index> stubs;
    for (Index v = 0; v < n; ++v)
      for (int k = 0; k < deg[static_cast<std::size_t>(v)]; ++k) stubs.push_back(v);
    rng.shuffle(stubs);
    std::set<Edge> chosen;
    bool ok = true;
    // pair stubs greedily; on a bad pair look further ahead for a partner
    while (!stubs.empty() && ok) {
      const Index a = stubs.back();
      stubs.pop_back();
      bool matched = false;
      for (std::size_t tries = 0; tries < stubs.size(); ++tries) {
        const std::size_t pos = static_cast<std::size_t>(rng.below(stubs.size()));
        const Index b = stubs[pos];
        const Edge e{std::min(a, b), std::max(a, b)};
        if (a == b || chosen.count(e)) continue;
        chosen.insert(e);
        stubs[pos] = stubs.back();
        stubs.pop_back();
        matched = true;
        break;
      }
      ok = matched;
    }
    if (ok && static_cast<Index>(chosen.size()) == kClusterEdges) return {chosen.begin(), chosen.end()};
  }
  throw NumericError("scale_free_cluster: stub matching failed");
}

}  // namespace detail

/// Ten clusters of 100 nodes with 90 internal edges each, plus 10 random
/// pairs between every cyclically adjacent pair of clusters (c, c+1 mod 10).
inline EdgeList gen_cluster_graph(ClusterKind kind, std::uint64_t seed) {
  Rng rng(seed);
  EdgeList edges;
  for (Index c = 0; c < kClusters; ++c) {
    const EdgeList local = kind == ClusterKind::Hub ? detail::hub_cluster(rng) : detail::scale_free_cluster(rng);
    const Index off = c * kClusterSize;
    for (const auto& e : local) edges.push_back({e.i + off, e.j + off});
  }
  for (Index c = 0; c < kClusters; ++c) {
    const Index a0 = c * kClusterSize;
    const Index b0 = ((c + 1) % kClusters) * kClusterSize;
    std::set<Edge> picked;
    while (static_cast<Index>(picked.size()) < kPairsPerAdjacency) {
      const Index a = a0 + static_cast<Index>(rng.below(kClusterSize));
      const Index b = b0 + static_cast<Index>(rng.below(kClusterSize));
      picked.insert({std::min(a, b), std::max(a, b)});
    }
    edges.insert(edges.end(), picked.begin(), picked.end());
  }
  return normalize_edges(std::move(edges));
}

// ---------------------------------------------------------------------------
// Precision matrices

/// Weighted-adjacency recipe: weights U[0.5, 1] with random sign, symmetrised
/// by adding the transpose, diagonal = 1.5 x absolute off-diagonal row sum
/// (1 for isolated nodes), scaled to unit diagonal, then rescaled by
/// D Theta D with D_ii ~ U[1, sqrt 3].
inline GraphModel build_precision_51(const EdgeList& edges_in, Index p, std::uint64_t seed) {
  if (edges_in.empty()) throw UsageError("build_precision_51: empty edge set");
  const EdgeList edges = normalize_edges(edges_in);
  Rng rng(seed);
  std::vector<double> w(edges.size());
  for (auto& x : w) {
    x = rng.uniform(0.5, 1.0);
    if (rng.coin()) x = -x;
    x *= 2.0;  // (i, j) and (j, i) both carry the weight before adding the transpose
  }
  std::vector<double> rowsum(static_cast<std::size_t>(p), 0.0);
  for (std::size_t k = 0; k < edges.size(); ++k) {
    rowsum[static_cast<std::size_t>(edges[k].i)] += std::abs(w[k]);
    rowsum[static_cast<std::size_t>(edges[k].j)] += std::abs(w[k]);
  }
  std::vector<double> diag(static_cast<std::size_t>(p));
  for (Index i = 0; i < p; ++i) {
    const double r = rowsum[static_cast<std::size_t>(i)];
    diag[static_cast<std::size_t>(i)] = r > 0.0 ? 1.5 * r : 1.0;
  }
  std::vector<double> scale(static_cast<std::size_t>(p));
  for (Index i = 0; i < p; ++i) scale[static_cast<std::size_t>(i)] = rng.uniform(1.0, std::sqrt(3.0));
  std::vector<double> unit_w(edges.size());
  std::vector<double> out_diag(static_cast<std::size_t>(p));
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const auto i = static_cast<std::size_t>(edges[k].i), j = static_cast<std::size_t>(edges[k].j);
    unit_w[k] = w[k] / std::sqrt(diag[i] * diag[j]) * scale[i] * scale[j];
  }
  for (std::size_t i = 0; i < out_diag.size(); ++i) out_diag[i] = scale[i] * scale[i];
  auto theta = symmetric_from_edges(p, edges, unit_w, out_diag);
  return finish_model(std::move(theta), edges, {"precision51", {{"p", static_cast<double>(p)}}, seed});
}

struct Precision53Options {
  double min_magnitude = 0.1;
  double max_magnitude = 0.3;
  double min_eigenvalue = 0.2;
  double shrink = 0.95;
  int max_rounds = 200;
};

/// Unit diagonal, off-diagonal magnitudes U[0.1, 0.3] with random sign. While
/// the minimum eigenvalue is below 0.2 the magnitudes are pulled toward the
/// 0.1 floor (m <- 0.1 + 0.95 (m - 0.1)); fails after max_rounds.
inline GraphModel build_precision_53(const EdgeList& edges_in, Index p, std::uint64_t seed, Precision53Options opt = {}) {
  if (edges_in.empty()) throw UsageError("build_precision_53: empty edge set");
  if (p > kEigenCheckCap) throw UsageError("build_precision_53: p exceeds the dense eigenvalue cap");
  const EdgeList edges = normalize_edges(edges_in);
  Rng rng(seed);
  std::vector<double> excess(edges.size());
  std::vector<double> sign(edges.size());
  for (std::size_t k = 0; k < edges.size(); ++k) {
    excess[k] = rng.uniform(opt.min_magnitude, opt.max_magnitude) - opt.min_magnitude;
    sign[k] = rng.coin() ? -1.0 : 1.0;
  }
  const std::vector<double> ones(static_cast<std::size_t>(p), 1.0);
  double factor = 1.0;
  for (int round = 0; round <= opt.max_rounds; ++round) {
    std::vector<double> w(edges.size());
    for (std::size_t k = 0; k < edges.size(); ++k) w[k] = sign[k] * (opt.min_magnitude + factor * excess[k]);
    auto theta = symmetric_from_edges(p, edges, w, ones);
    const double lmin = min_eigenvalue_dense(theta.to_dense());
    if (lmin >= opt.min_eigenvalue) {
      auto m = finish_model(std::move(theta), edges, {"precision53", {{"p", static_cast<double>(p)}, {"shrink_rounds", round}}, seed});
      return m;
    }
    factor *= opt.shrink;
  }
  std::ostringstream os;
  os << "build_precision_53: minimum eigenvalue stays below " << opt.min_eigenvalue << " with all magnitudes >= "
     << opt.min_magnitude << " after " << opt.max_rounds << " rounds";
  throw NumericError(os.str());
}

/// Tridiagonal: unit diagonal, rho on the first off-diagonals.
inline GraphModel gen_chain(Index p, double rho) {
  if (p < 2) throw UsageError("gen_chain: p must be >= 2");
  if (rho < 0.0 || rho > 0.5) {
    std::ostringstream os;
    os << "gen_chain: rho = " << rho << " outside [0, 0.5]; the tridiagonal matrix is not positive definite for all p";
    throw UsageError(os.str());
  }
  EdgeList edges;
  std::vector<double> w;
  if (rho > 0.0) {
    for (Index i = 0; i + 1 < p; ++i) {
      edges.push_back({i, i + 1});
      w.push_back(rho);
    }
  }
  auto theta = symmetric_from_edges(p, edges, w, std::vector<double>(static_cast<std::size_t>(p), 1.0));
  auto m = finish_model(std::move(theta), edges, {"chain", {{"p", static_cast<double>(p)}, {"rho", rho}}, 0});
  if (rho == 0.5) m.warnings.push_back("rho = 0.5: minimum eigenvalue 1 - cos(pi/(p+1)) tends to 0 as p grows");
  return m;
}

/// Node 0 joined to nodes 1..d-1 with weight 2.5/(d-1); unit diagonal.
inline GraphModel gen_star(Index p, Index d) {
  if (d < 8) {
    std::ostringstream os;
    os << "gen_star: d = " << d << " < 8; positive definiteness needs 2.5/sqrt(d-1) < 1, i.e. d - 1 > 6.25";
    throw UsageError(os.str());
  }
  if (p < d) throw UsageError("gen_star: p must be >= d");
  const double a = 2.5 / static_cast<double>(d - 1);
  EdgeList edges;
  for (Index j = 1; j < d; ++j) edges.push_back({0, j});
  auto theta = symmetric_from_edges(p, edges, std::vector<double>(edges.size(), a),
                                    std::vector<double>(static_cast<std::size_t>(p), 1.0));
  return finish_model(std::move(theta), edges,
                      {"star", {{"p", static_cast<double>(p)}, {"d", static_cast<double>(d)}}, 0});
}

// ---------------------------------------------------------------------------
// Samplers

/// Unit lower triangular factor stored with its diagonal.
struct TriangularFactor {
  SparseSquare lower;
};

/// Edges of the support of L L^T for a unit lower triangular L.
inline EdgeList factor_precision_edges(const TriangularFactor& f) {
  const auto lt = f.lower.transpose();  // row k holds column k of L
  std::set<Edge> e;
  for (Index k = 0; k < lt.dim(); ++k) {
    const auto rows = lt.row_cols(k);  // includes k itself
    for (std::size_t a = 0; a < rows.size(); ++a)
      for (std::size_t b = a + 1; b < rows.size(); ++b) e.insert({std::min(rows[a], rows[b]), std::max(rows[a], rows[b])});
  }
  return {e.begin(), e.end()};
}

/// L L^T as a sparse matrix.
inline SparseSquare factor_precision(const TriangularFactor& f) {
  const auto lt = f.lower.transpose();  // row k lists the rows i with L_ik != 0
  std::vector<Triplet> t;
  for (Index k = 0; k < lt.dim(); ++k) {
    const auto rows = lt.row_cols(k);
    const auto vals = lt.row_values(k);
    for (std::size_t a = 0; a < rows.size(); ++a)
      for (std::size_t b = 0; b < rows.size(); ++b) t.push_back({rows[a], rows[b], vals[a] * vals[b]});
  }
  return SparseSquare::from_triplets(f.lower.dim(), std::move(t));
}

inline double average_degree(const EdgeList& edges, Index p) { return 2.0 * static_cast<double>(edges.size()) / static_cast<double>(p); }

namespace detail {
inline TriangularFactor factor_with_entries(Index p, Index entries, std::uint64_t seed) {
  constexpr double kGap = 0.05;
  Rng rng(seed);
  std::vector<Triplet> t;
  for (Index i = 0; i < p; ++i) t.push_back({i, i, 1.0});
  std::unordered_set<std::uint64_t> seen;
  const Index cap = p * (p - 1) / 2;
  entries = std::min(entries, cap);
  while (static_cast<Index>(seen.size()) < entries) {
    Index a = static_cast<Index>(rng.below(static_cast<std::uint64_t>(p)));
    Index b = static_cast<Index>(rng.below(static_cast<std::uint64_t>(p)));
    if (a == b) continue;
    if (a < b) std::swap(a, b);  // row a > column b
    if (!seen.insert(static_cast<std::uint64_t>(a) * static_cast<std::uint64_t>(p) + static_cast<std::uint64_t>(b)).second) continue;
    double v = rng.uniform(kGap, 1.0);
    if (rng.coin()) v = -v;
    t.push_back({a, b, v});
  }
  return {SparseSquare::from_triplets(p, std::move(t))};
}
}  // namespace detail

/// Sparse unit lower triangular L whose implied precision L L^T has
/// (close to) the requested average degree. The entry count is tuned by
/// bracketing and bisection; every trial reuses `seed`, so the result is
/// deterministic.
inline TriangularFactor gen_cholesky_factor(Index p, double avg_degree, std::uint64_t seed) {
  if (p < 2) throw UsageError("gen_cholesky_factor: p must be >= 2");
  if (!(avg_degree >= 0.0)) throw UsageError("gen_cholesky_factor: avg_degree must be >= 0");
  if (avg_degree == 0.0) return {SparseSquare::identity(p)};
  Index entries = std::max<Index>(1, static_cast<Index>(std::llround(avg_degree * static_cast<double>(p) / 2.0)));
  TriangularFactor best{SparseSquare::identity(p)};
  double best_err = std::numeric_limits<double>::infinity();
  // fill-in makes the degree grow faster than the entry count: bracket the
  // target, then bisect
  Index lo = 0, hi = -1;
  for (int it = 0; it < 40; ++it) {
    auto f = detail::factor_with_entries(p, entries, seed);
    const double got = average_degree(factor_precision_edges(f), p);
    const double err = std::abs(got - avg_degree);
    if (err < best_err) {
      best_err = err;
      best = std::move(f);
    }
    if (err == 0.0) break;
    if (got > avg_degree) hi = entries; else lo = entries;
    const Index next = hi < 0 ? 2 * entries : (lo + hi) / 2;
    if (next == entries || (hi >= 0 && hi - lo <= 1)) break;
    entries = next;
  }
  return best;
}

/// Rows y with L^T y = x, x ~ N(0, I), by back-substitution; then centred.
inline DenseData sample_from_factor(const TriangularFactor& f, Index n, std::uint64_t seed) {
  const Index p = f.lower.dim();
  if (n < 1) throw UsageError("sample_from_factor: n must be >= 1");
  const auto lt = f.lower.transpose();  // upper triangular
  Rng rng(seed);
  Eigen::MatrixXd raw(n, p);
  std::vector<double> x(static_cast<std::size_t>(p)), y(static_cast<std::size_t>(p));
  for (Index r = 0; r < n; ++r) {
    for (auto& v : x) v = rng.normal();
    for (Index i = p - 1; i >= 0; --i) {
      double acc = x[static_cast<std::size_t>(i)];
      const auto c = lt.row_cols(i);
      const auto v = lt.row_values(i);
      for (std::size_t k = 0; k < c.size(); ++k) {
        if (c[k] > i) acc -= v[k] * y[static_cast<std::size_t>(c[k])];
      }
      y[static_cast<std::size_t>(i)] = acc;  // unit diagonal
    }
    for (Index i = 0; i < p; ++i) raw(r, i) = y[static_cast<std::size_t>(i)];
  }
  return center_columns(raw);
}

/// n draws from N(0, Theta^{-1}) using the Cholesky factor of Theta; centred.
inline DenseData sample_gaussian(const SparseSquare& theta, Index n, std::uint64_t seed,
                                 Index dense_cap = kDefaultDenseCap) {
  const Index p = theta.dim();
  if (p > dense_cap) throw UsageError("sample_gaussian: p exceeds the dense cap; use sample_from_factor");
  if (n < 1) throw UsageError("sample_gaussian: n must be >= 1");
  const Eigen::MatrixXd dense = theta.to_dense();
  Eigen::LLT<Eigen::MatrixXd> llt(dense);
  if (llt.info() != Eigen::Success) throw NumericError("sample_gaussian: theta is not positive definite");
  Rng rng(seed);
  Eigen::MatrixXd z(p, n);
  for (Index r = 0; r < n; ++r)
    for (Index i = 0; i < p; ++i) z(i, r) = rng.normal();
  // theta = L L^T, so y = L^{-T} z has covariance theta^{-1}
  const Eigen::MatrixXd l = llt.matrixL();
  const Eigen::MatrixXd y = l.transpose().triangularView<Eigen::Upper>().solve(z);
  return center_columns(y.transpose());
}

}  // namespace accord::sim
