#pragma once

// File formats:
//   data, binary : "ACRD" magic, u32 n, u32 p (little endian), then n*p
//                  little-endian f64 values, row-major.
//   data, CSV    : one sample per line, optional header line.
//   sparse       : MatrixMarket "coordinate real general", 1-based.
//   edges        : TSV "i<TAB>j<TAB>value", 0-based.

#include <Eigen/Dense>

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "accord/error.hpp"
#include "accord/linalg.hpp"
#include "accord/solver.hpp"

namespace accord::io {

namespace detail {

template <class T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

inline std::ifstream open_in(const std::filesystem::path& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  return in;
}

inline std::ofstream open_out(const std::filesystem::path& path, bool binary = false) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << std::setprecision(17);
  return out;
}

inline bool parse_double(std::string_view s, double& out) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace detail

inline constexpr char kMagic[4] = {'A', 'C', 'R', 'D'};

inline void write_binary(const std::filesystem::path& path, const Eigen::Ref<const Eigen::MatrixXd>& x) {
  auto out = detail::open_out(path, true);
  out.write(kMagic, 4);
  const auto n = detail::to_little(static_cast<std::uint32_t>(x.rows()));
  const auto p = detail::to_little(static_cast<std::uint32_t>(x.cols()));
  out.write(reinterpret_cast<const char*>(&n), 4);
  out.write(reinterpret_cast<const char*>(&p), 4);
  std::vector<double> row(static_cast<std::size_t>(x.cols()));
  for (Index r = 0; r < x.rows(); ++r) {
    for (Index c = 0; c < x.cols(); ++c) row[static_cast<std::size_t>(c)] = detail::to_little(x(r, c));
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(double)));
  }
  if (!out) throw IoError("write failed: " + path.string());
}

inline Eigen::MatrixXd read_binary(const std::filesystem::path& path) {
  auto in = detail::open_in(path, true);
  char magic[4];
  std::uint32_t n = 0, p = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&n), 4);
  in.read(reinterpret_cast<char*>(&p), 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw IoError(path.string() + ": not an ACRD data file");
  n = detail::to_little(n);
  p = detail::to_little(p);
  Eigen::MatrixXd x(n, p);
  std::vector<double> row(p);
  for (std::uint32_t r = 0; r < n; ++r) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(double)));
    if (!in) throw IoError(path.string() + ": truncated data");
    for (std::uint32_t c = 0; c < p; ++c) x(r, c) = detail::to_little(row[c]);
  }
  return x;
}

inline void write_csv(const std::filesystem::path& path, const Eigen::Ref<const Eigen::MatrixXd>& x) {
  auto out = detail::open_out(path);
  for (Index r = 0; r < x.rows(); ++r) {
    for (Index c = 0; c < x.cols(); ++c) out << (c ? "," : "") << x(r, c);
    out << '\n';
  }
}

/// CSV samples; the first line is treated as a header when any field is not
/// a number.
inline Eigen::MatrixXd read_csv(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto fields = detail::split(line, ',');
    std::vector<double> row;
    row.reserve(fields.size());
    bool numeric = true;
    for (auto f : fields) {
      double v;
      if (!detail::parse_double(f, v)) {
        numeric = false;
        break;
      }
      row.push_back(v);
    }
    if (!numeric) {
      if (rows.empty() && lineno == 1) continue;  // header
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": non-numeric field");
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": ragged row");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError(path.string() + ": no data rows");
  Eigen::MatrixXd x(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) x(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
  return x;
}

/// Dispatch on the magic bytes: ACRD binary, otherwise CSV.
inline Eigen::MatrixXd read_data(const std::filesystem::path& path) {
  {
    auto in = detail::open_in(path, true);
    char magic[4] = {};
    in.read(magic, 4);
    if (in && std::memcmp(magic, kMagic, 4) == 0) return read_binary(path);
  }
  return read_csv(path);
}

inline void write_matrix_market(const std::filesystem::path& path, const SparseSquare& m) {
  auto out = detail::open_out(path);
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << m.dim() << ' ' << m.dim() << ' ' << m.nnz() << '\n';
  for (Index i = 0; i < m.dim(); ++i) {
    const auto c = m.row_cols(i);
    const auto v = m.row_values(i);
    for (std::size_t k = 0; k < c.size(); ++k) out << i + 1 << ' ' << c[k] + 1 << ' ' << v[k] << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

inline SparseSquare read_matrix_market(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("%%MatrixMarket", 0) != 0) {
    throw IoError(path.string() + ": missing MatrixMarket banner");
  }
  const bool symmetric = line.find("symmetric") != std::string::npos;
  if (line.find("coordinate") == std::string::npos) throw IoError(path.string() + ": only coordinate format is supported");
  while (std::getline(in, line) && (line.empty() || line[0] == '%')) {
  }
  std::istringstream header(line);
  Index rows = 0, cols = 0, nnz = 0;
  if (!(header >> rows >> cols >> nnz) || rows != cols) throw IoError(path.string() + ": expected a square size line");
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(nnz));
  for (Index k = 0; k < nnz; ++k) {
    Index i, j;
    double v;
    if (!(in >> i >> j >> v)) throw IoError(path.string() + ": truncated entry list");
    if (i < 1 || i > rows || j < 1 || j > cols) throw IoError(path.string() + ": index out of range");
    t.push_back({i - 1, j - 1, v});
    if (symmetric && i != j) t.push_back({j - 1, i - 1, v});
  }
  return SparseSquare::from_triplets(rows, std::move(t));
}

/// Upper-triangle entries (i < j) of a symmetric sparse matrix, 0-based.
inline void write_edge_list(const std::filesystem::path& path, const SparseSquare& sym, const char* header = "i\tj\trho") {
  auto out = detail::open_out(path);
  out << header << '\n';
  for (Index i = 0; i < sym.dim(); ++i) {
    const auto c = sym.row_cols(i);
    const auto v = sym.row_values(i);
    for (std::size_t k = 0; k < c.size(); ++k) {
      if (c[k] > i) out << i << '\t' << c[k] << '\t' << v[k] << '\n';
    }
  }
}

/// Reads the (i, j) columns of an edge TSV (header line optional).
inline std::vector<std::pair<Index, Index>> read_edge_pairs(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  std::vector<std::pair<Index, Index>> out;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = detail::split(line, '\t');
    double a, b;
    if (f.size() < 2 || !detail::parse_double(f[0], a) || !detail::parse_double(f[1], b)) {
      if (first) {
        first = false;
        continue;
      }
      throw IoError(path.string() + ": malformed edge line");
    }
    first = false;
    out.emplace_back(static_cast<Index>(a), static_cast<Index>(b));
  }
  return out;
}

/// iteration, objective, step
inline void write_trace(const std::filesystem::path& path, const FitResult& fit) {
  auto out = detail::open_out(path);
  out << "iteration,objective,step\n";
  for (std::size_t t = 0; t < fit.objective_trace.size(); ++t) {
    out << t << ',' << fit.objective_trace[t] << ',' << (t < fit.step_trace.size() ? fit.step_trace[t] : 0.0) << '\n';
  }
}

}  // namespace accord::io
