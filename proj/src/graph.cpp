#include "kraw/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace kraw::graph {

SparseMatrix::SparseMatrix(std::size_t rows, std::size_t cols,
                           std::vector<std::size_t> row_offsets,
                           std::vector<std::size_t> col_indices, std::vector<double> values)
    : rows_(rows),
      cols_(cols),
      row_offsets_(std::move(row_offsets)),
      col_indices_(std::move(col_indices)),
      values_(std::move(values)) {
  if (row_offsets_.size() != rows_ + 1) {
    throw std::invalid_argument("SparseMatrix: row_offsets must have rows+1 entries");
  }
  if (row_offsets_.front() != 0 || row_offsets_.back() != values_.size()) {
    throw std::invalid_argument("SparseMatrix: row_offsets must span [0, nnz]");
  }
  if (col_indices_.size() != values_.size()) {
    throw std::invalid_argument("SparseMatrix: col_indices and values differ in length");
  }
  for (std::size_t r = 0; r < rows_; ++r) {
    if (row_offsets_[r] > row_offsets_[r + 1]) {
      throw std::invalid_argument("SparseMatrix: row_offsets must be nondecreasing");
    }
  }
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (col_indices_[i] >= cols_) {
      throw std::invalid_argument("SparseMatrix: column index " + std::to_string(col_indices_[i]) +
                                  " out of range");
    }
    if (!std::isfinite(values_[i])) throw std::invalid_argument("SparseMatrix: non-finite value");
  }
}

SparseMatrix SparseMatrix::from_triplets(std::size_t rows, std::size_t cols,
                                         std::vector<Triplet> triplets) {
  std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  std::vector<std::size_t> offsets(rows + 1, 0);
  std::vector<std::size_t> cols_out;
  std::vector<double> vals;
  cols_out.reserve(triplets.size());
  vals.reserve(triplets.size());
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    const auto& t = triplets[i];
    if (t.row >= rows || t.col >= cols) {
      throw std::out_of_range("SparseMatrix::from_triplets: entry (" + std::to_string(t.row) +
                              ", " + std::to_string(t.col) + ") out of range");
    }
    if (i > 0 && triplets[i - 1].row == t.row && triplets[i - 1].col == t.col) {
      vals.back() += t.value;
      continue;
    }
    cols_out.push_back(t.col);
    vals.push_back(t.value);
    ++offsets[t.row + 1];
  }
  for (std::size_t r = 0; r < rows; ++r) offsets[r + 1] += offsets[r];
  return SparseMatrix(rows, cols, std::move(offsets), std::move(cols_out), std::move(vals));
}

SparseMatrix SparseMatrix::identity(std::size_t n) {
  std::vector<std::size_t> offsets(n + 1);
  std::vector<std::size_t> cols(n);
  for (std::size_t i = 0; i < n; ++i) {
    offsets[i + 1] = i + 1;
    cols[i] = i;
  }
  return SparseMatrix(n, n, std::move(offsets), std::move(cols), std::vector<double>(n, 1.0));
}

bool SparseMatrix::is_symmetric(double tol) const {
  if (rows_ != cols_) return false;
  std::vector<Triplet> forward;
  std::vector<Triplet> mirrored;
  forward.reserve(nnz());
  mirrored.reserve(nnz());
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t i = row_offsets_[r]; i < row_offsets_[r + 1]; ++i) {
      forward.push_back({r, col_indices_[i], values_[i]});
      mirrored.push_back({col_indices_[i], r, values_[i]});
    }
  }
  const auto a = from_triplets(rows_, cols_, std::move(forward));
  const auto b = from_triplets(rows_, cols_, std::move(mirrored));
  // Patterns may differ by explicit zeros, so merge rows rather than compare arrays.
  for (std::size_t r = 0; r < rows_; ++r) {
    std::size_t i = a.row_offsets_[r], j = b.row_offsets_[r];
    const std::size_t ie = a.row_offsets_[r + 1], je = b.row_offsets_[r + 1];
    while (i < ie || j < je) {
      if (j == je || (i < ie && a.col_indices_[i] < b.col_indices_[j])) {
        if (std::abs(a.values_[i++]) > tol) return false;
      } else if (i == ie || b.col_indices_[j] < a.col_indices_[i]) {
        if (std::abs(b.values_[j++]) > tol) return false;
      } else {
        if (std::abs(a.values_[i++] - b.values_[j++]) > tol) return false;
      }
    }
  }
  return true;
}

Matrix SparseMatrix::to_dense() const {
  Matrix out(rows_, cols_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t i = row_offsets_[r]; i < row_offsets_[r + 1]; ++i)
      out(r, col_indices_[i]) += values_[i];
  return out;
}

SparseMatrix SparseMatrix::scaled(double factor) const {
  std::vector<double> vals(values_);
  for (double& v : vals) v *= factor;
  return SparseMatrix(rows_, cols_, row_offsets_, col_indices_, std::move(vals));
}

Graph Graph::from_edges(std::size_t num_nodes,
                        std::span<const std::pair<std::size_t, std::size_t>> edges,
                        BuildReport* report) {
  BuildReport local;
  Graph g(num_nodes);
  g.edges_.reserve(edges.size());
  for (auto [u, v] : edges) {
    if (u >= num_nodes || v >= num_nodes) {
      throw std::out_of_range("Graph: edge (" + std::to_string(u) + ", " + std::to_string(v) +
                              ") references a node >= " + std::to_string(num_nodes));
    }
    if (u == v) {
      ++local.self_loops_dropped;
      continue;
    }
    g.edges_.emplace_back(std::min(u, v), std::max(u, v));
  }
  std::sort(g.edges_.begin(), g.edges_.end());
  const auto last = std::unique(g.edges_.begin(), g.edges_.end());
  local.duplicates_dropped = static_cast<std::size_t>(g.edges_.end() - last);
  g.edges_.erase(last, g.edges_.end());
  if (report) *report = local;
  return g;
}

std::vector<std::size_t> Graph::degrees() const {
  std::vector<std::size_t> deg(num_nodes_, 0);
  for (auto [u, v] : edges_) {
    ++deg[u];
    ++deg[v];
  }
  return deg;
}

SparseMatrix sym_laplacian(const Graph& g) {
  const std::size_t n = g.num_nodes();
  const auto deg = g.degrees();
  std::vector<double> inv_sqrt(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    if (deg[i] > 0) inv_sqrt[i] = 1.0 / std::sqrt(static_cast<double>(deg[i]));

  std::vector<SparseMatrix::Triplet> triplets;
  triplets.reserve(n + 2 * g.num_edges());
  for (std::size_t i = 0; i < n; ++i) triplets.push_back({i, i, 1.0});
  for (auto [u, v] : g.edges()) {
    const double w = -inv_sqrt[u] * inv_sqrt[v];
    triplets.push_back({u, v, w});
    triplets.push_back({v, u, w});
  }
  auto laplacian = SparseMatrix::from_triplets(n, n, std::move(triplets));
  if (!laplacian.is_symmetric(1e-12)) {
    throw std::logic_error("sym_laplacian: constructed matrix is not symmetric");
  }
  return laplacian;
}

SparseMatrix scale_laplacian(const SparseMatrix& laplacian) { return laplacian.scaled(0.5); }

SparseMatrix chebyshev_operator(const SparseMatrix& laplacian) {
  if (laplacian.rows() != laplacian.cols()) {
    throw std::invalid_argument("chebyshev_operator: Laplacian must be square");
  }
  std::vector<SparseMatrix::Triplet> triplets;
  triplets.reserve(laplacian.nnz() + laplacian.rows());
  const auto offsets = laplacian.row_offsets();
  const auto cols = laplacian.col_indices();
  const auto vals = laplacian.values();
  for (std::size_t r = 0; r < laplacian.rows(); ++r) {
    triplets.push_back({r, r, -1.0});
    for (std::size_t i = offsets[r]; i < offsets[r + 1]; ++i) triplets.push_back({r, cols[i], vals[i]});
  }
  // from_triplets sums the diagonal; keep the explicit zero so the pattern is stable.
  return SparseMatrix::from_triplets(laplacian.rows(), laplacian.cols(), std::move(triplets));
}

Matrix spmm(const SparseMatrix& s, const Matrix& x) {
  if (s.cols() != x.rows()) {
    throw std::invalid_argument("spmm: sparse " + std::to_string(s.rows()) + "x" +
                                std::to_string(s.cols()) + " times dense " +
                                std::to_string(x.rows()) + "x" + std::to_string(x.cols()));
  }
  const std::size_t f = x.cols();
  Matrix out(s.rows(), f);
  const auto offsets = s.row_offsets();
  const auto cols = s.col_indices();
  const auto vals = s.values();
  for (std::size_t r = 0; r < s.rows(); ++r) {
    double* o = out.data() + r * f;
    for (std::size_t i = offsets[r]; i < offsets[r + 1]; ++i) {
      const double w = vals[i];
      const double* xr = x.data() + cols[i] * f;
      for (std::size_t j = 0; j < f; ++j) o[j] += w * xr[j];
    }
  }
  return out;
}

Matrix spmm_transposed(const SparseMatrix& s, const Matrix& x) {
  if (s.rows() != x.rows()) {
    throw std::invalid_argument("spmm_transposed: dimension mismatch");
  }
  const std::size_t f = x.cols();
  Matrix out(s.cols(), f);
  const auto offsets = s.row_offsets();
  const auto cols = s.col_indices();
  const auto vals = s.values();
  for (std::size_t r = 0; r < s.rows(); ++r) {
    const double* xr = x.data() + r * f;
    for (std::size_t i = offsets[r]; i < offsets[r + 1]; ++i) {
      const double w = vals[i];
      double* o = out.data() + cols[i] * f;
      for (std::size_t j = 0; j < f; ++j) o[j] += w * xr[j];
    }
  }
  return out;
}

}  // namespace kraw::graph
