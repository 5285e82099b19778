#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "kraw/matrix.hpp"

namespace kraw::graph {

/// Immutable compressed-sparse-row matrix.
class SparseMatrix {
 public:
  struct Triplet {
    std::size_t row;
    std::size_t col;
    double value;
  };

  SparseMatrix() = default;
  /// Validates the CSR arrays; throws std::invalid_argument on malformed input.
  SparseMatrix(std::size_t rows, std::size_t cols, std::vector<std::size_t> row_offsets,
               std::vector<std::size_t> col_indices, std::vector<double> values);

  /// Duplicate (row, col) entries are summed. Columns end up sorted within each row.
  static SparseMatrix from_triplets(std::size_t rows, std::size_t cols,
                                    std::vector<Triplet> triplets);
  static SparseMatrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t nnz() const { return values_.size(); }

  std::span<const std::size_t> row_offsets() const { return row_offsets_; }
  std::span<const std::size_t> col_indices() const { return col_indices_; }
  std::span<const double> values() const { return values_; }

  bool is_symmetric(double tol = 1e-12) const;
  Matrix to_dense() const;

  /// Same pattern with every value multiplied by `factor`.
  SparseMatrix scaled(double factor) const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_offsets_{0};
  std::vector<std::size_t> col_indices_;
  std::vector<double> values_;
};

/// Simple undirected graph without self-loops or duplicate edges.
/// Each stored edge satisfies first < second; edges are sorted.
class Graph {
 public:
  struct BuildReport {
    std::size_t self_loops_dropped = 0;
    std::size_t duplicates_dropped = 0;
  };

  Graph() = default;
  explicit Graph(std::size_t num_nodes) : num_nodes_(num_nodes) {}

  /// Normalizes (u,v) and (v,u) to one edge, drops self-loops. Throws
  /// std::out_of_range for endpoints >= num_nodes.
  static Graph from_edges(std::size_t num_nodes,
                          std::span<const std::pair<std::size_t, std::size_t>> edges,
                          BuildReport* report = nullptr);

  std::size_t num_nodes() const { return num_nodes_; }
  std::size_t num_edges() const { return edges_.size(); }
  const std::vector<std::pair<std::size_t, std::size_t>>& edges() const { return edges_; }
  std::vector<std::size_t> degrees() const;

 private:
  std::size_t num_nodes_ = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges_;
};

/// I - D^{-1/2} A D^{-1/2}. Isolated nodes get a diagonal 1 and nothing else.
SparseMatrix sym_laplacian(const Graph& g);

/// 0.5 * L, mapping the spectrum [0,2] onto [0,1].
SparseMatrix scale_laplacian(const SparseMatrix& laplacian);

/// L - I, the usual Chebyshev rescaling under lambda_max = 2; spectrum in [-1,1].
SparseMatrix chebyshev_operator(const SparseMatrix& laplacian);

/// S * X. Rows are accumulated in ascending column order.
Matrix spmm(const SparseMatrix& s, const Matrix& x);
/// S^T * X.
Matrix spmm_transposed(const SparseMatrix& s, const Matrix& x);

}  // namespace kraw::graph
