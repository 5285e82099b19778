#include <gtest/gtest.h>

#include "kraw/graph.hpp"
#include "testing.hpp"

namespace kraw::graph {
namespace {

using Edges = std::vector<std::pair<std::size_t, std::size_t>>;

TEST(Graph, NormalizesDeduplicatesAndDropsSelfLoops) {
  const Edges edges{{1, 0}, {0, 1}, {2, 2}, {1, 2}, {2, 1}};
  Graph::BuildReport report;
  const Graph g = Graph::from_edges(3, edges, &report);
  EXPECT_EQ(g.num_edges(), 2u);
  EXPECT_EQ(report.duplicates_dropped, 2u);
  EXPECT_EQ(report.self_loops_dropped, 1u);
  for (auto [u, v] : g.edges()) EXPECT_LT(u, v);
  EXPECT_EQ(g.degrees(), (std::vector<std::size_t>{1, 2, 1}));
}

TEST(Graph, RejectsOutOfRangeEndpoint) {
  const Edges edges{{0, 3}};
  EXPECT_THROW(Graph::from_edges(3, edges), std::out_of_range);
}

TEST(SparseMatrix, RejectsMalformedCsr) {
  EXPECT_THROW(SparseMatrix(2, 2, {0, 2, 1}, {0, 1}, {1.0, 2.0}), std::invalid_argument);
  EXPECT_THROW(SparseMatrix(2, 2, {0, 1, 2}, {0, 5}, {1.0, 2.0}), std::invalid_argument);
  EXPECT_THROW(SparseMatrix(1, 1, {0, 1}, {0}, {std::nan("")}), std::invalid_argument);
}

TEST(SparseMatrix, TripletsSumDuplicates) {
  const auto s = SparseMatrix::from_triplets(2, 2, {{1, 0, 1.0}, {0, 1, 2.0}, {1, 0, 0.5}});
  EXPECT_EQ(s.to_dense(), (Matrix{{0, 2}, {1.5, 0}}));
  EXPECT_FALSE(s.is_symmetric());
}

TEST(Laplacian, PathOfTwo) {
  const Edges edges{{0, 1}};
  const auto l = sym_laplacian(Graph::from_edges(2, edges));
  EXPECT_EQ(l.to_dense(), (Matrix{{1, -1}, {-1, 1}}));
  EXPECT_EQ(scale_laplacian(l).to_dense(), (Matrix{{0.5, -0.5}, {-0.5, 0.5}}));
  EXPECT_EQ(chebyshev_operator(l).to_dense(), (Matrix{{0, -1}, {-1, 0}}));
  const auto ev = testing::eigenvalues(scale_laplacian(l));
  EXPECT_NEAR(ev(0), 0.0, 1e-15);
  EXPECT_NEAR(ev(1), 1.0, 1e-15);
}

TEST(Laplacian, IsolatedNode) {
  const auto l = sym_laplacian(Graph(1));
  EXPECT_EQ(l.to_dense(), (Matrix{{1}}));
  EXPECT_EQ(chebyshev_operator(l).to_dense(), (Matrix{{0}}));
}

TEST(Laplacian, Triangle) {
  const Edges edges{{0, 1}, {1, 2}, {0, 2}};
  const Matrix l = sym_laplacian(Graph::from_edges(3, edges)).to_dense();
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(l(i, j), i == j ? 1.0 : -0.5);
}

TEST(Laplacian, ScalingZeroMatrix) {
  const SparseMatrix zero(3, 3, {0, 0, 0, 0}, {}, {});
  EXPECT_EQ(scale_laplacian(zero).to_dense(), Matrix(3, 3));
}

TEST(Laplacian, SpectrumOnRandomGraphs) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto n = static_cast<std::size_t>(2 + trial % 29);
    const Graph g = testing::random_graph(n, testing::uniform(rng, 0.05, 0.6), rng);
    const auto l = sym_laplacian(g);
    EXPECT_TRUE(l.is_symmetric());
    const auto ev = testing::eigenvalues(l);
    EXPECT_GE(ev.minCoeff(), -1e-10) << "trial " << trial;
    EXPECT_LE(ev.maxCoeff(), 2.0 + 1e-10) << "trial " << trial;
    const auto evs = testing::eigenvalues(scale_laplacian(l));
    EXPECT_GE(evs.minCoeff(), -1e-10);
    EXPECT_LE(evs.maxCoeff(), 1.0 + 1e-10);
    const auto evc = testing::eigenvalues(chebyshev_operator(l));
    EXPECT_GE(evc.minCoeff(), -1.0 - 1e-10);
    EXPECT_LE(evc.maxCoeff(), 1.0 + 1e-10);
  }
}

TEST(Spmm, Examples) {
  std::mt19937_64 rng(5);
  const Matrix x = testing::random_matrix(4, 3, rng);
  EXPECT_EQ(spmm(SparseMatrix::identity(4), x), x);
  const SparseMatrix zero(4, 4, {0, 0, 0, 0, 0}, {}, {});
  EXPECT_EQ(spmm(zero, x), Matrix(4, 3));
  const auto s = SparseMatrix::from_triplets(
      2, 2, {{0, 0, 0.5}, {0, 1, -0.5}, {1, 0, -0.5}, {1, 1, 0.5}});
  EXPECT_EQ(spmm(s, Matrix{{1}, {0}}), (Matrix{{0.5}, {-0.5}}));
  EXPECT_THROW(spmm(s, x), std::invalid_argument);
}

TEST(Spmm, MatchesDenseProduct) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const Graph g = testing::random_graph(25, 0.2, rng);
    const auto l = scale_laplacian(sym_laplacian(g));
    const Matrix x = testing::random_matrix(25, 7, rng);
    const auto dense = testing::to_eigen(l.to_dense());
    EXPECT_LT(max_abs_diff(spmm(l, x), testing::from_eigen(dense * testing::to_eigen(x))), 1e-12);
    EXPECT_LT(max_abs_diff(spmm_transposed(l, x),
                           testing::from_eigen(dense.transpose() * testing::to_eigen(x))),
              1e-12);
  }
}

}  // namespace
}  // namespace kraw::graph
