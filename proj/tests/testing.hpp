#pragma once

// Helpers shared by the unit tests and the acceptance binary: random
// instances, a central finite-difference gradient checker, and dense
// eigendecomposition oracles built on Eigen.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "kraw/autodiff.hpp"
#include "kraw/graph.hpp"
#include "kraw/matrix.hpp"
#include "kraw/nn.hpp"

namespace kraw::testing {

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                            double lo = -1.0, double hi = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = uniform(rng, lo, hi);
  return m;
}

/// Erdos-Renyi graph; may contain isolated nodes.
inline graph::Graph random_graph(std::size_t n, double edge_prob, std::mt19937_64& rng) {
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v)
      if (uniform(rng, 0.0, 1.0) < edge_prob) edges.emplace_back(u, v);
  return graph::Graph::from_edges(n, edges);
}

inline Eigen::MatrixXd to_eigen(const Matrix& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) e(r, c) = m(r, c);
  return e;
}

inline Matrix from_eigen(const Eigen::MatrixXd& e) {
  Matrix m(static_cast<std::size_t>(e.rows()), static_cast<std::size_t>(e.cols()));
  for (Eigen::Index r = 0; r < e.rows(); ++r)
    for (Eigen::Index c = 0; c < e.cols(); ++c)
      m(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = e(r, c);
  return m;
}

inline Eigen::VectorXd eigenvalues(const graph::SparseMatrix& s) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(to_eigen(s.to_dense()));
  return solver.eigenvalues();
}

/// U diag(f(lambda_i)) U^T X for symmetric S = U diag(lambda) U^T.
inline Matrix spectral_apply(const graph::SparseMatrix& s, const Matrix& x,
                             const std::function<double(double)>& f) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(to_eigen(s.to_dense()));
  const Eigen::MatrixXd& u = solver.eigenvectors();
  Eigen::VectorXd d = solver.eigenvalues();
  for (Eigen::Index i = 0; i < d.size(); ++i) d(i) = f(d(i));
  return from_eigen(u * d.asDiagonal() * u.transpose() * to_eigen(x));
}

/// Builds a scalar loss from leaves holding the given inputs.
using LossFn = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "input i entry j: analytic a, numeric n"
};

/// Relative error with a floor so entries whose true gradient is ~0 are
/// judged on an absolute 1e-3 scale.
inline double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
  return std::abs(analytic - numeric) / scale;
}

/// Compares tape gradients against central differences of step `h` for every
/// entry of every input.
inline GradCheckResult grad_check(const LossFn& loss_fn, const std::vector<Matrix>& inputs,
                                  double h = 1e-5) {
  std::vector<Matrix> analytic;
  {
    ad::Tape tape;
    std::vector<ad::Var> leaves;
    for (const Matrix& m : inputs) leaves.push_back(tape.leaf(m));
    const ad::Var loss = loss_fn(tape, leaves);
    tape.backward(loss);
    for (const ad::Var& v : leaves) analytic.push_back(v.grad());
  }
  auto eval = [&](const std::vector<Matrix>& xs) {
    ad::Tape tape;
    std::vector<ad::Var> leaves;
    for (const Matrix& m : xs) leaves.push_back(tape.leaf(m));
    return loss_fn(tape, leaves).value().item();
  };

  GradCheckResult result;
  std::vector<Matrix> work = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t j = 0; j < inputs[i].size(); ++j) {
      const double orig = inputs[i].values()[j];
      work[i].values()[j] = orig + h;
      const double up = eval(work);
      work[i].values()[j] = orig - h;
      const double down = eval(work);
      work[i].values()[j] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[i].values()[j];
      const double err = relative_error(a, numeric);
      if (err >= result.max_rel_error) {
        std::ostringstream os;
        os.precision(10);
        os << "input " << i << " entry " << j << ": analytic " << a << ", numeric " << numeric;
        result.max_rel_error = err;
        result.worst = os.str();
      }
    }
  }
  return result;
}

/// Finite-difference check of every entry of every parameter. `loss` builds
/// the scalar loss on the given tape from parameters bound through `binding`.
using ParamLossFn = std::function<ad::Var(ad::Tape&, nn::ParamBinding&)>;

inline GradCheckResult grad_check_params(std::vector<nn::Parameter*> params,
                                         const ParamLossFn& loss_fn, double h = 1e-5) {
  {
    ad::Tape tape;
    nn::ParamBinding binding(tape, true);
    tape.backward(loss_fn(tape, binding));
    binding.store_grads(params);
  }
  auto eval = [&] {
    ad::Tape tape;
    nn::ParamBinding binding(tape, false);
    return loss_fn(tape, binding).value().item();
  };
  GradCheckResult result;
  for (nn::Parameter* p : params) {
    for (std::size_t j = 0; j < p->value.size(); ++j) {
      double& slot = p->value.values()[j];
      const double orig = slot;
      slot = orig + h;
      const double up = eval();
      slot = orig - h;
      const double down = eval();
      slot = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = p->grad.values()[j];
      const double err = relative_error(a, numeric);
      if (err >= result.max_rel_error) {
        std::ostringstream os;
        os.precision(10);
        os << p->name << "[" << j << "]: analytic " << a << ", numeric " << numeric;
        result.max_rel_error = err;
        result.worst = os.str();
      }
    }
  }
  return result;
}

/// Randomizes every parameter of a layer (Glorot init leaves LayerNorm at
/// identity and p at 0.5, which would hide gradient bugs).
inline void perturb(nn::ConvLayer& layer, std::mt19937_64& rng) {
  for (nn::Parameter* p : layer.parameters())
    for (double& v : p->value.values()) v += uniform(rng, -0.5, 0.5);
}

/// Random weights for reducing a matrix output to a scalar loss.
inline ad::Var reduce(ad::Var out, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x5eed);
  return ad::weighted_sum(out, random_matrix(out.rows(), out.cols(), rng));
}

/// Scaled Laplacian of a connected-ish random graph with n nodes.
inline graph::SparseMatrix random_scaled_laplacian(std::size_t n, std::mt19937_64& rng) {
  return graph::scale_laplacian(graph::sym_laplacian(random_graph(n, 0.5, rng)));
}

/// Entries uniform in +-[0.1, 1], away from the ReLU kink.
inline Matrix away_from_zero(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = (uniform(rng, 0, 1) < 0.5 ? -1 : 1) * uniform(rng, 0.1, 1.0);
  return m;
}

struct OpCase {
  std::string name;
  std::function<GradCheckResult(std::uint64_t seed)> run;
};

/// One finite-difference check per tracked op plus the full convolution
/// layers and model, each on random inputs with dimensions <= 8.
inline std::vector<OpCase> gradient_cases() {
  using ad::Var;
  std::vector<OpCase> cases;
  auto dim = [](std::mt19937_64& rng) {
    return static_cast<std::size_t>(2 + std::uniform_int_distribution<int>(0, 6)(rng));
  };
  cases.push_back({"spmm", [dim](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     const std::size_t n = dim(rng), f = dim(rng);
                     const auto s = random_scaled_laplacian(n, rng);
                     return grad_check([&](ad::Tape&, const std::vector<Var>& v) {
                       return reduce(ad::spmm(s, v[0]), seed);
                     }, {random_matrix(n, f, rng)});
                   }});
  cases.push_back({"matmul", [dim](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     const std::size_t a = dim(rng), b = dim(rng), c = dim(rng);
                     return grad_check([&](ad::Tape&, const std::vector<Var>& v) {
                       return reduce(ad::matmul(v[0], v[1]), seed);
                     }, {random_matrix(a, b, rng), random_matrix(b, c, rng)});
                   }});
  cases.push_back({"add", [dim](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     const std::size_t a = dim(rng), b = dim(rng);
                     return grad_check([&](ad::Tape&, const std::vector<Var>& v) {
                       return reduce(ad::add(v[0], v[1]), seed);
                     }, {random_matrix(a, b, rng), random_matrix(a, b, rng)});
                   }});
  cases.push_back({"scale", [dim](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     const std::size_t a = dim(rng), b = dim(rng);
                     return grad_check([&](ad::Tape&, const std::vector<Var>& v) {
                       return reduce(ad::scale(v[0], v[1]), seed);
                     }, {random_matrix(a, b, rng), random_matrix(1, 1, rng)});
                   }});
  cases.push_back({"sum", [dim](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     const std::size_t a = dim(rng), b = dim(rng);
                     return grad_check([&](ad::Tape&, const std::vector<Var>& v) {
                       return ad::scale(ad::sum(v[0]), v[1]);
                     }, {random_matrix(a, b, rng), random_matrix(1, 1, rng)});
                   }});
  cases.push_back({"relu", [dim](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     const std::size_t a = dim(rng), b = dim(rng);
                     return grad_check([&](ad::Tape&, const std::vector<Var>& v) {
                       return reduce(ad::relu(v[0]), seed);
                     }, {away_from_zero(a, b, rng)});
                   }});
  cases.push_back({"sigmoid", [dim](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     const std::size_t a = dim(rng), b = dim(rng);
                     return grad_check([&](ad::Tape&, const std::vector<Var>& v) {
                       return reduce(ad::sigmoid(v[0]), seed);
                     }, {random_matrix(a, b, rng, -4.0, 4.0)});
                   }});
  cases.push_back({"layernorm", [dim](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     const std::size_t a = dim(rng), b = dim(rng);
                     return grad_check([&](ad::Tape&, const std::vector<Var>& v) {
                       return reduce(ad::layernorm(v[0], v[1], v[2], 1e-5), seed);
                     }, {random_matrix(a, b, rng, -2.0, 2.0), random_matrix(1, b, rng, 0.5, 1.5),
                         random_matrix(1, b, rng)});
                   }});
  cases.push_back({"dropout", [dim](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     const std::size_t a = dim(rng), b = dim(rng);
                     return grad_check([&](ad::Tape&, const std::vector<Var>& v) {
                       ad::Rng mask_rng(seed);  // same mask on every evaluation
                       return reduce(ad::dropout(v[0], 0.5, mask_rng, true), seed);
                     }, {random_matrix(a, b, rng)});
                   }});
  cases.push_back({"concat_cols", [dim](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     const std::size_t n = dim(rng);
                     return grad_check([&](ad::Tape&, const std::vector<Var>& v) {
                       return reduce(ad::concat_cols(v), seed);
                     }, {random_matrix(n, dim(rng), rng), random_matrix(n, dim(rng), rng),
                         random_matrix(n, dim(rng), rng)});
                   }});
  cases.push_back({"linear", [dim](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     const std::size_t n = dim(rng), i = dim(rng), o = dim(rng);
                     return grad_check([&](ad::Tape&, const std::vector<Var>& v) {
                       return reduce(ad::linear(v[0], v[1], v[2]), seed);
                     }, {random_matrix(n, i, rng), random_matrix(i, o, rng),
                         random_matrix(1, o, rng)});
                   }});
  cases.push_back({"softmax_cross_entropy", [dim](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     const std::size_t n = dim(rng), c = dim(rng);
                     std::vector<int> labels(n);
                     for (int& l : labels) l = std::uniform_int_distribution<int>(0, int(c) - 1)(rng);
                     std::vector<std::size_t> rows;
                     for (std::size_t r = 0; r < n; r += 2) rows.push_back(r);
                     return grad_check([&](ad::Tape&, const std::vector<Var>& v) {
                       return ad::softmax_cross_entropy(v[0], labels, rows);
                     }, {random_matrix(n, c, rng, -3.0, 3.0)});
                   }});
  cases.push_back({"recurrence_step", [dim](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     const std::size_t n = dim(rng), f = dim(rng);
                     const auto s = random_scaled_laplacian(n, rng);
                     const int N = 20, k = 1 + static_cast<int>(seed % 5);
                     return grad_check([&](ad::Tape&, const std::vector<Var>& v) {
                       // Coefficients are recomputed from the shape leaf so that the
                       // forward value depends on it.
                       const double p = v[2].value().item();
                       const ad::StepCoeffs c{1.0, (N - k) * p + k * (1 - p),
                                              k * (N - k + 1) * p * (1 - p), double(N - 2 * k),
                                              k * (N - k + 1) * (1 - 2 * p)};
                       return reduce(ad::recurrence_step(s, v[0], v[1], c, v[2]), seed);
                     }, {random_matrix(n, f, rng), random_matrix(n, f, rng),
                         Matrix::scalar(uniform(rng, 0.1, 0.9))});
                   }});
  for (poly::Family family : {poly::Family::krawtchouk, poly::Family::chebyshev}) {
    cases.push_back({std::string(poly::to_string(family)) + "_conv_layer",
                     [family, dim](std::uint64_t seed) {
                       std::mt19937_64 rng(seed);
                       const std::size_t n = 6, fin = 3, fout = dim(rng);
                       const int K = 4;
                       const auto lap = graph::sym_laplacian(random_graph(n, 0.5, rng));
                       const auto op = family == poly::Family::krawtchouk
                                           ? graph::scale_laplacian(lap)
                                           : graph::chebyshev_operator(lap);
                       nn::Rng init(seed);
                       nn::ConvLayer layer = nn::make_conv(family, fin, fout, K, 20, init);
                       perturb(layer, rng);
                       const Matrix x = random_matrix(n, fin, rng);
                       return grad_check_params(layer.parameters(),
                                                [&](ad::Tape& tape, nn::ParamBinding& b) {
                                                  const Var xv = tape.constant(x);
                                                  return reduce(nn::conv_forward(layer, xv, op, b),
                                                                seed);
                                                });
                     }});
  }
  cases.push_back({"krawtchouk_model_cross_entropy", [](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     const std::size_t n = 8;
                     const auto ops = nn::GraphOperators::from_graph(random_graph(n, 0.4, rng));
                     nn::ModelConfig cfg;
                     cfg.in_features = 3;
                     cfg.hidden = 4;
                     cfg.num_classes = 3;
                     cfg.K = 3;
                     nn::Model model = nn::make_model(cfg, seed);
                     perturb(model.conv1, rng);
                     perturb(model.conv2, rng);
                     const Matrix x = random_matrix(n, 3, rng);
                     std::vector<int> labels(n);
                     for (int& l : labels) l = std::uniform_int_distribution<int>(0, 2)(rng);
                     const std::vector<std::size_t> rows{0, 2, 3, 5, 7};
                     return grad_check_params(model.parameters(),
                                              [&](ad::Tape& tape, nn::ParamBinding& b) {
                                                ad::Rng drop(seed);
                                                const Var logits = nn::model_forward(
                                                    model, tape.constant(x),
                                                    ops.scaled_laplacian, true, drop, b);
                                                return ad::softmax_cross_entropy(logits, labels,
                                                                                 rows);
                                              });
                   }});
  return cases;
}

}  // namespace kraw::testing
