#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "kraw/autodiff.hpp"
#include "kraw/graph.hpp"
#include "kraw/matrix.hpp"
#include "kraw/poly.hpp"

namespace kraw::nn {

using ad::Rng;
using ad::Var;
using poly::Family;

constexpr double kLayerNormEps = 1e-5;

/// A learnable array with its gradient buffer.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  /// Whether L2 weight decay applies.
  bool decay = true;
};

/// One spectral convolution: polynomial bases of the graph operator applied
/// to X, LayerNorm on each basis, column concatenation, then a linear map.
struct ConvLayer {
  Family family = Family::krawtchouk;
  int N = 20;
  int K = 3;
  std::size_t in_features = 0;
  std::size_t out_features = 0;

  Parameter p_raw;   // 1x1, only used by the Krawtchouk family
  Parameter weight;  // (K * in) x out
  Parameter bias;    // 1 x out
  std::vector<Parameter> ln_gain;    // K of 1 x in
  std::vector<Parameter> ln_offset;  // K of 1 x in

  /// sigmoid(p_raw); always strictly inside (0,1).
  double shape_p() const;
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
};

struct ModelConfig {
  Family family = Family::krawtchouk;
  std::size_t in_features = 0;
  std::size_t hidden = 16;
  std::size_t num_classes = 2;
  int K = 3;
  int N = 20;
  double dropout = 0.5;
};

/// conv1 (in -> hidden), ReLU, dropout, conv2 (hidden -> classes).
struct Model {
  ModelConfig config;
  ConvLayer conv1;
  ConvLayer conv2;

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  /// Learned p of each Krawtchouk layer (empty for Chebyshev).
  std::vector<double> shape_p() const;
};

/// Glorot-uniform weights, zero bias, unit gains, zero offsets, p_raw = 0.
ConvLayer make_conv(Family family, std::size_t in, std::size_t out, int K, int N, Rng& rng,
                    std::string_view name_prefix = "");
Model make_model(const ModelConfig& config, std::uint64_t seed);

/// The two operators a model may run on, built once per graph.
struct GraphOperators {
  graph::SparseMatrix scaled_laplacian;  // 0.5 * L_sym, spectrum [0,1]
  graph::SparseMatrix chebyshev;         // L_sym - I, spectrum [-1,1]

  static GraphOperators from_graph(const graph::Graph& g);
  const graph::SparseMatrix& for_family(Family f) const;
};

/// Krawtchouk bases X_0..X_{K-1} of `laplacian` (expected spectrum [0,1]),
/// with b_k and c_k recomputed from the tracked scalar p.
std::vector<Var> krawtchouk_bases(Var x, const graph::SparseMatrix& laplacian, Var p, int N,
                                  int K);
/// Chebyshev bases T_0(L~)X..T_{K-1}(L~)X.
std::vector<Var> chebyshev_bases(Var x, const graph::SparseMatrix& op, int K);

/// Puts model parameters on a tape and copies gradients back after backward().
class ParamBinding {
 public:
  explicit ParamBinding(ad::Tape& tape, bool track) : tape_(tape), track_(track) {}

  Var bind(const Parameter& p);
  /// Overwrites Parameter::grad with the tape adjoints of every tracked binding.
  void store_grads(std::vector<Parameter*> params) const;

 private:
  ad::Tape& tape_;
  bool track_;
  std::vector<std::pair<const Parameter*, Var>> bound_;
};

Var conv_forward(const ConvLayer& layer, Var x, const graph::SparseMatrix& op,
                 ParamBinding& binding);
Var model_forward(const Model& model, Var x, const graph::SparseMatrix& op, bool training,
                  Rng& dropout_rng, ParamBinding& binding);

/// Evaluation-mode logits without gradient tracking.
Matrix predict(const Model& model, const Matrix& features, const GraphOperators& ops);

/// JSON checkpoint with shapes, N, K, family and every parameter array.
/// Doubles are written in shortest round-trip form, so loading is bit-exact.
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace kraw::nn
