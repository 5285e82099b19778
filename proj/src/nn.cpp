#include "kraw/nn.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "random_util.hpp"

namespace kraw::nn {

namespace {

using json = nlohmann::json;

Parameter make_param(std::string name, Matrix value, bool decay) {
  Matrix grad(value.rows(), value.cols());
  return Parameter{std::move(name), std::move(value), std::move(grad), decay};
}

json param_to_json(const Parameter& p) {
  return json{{"name", p.name},
              {"rows", p.value.rows()},
              {"cols", p.value.cols()},
              {"decay", p.decay},
              {"values", std::vector<double>(p.value.values().begin(), p.value.values().end())}};
}

void param_from_json(const json& j, Parameter& p) {
  const auto rows = j.at("rows").get<std::size_t>();
  const auto cols = j.at("cols").get<std::size_t>();
  if (rows != p.value.rows() || cols != p.value.cols()) {
    throw std::runtime_error("checkpoint: parameter '" + p.name + "' has shape " +
                             std::to_string(rows) + "x" + std::to_string(cols) + ", expected " +
                             std::to_string(p.value.rows()) + "x" +
                             std::to_string(p.value.cols()));
  }
  p.value = Matrix(rows, cols, j.at("values").get<std::vector<double>>());
  p.decay = j.at("decay").get<bool>();
}

json layer_to_json(const ConvLayer& layer) {
  json params = json::array();
  for (const Parameter* p : layer.parameters()) params.push_back(param_to_json(*p));
  return json{{"family", poly::to_string(layer.family)},
              {"N", layer.N},
              {"K", layer.K},
              {"in_features", layer.in_features},
              {"out_features", layer.out_features},
              {"parameters", params}};
}

void layer_from_json(const json& j, ConvLayer& layer) {
  auto params = layer.parameters();
  const auto& arr = j.at("parameters");
  if (arr.size() != params.size()) {
    throw std::runtime_error("checkpoint: expected " + std::to_string(params.size()) +
                             " parameters, found " + std::to_string(arr.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (arr[i].at("name").get<std::string>() != params[i]->name) {
      throw std::runtime_error("checkpoint: unexpected parameter '" +
                               arr[i].at("name").get<std::string>() + "'");
    }
    param_from_json(arr[i], *params[i]);
  }
}

}  // namespace

double ConvLayer::shape_p() const {
  const double x = p_raw.value.item();
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

std::vector<Parameter*> ConvLayer::parameters() {
  std::vector<Parameter*> out;
  if (family == Family::krawtchouk) out.push_back(&p_raw);
  out.push_back(&weight);
  out.push_back(&bias);
  for (auto& g : ln_gain) out.push_back(&g);
  for (auto& o : ln_offset) out.push_back(&o);
  return out;
}

std::vector<const Parameter*> ConvLayer::parameters() const {
  std::vector<const Parameter*> out;
  for (Parameter* p : const_cast<ConvLayer*>(this)->parameters()) out.push_back(p);
  return out;
}

std::vector<Parameter*> Model::parameters() {
  auto out = conv1.parameters();
  auto second = conv2.parameters();
  out.insert(out.end(), second.begin(), second.end());
  return out;
}

std::vector<const Parameter*> Model::parameters() const {
  auto out = conv1.parameters();
  auto second = conv2.parameters();
  out.insert(out.end(), second.begin(), second.end());
  return out;
}

std::vector<double> Model::shape_p() const {
  if (config.family != Family::krawtchouk) return {};
  return {conv1.shape_p(), conv2.shape_p()};
}

ConvLayer make_conv(Family family, std::size_t in, std::size_t out, int K, int N, Rng& rng,
                    std::string_view name_prefix) {
  if (K < 1) throw std::invalid_argument("make_conv: K must be >= 1");
  if (family == Family::krawtchouk && N < 1) throw std::invalid_argument("make_conv: N must be >= 1");
  if (in == 0 || out == 0) throw std::invalid_argument("make_conv: zero-width layer");
  ConvLayer layer;
  layer.family = family;
  layer.N = N;
  layer.K = K;
  layer.in_features = in;
  layer.out_features = out;

  const std::size_t fan_in = static_cast<std::size_t>(K) * in;
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + out));
  Matrix w(fan_in, out);
  for (double& v : w.values()) {
    v = (2.0 * detail::uniform01(rng) - 1.0) * bound;
  }
  const std::string prefix(name_prefix);
  layer.p_raw = make_param(prefix + "p_raw", Matrix::scalar(0.0), false);
  layer.weight = make_param(prefix + "weight", std::move(w), true);
  layer.bias = make_param(prefix + "bias", Matrix(1, out), true);
  for (int k = 0; k < K; ++k) {
    const std::string idx = std::to_string(k);
    layer.ln_gain.push_back(make_param(prefix + "ln_gain_" + idx, Matrix(1, in, 1.0), false));
    layer.ln_offset.push_back(make_param(prefix + "ln_offset_" + idx, Matrix(1, in), false));
  }
  return layer;
}

Model make_model(const ModelConfig& config, std::uint64_t seed) {
  if (config.dropout < 0.0 || config.dropout >= 1.0) {
    throw std::invalid_argument("make_model: dropout must lie in [0,1)");
  }
  std::seed_seq seq{seed, std::uint64_t{0x6b726177}};
  Rng rng(seq);
  Model m;
  m.config = config;
  m.conv1 = make_conv(config.family, config.in_features, config.hidden, config.K, config.N, rng,
                      "conv1.");
  m.conv2 = make_conv(config.family, config.hidden, config.num_classes, config.K, config.N, rng,
                      "conv2.");
  return m;
}

GraphOperators GraphOperators::from_graph(const graph::Graph& g) {
  const auto laplacian = graph::sym_laplacian(g);
  return GraphOperators{graph::scale_laplacian(laplacian), graph::chebyshev_operator(laplacian)};
}

const graph::SparseMatrix& GraphOperators::for_family(Family f) const {
  return f == Family::krawtchouk ? scaled_laplacian : chebyshev;
}

std::vector<Var> krawtchouk_bases(Var x, const graph::SparseMatrix& laplacian, Var p, int N,
                                  int K) {
  if (K < 1) throw std::invalid_argument("krawtchouk_bases: K must be >= 1");
  if (laplacian.rows() != laplacian.cols() || laplacian.cols() != x.rows()) {
    throw std::invalid_argument("krawtchouk_bases: operator does not match feature rows");
  }
  const double pv = p.value().item();
  std::vector<Var> bases{x};
  bases.reserve(K);
  for (int k = 0; k + 1 < K; ++k) {
    ad::StepCoeffs sc;
    sc.a = 1.0;
    sc.b = poly::krawtchouk_b(pv, N, k);
    sc.db = poly::krawtchouk_db_dp(N, k);
    if (k == 0) {
      bases.push_back(ad::recurrence_step(laplacian, bases[0], std::nullopt, sc, p));
    } else {
      sc.c = poly::krawtchouk_c(pv, N, k);
      sc.dc = poly::krawtchouk_dc_dp(pv, N, k);
      bases.push_back(ad::recurrence_step(laplacian, bases[k], bases[k - 1], sc, p));
    }
  }
  return bases;
}

std::vector<Var> chebyshev_bases(Var x, const graph::SparseMatrix& op, int K) {
  if (K < 1) throw std::invalid_argument("chebyshev_bases: K must be >= 1");
  if (op.rows() != op.cols() || op.cols() != x.rows()) {
    throw std::invalid_argument("chebyshev_bases: operator does not match feature rows");
  }
  std::vector<Var> bases{x};
  bases.reserve(K);
  for (int k = 0; k + 1 < K; ++k) {
    if (k == 0) {
      bases.push_back(ad::recurrence_step(op, bases[0], std::nullopt, {1.0, 0.0, 0.0, 0.0, 0.0}));
    } else {
      bases.push_back(ad::recurrence_step(op, bases[k], bases[k - 1], {2.0, 0.0, 1.0, 0.0, 0.0}));
    }
  }
  return bases;
}

Var ParamBinding::bind(const Parameter& p) {
  Var v = track_ ? tape_.leaf(p.value) : tape_.constant(p.value);
  if (track_) bound_.emplace_back(&p, v);
  return v;
}

void ParamBinding::store_grads(std::vector<Parameter*> params) const {
  for (Parameter* p : params) {
    p->grad = Matrix(p->value.rows(), p->value.cols());
    for (const auto& [bound, var] : bound_)
      if (bound == p) axpy(1.0, tape_.grad(var), p->grad);
  }
}

Var conv_forward(const ConvLayer& layer, Var x, const graph::SparseMatrix& op,
                 ParamBinding& binding) {
  if (x.cols() != layer.in_features) {
    throw std::invalid_argument("conv_forward: expected " + std::to_string(layer.in_features) +
                                " input features, got " + std::to_string(x.cols()));
  }
  std::vector<Var> bases;
  if (layer.family == Family::krawtchouk) {
    const Var p = ad::sigmoid(binding.bind(layer.p_raw));
    bases = krawtchouk_bases(x, op, p, layer.N, layer.K);
  } else {
    bases = chebyshev_bases(x, op, layer.K);
  }
  std::vector<Var> normalized;
  normalized.reserve(bases.size());
  for (std::size_t k = 0; k < bases.size(); ++k) {
    normalized.push_back(ad::layernorm(bases[k], binding.bind(layer.ln_gain[k]),
                                       binding.bind(layer.ln_offset[k]), kLayerNormEps));
  }
  const Var z = normalized.size() == 1 ? normalized[0] : ad::concat_cols(normalized);
  return ad::linear(z, binding.bind(layer.weight), binding.bind(layer.bias));
}

Var model_forward(const Model& model, Var x, const graph::SparseMatrix& op, bool training,
                  Rng& dropout_rng, ParamBinding& binding) {
  Var h = conv_forward(model.conv1, x, op, binding);
  h = ad::relu(h);
  h = ad::dropout(h, model.config.dropout, dropout_rng, training);
  return conv_forward(model.conv2, h, op, binding);
}

Matrix predict(const Model& model, const Matrix& features, const GraphOperators& ops) {
  ad::Tape tape;
  ParamBinding binding(tape, false);
  Rng unused(0);
  const Var x = tape.constant(features);
  const Var logits = model_forward(model, x, ops.for_family(model.config.family), false, unused,
                                   binding);
  return logits.value();
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  const auto& c = model.config;
  json j{{"format", "kraw-checkpoint-v1"},
         {"family", poly::to_string(c.family)},
         {"in_features", c.in_features},
         {"hidden", c.hidden},
         {"num_classes", c.num_classes},
         {"K", c.K},
         {"N", c.N},
         {"dropout", c.dropout},
         {"conv1", layer_to_json(model.conv1)},
         {"conv2", layer_to_json(model.conv2)}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << j.dump(1) << '\n';
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  const json j = json::parse(in);
  if (j.value("format", "") != "kraw-checkpoint-v1") {
    throw std::runtime_error("checkpoint " + path.string() + ": unknown format");
  }
  ModelConfig c;
  c.family = poly::parse_family(j.at("family").get<std::string>());
  c.in_features = j.at("in_features").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.num_classes = j.at("num_classes").get<std::size_t>();
  c.K = j.at("K").get<int>();
  c.N = j.at("N").get<int>();
  c.dropout = j.at("dropout").get<double>();
  Model m = make_model(c, 0);
  layer_from_json(j.at("conv1"), m.conv1);
  layer_from_json(j.at("conv2"), m.conv2);
  return m;
}

}  // namespace kraw::nn
