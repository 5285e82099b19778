#include "kraw/train.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <sstream>
#include <thread>

namespace kraw::train {

namespace {

/// Largest |b_k| or |c_k| any Krawtchouk layer of the model currently uses.
double max_abs_coefficient(const nn::Model& model) {
  double m = 0.0;
  for (const nn::ConvLayer* layer : {&model.conv1, &model.conv2}) {
    if (layer->family != poly::Family::krawtchouk) continue;
    const double p = layer->shape_p();
    for (int k = 0; k + 1 < layer->K; ++k) {
      m = std::max(m, std::abs(poly::krawtchouk_b(p, layer->N, k)));
      m = std::max(m, std::abs(poly::krawtchouk_c(p, layer->N, k)));
    }
  }
  return m;
}

std::string divergence_message(const nn::Model& model, int epoch, const std::string& what) {
  std::ostringstream msg;
  msg << "training diverged at epoch " << epoch << " (" << what << ")";
  const auto ps = model.shape_p();
  if (!ps.empty()) {
    msg << "; p =";
    for (double p : ps) msg << ' ' << p;
    msg << "; max |coefficient| = " << max_abs_coefficient(model);
  }
  return msg.str();
}

}  // namespace

void adam_update(double& value, double grad, double& m, double& v, int t, const AdamConfig& cfg,
                 bool decay) {
  const double g = decay ? grad + cfg.weight_decay * value : grad;
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
  v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
  const double m_hat = m / (1.0 - std::pow(cfg.beta1, t));
  const double v_hat = v / (1.0 - std::pow(cfg.beta2, t));
  value -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
}

void adam_step(std::span<nn::Parameter* const> params, AdamState& state, const AdamConfig& cfg) {
  if (state.m.empty()) {
    for (const nn::Parameter* p : params) {
      state.m.emplace_back(p->value.rows(), p->value.cols());
      state.v.emplace_back(p->value.rows(), p->value.cols());
    }
  }
  if (state.m.size() != params.size()) {
    throw std::invalid_argument("adam_step: optimizer state does not match parameter list");
  }
  ++state.step;
  for (std::size_t i = 0; i < params.size(); ++i) {
    nn::Parameter& p = *params[i];
    if (!p.grad.same_shape(p.value) || !state.m[i].same_shape(p.value)) {
      throw std::invalid_argument("adam_step: shape mismatch for '" + p.name + "'");
    }
    auto val = p.value.values();
    const auto grad = p.grad.values();
    auto m = state.m[i].values();
    auto v = state.v[i].values();
    for (std::size_t j = 0; j < val.size(); ++j)
      adam_update(val[j], grad[j], m[j], v[j], state.step, cfg, p.decay);
  }
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("TrainConfig: lr must be positive");
  if (weight_decay < 0.0) throw std::invalid_argument("TrainConfig: weight_decay must be >= 0");
  if (epochs < 0) throw std::invalid_argument("TrainConfig: epochs must be >= 0");
  if (eval_every < 1) throw std::invalid_argument("TrainConfig: eval_every must be >= 1");
}

std::string RunRecord::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  std::size_t num_p = epochs.empty() ? final_shape_p.size() : epochs.front().shape_p.size();
  out << "epoch,train_loss,train_acc,val_acc,test_acc,evaluated";
  for (std::size_t i = 0; i < num_p; ++i) out << ",p_conv" << (i + 1);
  out << '\n';
  for (const EpochRecord& e : epochs) {
    out << e.epoch << ',' << e.train_loss << ',' << e.train_acc << ',' << e.val_acc << ','
        << e.test_acc << ',' << (e.evaluated ? 1 : 0);
    for (double p : e.shape_p) out << ',' << p;
    out << '\n';
  }
  return out.str();
}

double accuracy(const Matrix& logits, const std::vector<int>& labels,
                std::span<const std::size_t> rows) {
  if (rows.empty()) throw std::invalid_argument("accuracy: empty mask");
  std::size_t correct = 0;
  for (std::size_t r : rows) {
    const auto row = logits.row(r);
    // max_element returns the first maximum, i.e. the lowest index on ties.
    const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    correct += best == labels.at(r);
  }
  return static_cast<double>(correct) / static_cast<double>(rows.size());
}

double evaluate(const nn::Model& model, const data::Dataset& dataset,
                std::span<const std::size_t> rows) {
  const auto ops = nn::GraphOperators::from_graph(dataset.graph);
  return accuracy(nn::predict(model, dataset.features, ops), dataset.labels, rows);
}

RunRecord train(nn::Model& model, const data::Dataset& dataset, const data::Split& split,
                const TrainConfig& config) {
  config.validate();
  split.validate(dataset.num_nodes());
  const auto start = std::chrono::steady_clock::now();

  const auto ops = nn::GraphOperators::from_graph(dataset.graph);
  const graph::SparseMatrix& op = ops.for_family(model.config.family);
  std::seed_seq dropout_seq{config.seed, std::uint64_t{0x64726f70}};
  nn::Rng dropout_rng(dropout_seq);
  const AdamConfig adam{config.lr, 0.9, 0.999, 1e-8, config.weight_decay};
  AdamState state;
  const auto params = model.parameters();

  RunRecord rec;
  auto eval_all = [&](double& tr, double& va, double& te) {
    const Matrix logits = nn::predict(model, dataset.features, ops);
    tr = accuracy(logits, dataset.labels, split.train);
    va = accuracy(logits, dataset.labels, split.val);
    te = accuracy(logits, dataset.labels, split.test);
  };
  eval_all(rec.initial_train_acc, rec.initial_val_acc, rec.initial_test_acc);
  rec.best_val_acc = rec.initial_val_acc;
  rec.best_val_test_acc = rec.initial_test_acc;
  rec.final_test_acc = rec.initial_test_acc;

  double last_tr = rec.initial_train_acc;
  double last_va = rec.initial_val_acc;
  double last_te = rec.initial_test_acc;
  rec.epochs.reserve(static_cast<std::size_t>(config.epochs));
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    EpochRecord e;
    e.epoch = epoch;
    {
      ad::Tape tape;
      nn::ParamBinding binding(tape, true);
      try {
        const ad::Var x = tape.constant(dataset.features);
        const ad::Var logits = nn::model_forward(model, x, op, true, dropout_rng, binding);
        const ad::Var loss = ad::softmax_cross_entropy(logits, dataset.labels, split.train);
        e.train_loss = loss.value().item();
        tape.backward(loss);
      } catch (const ad::NonFiniteError& err) {
        throw TrainingDiverged(divergence_message(model, epoch, err.what()));
      }
      binding.store_grads(params);
    }
    adam_step(params, state, adam);
    for (const nn::Parameter* p : params) {
      if (!p->value.all_finite()) {
        throw TrainingDiverged(divergence_message(model, epoch, "non-finite " + p->name));
      }
    }

    e.evaluated = epoch % config.eval_every == 0 || epoch == config.epochs;
    if (e.evaluated) {
      try {
        eval_all(last_tr, last_va, last_te);
      } catch (const ad::NonFiniteError& err) {
        throw TrainingDiverged(divergence_message(model, epoch, err.what()));
      }
      if (last_va > rec.best_val_acc) {
        rec.best_val_acc = last_va;
        rec.best_val_epoch = epoch;
        rec.best_val_test_acc = last_te;
      }
    }
    e.train_acc = last_tr;
    e.val_acc = last_va;
    e.test_acc = last_te;
    e.shape_p = model.shape_p();
    rec.epochs.push_back(std::move(e));
  }
  rec.final_test_acc = last_te;
  rec.final_shape_p = model.shape_p();
  rec.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

std::pair<double, double> mean_std(std::span<const double> values) {
  if (values.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());
  return {mean, std::sqrt(var)};
}

KFoldResult kfold_run(const ModelFactory& factory, const data::Dataset& dataset,
                      std::size_t folds, const TrainConfig& config, unsigned threads) {
  if (folds == 0) throw std::invalid_argument("kfold_run: need at least one fold");
  if (dataset.splits.size() != folds) {
    throw std::invalid_argument("kfold_run: dataset has " + std::to_string(dataset.splits.size()) +
                                " splits, expected " + std::to_string(folds));
  }
  KFoldResult result;
  result.runs.resize(folds);
  std::vector<std::exception_ptr> errors(folds);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < folds; i = next++) {
      try {
        TrainConfig cfg = config;
        cfg.seed = config.seed + i;
        nn::Model model = factory(cfg.seed);
        result.runs[i] = train(model, dataset, dataset.splits[i], cfg);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned n_threads = std::max(1u, std::min<unsigned>(threads, folds));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& err : errors)
    if (err) std::rethrow_exception(err);

  std::vector<double> final_acc, best_acc;
  for (const RunRecord& r : result.runs) {
    final_acc.push_back(r.final_test_acc);
    best_acc.push_back(r.best_val_test_acc);
  }
  std::tie(result.mean_final_test, result.std_final_test) = mean_std(final_acc);
  std::tie(result.mean_best_val_test, result.std_best_val_test) = mean_std(best_acc);
  return result;
}

}  // namespace kraw::train
