#include "kraw/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "random_util.hpp"

namespace kraw::ad {

namespace {

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) +
                                "x" + std::to_string(a.cols()) + " vs " +
                                std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

void require_scalar(const char* op, const Matrix& m) {
  if (m.rows() != 1 || m.cols() != 1) {
    throw std::invalid_argument(std::string(op) + ": expected a 1x1 scalar");
  }
}

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tape& Var::tape() const {
  if (!tape_) throw std::logic_error("Var: not attached to a tape");
  return *tape_;
}

const Matrix& Var::value() const { return tape().value(*this); }
const Matrix& Var::grad() const { return tape().grad(*this); }

void Tape::check_owned(Var v) const {
  if (v.tape_ != this || v.id_ >= nodes_.size()) {
    throw std::logic_error("Var does not belong to this tape");
  }
}

Var Tape::constant(Matrix value) {
  if (!value.all_finite()) throw NonFiniteError("constant");
  nodes_.push_back(Node{"constant", std::move(value), {}, false, false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(Matrix value) {
  if (!value.all_finite()) throw NonFiniteError("leaf");
  nodes_.push_back(Node{"leaf", std::move(value), {}, true, false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(std::string_view op, Matrix value, std::span<const Var> inputs,
                 Backprop backprop) {
  if (backward_done_) throw std::logic_error("Tape: cannot record after backward()");
  bool tracked = false;
  for (const Var& in : inputs) {
    check_owned(in);
    tracked = tracked || nodes_[in.id()].requires_grad;
  }
  if (!value.all_finite()) throw NonFiniteError(std::string(op));
  nodes_.push_back(Node{op, std::move(value), {}, tracked, false,
                        tracked ? std::move(backprop) : Backprop{}});
  return Var(this, nodes_.size() - 1);
}

const Matrix& Tape::grad(Var v) const {
  check_owned(v);
  const Node& n = nodes_[v.id()];
  if (!n.requires_grad) throw std::logic_error("Tape::grad: node is not tracked");
  if (!backward_done_) throw std::logic_error("Tape::grad: backward() has not run");
  return n.grad;
}

Matrix* Tape::grad_buffer(Var v) {
  check_owned(v);
  Node& n = nodes_[v.id()];
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty() && !n.value.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
  n.touched = true;
  return &n.grad;
}

void Tape::accumulate(Var v, const Matrix& g) { accumulate_scaled(v, 1.0, g); }

void Tape::accumulate_scaled(Var v, double alpha, const Matrix& g) {
  if (Matrix* buf = grad_buffer(v)) axpy(alpha, g, *buf);
}

void Tape::backward(Var loss) {
  check_owned(loss);
  if (backward_done_) throw std::logic_error("Tape::backward called twice without reset()");
  require_scalar("backward", nodes_[loss.id()].value);
  backward_done_ = true;
  for (Node& n : nodes_)
    if (n.requires_grad) n.grad = Matrix(n.value.rows(), n.value.cols());
  if (!nodes_[loss.id()].requires_grad) return;
  nodes_[loss.id()].grad(0, 0) = 1.0;
  nodes_[loss.id()].touched = true;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.touched || !n.backprop) continue;
    n.backprop(*this, n.grad);
  }
}

void Tape::reset() {
  nodes_.clear();
  backward_done_ = false;
}

Var spmm(const graph::SparseMatrix& s, Var x) {
  Tape& t = x.tape();
  const Var in[] = {x};
  return t.record("spmm", graph::spmm(s, x.value()), in,
                  [&s, x](Tape& tape, const Matrix& g) {
                    if (tape.requires_grad(x)) tape.accumulate(x, graph::spmm_transposed(s, g));
                  });
}

Var matmul(Var a, Var b) {
  Tape& t = a.tape();
  const Var in[] = {a, b};
  return t.record("matmul", kraw::matmul(a.value(), b.value()), in,
                  [a, b](Tape& tape, const Matrix& g) {
                    if (tape.requires_grad(a)) tape.accumulate(a, matmul_nt(g, b.value()));
                    if (tape.requires_grad(b)) tape.accumulate(b, matmul_tn(a.value(), g));
                  });
}

Var add(Var a, Var b) {
  require_same_shape("add", a.value(), b.value());
  Matrix out = a.value();
  axpy(1.0, b.value(), out);
  const Var in[] = {a, b};
  return a.tape().record("add", std::move(out), in, [a, b](Tape& tape, const Matrix& g) {
    tape.accumulate(a, g);
    tape.accumulate(b, g);
  });
}

Var scale(Var x, Var s) {
  require_scalar("scale", s.value());
  const double sv = s.value().item();
  Matrix out(x.rows(), x.cols());
  axpy(sv, x.value(), out);
  const Var in[] = {x, s};
  return x.tape().record("scale", std::move(out), in, [x, s, sv](Tape& tape, const Matrix& g) {
    tape.accumulate_scaled(x, sv, g);
    if (Matrix* gs = tape.grad_buffer(s)) (*gs)(0, 0) += dot(g, x.value());
  });
}

Var sum(Var x) {
  double total = 0.0;
  for (double v : x.value().values()) total += v;
  const Var in[] = {x};
  return x.tape().record("sum", Matrix::scalar(total), in, [x](Tape& tape, const Matrix& g) {
    if (Matrix* gx = tape.grad_buffer(x)) {
      const double gv = g.item();
      for (double& v : gx->values()) v += gv;
    }
  });
}

Var weighted_sum(Var x, const Matrix& weights) {
  require_same_shape("weighted_sum", x.value(), weights);
  const Var in[] = {x};
  return x.tape().record("weighted_sum", Matrix::scalar(dot(x.value(), weights)), in,
                         [x, weights](Tape& tape, const Matrix& g) {
                           tape.accumulate_scaled(x, g.item(), weights);
                         });
}

Var relu(Var x) {
  Matrix out = x.value();
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  const Var in[] = {x};
  return x.tape().record("relu", std::move(out), in, [x](Tape& tape, const Matrix& g) {
    Matrix* gx = tape.grad_buffer(x);
    if (!gx) return;
    const auto xv = x.value().values();
    auto dst = gx->values();
    const auto src = g.values();
    for (std::size_t i = 0; i < xv.size(); ++i)
      if (xv[i] > 0.0) dst[i] += src[i];
  });
}

Var sigmoid(Var x) {
  Matrix out = x.value();
  for (double& v : out.values()) v = logistic(v);
  const Var in[] = {x};
  return x.tape().record("sigmoid", std::move(out), in, [x](Tape& tape, const Matrix& g) {
    Matrix* gx = tape.grad_buffer(x);
    if (!gx) return;
    const auto xv = x.value().values();
    auto dst = gx->values();
    const auto src = g.values();
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const double y = logistic(xv[i]);
      dst[i] += src[i] * y * (1.0 - y);
    }
  });
}

Var layernorm(Var x, Var gain, Var offset, double eps) {
  const Matrix& xv = x.value();
  const std::size_t n = xv.rows();
  const std::size_t f = xv.cols();
  if (gain.rows() != 1 || gain.cols() != f || offset.rows() != 1 || offset.cols() != f) {
    throw std::invalid_argument("layernorm: gain and offset must be 1x" + std::to_string(f));
  }
  if (f == 0) throw std::invalid_argument("layernorm: zero feature columns");
  // Normalized activations and per-row 1/sigma are needed by the adjoint.
  auto xhat = std::make_shared<Matrix>(n, f);
  auto inv_std = std::make_shared<std::vector<double>>(n);
  Matrix out(n, f);
  const double* gv = gain.value().data();
  const double* ov = offset.value().data();
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = xv.row(r);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(f);
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(f);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < f; ++j) {
      const double h = (row[j] - mean) * is;
      (*xhat)(r, j) = h;
      out(r, j) = gv[j] * h + ov[j];
    }
  }
  const Var in[] = {x, gain, offset};
  return x.tape().record(
      "layernorm", std::move(out), in,
      [x, gain, offset, xhat, inv_std, n, f](Tape& tape, const Matrix& g) {
        if (Matrix* gg = tape.grad_buffer(gain)) {
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t j = 0; j < f; ++j) (*gg)(0, j) += g(r, j) * (*xhat)(r, j);
        }
        if (Matrix* go = tape.grad_buffer(offset)) {
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t j = 0; j < f; ++j) (*go)(0, j) += g(r, j);
        }
        Matrix* gx = tape.grad_buffer(x);
        if (!gx) return;
        const double* gv = gain.value().data();
        const double inv_f = 1.0 / static_cast<double>(f);
        for (std::size_t r = 0; r < n; ++r) {
          double mean_d = 0.0;
          double mean_dh = 0.0;
          for (std::size_t j = 0; j < f; ++j) {
            const double d = g(r, j) * gv[j];
            mean_d += d;
            mean_dh += d * (*xhat)(r, j);
          }
          mean_d *= inv_f;
          mean_dh *= inv_f;
          const double is = (*inv_std)[r];
          for (std::size_t j = 0; j < f; ++j) {
            const double d = g(r, j) * gv[j];
            (*gx)(r, j) += is * (d - mean_d - (*xhat)(r, j) * mean_dh);
          }
        }
      });
}

Var dropout(Var x, double rate, Rng& rng, bool training) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must lie in [0,1)");
  if (!training || rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<Matrix>(x.rows(), x.cols());
  Matrix out = x.value();
  auto mv = mask->values();
  auto o = out.values();
  for (std::size_t i = 0; i < o.size(); ++i) {
    mv[i] = detail::uniform01(rng) < rate ? 0.0 : keep_scale;
    o[i] *= mv[i];
  }
  const Var in[] = {x};
  return x.tape().record("dropout", std::move(out), in, [x, mask](Tape& tape, const Matrix& g) {
    Matrix* gx = tape.grad_buffer(x);
    if (!gx) return;
    auto dst = gx->values();
    const auto src = g.values();
    const auto mv = mask->values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i] * mv[i];
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const std::size_t n = parts[0].rows();
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (p.rows() != n) throw std::invalid_argument("concat_cols: row count mismatch");
    total += p.cols();
  }
  Matrix out(n, total);
  std::size_t col0 = 0;
  for (const Var& p : parts) {
    const Matrix& v = p.value();
    for (std::size_t r = 0; r < n; ++r)
      std::copy(v.row(r).begin(), v.row(r).end(), out.row(r).begin() + col0);
    col0 += v.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].tape().record("concat_cols", std::move(out), inputs,
                                [inputs, n](Tape& tape, const Matrix& g) {
                                  std::size_t c0 = 0;
                                  for (const Var& p : inputs) {
                                    const std::size_t w = p.cols();
                                    if (Matrix* gp = tape.grad_buffer(p)) {
                                      for (std::size_t r = 0; r < n; ++r) {
                                        const double* src = g.row(r).data() + c0;
                                        double* dst = gp->row(r).data();
                                        for (std::size_t j = 0; j < w; ++j) dst[j] += src[j];
                                      }
                                    }
                                    c0 += w;
                                  }
                                });
}

Var linear(Var z, Var w, Var b) {
  if (b.rows() != 1 || b.cols() != w.cols()) {
    throw std::invalid_argument("linear: bias must be 1x" + std::to_string(w.cols()));
  }
  Matrix out = kraw::matmul(z.value(), w.value());
  const double* bv = b.value().data();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    double* o = out.row(r).data();
    for (std::size_t j = 0; j < out.cols(); ++j) o[j] += bv[j];
  }
  const Var in[] = {z, w, b};
  return z.tape().record("linear", std::move(out), in, [z, w, b](Tape& tape, const Matrix& g) {
    if (tape.requires_grad(z)) tape.accumulate(z, matmul_nt(g, w.value()));
    if (tape.requires_grad(w)) tape.accumulate(w, matmul_tn(z.value(), g));
    if (Matrix* gb = tape.grad_buffer(b)) {
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t j = 0; j < g.cols(); ++j) (*gb)(0, j) += g(r, j);
    }
  });
}

Var softmax_cross_entropy(Var logits, std::span<const int> labels,
                          std::span<const std::size_t> rows) {
  const Matrix& z = logits.value();
  if (labels.size() != z.rows()) {
    throw std::invalid_argument("softmax_cross_entropy: " + std::to_string(labels.size()) +
                                " labels for " + std::to_string(z.rows()) + " rows");
  }
  if (rows.empty()) throw std::invalid_argument("softmax_cross_entropy: empty row mask");
  const std::size_t c = z.cols();
  // Row-wise softmax probabilities of the masked rows, reused by the adjoint.
  auto probs = std::make_shared<Matrix>(rows.size(), c);
  double loss = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t r = rows[i];
    if (r >= z.rows()) throw std::out_of_range("softmax_cross_entropy: row index out of range");
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      throw std::out_of_range("softmax_cross_entropy: label out of range");
    }
    const auto zr = z.row(r);
    const double zmax = *std::max_element(zr.begin(), zr.end());
    double denom = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double e = std::exp(zr[j] - zmax);
      (*probs)(i, j) = e;
      denom += e;
    }
    for (std::size_t j = 0; j < c; ++j) (*probs)(i, j) /= denom;
    loss += std::log(denom) + zmax - zr[y];
  }
  const double inv_m = 1.0 / static_cast<double>(rows.size());
  std::vector<std::size_t> row_copy(rows.begin(), rows.end());
  std::vector<int> label_copy(labels.begin(), labels.end());
  const Var in[] = {logits};
  return logits.tape().record(
      "softmax_cross_entropy", Matrix::scalar(loss * inv_m), in,
      [logits, probs, row_copy = std::move(row_copy), label_copy = std::move(label_copy), inv_m,
       c](Tape& tape, const Matrix& g) {
        Matrix* gz = tape.grad_buffer(logits);
        if (!gz) return;
        const double scale = g.item() * inv_m;
        for (std::size_t i = 0; i < row_copy.size(); ++i) {
          const std::size_t r = row_copy[i];
          for (std::size_t j = 0; j < c; ++j) (*gz)(r, j) += scale * (*probs)(i, j);
          (*gz)(r, static_cast<std::size_t>(label_copy[r])) -= scale;
        }
      });
}

Var recurrence_step(const graph::SparseMatrix& s, Var cur, std::optional<Var> prev,
                    const StepCoeffs& coeffs, std::optional<Var> shape) {
  Matrix out = graph::spmm(s, cur.value());
  if (coeffs.a != 1.0)
    for (double& v : out.values()) v *= coeffs.a;
  axpy(-coeffs.b, cur.value(), out);
  if (prev) {
    require_same_shape("recurrence_step", cur.value(), prev->value());
    axpy(-coeffs.c, prev->value(), out);
  }
  if (shape) require_scalar("recurrence_step", shape->value());

  std::vector<Var> inputs{cur};
  if (prev) inputs.push_back(*prev);
  if (shape) inputs.push_back(*shape);
  return cur.tape().record(
      "recurrence_step", std::move(out), inputs,
      [&s, cur, prev, shape, coeffs](Tape& tape, const Matrix& g) {
        if (Matrix* gc = tape.grad_buffer(cur)) {
          Matrix back = graph::spmm_transposed(s, g);
          axpy(coeffs.a, back, *gc);
          axpy(-coeffs.b, g, *gc);
        }
        if (prev) tape.accumulate_scaled(*prev, -coeffs.c, g);
        if (shape) {
          if (Matrix* gs = tape.grad_buffer(*shape)) {
            double d = -coeffs.db * dot(g, cur.value());
            if (prev) d -= coeffs.dc * dot(g, prev->value());
            (*gs)(0, 0) += d;
          }
        }
      });
}

}  // namespace kraw::ad
