#include "kraw/poly.hpp"

#include <cmath>
#include <stdexcept>

namespace kraw::poly {

std::string_view to_string(Family f) {
  switch (f) {
    case Family::krawtchouk: return "krawtchouk";
    case Family::chebyshev: return "chebyshev";
  }
  return "unknown";
}

Family parse_family(std::string_view name) {
  if (name == "krawtchouk") return Family::krawtchouk;
  if (name == "chebyshev") return Family::chebyshev;
  throw std::invalid_argument("unknown polynomial family '" + std::string(name) + "'");
}

void KrawtchoukParams::validate() const {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::invalid_argument("Krawtchouk p must lie in (0,1), got " + std::to_string(p));
  }
  if (N < 1) throw std::invalid_argument("Krawtchouk N must be >= 1, got " + std::to_string(N));
  if (K < 1) throw std::invalid_argument("number of bases K must be >= 1, got " + std::to_string(K));
}

double krawtchouk_b(double p, int N, int k) { return (N - k) * p + k * (1.0 - p); }

double krawtchouk_c(double p, int N, int k) {
  return static_cast<double>(k) * static_cast<double>(N - k + 1) * p * (1.0 - p);
}

double krawtchouk_db_dp(int N, int k) { return static_cast<double>(N - 2 * k); }

double krawtchouk_dc_dp(double p, int N, int k) {
  return static_cast<double>(k) * static_cast<double>(N - k + 1) * (1.0 - 2.0 * p);
}

RecurrenceCoeffs krawtchouk_coeffs(const KrawtchoukParams& params) {
  params.validate();
  RecurrenceCoeffs rc;
  rc.family = Family::krawtchouk;
  rc.num_bases = params.K;
  const int steps = params.K - 1;
  rc.a.assign(steps, 1.0);
  rc.b.resize(steps);
  rc.c.resize(steps);
  for (int k = 0; k < steps; ++k) {
    rc.b[k] = krawtchouk_b(params.p, params.N, k);
    rc.c[k] = k == 0 ? 0.0 : krawtchouk_c(params.p, params.N, k);
  }
  if (params.beyond_domain()) {
    rc.warning = "K=" + std::to_string(params.K) + " exceeds N+1=" + std::to_string(params.N + 1) +
                 "; recurrence coefficients c_k are negative for k > N+1";
  }
  return rc;
}

RecurrenceCoeffs chebyshev_coeffs(int K) {
  if (K < 1) throw std::invalid_argument("number of bases K must be >= 1, got " + std::to_string(K));
  RecurrenceCoeffs rc;
  rc.family = Family::chebyshev;
  rc.num_bases = K;
  const int steps = K - 1;
  rc.a.assign(steps, 2.0);
  rc.b.assign(steps, 0.0);
  rc.c.assign(steps, 1.0);
  if (steps > 0) {
    rc.a[0] = 1.0;
    rc.c[0] = 0.0;
  }
  return rc;
}

std::vector<double> evaluate(double x, const RecurrenceCoeffs& coeffs) {
  std::vector<double> out(coeffs.num_bases);
  out[0] = 1.0;
  double prev = 0.0;
  for (int k = 0; k + 1 < coeffs.num_bases; ++k) {
    const double next = (coeffs.a[k] * x - coeffs.b[k]) * out[k] - coeffs.c[k] * prev;
    prev = out[k];
    out[k + 1] = next;
  }
  return out;
}

std::vector<double> eval_monic_scalar(double x, const KrawtchoukParams& params) {
  return evaluate(x, krawtchouk_coeffs(params));
}

double binomial_weight(int x, double p, int N) {
  if (x < 0 || x > N) {
    throw std::out_of_range("binomial_weight: x=" + std::to_string(x) + " outside [0, " +
                            std::to_string(N) + "]");
  }
  if (!(p > 0.0 && p < 1.0)) {
    throw std::invalid_argument("binomial_weight: p must lie in (0,1)");
  }
  const double log_choose =
      std::lgamma(N + 1.0) - std::lgamma(x + 1.0) - std::lgamma(N - x + 1.0);
  return std::exp(log_choose + x * std::log(p) + (N - x) * std::log1p(-p));
}

Matrix orthogonality_gram(const KrawtchoukParams& params) {
  params.validate();
  if (params.beyond_domain()) {
    throw std::invalid_argument("orthogonality_gram: K=" + std::to_string(params.K) +
                                " exceeds N+1=" + std::to_string(params.N + 1));
  }
  const auto K = static_cast<std::size_t>(params.K);
  const int N = params.N;
  const long double p = params.p;
  const long double q = 1.0L - p;
  // Weights, coefficients and sums all in extended precision: the sums cancel
  // heavily at high degree and skewed p, amplifying any rounding in the inputs.
  std::vector<long double> acc(K * K, 0.0L);
  std::vector<long double> vals(K);
  for (int x = 0; x <= N; ++x) {
    const long double w =
        std::exp(std::lgamma(N + 1.0L) - std::lgamma(x + 1.0L) - std::lgamma(N - x + 1.0L) +
                 x * std::log(p) + (N - x) * std::log(q));
    vals[0] = 1.0L;
    for (std::size_t k = 0; k + 1 < K; ++k) {
      const auto kk = static_cast<long double>(k);
      const long double b = (N - kk) * p + kk * q;
      const long double c = kk * (N - kk + 1) * p * q;
      const long double prev = k == 0 ? 0.0L : vals[k - 1];
      vals[k + 1] = (static_cast<long double>(x) - b) * vals[k] - c * prev;
    }
    for (std::size_t j = 0; j < K; ++j)
      for (std::size_t k = 0; k < K; ++k) acc[j * K + k] += w * vals[j] * vals[k];
  }
  Matrix gram(K, K);
  for (std::size_t i = 0; i < K * K; ++i) gram.values()[i] = static_cast<double>(acc[i]);
  return gram;
}

std::vector<double> filter_response(const KrawtchoukParams& params,
                                    std::span<const double> eigenvalues,
                                    std::span<const double> mix_weights,
                                    ResponseDomain domain) {
  if (mix_weights.size() != static_cast<std::size_t>(params.K)) {
    throw std::invalid_argument("filter_response: expected " + std::to_string(params.K) +
                                " mix weights, got " + std::to_string(mix_weights.size()));
  }
  const auto coeffs = krawtchouk_coeffs(params);
  const double scale = domain == ResponseDomain::rescaled ? static_cast<double>(params.N) : 1.0;
  std::vector<double> out;
  out.reserve(eigenvalues.size());
  for (double lambda : eigenvalues) {
    const auto vals = evaluate(scale * lambda, coeffs);
    double r = 0.0;
    for (std::size_t k = 0; k < vals.size(); ++k) r += mix_weights[k] * vals[k];
    out.push_back(r);
  }
  return out;
}

}  // namespace kraw::poly
