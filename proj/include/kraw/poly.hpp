#pragma once

// Krawtchouk and Chebyshev three-term recurrences at the scalar level.
//
// Both families are expressed in the common form
//
//   P_0(x) = 1
//   P_{k+1}(x) = (a_k x - b_k) P_k(x) - c_k P_{k-1}(x),   P_{-1} = 0
//
// Krawtchouk (monic): a_k = 1, b_k = (N-k)p + k(1-p), c_k = k(N-k+1)p(1-p).
// Chebyshev (first kind): a_0 = 1, a_k = 2 for k >= 1, b_k = 0, c_k = 1.

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kraw/matrix.hpp"

namespace kraw::poly {

enum class Family { krawtchouk, chebyshev };

std::string_view to_string(Family f);
/// Throws std::invalid_argument for anything other than "krawtchouk" or "chebyshev".
Family parse_family(std::string_view name);

/// Shape parameter p in (0,1), domain size N >= 1, and number of bases K >= 1
/// (degrees 0..K-1).
struct KrawtchoukParams {
  double p = 0.5;
  int N = 20;
  int K = 3;

  /// Throws std::invalid_argument when an invariant is violated.
  void validate() const;
  /// True when K exceeds N+1, past which c_k turns negative.
  bool beyond_domain() const { return K > N + 1; }
};

struct RecurrenceCoeffs {
  Family family = Family::krawtchouk;
  int num_bases = 1;
  // Indexed by k = 0..K-2. c[0] multiplies P_{-1} and is always 0.
  std::vector<double> a;
  std::vector<double> b;
  std::vector<double> c;
  std::optional<std::string> warning;
};

/// Krawtchouk b_k and c_k, each evaluated directly for a single k.
double krawtchouk_b(double p, int N, int k);
double krawtchouk_c(double p, int N, int k);
/// Derivatives of b_k and c_k with respect to p.
double krawtchouk_db_dp(int N, int k);
double krawtchouk_dc_dp(double p, int N, int k);

/// Coefficients for degrees 0..K-1. K > N+1 is accepted but sets `warning`.
RecurrenceCoeffs krawtchouk_coeffs(const KrawtchoukParams& params);
RecurrenceCoeffs chebyshev_coeffs(int K);

/// P_0(x)..P_{K-1}(x) by forward recurrence.
std::vector<double> evaluate(double x, const RecurrenceCoeffs& coeffs);
/// Same, for the monic Krawtchouk family at `params`.
std::vector<double> eval_monic_scalar(double x, const KrawtchoukParams& params);

/// Binomial(N, p) probability mass at x, via log-gamma so large N is safe.
double binomial_weight(int x, double p, int N);

/// Gram matrix G(j,k) = sum_x w(x) P_j(x) P_k(x) over x = 0..N under the
/// binomial weight. Requires K <= N+1.
Matrix orthogonality_gram(const KrawtchoukParams& params);

/// How eigenvalues map onto the polynomial variable.
enum class ResponseDomain {
  raw,       // x = lambda, what the layer computes on the scaled Laplacian
  rescaled,  // x = N * lambda, the natural Krawtchouk domain [0, N]
};

/// sum_k mix[k] * P_k(x(lambda)) for each eigenvalue.
std::vector<double> filter_response(const KrawtchoukParams& params,
                                    std::span<const double> eigenvalues,
                                    std::span<const double> mix_weights,
                                    ResponseDomain domain = ResponseDomain::raw);

}  // namespace kraw::poly
