#pragma once

#include <string>
#include <utility>

#include "lrnmt/tensor.hpp"

namespace lrnmt {

// Dense double-precision matrix; all decompositions run in 64-bit.
using Mat = Tensor<double>;

// Full decomposition M = U * Diag(S) * V^T with U (n,n), V (m,m) orthogonal
// and S the min(n,m) singular values in decreasing order.
struct SvdResult {
  Mat u;
  std::vector<double> singular_values;
  Mat v;
};

struct SingularSpectrum {
  std::vector<double> values;  // nonincreasing
  std::string source;          // name of the analyzed matrix
};

// One-sided Jacobi SVD. Throws DomainError on non-finite input.
SvdResult svd(const Mat& m);

// Rank-p truncation with the balanced split A = U_p * sqrt(D_p),
// B = sqrt(D_p) * V_p^T, so that A*B is the Frobenius-optimal rank-p
// approximation. 1 <= p <= min(n,m).
std::pair<Mat, Mat> truncate_to_rank(const Mat& m, int p);

SingularSpectrum singular_spectrum(const Mat& m, std::string source = "");

// Number of values strictly greater than ratio * max value.
int relevant_rank(const SingularSpectrum& spectrum, double ratio = 0.1);

double frobenius_norm(const Mat& m);

}  // namespace lrnmt
