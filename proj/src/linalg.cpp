#include "lrnmt/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lrnmt {

namespace {

constexpr double kJacobiTol = 1e-14;
constexpr int kMaxSweeps = 64;

// Orthogonalizes the columns of B (n,m) in place by Jacobi rotations and
// accumulates the right rotations into V (m,m). On exit the columns of B are
// mutually orthogonal; their norms are the singular values.
void jacobi_orthogonalize(Mat& b, Mat& v) {
  std::int64_t n = b.dim(0), m = b.dim(1);
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::int64_t p = 0; p < m - 1; ++p) {
      for (std::int64_t q = p + 1; q < m; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::int64_t i = 0; i < n; ++i) {
          double bp = b(i, p), bq = b(i, q);
          alpha += bp * bp;
          beta += bq * bq;
          gamma += bp * bq;
        }
        if (std::abs(gamma) <= kJacobiTol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        double zeta = (beta - alpha) / (2.0 * gamma);
        double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        double c = 1.0 / std::sqrt(1.0 + t * t);
        double s = c * t;
        for (std::int64_t i = 0; i < n; ++i) {
          double bp = b(i, p), bq = b(i, q);
          b(i, p) = c * bp - s * bq;
          b(i, q) = s * bp + c * bq;
        }
        for (std::int64_t i = 0; i < m; ++i) {
          double vp = v(i, p), vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    }
    if (!rotated) break;
  }
}

// Extends `cols` accepted orthonormal columns of U (n,n) to a full basis
// using standard basis vectors, with twice-applied Gram-Schmidt.
void complete_basis(Mat& u, std::int64_t cols) {
  std::int64_t n = u.dim(0);
  std::int64_t have = cols;
  for (std::int64_t cand = 0; cand < n && have < n; ++cand) {
    std::vector<double> w(static_cast<std::size_t>(n), 0.0);
    w[static_cast<std::size_t>(cand)] = 1.0;
    for (int pass = 0; pass < 2; ++pass) {
      for (std::int64_t c = 0; c < have; ++c) {
        double dot = 0.0;
        for (std::int64_t i = 0; i < n; ++i) dot += w[static_cast<std::size_t>(i)] * u(i, c);
        for (std::int64_t i = 0; i < n; ++i) w[static_cast<std::size_t>(i)] -= dot * u(i, c);
      }
    }
    double norm = 0.0;
    for (double x : w) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-3) continue;
    for (std::int64_t i = 0; i < n; ++i) u(i, have) = w[static_cast<std::size_t>(i)] / norm;
    ++have;
  }
}

Mat transpose(const Mat& m) {
  Mat t({m.dim(1), m.dim(0)});
  for (std::int64_t i = 0; i < m.dim(0); ++i)
    for (std::int64_t j = 0; j < m.dim(1); ++j) t(j, i) = m(i, j);
  return t;
}

}  // namespace

SvdResult svd(const Mat& m) {
  if (m.rank() != 2)
    throw DimensionError("svd: expected a rank-2 matrix, got " + shape_str(m.shape()));
  for (std::int64_t i = 0; i < m.size(); ++i)
    if (!std::isfinite(m(i)))
      throw DomainError("svd: input contains a non-finite entry at flat index " + std::to_string(i));

  std::int64_t n = m.dim(0), cols = m.dim(1);
  if (n < cols) {
    SvdResult t = svd(transpose(m));
    return SvdResult{std::move(t.v), std::move(t.singular_values), std::move(t.u)};
  }

  Mat b = m.clone();
  Mat v({cols, cols});
  for (std::int64_t i = 0; i < cols; ++i) v(i, i) = 1.0;
  jacobi_orthogonalize(b, v);

  // Column norms are the singular values; sort descending.
  std::vector<double> sigma(static_cast<std::size_t>(cols));
  for (std::int64_t j = 0; j < cols; ++j) {
    double s = 0.0;
    for (std::int64_t i = 0; i < n; ++i) s += b(i, j) * b(i, j);
    sigma[static_cast<std::size_t>(j)] = std::sqrt(s);
  }
  std::vector<std::int64_t> order(static_cast<std::size_t>(cols));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t c) {
    return sigma[static_cast<std::size_t>(a)] > sigma[static_cast<std::size_t>(c)];
  });

  Mat u({n, n});
  Mat v_sorted({cols, cols});
  std::vector<double> values(static_cast<std::size_t>(cols));
  double max_sigma = sigma.empty() ? 0.0 : sigma[static_cast<std::size_t>(order[0])];
  double rank_tol = std::max(1e-300, max_sigma * 1e-13 * static_cast<double>(std::max(n, cols)));
  std::int64_t accepted = 0;
  for (std::int64_t j = 0; j < cols; ++j) {
    std::int64_t src = order[static_cast<std::size_t>(j)];
    values[static_cast<std::size_t>(j)] = sigma[static_cast<std::size_t>(src)];
    for (std::int64_t i = 0; i < cols; ++i) v_sorted(i, j) = v(i, src);
    if (sigma[static_cast<std::size_t>(src)] > rank_tol && accepted == j) {
      for (std::int64_t i = 0; i < n; ++i) u(i, j) = b(i, src) / sigma[static_cast<std::size_t>(src)];
      ++accepted;
    }
  }
  complete_basis(u, accepted);

  return SvdResult{std::move(u), std::move(values), std::move(v_sorted)};
}

std::pair<Mat, Mat> truncate_to_rank(const Mat& m, int p) {
  std::int64_t n = m.dim(0), cols = m.dim(1);
  std::int64_t pmax = std::min(n, cols);
  if (p < 1 || p > pmax)
    throw ContractError("truncate_to_rank: p = " + std::to_string(p) +
                        " outside [1, " + std::to_string(pmax) + "] for " + shape_str(m.shape()));
  SvdResult dec = svd(m);
  Mat a({n, p});
  Mat b({p, cols});
  for (std::int64_t j = 0; j < p; ++j) {
    double root = std::sqrt(dec.singular_values[static_cast<std::size_t>(j)]);
    for (std::int64_t i = 0; i < n; ++i) a(i, j) = dec.u(i, j) * root;
    for (std::int64_t i = 0; i < cols; ++i) b(j, i) = root * dec.v(i, j);
  }
  return {std::move(a), std::move(b)};
}

SingularSpectrum singular_spectrum(const Mat& m, std::string source) {
  SvdResult dec = svd(m);
  return SingularSpectrum{std::move(dec.singular_values), std::move(source)};
}

int relevant_rank(const SingularSpectrum& spectrum, double ratio) {
  if (spectrum.values.empty())
    throw ContractError("relevant_rank: empty spectrum");
  double threshold = ratio * spectrum.values.front();
  int count = 0;
  for (double v : spectrum.values)
    if (v > threshold) ++count;
  return count;
}

double frobenius_norm(const Mat& m) {
  double s = 0.0;
  for (std::int64_t i = 0; i < m.size(); ++i) s += m(i) * m(i);
  return std::sqrt(s);
}

}  // namespace lrnmt
