#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "lrnmt/linalg.hpp"

using namespace lrnmt;

namespace {

Mat random_mat(std::int64_t n, std::int64_t m, Rng& rng, double scale = 1.0) {
  Mat t({n, m});
  for (std::int64_t i = 0; i < t.size(); ++i) t(i) = rng.uniform(-scale, scale);
  return t;
}

Mat mat_product(const Mat& a, const Mat& b) {
  Mat c({a.dim(0), b.dim(1)});
  for (std::int64_t i = 0; i < a.dim(0); ++i)
    for (std::int64_t l = 0; l < a.dim(1); ++l)
      for (std::int64_t j = 0; j < b.dim(1); ++j) c(i, j) += a(i, l) * b(l, j);
  return c;
}

double max_abs_off_identity(const Mat& g) {
  double worst = 0.0;
  for (std::int64_t i = 0; i < g.dim(0); ++i)
    for (std::int64_t j = 0; j < g.dim(1); ++j)
      worst = std::max(worst, std::abs(g(i, j) - (i == j ? 1.0 : 0.0)));
  return worst;
}

Mat gram(const Mat& a) {  // A^T A
  Mat g({a.dim(1), a.dim(1)});
  for (std::int64_t i = 0; i < a.dim(1); ++i)
    for (std::int64_t j = 0; j < a.dim(1); ++j) {
      double s = 0.0;
      for (std::int64_t r = 0; r < a.dim(0); ++r) s += a(r, i) * a(r, j);
      g(i, j) = s;
    }
  return g;
}

void check_svd_invariants(const Mat& m) {
  SvdResult dec = svd(m);
  CHECK(max_abs_off_identity(gram(dec.u)) < 1e-8);
  CHECK(max_abs_off_identity(gram(dec.v)) < 1e-8);
  for (std::size_t i = 0; i + 1 < dec.singular_values.size(); ++i)
    CHECK(dec.singular_values[i] >= dec.singular_values[i + 1]);
  for (double s : dec.singular_values) CHECK(s >= 0.0);
  // reconstruct U * Diag(S) * V^T
  Mat usv({m.dim(0), m.dim(1)});
  std::int64_t r = std::min(m.dim(0), m.dim(1));
  for (std::int64_t i = 0; i < m.dim(0); ++i)
    for (std::int64_t j = 0; j < m.dim(1); ++j) {
      double s = 0.0;
      for (std::int64_t l = 0; l < r; ++l)
        s += dec.u(i, l) * dec.singular_values[static_cast<std::size_t>(l)] * dec.v(j, l);
      usv(i, j) = s;
    }
  double num = 0.0;
  for (std::int64_t i = 0; i < m.size(); ++i) num += (usv(i) - m(i)) * (usv(i) - m(i));
  CHECK(std::sqrt(num) <= 1e-8 * std::max(1e-30, frobenius_norm(m)));
}

// Independent oracle: cyclic Jacobi eigensolver on the symmetric matrix
// M^T M. Distinct algorithm and code path from the one-sided SVD.
std::vector<double> gram_eigenvalues(const Mat& m) {
  Mat a = gram(m);
  std::int64_t n = a.dim(0);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::int64_t p = 0; p < n; ++p)
      for (std::int64_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-24) break;
    for (std::int64_t p = 0; p < n - 1; ++p)
      for (std::int64_t q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-30) continue;
        double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(1.0 + theta * theta));
        double c = 1.0 / std::sqrt(1.0 + t * t), s = c * t;
        for (std::int64_t i = 0; i < n; ++i) {
          double aip = a(i, p), aiq = a(i, q);
          a(i, p) = c * aip - s * aiq;
          a(i, q) = s * aip + c * aiq;
        }
        for (std::int64_t i = 0; i < n; ++i) {
          double api = a(p, i), aqi = a(q, i);
          a(p, i) = c * api - s * aqi;
          a(q, i) = s * api + c * aqi;
        }
      }
  }
  std::vector<double> eig(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) eig[static_cast<std::size_t>(i)] = a(i, i);
  std::sort(eig.rbegin(), eig.rend());
  return eig;
}

}  // namespace

TEST_CASE("svd: diagonal case") {
  Mat m = Mat::from_vector({2, 2}, {3, 0, 0, 1});
  SvdResult dec = svd(m);
  CHECK(dec.singular_values[0] == doctest::Approx(3.0));
  CHECK(dec.singular_values[1] == doctest::Approx(1.0));
  // U and V are identity up to sign
  for (std::int64_t i = 0; i < 2; ++i)
    for (std::int64_t j = 0; j < 2; ++j)
      CHECK(std::abs(dec.u(i, j)) == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-10));
  check_svd_invariants(m);
}

TEST_CASE("svd: orthogonal input has unit spectrum") {
  // Build an orthogonal matrix as a product of Givens rotations.
  std::int64_t n = 5;
  Mat q({n, n});
  for (std::int64_t i = 0; i < n; ++i) q(i, i) = 1.0;
  Rng rng(3);
  for (int k = 0; k < 12; ++k) {
    std::int64_t a = rng.uniform_int(n), b = rng.uniform_int(n);
    if (a == b) continue;
    double ang = rng.uniform(0, 6.28);
    double c = std::cos(ang), s = std::sin(ang);
    for (std::int64_t i = 0; i < n; ++i) {
      double xa = q(i, a), xb = q(i, b);
      q(i, a) = c * xa - s * xb;
      q(i, b) = s * xa + c * xb;
    }
  }
  SvdResult dec = svd(q);
  for (double s : dec.singular_values) CHECK(s == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("svd: squared values match Jacobi eigensolver oracle on 6x4") {
  Rng rng(404);
  Mat m = random_mat(6, 4, rng);
  SvdResult dec = svd(m);
  std::vector<double> eig = gram_eigenvalues(m);
  for (std::size_t i = 0; i < dec.singular_values.size(); ++i) {
    double s2 = dec.singular_values[i] * dec.singular_values[i];
    CHECK(std::abs(s2 - eig[i]) < 1e-8);
  }
}

TEST_CASE("svd: invariants hold for assorted shapes including deficient rank") {
  Rng rng(99);
  check_svd_invariants(random_mat(6, 4, rng));
  check_svd_invariants(random_mat(4, 6, rng));
  check_svd_invariants(random_mat(5, 5, rng));
  // rank-1 outer product
  Mat u = random_mat(6, 1, rng);
  Mat v = random_mat(1, 4, rng);
  check_svd_invariants(mat_product(u, v));
  // zero matrix
  check_svd_invariants(Mat({3, 5}));
}

TEST_CASE("svd: non-finite input is a domain error") {
  Mat m({2, 2});
  m(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(svd(m), DomainError);
}

TEST_CASE("truncate_to_rank: diagonal forced by Eckart-Young") {
  Mat m = Mat::from_vector({2, 2}, {3, 0, 0, 1});
  auto [a, b] = truncate_to_rank(m, 1);
  Mat ab = mat_product(a, b);
  CHECK(ab(0, 0) == doctest::Approx(3.0));
  CHECK(std::abs(ab(0, 1)) < 1e-10);
  CHECK(std::abs(ab(1, 0)) < 1e-10);
  CHECK(std::abs(ab(1, 1)) < 1e-10);
  double err = 0.0;
  for (std::int64_t i = 0; i < 4; ++i) err += (ab(i) - m(i)) * (ab(i) - m(i));
  CHECK(std::sqrt(err) == doctest::Approx(1.0));
}

TEST_CASE("truncate_to_rank: full rank recovers the matrix") {
  Rng rng(17);
  Mat m = random_mat(5, 3, rng);
  auto [a, b] = truncate_to_rank(m, 3);
  Mat ab = mat_product(a, b);
  double err = 0.0;
  for (std::int64_t i = 0; i < m.size(); ++i) err += (ab(i) - m(i)) * (ab(i) - m(i));
  CHECK(std::sqrt(err) < 1e-8 * frobenius_norm(m));
}

TEST_CASE("truncate_to_rank: balanced split equalizes factor norms") {
  Rng rng(18);
  Mat m = random_mat(6, 5, rng);
  auto [a, b] = truncate_to_rank(m, 2);
  CHECK(frobenius_norm(a) == doctest::Approx(frobenius_norm(b)).epsilon(1e-10));
}

TEST_CASE("truncate_to_rank: error matches discarded spectrum and beats random candidates") {
  Rng rng(55);
  Mat m = random_mat(6, 4, rng);
  SvdResult dec = svd(m);
  auto [a, b] = truncate_to_rank(m, 2);
  Mat ab = mat_product(a, b);
  double err2 = 0.0;
  for (std::int64_t i = 0; i < m.size(); ++i) err2 += (ab(i) - m(i)) * (ab(i) - m(i));
  double expected = dec.singular_values[2] * dec.singular_values[2] +
                    dec.singular_values[3] * dec.singular_values[3];
  CHECK(std::abs(err2 - expected) < 1e-8);

  for (int trial = 0; trial < 200; ++trial) {
    Mat ca = random_mat(6, 2, rng);
    Mat cb = random_mat(2, 4, rng);
    Mat cab = mat_product(ca, cb);
    double cerr2 = 0.0;
    for (std::int64_t i = 0; i < m.size(); ++i) cerr2 += (cab(i) - m(i)) * (cab(i) - m(i));
    CHECK(cerr2 >= err2 - 1e-12);
  }
}

TEST_CASE("truncate_to_rank: p out of range") {
  Mat m({4, 3});
  CHECK_THROWS_AS(truncate_to_rank(m, 0), ContractError);
  CHECK_THROWS_AS(truncate_to_rank(m, 4), ContractError);
}

TEST_CASE("Eckart-Young property over random matrices and every rank") {
  Rng rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    std::int64_t n = 2 + rng.uniform_int(7), m = 2 + rng.uniform_int(7);
    Mat mat = random_mat(n, m, rng);
    SvdResult dec = svd(mat);
    std::int64_t pmax = std::min(n, m);
    for (int p = 1; p <= pmax; ++p) {
      auto [a, b] = truncate_to_rank(mat, p);
      Mat ab = mat_product(a, b);
      double err2 = 0.0;
      for (std::int64_t i = 0; i < mat.size(); ++i) err2 += (ab(i) - mat(i)) * (ab(i) - mat(i));
      double expected = 0.0;
      for (std::int64_t i = p; i < pmax; ++i)
        expected += dec.singular_values[static_cast<std::size_t>(i)] *
                    dec.singular_values[static_cast<std::size_t>(i)];
      CHECK(std::abs(std::sqrt(err2) - std::sqrt(expected)) < 1e-8);
    }
  }
}

TEST_CASE("relevant_rank: examples and properties") {
  SingularSpectrum s1{{10.0, 2.0, 0.5}, "m"};
  CHECK(relevant_rank(s1, 0.1) == 2);
  SingularSpectrum s2{{1.0, 1.0, 1.0, 1.0}, "m"};
  CHECK(relevant_rank(s2, 0.1) == 4);
  SingularSpectrum s3{{5.0, 1.0, 0.4}, "m"};
  CHECK(relevant_rank(s3, 0.5) == 1);
  CHECK_THROWS_AS(relevant_rank(SingularSpectrum{{}, "m"}, 0.1), ContractError);

  // scale invariance
  Rng rng(5);
  std::vector<double> vals;
  for (int i = 0; i < 12; ++i) vals.push_back(rng.uniform(0, 10));
  std::sort(vals.rbegin(), vals.rend());
  SingularSpectrum base{vals, "m"};
  std::vector<double> scaled = vals;
  for (auto& v : scaled) v *= 37.5;
  SingularSpectrum big{scaled, "m"};
  CHECK(relevant_rank(base, 0.1) == relevant_rank(big, 0.1));
  // zero spectrum: only case where the count is zero
  SingularSpectrum zero{{0.0, 0.0}, "m"};
  CHECK(relevant_rank(zero, 0.1) == 0);
}
