#include <cmath>
#include <random>

#include "decorr/errors.hpp"
#include "decorr/linalg.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace decorr;
using decorr::testing::max_abs_diff;
using decorr::testing::naive_matmul;
using decorr::testing::random_matrix;

namespace {

Matrix random_symmetric(std::size_t n, std::mt19937_64& rng) {
  Matrix a = random_matrix(n, n, rng);
  return scale(add(a, transpose(a)), 0.5);
}

double reconstruction_error(const Matrix& a, const EigenDecomposition& eig) {
  const std::size_t n = a.rows();
  Matrix scaled = eig.eigenvectors;
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i) scaled(i, k) *= eig.eigenvalues[k];
  const Matrix rebuilt = matmul(scaled, transpose(eig.eigenvectors));
  return frobenius_norm(subtract(rebuilt, a)) / std::max(1.0, frobenius_norm(a));
}

}  // namespace

TEST_CASE("matmul small cases") {
  const Matrix a{{1, 2}, {3, 4}};
  CHECK(matmul(Matrix::identity(2), a) == a);
  CHECK(matmul(a, Matrix{{1}, {1}}) == Matrix{{3}, {7}});
  CHECK_THROWS_AS(matmul(a, Matrix(3, 1)), DimensionError);
}

TEST_CASE("matmul agrees with the triple-loop oracle") {
  std::mt19937_64 rng(11);
  const Matrix a = random_matrix(5, 7, rng);
  const Matrix b = random_matrix(7, 3, rng);
  CHECK(max_abs_diff(matmul(a, b), naive_matmul(a, b)) < 1e-12);

  std::uniform_int_distribution<std::size_t> dim(1, 32);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = dim(rng), k = dim(rng), n = dim(rng);
    const Matrix x = random_matrix(m, k, rng);
    const Matrix y = random_matrix(k, n, rng);
    CHECK(max_abs_diff(matmul(x, y), naive_matmul(x, y)) < 1e-12);
  }
}

TEST_CASE("elementwise helpers") {
  std::mt19937_64 rng(3);
  const Matrix a = random_matrix(4, 6, rng);
  CHECK(transpose(transpose(a)) == a);
  CHECK(frobenius_norm(Matrix::identity(3)) == doctest::Approx(std::sqrt(3.0)).epsilon(1e-15));
  CHECK(scale(a, 0.0) == Matrix(4, 6));
  CHECK(subtract(add(a, a), a) == a);
  CHECK_THROWS_AS(add(a, Matrix(6, 4)), DimensionError);
  CHECK_THROWS_AS(Matrix(2, 2, std::vector<double>{1.0}), DimensionError);
}

TEST_CASE("sym_eig diagonal and 2x2 cases") {
  const auto d = sym_eig(Matrix{{3, 0}, {0, 1}});
  CHECK(d.eigenvalues[0] == doctest::Approx(3.0));
  CHECK(d.eigenvalues[1] == doctest::Approx(1.0));
  CHECK(d.eigenvectors == Matrix::identity(2));

  // Characteristic polynomial (2 - l)^2 - 1 = 0 gives l = 3, 1.
  const auto e = sym_eig(Matrix{{2, 1}, {1, 2}});
  CHECK(e.eigenvalues[0] == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(e.eigenvalues[1] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(std::abs(e.eigenvectors(0, 0)) == doctest::Approx(1.0 / std::sqrt(2.0)));
}

TEST_CASE("sym_eig rejects bad input") {
  CHECK_THROWS_AS(sym_eig(Matrix(2, 3)), DimensionError);
  CHECK_THROWS_AS(sym_eig(Matrix{{1, 2}, {0, 1}}), DimensionError);
}

TEST_CASE("sym_eig invariants on random symmetric matrices") {
  std::mt19937_64 rng(5);
  for (std::size_t n : {1u, 2u, 3u, 8u, 17u, 40u}) {
    const Matrix a = random_symmetric(n, rng);
    const auto eig = sym_eig(a);
    CHECK(reconstruction_error(a, eig) < 1e-8);
    const Matrix qtq = matmul(transpose(eig.eigenvectors), eig.eigenvectors);
    CHECK(frobenius_norm(subtract(qtq, Matrix::identity(n))) < 1e-10);
    for (std::size_t k = 1; k < n; ++k) CHECK(eig.eigenvalues[k - 1] >= eig.eigenvalues[k]);
    // Sign convention: the largest-magnitude entry of every column is positive.
    for (std::size_t k = 0; k < n; ++k) {
      std::size_t lead = 0;
      for (std::size_t i = 1; i < n; ++i)
        if (std::abs(eig.eigenvectors(i, k)) > std::abs(eig.eigenvectors(lead, k))) lead = i;
      CHECK(eig.eigenvectors(lead, k) > 0.0);
    }
  }
}

TEST_CASE("sym_eig is deterministic and Gram spectra are non-negative") {
  std::mt19937_64 rng(8);
  const Matrix x = random_matrix(6, 4, rng);  // rank 4 Gram of size 6
  const Matrix g = gram(x);
  const auto first = sym_eig(g);
  const auto second = sym_eig(g);
  CHECK(first.eigenvectors == second.eigenvectors);
  for (double l : first.eigenvalues) CHECK(l >= -1e-10);
}

TEST_CASE("sym_eig handles repeated eigenvalues") {
  const auto eig = sym_eig(Matrix::identity(5));
  for (double l : eig.eigenvalues) CHECK(l == 1.0);
  std::mt19937_64 rng(2);
  const Matrix x = random_matrix(4, 4, rng);
  Matrix a = matmul(x, transpose(x));
  a = add(a, scale(Matrix::identity(4), 2.0));
  CHECK(reconstruction_error(a, sym_eig(a)) < 1e-8);
}

TEST_CASE("singular values") {
  const auto d = singular_values(Matrix{{2, 0}, {0, 3}});
  CHECK(d[0] == doctest::Approx(3.0));
  CHECK(d[1] == doctest::Approx(2.0));

  for (double s : singular_values(Matrix(3, 5))) CHECK(s == 0.0);

  // Rank one: u v^T has the single singular value |u| |v|.
  const Matrix u{{1}, {-2}, {0.5}, {3}};
  const Matrix v{{2, 1, -1, 0.25, 4, -3}};
  const auto sv = singular_values(matmul(u, v));
  REQUIRE(sv.size() == 4);
  CHECK(std::abs(sv[0] - frobenius_norm(u) * frobenius_norm(v)) < 1e-10);
  for (std::size_t i = 1; i < sv.size(); ++i) CHECK(sv[i] < 1e-6);
}

TEST_CASE("singular values are transpose invariant") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix x = random_matrix(3 + trial, 9, rng);
    const auto a = singular_values(x);
    const auto b = singular_values(transpose(x));
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-10);
  }
}
