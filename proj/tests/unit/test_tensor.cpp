#include <doctest.h>

#include <limits>

#include "cptar/error.hpp"
#include "cptar/tensor.hpp"
#include "oracles.hpp"

using namespace cptar;

namespace {

DenseTensor random_tensor(const Shape& s, Rng& rng) {
  return DenseTensor(s, oracle::gaussian(static_cast<Eigen::Index>(oracle::prod(s)), 1, rng).col(0));
}

}  // namespace

TEST_CASE("shape_product handles empty shapes and overflow") {
  CHECK(shape_product(Shape{}) == 1);
  CHECK(shape_product(Shape{2, 3, 4}) == 24);
  const auto big = std::numeric_limits<std::size_t>::max() / 2;
  try {
    (void)shape_product(Shape{big, 3});
    FAIL("expected overflow");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::dim_overflow);
  }
}

TEST_CASE("element access is first-index-fastest") {
  DenseTensor t(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.at({0, 0}) == 1);
  CHECK(t.at({1, 0}) == 2);
  CHECK(t.at({0, 1}) == 3);
  CHECK(t.at({1, 2}) == 6);
  CHECK_THROWS_AS(t.at({2, 0}), Error);
  CHECK_THROWS_AS(t.at({0}), Error);
}

TEST_CASE("mode matricization of a 2x3x2 tensor by hand") {
  Vector data(12);
  for (int i = 0; i < 12; ++i) data[i] = i + 1;
  const DenseTensor t(Shape{2, 3, 2}, data);
  const Matrix m0 = mode_matricize(t, 0);
  CHECK(m0.rows() == 2);
  CHECK(m0.cols() == 6);
  CHECK(m0(0, 0) == 1);
  CHECK(m0(1, 0) == 2);
  CHECK(m0(0, 1) == 3);
  const Matrix m1 = mode_matricize(t, 1);
  // Mode-1 fibres: entries (i, :, k) with i fastest among the columns.
  CHECK(m1(0, 0) == 1);
  CHECK(m1(1, 0) == 3);
  CHECK(m1(2, 0) == 5);
  CHECK(m1(0, 1) == 2);
  CHECK(m1(0, 2) == 7);
  CHECK_THROWS_AS(mode_matricize(t, 3), Error);
}

TEST_CASE("matricizations agree with enumeration oracles") {
  Rng rng = make_stream(11);
  for (int rep = 0; rep < 50; ++rep) {
    const Shape s = oracle::random_shape(rng, 4, 4);
    const DenseTensor t = random_tensor(s, rng);
    for (std::size_t m = 0; m < s.size(); ++m) CHECK(mode_matricize(t, m) == oracle::mode_unfold(t, m));
    for (std::size_t k = 1; k < s.size(); ++k) {
      CHECK(seq_matricize(t, k) == oracle::seq_unfold(t, k));
      CHECK(inv_seq_matricize(seq_matricize(t, k), s, k) == t);
    }
  }
}

TEST_CASE("seq_matricize rejects degenerate splits") {
  const DenseTensor t(Shape{2, 2});
  CHECK_THROWS_AS(seq_matricize(t, 0), Error);
  CHECK_THROWS_AS(seq_matricize(t, 2), Error);
  CHECK(inv_seq_matricize(Matrix::Ones(4, 1), Shape{2, 2}, 2).data() == Vector::Ones(4));
  CHECK_THROWS_AS(inv_seq_matricize(Matrix::Ones(3, 1), Shape{2, 2}, 2), Error);
}

TEST_CASE("kronecker and khatri_rao match definitions") {
  Rng rng = make_stream(12);
  const Matrix a = oracle::gaussian(3, 2, rng);
  const Matrix b = oracle::gaussian(2, 4, rng);
  CHECK(kronecker(a, b).isApprox(oracle::kron(a, b), 1e-14));
  const Matrix c = oracle::gaussian(4, 2, rng);
  const Matrix kr = khatri_rao(a, c);
  for (Eigen::Index r = 0; r < 2; ++r) CHECK(kr.col(r).isApprox(oracle::kron(a.col(r), c.col(r)), 1e-14));
  CHECK_THROWS_AS(khatri_rao(a, b), Error);
}

TEST_CASE("khatri_rao_chain equals the loading oracle and skips a mode") {
  Rng rng = make_stream(13);
  std::vector<Matrix> f{oracle::gaussian(2, 3, rng), oracle::gaussian(3, 3, rng), oracle::gaussian(4, 3, rng)};
  CHECK(khatri_rao_chain(f).isApprox(oracle::lambda(f), 1e-13));
  const std::vector<Matrix> rest{f[0], f[2]};
  CHECK(khatri_rao_chain(f, 1).isApprox(oracle::lambda(rest), 1e-13));
  const std::vector<Matrix> single{f[0]};
  const Matrix ones = khatri_rao_chain(single, 0);
  CHECK(ones.rows() == 1);
  CHECK(ones.cols() == 3);
  CHECK(ones.isOnes());
}

TEST_CASE("outer_rank1 vectorizes to the Khatri-Rao column") {
  Rng rng = make_stream(14);
  std::vector<Vector> v{oracle::gaussian(2, 1, rng).col(0), oracle::gaussian(3, 1, rng).col(0),
                        oracle::gaussian(2, 1, rng).col(0)};
  const DenseTensor t = outer_rank1(v);
  CHECK(t.shape() == Shape{2, 3, 2});
  CHECK(t.at({1, 2, 0}) == doctest::Approx(v[0][1] * v[1][2] * v[2][0]));
  std::vector<Matrix> cols;
  for (const auto& x : v) cols.emplace_back(x);
  CHECK(vectorize(t).isApprox(khatri_rao_chain(cols).col(0), 1e-14));
}

TEST_CASE("col_norm normalizes and rejects zero columns") {
  Matrix m(2, 2);
  m << 3, 0, 4, 2;
  const Matrix n = col_norm(m);
  CHECK(n(0, 0) == doctest::Approx(0.6));
  CHECK(n(1, 0) == doctest::Approx(0.8));
  CHECK(n(1, 1) == doctest::Approx(1.0));
  m.col(1).setZero();
  try {
    (void)col_norm(m);
    FAIL("expected degenerate_factor");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::degenerate_factor);
  }
}

TEST_CASE("least squares returns the minimum-norm solution") {
  Matrix design(3, 2);
  design << 1, 1, 1, 1, 1, 1;  // rank one
  Matrix rhs(3, 1);
  rhs << 2, 2, 2;
  const auto sol = solve_least_squares_ex(design, rhs);
  CHECK(sol.rank_deficient);
  CHECK(sol.x(0, 0) == doctest::Approx(1.0));
  CHECK(sol.x(1, 0) == doctest::Approx(1.0));

  Rng rng = make_stream(15);
  const Matrix a = oracle::gaussian(10, 4, rng);
  const Matrix b = oracle::gaussian(10, 2, rng);
  const Matrix x = solve_least_squares(a, b);
  CHECK((a.transpose() * (b - a * x)).norm() < 1e-10);
}

TEST_CASE("support_size counts nonzeros") {
  CHECK(support_size(DenseTensor(Shape{2, 2}, {0, 1, 0, -2})) == 2);
  Matrix m = Matrix::Zero(2, 3);
  m(1, 2) = 1e-300;
  CHECK(support_size(m) == 1);
}

TEST_CASE("contract_all_but matches an explicit contraction") {
  Rng rng = make_stream(16);
  for (int rep = 0; rep < 20; ++rep) {
    const Shape s = oracle::random_shape(rng, 3, 3);
    const Eigen::Index rank = 2;
    std::vector<Matrix> f;
    for (auto d : s) f.push_back(oracle::gaussian(static_cast<Eigen::Index>(d), rank, rng));
    const Matrix data = oracle::gaussian(static_cast<Eigen::Index>(oracle::prod(s)), 3, rng);
    for (std::size_t mode = 0; mode < s.size(); ++mode) {
      for (Eigen::Index r = 0; r < rank; ++r) {
        Matrix expect = Matrix::Zero(static_cast<Eigen::Index>(s[mode]), data.cols());
        for (Eigen::Index c = 0; c < data.cols(); ++c) {
          for (std::size_t lin = 0; lin < oracle::prod(s); ++lin) {
            const auto idx = oracle::unravel(lin, s);
            double w = 1.0;
            for (std::size_t m = 0; m < s.size(); ++m) {
              if (m != mode) w *= f[m](static_cast<Eigen::Index>(idx[m]), r);
            }
            expect(static_cast<Eigen::Index>(idx[mode]), c) += w * data(static_cast<Eigen::Index>(lin), c);
          }
        }
        CHECK(contract_all_but(data, s, mode, f, r).isApprox(expect, 1e-12));
      }
    }
  }
}

TEST_CASE("hadamard_gram equals the chain Gram matrix") {
  Rng rng = make_stream(17);
  std::vector<Matrix> f{oracle::gaussian(3, 2, rng), oracle::gaussian(2, 2, rng), oracle::gaussian(4, 2, rng)};
  const Matrix chain = khatri_rao_chain(f, 1);
  CHECK(hadamard_gram(f, 1).isApprox(chain.transpose() * chain, 1e-13));
  const std::vector<Matrix> one{f[0]};
  CHECK(hadamard_gram(one, 0).isOnes());
}
