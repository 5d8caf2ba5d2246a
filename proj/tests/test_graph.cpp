#include "staged/graph.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

using staged::Matrix;
using staged::Rng;

namespace {

Matrix positive_features(std::size_t n, std::size_t d, Rng& rng) {
  return oracle::random_matrix(n, d, rng, 0.05, 1.0);
}

void expect_near_matrix(const Matrix& a, const Matrix& b, double tol) {
  ASSERT_EQ(a.rows(), b.rows());
  ASSERT_EQ(a.cols(), b.cols());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.values()[i], b.values()[i], tol) << "entry " << i;
}

}  // namespace

TEST(Cosine, KnownValues) {
  const std::vector<double> a{3, 4}, e1{1, 0}, e2{0, 1}, d{1, 1};
  EXPECT_NEAR(staged::cosine_similarity(a, a), 1.0, 1e-15);
  EXPECT_EQ(staged::cosine_similarity(e1, e2), 0.0);
  EXPECT_NEAR(staged::cosine_similarity(e1, d), 1.0 / std::sqrt(2.0), 1e-12);
}

TEST(Cosine, ZeroNormIsDataError) {
  const std::vector<double> z{0, 0}, a{1, 2};
  EXPECT_THROW(staged::cosine_similarity(z, a), staged::DataError);
}

TEST(Epsilon, TwoNodeExamples) {
  const Matrix s{{1, 0.5}, {0.5, 1}};
  EXPECT_EQ(staged::epsilon_from_k(s, 1.0), 1.0);
  EXPECT_EQ(staged::epsilon_from_k(s, 2.0), 0.5);
}

TEST(Epsilon, IdenticalSamplesGiveOne) {
  const Matrix x{{3, 4}, {3, 4}, {3, 4}};
  const Matrix s = staged::similarity_matrix(x);
  for (double k : {1.0, 2.0, 3.0}) EXPECT_NEAR(staged::epsilon_from_k(s, k), 1.0, 1e-15);
}

TEST(Epsilon, OutOfRangeKIsConfigError) {
  const Matrix s = Matrix::identity(3);
  EXPECT_THROW(staged::epsilon_from_k(s, 0.5), staged::ConfigError);
  EXPECT_THROW(staged::epsilon_from_k(s, 3.5), staged::ConfigError);
}

TEST(Epsilon, RetainedCountReachesTarget) {
  Rng rng(31);
  for (int rep = 0; rep < 30; ++rep) {
    const std::size_t n = 3 + rng.below(15);
    const Matrix x = oracle::random_matrix(n, 4, rng);
    const Matrix s = staged::similarity_matrix(x);
    const double k = 1.0 + rng.uniform() * static_cast<double>(n - 1);
    const double eps = staged::epsilon_from_k(s, k);
    std::size_t kept = 0;
    for (double v : s.values()) kept += v >= eps ? 1 : 0;
    EXPECT_GE(static_cast<double>(kept) / static_cast<double>(n), k) << "n=" << n << " k=" << k;
  }
}

TEST(Adjacency, OrthogonalRowsHaveNoEdges) {
  const Matrix x{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  EXPECT_EQ(staged::build_adjacency(x, 0.1), Matrix(3, 3));
}

TEST(Adjacency, IdenticalRowsGetUnitEdge) {
  const Matrix a = staged::build_adjacency(Matrix{{1, 2}, {1, 2}}, 0.9);
  EXPECT_NEAR(a(0, 1), 1.0, 1e-15);
  EXPECT_NEAR(a(1, 0), 1.0, 1e-15);
  EXPECT_EQ(a(0, 0), 0.0);
  EXPECT_EQ(a(1, 1), 0.0);
}

TEST(Adjacency, ThreeRowExample) {
  const Matrix a = staged::build_adjacency(Matrix{{1, 0}, {1, 1}, {0, 1}}, 0.7);
  const double r = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(a(0, 1), r, 1e-12);
  EXPECT_NEAR(a(1, 2), r, 1e-12);
  EXPECT_EQ(a(0, 2), 0.0);
  EXPECT_EQ(a(2, 0), 0.0);
}

TEST(Adjacency, ZeroRowNamesIndex) {
  try {
    staged::build_adjacency(Matrix{{1, 0}, {0, 0}}, 0.5);
    FAIL();
  } catch (const staged::DataError& e) {
    EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos);
  }
}

TEST(Adjacency, StructuralInvariants) {
  Rng rng(4);
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix x = oracle::random_matrix(10, 5, rng);
    const double eps = rng.uniform(-0.5, 0.9);
    const Matrix a = staged::build_adjacency(x, eps);
    for (std::size_t i = 0; i < 10; ++i) {
      EXPECT_EQ(a(i, i), 0.0);
      for (std::size_t j = 0; j < 10; ++j) {
        EXPECT_EQ(a(i, j), a(j, i));
        if (a(i, j) != 0.0) {
          EXPECT_GE(a(i, j), eps);
          EXPECT_LE(std::abs(a(i, j)), 1.0);
        }
      }
    }
  }
}

TEST(Normalize, EdgelessIsIdentity) {
  EXPECT_EQ(staged::normalize_adjacency(Matrix(2, 2)), Matrix::identity(2));
}

TEST(Normalize, SingleEdge) {
  expect_near_matrix(staged::normalize_adjacency(Matrix{{0, 1}, {1, 0}}), Matrix{{0.5, 0.5}, {0.5, 0.5}}, 1e-15);
}

TEST(Normalize, PathGraph) {
  const Matrix t = staged::normalize_adjacency(Matrix{{0, 1, 0}, {1, 0, 1}, {0, 1, 0}});
  EXPECT_NEAR(t(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(t(0, 1), 1.0 / std::sqrt(6.0), 1e-12);
  EXPECT_NEAR(t(1, 1), 1.0 / 3.0, 1e-15);
  EXPECT_EQ(t(0, 2), 0.0);
}

TEST(Normalize, MatchesDenseProductAndIsSymmetric) {
  Rng rng(12);
  for (int rep = 0; rep < 15; ++rep) {
    const Matrix x = positive_features(9, 4, rng);
    const Matrix a = staged::build_adjacency(x, staged::epsilon_from_k(staged::similarity_matrix(x), 3.0));
    const Matrix t = staged::normalize_adjacency(a);
    expect_near_matrix(t, oracle::dense_normalization(a), 1e-12);
    for (std::size_t i = 0; i < 9; ++i)
      for (std::size_t j = 0; j < 9; ++j) EXPECT_NEAR(t(i, j), t(j, i), 1e-12);
  }
}

TEST(Normalize, SpectralRadiusAtMostOne) {
  Rng rng(99);
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix x = oracle::random_matrix(8, 3, rng);
    const Matrix a = staged::build_adjacency(x, rng.uniform(-1.0, 0.9));
    EXPECT_LE(oracle::spectral_radius(staged::normalize_adjacency(a)), 1.0 + 1e-9);
  }
}

TEST(Graph, KOneDegeneratesToIdentity) {
  const Matrix x{{1, 0, 0}, {1, 1, 0}, {0, 1, 1}, {0.2, 0.1, 1}};
  const auto g = staged::build_graph(x, 1.0);
  EXPECT_NEAR(g.epsilon, 1.0, 1e-15);
  EXPECT_EQ(g.adjacency, Matrix(4, 4));
  EXPECT_EQ(g.normalized, Matrix::identity(4));
}

TEST(Transductive, EmptyTestMatchesTrainOnly) {
  Rng rng(5);
  const Matrix tr = positive_features(7, 3, rng);
  const auto base = staged::build_graph(tr, 2.0);
  const auto g = staged::build_transductive_graph(tr, Matrix(0, 3), base.epsilon);
  EXPECT_EQ(g.adjacency, base.adjacency);
  EXPECT_EQ(g.normalized, base.normalized);
}

TEST(Transductive, DuplicateTestRowGetsUnitEdge) {
  const Matrix tr{{1, 0}, {0, 1}};
  const Matrix te{{2, 0}};
  const auto g = staged::build_transductive_graph(tr, te, 0.8);
  EXPECT_NEAR(g.adjacency(0, 2), 1.0, 1e-15);
  EXPECT_NEAR(g.adjacency(2, 0), 1.0, 1e-15);
}

TEST(Transductive, TrainBlockMatchesTrainOnlyAdjacency) {
  Rng rng(8);
  const Matrix tr = positive_features(12, 5, rng);
  const Matrix te = positive_features(5, 5, rng);
  const double eps = staged::epsilon_from_k(staged::similarity_matrix(tr), 2.0);
  const Matrix only = staged::build_adjacency(tr, eps);
  const auto g = staged::build_transductive_graph(tr, te, eps);
  for (std::size_t i = 0; i < 12; ++i)
    for (std::size_t j = 0; j < 12; ++j) EXPECT_EQ(g.adjacency(i, j), only(i, j));
}

TEST(Transductive, FeatureWidthMismatchIsShapeError) {
  EXPECT_THROW(staged::build_transductive_graph(Matrix(2, 3, 1.0), Matrix(1, 2, 1.0), 0.5), staged::ShapeError);
}
