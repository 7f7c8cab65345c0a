#include <gtest/gtest.h>

#include <random>

#include "bml/bundle.hpp"
#include "bml/errors.hpp"

using namespace bml;

namespace {

const QuadratureGrid& p1() {
  static const QuadratureGrid g = build_grid(default_grid_spec(Space::P1));
  return g;
}
const QuadratureGrid& p2() {
  static const QuadratureGrid g = build_grid_p2(8, 12);
  return g;
}

// Pointwise homogeneous FS metric on E(k) in the chart frame, built from
// homogeneous coordinates (oracle, independent of the exact Gram code).
MatC frame_metric(const SectionBasis& b, const ChartPoint& pt) {
  auto z = pt.homogeneous();
  const int n = space_dim(pt.space);
  double s = 0;
  for (int j = 0; j <= n; ++j) s += std::norm(z[j]);
  if (b.bundle.kind == CatalogBundle::Kind::Split) {
    MatC g = MatC::Zero(b.rank, b.rank);
    for (int c = 0; c < b.rank; ++c) g(c, c) = std::pow(s, -(b.bundle.degrees[c] + b.level));
    return g;
  }
  Eigen::Vector3cd zz(z[0], z[1], z[2]);
  Eigen::Matrix3cd proj = Eigen::Matrix3cd::Identity() - zz * zz.adjoint() / s;
  std::vector<int> cols;
  for (int j = 0; j < 3; ++j)
    if (j != pt.chart) cols.push_back(j);
  MatC g(2, 2);
  for (int a = 0; a < 2; ++a)
    for (int c = 0; c < 2; ++c) {
      Eigen::Vector3cd ea = proj.col(cols[a]), ec = proj.col(cols[c]);
      g(a, c) = ec.dot(ea) * std::pow(s, -(b.level + 1));  // <e_a, e_c> = sum ea_j conj(ec_j)
    }
  return g;
}

MatC grid_gram(const SectionBasis& b, const QuadratureGrid& grid) {
  MatC gram = MatC::Zero(b.dim, b.dim);
  for (const auto& node : grid.nodes) {
    MatC q = evaluate_q(b, node.pt);
    gram += node.weight * (q * frame_metric(b, node.pt) * q.adjoint());
  }
  return gram;
}

ChartPoint random_point(Space s, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::array<cd, 3> z{cd(g(rng), g(rng)), cd(g(rng), g(rng)), space_dim(s) == 2 ? cd(g(rng), g(rng)) : cd(0)};
  return ChartPoint::from_homogeneous(s, z);
}

}  // namespace

TEST(SectionBasis, DimensionsMatchCohomology) {
  EXPECT_EQ(section_basis(CatalogBundle::split_p1({0}), 1).dim, 2);
  EXPECT_EQ(section_basis(CatalogBundle::split_p1({0, 2}), 3).dim, 10);
  EXPECT_EQ(section_basis(CatalogBundle::euler_tp2(), 0).dim, 8);
  for (int k = -1; k <= 4; ++k) {
    auto b = section_basis(CatalogBundle::euler_tp2(), k, false);
    EXPECT_EQ(b.dim, 3 * h0_line(Space::P2, k + 1) - h0_line(Space::P2, k));
    EXPECT_EQ(b.dim, tangent_p2().h0_at(k));
  }
  for (int k = 0; k <= 5; ++k) {
    auto b = section_basis(CatalogBundle::split_p1({0, 2}), k, false);
    EXPECT_EQ(b.dim, h0_line(Space::P1, k) + h0_line(Space::P1, k + 2));
  }
}

TEST(SectionBasis, LevelBelowRegularity) {
  EXPECT_THROW(section_basis(CatalogBundle::split_p1({2}), -3), Error);
  try {
    section_basis(CatalogBundle::split_p1({0, 2}), -1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::LevelBelowRegularity);
  }
}

TEST(EvaluateQ, MonomialValues) {
  auto b = section_basis(CatalogBundle::split_p1({0}), 1, false);
  ChartPoint p;
  p.y[0] = 0;
  MatC q = evaluate_q(b, p);
  EXPECT_EQ(q.rows(), 2);
  EXPECT_EQ(q(0, 0), cd(1));
  EXPECT_EQ(q(1, 0), cd(0));
  p.y[0] = cd(0.3, -0.2);
  q = evaluate_q(b, p);
  EXPECT_NEAR(std::abs(q(1, 0) - p.y[0]), 0, 1e-16);
}

TEST(EvaluateQ, GlobalGenerationRank) {
  std::mt19937_64 rng(7);
  auto b = section_basis(CatalogBundle::split_p1({0, 2}), 3);
  for (int i = 0; i < 10000; ++i) ASSERT_EQ(q_rank(evaluate_q(b, random_point(Space::P1, rng))), 2);
  auto e = section_basis(CatalogBundle::euler_tp2(), 0);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(q_rank(evaluate_q(e, random_point(Space::P2, rng))), 2);
  auto e1 = section_basis(CatalogBundle::euler_tp2(), -1);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(q_rank(evaluate_q(e1, random_point(Space::P2, rng))), 2);
}

TEST(EvaluateQ, EulerFrameTransformsHolomorphically) {
  // The same section evaluated in two charts differs by an invertible 2x2 transition
  // common to all sections, so rank-2 row spaces agree: Q_c1 = Q_c2 * g.
  std::mt19937_64 rng(3);
  auto b = section_basis(CatalogBundle::euler_tp2(), 1);
  for (int it = 0; it < 20; ++it) {
    auto p = random_point(Space::P2, rng);
    auto z = p.homogeneous();
    ChartPoint other;
    other.space = Space::P2;
    other.chart = (p.chart + 1) % 3;
    int a = 0;
    for (int j = 0; j < 3; ++j)
      if (j != other.chart) other.y[a++] = z[j] / z[other.chart];
    MatC q1 = evaluate_q(b, p), q2 = evaluate_q(b, other);
    MatC g = q2.colPivHouseholderQr().solve(q1);
    EXPECT_LT((q2 * g - q1).norm(), 1e-10 * q1.norm());
  }
}

TEST(HRef, ClosedFormsAndPositivity) {
  auto b = section_basis(CatalogBundle::split_p1({0}), 1, false);
  auto h = h_ref(b, p1());
  for (std::size_t i = 0; i < p1().nodes.size(); i += 97) {
    const auto& pt = p1().nodes[i].pt;
    EXPECT_NEAR(h.h[i](0, 0).real(), 1 + std::norm(pt.y[0]), 1e-12);
  }
  auto b2 = section_basis(CatalogBundle::split_p1({2}), 0, false);
  ChartPoint p;
  p.y[0] = cd(0.4, 0.7);
  MatC q = evaluate_q(b2, p);
  double r = std::norm(p.y[0]);
  EXPECT_NEAR((q.adjoint() * q)(0, 0).real(), 1 + r + r * r, 1e-14);
  auto bt = section_basis(CatalogBundle::euler_tp2(), 0);
  EXPECT_GT(h_ref(bt, p2()).min_eigenvalue(), 0);
  auto bs = section_basis(CatalogBundle::split_p1({0, 2}), 3);
  auto hs = h_ref(bs, p1());
  EXPECT_GT(hs.min_eigenvalue(), 0);
  for (const auto& x : hs.h) {
    EXPECT_EQ(x(0, 1), cd(0));
    EXPECT_GT(x.determinant().real(), 0);
    EXPECT_TRUE(std::isfinite(x.determinant().real()));
  }
}

TEST(Orthonormalization, GridGramIsIdentity) {
  for (auto [bundle, k] : {std::pair{CatalogBundle::split_p1({0}), 1}, {CatalogBundle::split_p1({0, 2}), 3},
                           {CatalogBundle::split_p1({1, 1}), 2}, {CatalogBundle::split_p1({3}), 2}}) {
    auto b = section_basis(bundle, k);
    EXPECT_LT((grid_gram(b, p1()) - MatC::Identity(b.dim, b.dim)).norm(), 1e-10) << bundle_to_string(bundle);
  }
  for (int k : {0, 1}) {
    auto b = section_basis(CatalogBundle::euler_tp2(), k);
    EXPECT_LT((grid_gram(b, p2()) - MatC::Identity(b.dim, b.dim)).norm(), 1e-10) << "T_P2 k=" << k;
  }
}

TEST(Orthonormalization, ExactGramMatchesQuadrature) {
  auto b = section_basis(CatalogBundle::euler_tp2(), 1, false);
  MatC g = grid_gram(b, p2());
  for (long i = 0; i < b.dim; ++i)
    for (long j = 0; j < b.dim; ++j) EXPECT_NEAR(std::abs(g(i, j) - b.gram_exact[i][j].get_d()), 0, 1e-12);
  // O(1) on P1: int |Z_j|^2/|Z|^2 = 1/2.
  auto o1 = section_basis(CatalogBundle::split_p1({1}), 0, false);
  EXPECT_EQ(o1.gram_exact[0][0], Rat(1, 2));
}

TEST(BundleSpec, ParseAndRoundTrip) {
  for (const std::string s : {"split_p1:0,2", "split_p1:-1", "euler_tp2", "split_p2:1,1"}) {
    auto b = bundle_from_string(s);
    EXPECT_EQ(bundle_to_string(b), s);
    EXPECT_EQ(bundle_to_string(bundle_from_json(to_json(b))), s);
  }
  EXPECT_EQ(sheaf_of(bundle_from_string("euler_tp2")).degree, Rat(3));
  EXPECT_THROW(bundle_from_string("split_p1:"), Error);
  EXPECT_THROW(bundle_from_string("split_p1:a"), Error);
  EXPECT_THROW(bundle_from_string("quot"), Error);
  EXPECT_THROW(bundle_from_json(nlohmann::json{{"kind", "split_p1"}}), Error);
}

TEST(EvaluateQ, LogDerivativeMatchesDifferenceQuotient) {
  std::mt19937_64 rng(21);
  for (auto [bundle, k] : {std::pair{CatalogBundle::split_p1({0, 2}), 2}, {CatalogBundle::euler_tp2(), 1},
                           {CatalogBundle::split_p2({1, 0}), 1}}) {
    auto b = section_basis(bundle, k);
    const int n = space_dim(bundle.space);
    for (int it = 0; it < 5; ++it) {
      auto p = random_point(bundle.space, rng);
      for (int a = 0; a < n; ++a) {
        const double d = 1e-5;
        std::array<cd, 2> plus{}, minus{};
        plus[a] = d;
        minus[a] = -d;
        MatC fd = (evaluate_q(b, p.shifted_log(plus)) - evaluate_q(b, p.shifted_log(minus))) / (2 * d);
        MatC ex = evaluate_q_dlog(b, p, a);
        EXPECT_LT((fd - ex).norm(), 1e-8 * std::max(1.0, ex.norm())) << bundle_to_string(bundle) << " a=" << a;
      }
    }
  }
  EXPECT_THROW(evaluate_q_dlog(section_basis(CatalogBundle::split_p1({0}), 1), ChartPoint{}, 1), Error);
}
