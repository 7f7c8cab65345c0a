#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "bml/errors.hpp"
#include "bml/geometry.hpp"

using namespace bml;

namespace {

const QuadratureGrid& p1() {
  static const QuadratureGrid g = build_grid(default_grid_spec(Space::P1));
  return g;
}
const QuadratureGrid& p2() {
  static const QuadratureGrid g = build_grid(default_grid_spec(Space::P2));
  return g;
}

}  // namespace

TEST(GridP1, WeightsSumToVolumeAndArePositive) {
  double s = 0;
  for (const auto& n : p1().nodes) {
    EXPECT_GT(n.weight, 0);
    s += n.weight;
  }
  EXPECT_NEAR(s, 1.0, 1e-12);
  EXPECT_NEAR(integrate(p1(), [](const GridNode&) { return 3.5; }), 3.5, 1e-12);
}

TEST(GridP1, ClosedFormIntegrals) {
  // u(1-u) with u = |z|^2/(1+|z|^2): int_0^1 u(1-u) du = 1/6.
  EXPECT_NEAR(integrate(p1(), [](const GridNode& n) { return n.moment[0] * n.moment[1]; }), 1.0 / 6, 1e-10);
  // log(1+|z|^2) = -log(1-u): int = 1.
  EXPECT_NEAR(integrate(p1(), [](const GridNode& n) { return -std::log(n.moment[0]); }), 1.0, 1e-8);
  // log((2|z|^2+1)/(|z|^2+1)) = log(1+u): int_0^1 log(1+u) du = 2 log 2 - 1.
  EXPECT_NEAR(integrate(p1(), [](const GridNode& n) { return std::log1p(n.moment[1]); }), 2 * std::log(2.0) - 1,
              1e-9);
  // Chart-free evaluation through homogeneous coordinates agrees.
  EXPECT_NEAR(integrate(p1(),
                        [](const GridNode& n) {
                          auto z = n.pt.homogeneous();
                          double s = std::norm(z[0]) + std::norm(z[1]);
                          return std::log((2 * std::norm(z[1]) + std::norm(z[0])) / s);
                        }),
              2 * std::log(2.0) - 1, 1e-9);
}

TEST(GridP1, OddIntegrandVanishes) {
  double v = integrate(p1(), [](const GridNode& n) {
    auto z = n.pt.homogeneous();
    cd w = z[1] / z[0];
    if (std::abs(z[0]) < 1e-300) return 0.0;
    return std::real(w) / (1 + std::norm(w));
  });
  EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(GridP1, FubiniStudyMoments) {
  EXPECT_NEAR(integrate(p1(), [](const GridNode& n) { return n.moment[0]; }), 0.5, 1e-12);
  EXPECT_NEAR(integrate(p1(), [](const GridNode& n) { return n.moment[1]; }), 0.5, 1e-12);
}

TEST(GridP1, ConvergenceOrderOnLogFamily) {
  // Error on int log(1+a u) must drop at least fourfold per halving of the step.
  for (double a : {1.0, 3.0}) {
    double exact = ((1 + a) * std::log1p(a) - a) / a;
    double e_prev = -1;
    for (int n : {21, 41, 81}) {
      auto g = build_grid_p1(n, 4, 20.0);
      double e = std::abs(integrate(g, [a](const GridNode& x) { return std::log1p(a * x.moment[1]); }) - exact);
      if (e_prev > 1e-13) EXPECT_LT(e, e_prev / 4 + 1e-14) << "a=" << a << " n=" << n;
      e_prev = e;
    }
  }
}

TEST(GridP1, ChartsKeepCoordinatesBounded) {
  for (const auto& n : p1().nodes) {
    EXPECT_LE(std::abs(n.pt.y[0]), 1.0 + 1e-15);
    double zz = n.pt.chart == 0 ? std::norm(n.pt.y[0]) : 1.0 / std::norm(n.pt.y[0]);
    EXPECT_NEAR(zz / (1 + zz), n.moment[1], 1e-12);
  }
}

TEST(GridP1, WideningKeepsStep) {
  auto g = widen_for_path(p1(), 5.0 / 3.0, 15.0);
  EXPECT_NEAR(g.step, p1().step, 1e-15);
  EXPECT_GE(g.spec.x_max, 30 + 2 * (5.0 / 3.0) * 15 - 1e-9);
  EXPECT_NEAR(integrate(g, [](const GridNode& n) { return n.moment[0] * n.moment[1]; }), 1.0 / 6, 1e-12);
}

TEST(GridP2, VolumeAndMoments) {
  EXPECT_NEAR(integrate(p2(), [](const GridNode&) { return 1.0; }), 0.5, 1e-12);
  for (int j = 0; j < 3; ++j)
    EXPECT_NEAR(integrate(p2(), [j](const GridNode& n) { return n.moment[j]; }), 0.5 / 3, 1e-9);
  // |z1|^2/(1+|z1|^2+|z2|^2) from homogeneous coordinates.
  EXPECT_NEAR(integrate(p2(),
                        [](const GridNode& n) {
                          auto z = n.pt.homogeneous();
                          return std::norm(z[1]) / (std::norm(z[0]) + std::norm(z[1]) + std::norm(z[2]));
                        }),
              0.5 / 3, 1e-9);
  // int_simplex v1 v2 = 1/24, so the FS average is 1/12 of Vol.
  EXPECT_NEAR(integrate(p2(), [](const GridNode& n) { return n.moment[1] * n.moment[2]; }), 1.0 / 24, 1e-12);
  for (const auto& n : p2().nodes) EXPECT_GT(n.weight, 0);
}

TEST(GridP2, SwapSymmetry) {
  auto f = [](const GridNode& n) {
    auto z = n.pt.homogeneous();
    double s = std::norm(z[0]) + std::norm(z[1]) + std::norm(z[2]);
    return std::pow(std::norm(z[1]) / s, 3) + std::log1p(std::norm(z[2]) / s) +
           std::real(z[1] * std::conj(z[0])) / s;
  };
  auto swapped = [&](const GridNode& n) {
    GridNode m = n;
    auto z = n.pt.homogeneous();
    m.pt = ChartPoint::from_homogeneous(Space::P2, {z[0], z[2], z[1]});
    return f(m);
  };
  EXPECT_NEAR(integrate(p2(), f), integrate(p2(), swapped), 1e-14);
}

TEST(Chart, HomogeneousRoundTripAndLogShift) {
  std::array<cd, 3> z{cd(0.3, 0.1), cd(-1.2, 0.4), cd(0.2, 0.9)};
  auto p = ChartPoint::from_homogeneous(Space::P2, z);
  EXPECT_EQ(p.chart, 1);
  auto h = p.homogeneous();
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(std::abs(h[j] - z[j] / z[1]), 0, 1e-15);
  auto q = p.shifted_log({cd(0.1, 0.2), cd(-0.3, 0)});
  EXPECT_NEAR(std::abs(q.y[0] - p.y[0] * std::exp(cd(0.1, 0.2))), 0, 1e-15);
}

TEST(Chart, LogMetricMatchesPotentialHessian) {
  // g_{a bbar} = d_a d_bbar log(1 + sum |y|^2) in w = log y; check P1 by finite differences
  // of the potential in rho = Re w: d_w d_wbar = (1/4) d_rho^2 for radial potentials.
  ChartPoint p;
  p.space = Space::P1;
  p.y[0] = std::polar(0.7, 0.4);
  double rho = std::log(std::abs(p.y[0])), h = 1e-4;
  auto phi = [](double r) { return std::log1p(std::exp(2 * r)); };
  double fd = 0.25 * (phi(rho + h) - 2 * phi(rho) + phi(rho - h)) / (h * h);
  EXPECT_NEAR(fs_log_metric(p)(0, 0), fd, 1e-6);
  ChartPoint q;
  q.space = Space::P2;
  q.y = {cd(0.5, 0.2), cd(-0.3, 0.6)};
  auto g = fs_log_metric(q);
  double s = 1 + std::norm(q.y[0]) + std::norm(q.y[1]);
  EXPECT_NEAR(g(0, 1), -std::norm(q.y[0]) * std::norm(q.y[1]) / (s * s), 1e-15);
  EXPECT_GT(g.determinant(), 0);
}

TEST(GaussLegendre, ExactOnPolynomials) {
  std::vector<double> x, w;
  for (int n : {1, 2, 5, 10, 64}) {
    gauss_legendre01(n, x, w);
    for (int k = 0; k < 2 * n; ++k) {
      double s = 0;
      for (int i = 0; i < n; ++i) s += w[i] * std::pow(x[i], k);
      EXPECT_NEAR(s, 1.0 / (k + 1), 1e-13) << n << " " << k;
    }
  }
}

TEST(Integrate, NonFiniteIntegrandNamesNode) {
  try {
    integrate(p1(), [](const GridNode& n) { return n.moment[1] > 0.5 ? NAN : 1.0; });
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonFiniteIntegrand);
    EXPECT_NE(std::string(e.what()).find("node"), std::string::npos);
  }
}

TEST(Integrate, InvalidResolution) {
  EXPECT_THROW(build_grid_p1(1, 8), Error);
  EXPECT_THROW(build_grid_p1(10, 3), Error);
  EXPECT_THROW(build_grid_p2(1, 8), Error);
  EXPECT_THROW(build_grid_p2(4, 2), Error);
}

TEST(Integrate, PairwiseSumIsOrderFixed) {
  std::vector<double> v;
  for (int i = 0; i < 1000; ++i) v.push_back(1.0 / (i + 1));
  double a = pairwise_sum(v), b = pairwise_sum(v);
  EXPECT_EQ(a, b);
  double exact = 0;
  for (int i = 999; i >= 0; --i) exact += 1.0 / (i + 1);
  EXPECT_NEAR(a, exact, 1e-13);
}

TEST(GridSpecJson, RoundTrip) {
  for (Space s : {Space::P1, Space::P2}) {
    GridSpec g = default_grid_spec(s);
    GridSpec h = grid_spec_from_json(to_json(g));
    EXPECT_EQ(h.space, g.space);
    EXPECT_EQ(h.n_angular, g.n_angular);
    EXPECT_EQ(h.n_radial, g.n_radial);
    EXPECT_EQ(h.n_simplex, g.n_simplex);
    EXPECT_EQ(h.x_max, g.x_max);
  }
  EXPECT_THROW(grid_spec_from_json(nlohmann::json{{"space", "P3"}}), Error);
}
