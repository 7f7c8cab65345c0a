#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "bml/balance.hpp"
#include "bml/errors.hpp"

using namespace bml;

namespace {

HermitianForm random_form(long n, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  const MatC z = random_generator(n, rng);
  Eigen::SelfAdjointEigenSolver<MatC> es(z);
  const Eigen::VectorXd e = (2 * scale * es.eigenvalues()).array().exp();
  return HermitianForm::from_matrix(es.eigenvectors() * e.asDiagonal() * es.eigenvectors().adjoint(), "random");
}

const QuadratureGrid& p1_grid() {
  static const QuadratureGrid g = build_grid_p1(321, 32);
  return g;
}

}  // namespace

TEST(Balance, SelfTestPasses) { EXPECT_NO_THROW(balance_self_test()); }

TEST(Balance, CenterOfMassTraceIsRank) {
  for (const auto& [b, k] : {std::pair{CatalogBundle::split_p1({0, 2}), 3}, std::pair{CatalogBundle::split_p1({3}), 2}}) {
    const SectionBasis basis = section_basis(b, k);
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      const MatC M = center_of_mass(basis, p1_grid(), random_form(basis.dim, seed, 1.5));
      EXPECT_NEAR(M.trace().real(), basis.rank, 1e-9);
      EXPECT_LT((M - M.adjoint()).norm(), 1e-14);
      EXPECT_GT(Eigen::SelfAdjointEigenSolver<MatC>(M).eigenvalues().minCoeff(), -1e-14);
    }
  }
}

TEST(Balance, IdentityIsFixedPointForO2) {
  const SectionBasis basis = section_basis(CatalogBundle::split_p1({2}), 0);
  const HermitianForm id = HermitianForm::identity(basis.dim);
  EXPECT_LT(balance_state(basis, p1_grid(), id).residual, 1e-12);
  EXPECT_LT((t_operator(basis, p1_grid(), id).H - id.H).norm(), 1e-12);
}

TEST(Balance, GradientMatchesFiniteDifference) {
  const SectionBasis basis = section_basis(CatalogBundle::split_p1({0, 2}), 3);
  const QuadratureGrid grid = build_grid_p1(161, 16);
  const HermitianForm H = random_form(basis.dim, 7, 0.7);
  std::mt19937_64 rng(11);
  double worst = 0;
  for (int i = 0; i < 100; ++i) {
    const MatC z = random_generator(basis.dim, rng);
    worst = std::max(worst, std::abs(m2_gradient(basis, grid, H, z) - m2_gradient_fd(basis, grid, H, z, 1e-3)));
  }
  EXPECT_LT(worst, 1e-7);
}

TEST(Balance, GradientVanishesAtBalanced) {
  const SectionBasis basis = section_basis(CatalogBundle::split_p1({3}), 2);
  std::mt19937_64 rng(5);
  for (int i = 0; i < 10; ++i)
    EXPECT_LT(std::abs(m2_gradient(basis, p1_grid(), HermitianForm::identity(basis.dim),
                                   random_generator(basis.dim, rng))), 1e-9);
}

TEST(Balance, DestabilizingDirectionHasNegativeGradient) {
  const SectionBasis basis = section_basis(CatalogBundle::split_p1({0, 2}), 3);
  ZetaSpec spec;
  spec.subsheaf = "O(2)";
  const MatC z = build_generator(spec, basis);
  EXPECT_LT(m2_gradient(basis, p1_grid(), HermitianForm::identity(basis.dim), z), 0);
}

TEST(Balance, JacobianMatchesDifferenceQuotient) {
  const SectionBasis basis = section_basis(CatalogBundle::split_p1({1, 1}), 1);
  const QuadratureGrid grid = build_grid_p1(161, 16);
  const HermitianForm H = random_form(basis.dim, 3, 0.5);
  const Eigen::MatrixXd J = center_of_mass_jacobian(basis, grid, H);
  const auto eb = traceless_hermitian_basis(basis.dim);
  ASSERT_EQ(long(eb.size()), basis.dim * basis.dim - 1);
  const MatC s = H.sqrt();
  const double h = 1e-5;
  for (std::size_t j = 0; j < eb.size(); j += 3) {
    auto m_at = [&](double t) {
      Eigen::SelfAdjointEigenSolver<MatC> es(t * eb[j]);
      const MatC e = es.eigenvectors() * (0.5 * es.eigenvalues()).array().exp().matrix().asDiagonal() *
                     es.eigenvectors().adjoint();
      const MatC se = e * s;
      // M depends on sigma, not only on sigma^* sigma: evaluate with this sigma directly.
      const MatC hs = se.adjoint() * se;
      const MatC sq = HermitianForm::from_matrix(0.5 * (hs + hs.adjoint())).sqrt();
      const MatC u = se * sq.inverse();  // se = u sq with u unitary
      return MatC(u * center_of_mass(basis, grid, HermitianForm::from_matrix(0.5 * (hs + hs.adjoint()))) *
                  u.adjoint());
    };
    const MatC dm = (m_at(h) - m_at(-h)) / (2 * h);
    for (std::size_t i = 0; i < eb.size(); ++i)
      EXPECT_NEAR((eb[i] * dm).trace().real(), J(long(i), long(j)), 1e-6);
  }
}

TEST(Balance, BasisIsOrthonormal) {
  const auto eb = traceless_hermitian_basis(4);
  for (std::size_t i = 0; i < eb.size(); ++i) {
    EXPECT_NEAR(std::abs(eb[i].trace()), 0, 1e-15);
    for (std::size_t j = 0; j < eb.size(); ++j)
      EXPECT_NEAR((eb[i].adjoint() * eb[j]).trace().real(), i == j ? 1.0 : 0.0, 1e-14);
  }
}

TEST(Balance, LineBundlesConverge) {
  for (const auto& [d, k] : {std::pair{2, 0}, std::pair{3, 2}}) {
    const SectionBasis basis = section_basis(CatalogBundle::split_p1({d}), k);
    const HermitianForm H0 = random_form(basis.dim, 100 + d, 0.8);
    const BalanceRun t = t_iterate(basis, p1_grid(), H0);
    const BalanceRun l = lm_minimize(basis, p1_grid(), H0);
    EXPECT_EQ(t.verdict, Verdict::Converged) << d;
    EXPECT_EQ(l.verdict, Verdict::Converged) << d;
    EXPECT_LT(t.final.residual, 1e-10);
    EXPECT_LT(l.final.residual, 1e-10);
    EXPECT_LT((t.final.H.H - l.final.H.H).norm(), 1e-6);
    // the orthonormal basis is balanced at the identity
    EXPECT_LT((t.final.H.H - MatC::Identity(basis.dim, basis.dim)).norm(), 1e-6);
  }
}

TEST(Balance, TIterationConvergesWithinFiftySteps) {
  for (int d : {1, 2, 3}) {
    const SectionBasis basis = section_basis(CatalogBundle::split_p1({d}), 0);
    const BalanceRun t = t_iterate(basis, p1_grid(), random_form(basis.dim, 40 + d, 0.8));
    EXPECT_EQ(t.verdict, Verdict::Converged) << d;
    EXPECT_LE(t.final.iteration, 50) << d;
  }
}

TEST(Balance, PolystableConvergesToBlockForm) {
  const SectionBasis basis = section_basis(CatalogBundle::split_p1({1, 1}), 2);
  const HermitianForm H0 = random_form(basis.dim, 9, 0.5);
  const BalanceRun t = t_iterate(basis, p1_grid(), H0);
  const BalanceRun l = lm_minimize(basis, p1_grid(), H0);
  EXPECT_EQ(t.verdict, Verdict::Converged);
  EXPECT_EQ(l.verdict, Verdict::Converged);
  EXPECT_NEAR(t.final.m2, l.final.m2, 1e-9);
  // polystable: the minimum is a whole GL(2)-orbit; both must be balanced
  EXPECT_LT(t.final.residual, 1e-10);
  EXPECT_LT(l.final.residual, 1e-10);
}

TEST(Balance, UnstableDiverges) {
  const SectionBasis basis = section_basis(CatalogBundle::split_p1({0, 2}), 3);
  const QuadratureGrid grid = build_grid_p1_step(0.25, 32, 60);
  const HermitianForm H0 = random_form(basis.dim, 21, 0.3);
  const BalanceRun t = t_iterate(basis, grid, H0);
  EXPECT_EQ(t.verdict, Verdict::UnstableLike);
  EXPECT_GT(t.final.spread, 1e3);
  const BalanceRun l = lm_minimize(basis, grid, H0);
  EXPECT_EQ(l.verdict, Verdict::UnstableLike);
  for (std::size_t i = 1; i < l.history.size(); ++i) EXPECT_LT(l.history[i].m2, l.history[i - 1].m2);
  const SlopeFit ft = iterate_path_slope(t.history, 0.4, Rat(-2, 3));
  const SlopeFit fl = iterate_path_slope(l.history, 0.4, Rat(-2, 3));
  EXPECT_LT(ft.slope, 0);
  EXPECT_LT(fl.slope, 0);
  EXPECT_LT(ft.rel_error, 0.1) << ft.slope;
  EXPECT_LT(fl.rel_error, 0.1) << fl.slope;
}

TEST(Balance, DivergenceDetectNeedsHistory) {
  std::vector<BalanceRecord> h(5);
  for (auto& r : h) r.residual = 1;
  EXPECT_THROW(divergence_detect(h), Error);
  h.back().residual = 1e-12;
  EXPECT_EQ(divergence_detect(h), Verdict::Converged);
}

TEST(Balance, DivergenceDetectSemistablePlateau) {
  std::vector<BalanceRecord> h(60);
  for (std::size_t i = 0; i < h.size(); ++i) {
    h[i].residual = 0.1;
    h[i].spread = std::exp(double(i));
    h[i].m2 = -1.0 + std::exp(-double(i));
  }
  EXPECT_EQ(divergence_detect(h), Verdict::SemistableLike);
}

TEST(Balance, ConvexityMonitor) {
  std::vector<double> v, flat(10, 2.0);
  for (int i = 0; i <= 40; ++i) {
    const double t = 0.05 + 0.1 * i;
    v.push_back(4 * t / (1 - std::exp(-4 * t)) - 2 * t);
  }
  const auto r = convexity_monitor(v);
  EXPECT_TRUE(r.convex);
  EXPECT_GT(r.min_second_difference, 0);
  EXPECT_EQ(convexity_monitor(flat).min_second_difference, 0);
  EXPECT_THROW(convexity_monitor({1.0, 2.0}), Error);

  const SectionBasis basis = section_basis(CatalogBundle::split_p1({0, 2}), 3);
  std::mt19937_64 rng(4);
  const OnePS ps = OnePS::from_generator(random_generator(basis.dim, rng));
  const QuadratureGrid grid = widen_for_path(build_grid_p1(161, 16), ps.width(), 4.0);
  PathIntegrator pi(basis, grid, ps);
  std::vector<double> m2;
  for (int i = 0; i <= 16; ++i) m2.push_back(pi.m2(0.25 * i));
  EXPECT_TRUE(convexity_monitor(m2).convex);
}

TEST(Balance, LaplaceConstantIsFourPi) {
  const double c = laplace_constant_p1(p1_grid());
  EXPECT_NEAR(c / (4 * std::numbers::pi), 1.0, 0.02);
  EXPECT_NEAR(laplace_constant_p1(p1_grid(), 1), c, 1e-6 * c);
}

TEST(Balance, DeltaDiagnosticTrivial) {
  const SectionBasis basis = section_basis(CatalogBundle::split_p1({0}), 1);
  const MetricField he = he_metric(basis, p1_grid());
  const auto d = delta_diagnostic(he, he, p1_grid(), 4 * std::numbers::pi);
  EXPECT_DOUBLE_EQ(d.delta, 1.0);
  EXPECT_NEAR(d.lower_bound, 0.0, 1e-20);
  EXPECT_NEAR(d.v_norm2, 0.0, 1e-20);
  EXPECT_DOUBLE_EQ(d.f_delta, 0.5);
}

TEST(Balance, DeltaDiagnosticMissingHE) {
  const SectionBasis basis = section_basis(CatalogBundle::split_p1({0, 2}), 1);
  try {
    he_metric(basis, p1_grid());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MissingHE);
  }
}

TEST(Balance, DirichletEnergyMatchesPathFunctional) {
  const SectionBasis basis = section_basis(CatalogBundle::split_p1({2}), 1);
  const HermitianForm H = random_form(basis.dim, 17, 0.6).det_normalized();
  Eigen::SelfAdjointEigenSolver<MatC> es(H.H);
  const Eigen::VectorXd l = es.eigenvalues().array().log();
  const double T = 0.5 * l.cwiseAbs().maxCoeff();
  const MatC zeta = es.eigenvectors() * (l / (2 * T)).cast<cd>().asDiagonal() * es.eigenvectors().adjoint();
  const OnePS ps = OnePS::from_generator(0.5 * (zeta + zeta.adjoint()));
  const QuadratureGrid grid = widen_for_path(p1_grid(), ps.width(), T);
  const double path = m_don(basis, grid, ps, T);
  const double energy = donaldson_energy_line(basis, grid, H);
  EXPECT_GT(energy, 0);
  EXPECT_NEAR(energy, path, 1e-7 * std::max(1.0, path));
}

TEST(Balance, DonaldsonValueDominatesBound) {
  const SectionBasis basis = section_basis(CatalogBundle::split_p1({0}), 1);
  const double C = laplace_constant_p1(p1_grid());
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const HermitianForm H = random_form(basis.dim, seed, 0.8).det_normalized();
    const auto d = delta_diagnostic(fs_metric(basis, p1_grid(), H), he_metric(basis, p1_grid()), p1_grid(), C);
    EXPECT_GT(d.delta, 0);
    EXPECT_LT(d.delta, 1);
    EXPECT_GE(donaldson_energy_line(basis, p1_grid(), H), d.lower_bound);
  }
}

TEST(Balance, RunLogCsv) {
  const SectionBasis basis = section_basis(CatalogBundle::split_p1({2}), 0);
  const BalanceRun r = t_iterate(basis, p1_grid(), random_form(basis.dim, 1, 0.3));
  const std::string csv = run_log_csv(r);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "iter,residual,m2,spread,wallclock_ms");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), long(r.history.size()) + 1);
  EXPECT_EQ(to_json(r)["verdict"], "converged");
}
