#include "bml/acceptance.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

#include "bml/balance.hpp"
#include "bml/errors.hpp"

namespace bml {

namespace {

using Clock = std::chrono::steady_clock;

std::string fmt(double x, int prec = 6) {
  std::ostringstream os;
  os << std::setprecision(prec) << x;
  return os.str();
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

const QuadratureGrid& p1_default() {
  static const QuadratureGrid g = build_grid(default_grid_spec(Space::P1));
  return g;
}

// M2 series shared with the convexity criterion.
struct SeriesLog {
  std::vector<std::pair<std::string, std::vector<double>>> m2;
};

// ---- criterion 1 -------------------------------------------------------------------------------

FiltrationSpec random_filtration(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> nu_d(1, 4), r_d(1, 4), dv_d(1, 3), w_d(-20, 20), deg_d(-6, 6), j_d(1, 6);
  for (;;) {
    const int nu = nu_d(rng);
    const int R = r_d(rng);
    const auto n = static_cast<std::size_t>(nu);
    std::vector<long> ranks(n), dv(n), v(n), wbar(n);
    long acc = 0;
    for (int i = 0; i < nu; ++i) {
      dv[i] = dv_d(rng);
      acc += dv[i];
      v[i] = acc;
    }
    ranks[nu - 1] = R;
    for (int i = nu - 2; i >= 0; --i) ranks[i] = std::uniform_int_distribution<long>(1, ranks[i + 1])(rng);
    long s = 0;
    for (int i = 0; i + 1 < nu; ++i) {
      wbar[i] = w_d(rng);
      s += wbar[i] * dv[i];
    }
    if (s % dv[nu - 1] != 0) continue;
    wbar[nu - 1] = -s / dv[nu - 1];
    if (std::abs(wbar[nu - 1]) > 20) continue;
    bool dec = true;
    for (int i = 1; i < nu; ++i) dec = dec && wbar[i] < wbar[i - 1];
    if (!dec || (nu == 1 && wbar[0] != 0)) continue;
    const int j = j_d(rng);
    std::vector<Rat> w;
    for (long x : wbar) w.push_back(Rat(x, j));
    std::vector<SheafData> steps;
    for (int i = 0; i < nu; ++i) {
      SheafData sd;
      sd.rank = ranks[i];
      sd.degree = Rat(deg_d(rng), 1 + int(rng() % 3));
      sd.label = "F" + std::to_string(i);
      steps.push_back(sd);
    }
    SheafData amb;
    amb.rank = R;
    amb.degree = Rat(deg_d(rng));
    amb.label = "E";
    steps.back() = amb;
    return FiltrationSpec::create(w, steps, v, amb, 0);
  }
}

// Direct sum over the integer grades q, independent of the library's q-range bookkeeping.
Rat weight_sum_brute(const FiltrationSpec& f, const WeightGrading& g) {
  Rat brute = 0;
  const long R = f.ambient.rank, N = f.v_dims.back();
  const Int lo = -g.integer_weights.front(), hi = -g.integer_weights.back();
  for (Int q = lo - 1; q <= hi + 1; ++q) {
    long rk = 0, dv = 0;
    for (std::size_t i = 0; i < g.integer_weights.size(); ++i)
      if (-g.integer_weights[i] <= q) {
        rk = f.steps[i].rank;
        dv = f.v_dims[i];
      }
    if (rk == 0 || q >= hi) continue;
    brute += Rat(rk) * (Rat(N, R) - Rat(dv, rk));
  }
  Rat out = Rat(2) / Rat(g.j) * Rat(R, N) * brute;
  out.canonicalize();
  return out;
}

CriterionResult criterion1() {
  CriterionResult r{"1", "exact identity suite"};
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  int ws_bad = 0;
  for (int it = 0; it < 1000; ++it) {
    const FiltrationSpec f = random_filtration(rng);
    const WeightGrading g = grading_of(f);
    const auto [lhs, rhs] = weight_sum_identity(f, g);
    if (2 * lhs != rhs || rhs != weight_sum_brute(f, g)) ++ws_bad;
  }
  int two_step = 0, ts_bad = 0;
  for (int a = -2; a <= 3; ++a)
    for (int b = -2; b <= 3; ++b)
      for (int c = -2; c <= 3; ++c) {
        const std::vector<int> degs{a, b, c};
        const SheafData e = split_sum(Space::P1, degs);
        const int k = std::max({0, -a, -b, -c}) + 1;
        for (unsigned mask = 1; mask < 7; ++mask) {
          std::vector<int> sub;
          for (int i = 0; i < 3; ++i)
            if (mask & (1u << i)) sub.push_back(degs[std::size_t(i)]);
          const SheafData f = sub.size() == 1 ? line_bundle(Space::P1, sub[0]) : split_sum(Space::P1, sub);
          const auto [wa, wb] = two_step_weights(f.h0_at(k), e.h0_at(k));
          Rat closed = 2 * (wa - wb) * Rat(f.rank) * (mu(e) - mu(f));
          closed.canonicalize();
          ++two_step;
          if (m_na(two_step_filtration(f, e, k, wa, wb)) != closed) ++ts_bad;
        }
      }
  r.seconds = seconds_since(t0);
  r.pass = ws_bad == 0 && ts_bad == 0 && r.seconds < 5;
  r.detail = "weight-sum identity 1000 random filtrations, " + std::to_string(ws_bad) + " mismatches; m_na two-step " +
             std::to_string(two_step) + " cases, " + std::to_string(ts_bad) + " mismatches";
  return r;
}

// ---- criterion 2 -------------------------------------------------------------------------------

OnePS diag_ps(const std::vector<double>& d) {
  MatC z = MatC::Zero(long(d.size()), long(d.size()));
  for (std::size_t i = 0; i < d.size(); ++i) z(long(i), long(i)) = d[i];
  return OnePS::from_generator(z);
}

std::vector<CriterionResult> criterion2(SeriesLog& log) {
  CriterionResult r{"2", "closed-form M2 on O, k = 1"};
  CriterionResult lit{"2-literal", "closed-form M2 as 4t/(1-e^{-4t}) - 2t"};
  lit.gating = false;
  const auto t0 = Clock::now();
  const SectionBasis b = section_basis(CatalogBundle::split_p1({0}), 1);
  PathIntegrator pi(b, p1_default(), diag_ps({1, -1}));
  double err = 0, err_lit = 0;
  for (double t : {0.5, 1.0, 2.0, 5.0, 10.0}) {
    const double m = pi.m2(t);
    err = std::max(err, std::abs(m - (2 * t / std::tanh(2 * t) - 1)));
    err_lit = std::max(err_lit, std::abs(m - (4 * t / (1 - std::exp(-4 * t)) - 2 * t)));
  }
  std::vector<double> t, v;
  for (int j = 0; j <= 40; ++j) {
    t.push_back(0.5 * j);
    v.push_back(pi.m2(t.back()));
  }
  log.m2.push_back({"O k=1 diag(1,-1)", v});
  const SlopeFit fit = tail_slope_fit(t, v, Rat(2));
  r.seconds = seconds_since(t0);
  const double slope_err = std::abs(fit.slope - 2);
  r.pass = err <= 1e-6 && slope_err <= 1e-4 && r.seconds < 10;
  r.detail = "max |M2 - (2t coth 2t - 1)| = " + fmt(err, 3) + ", fitted slope " + fmt(fit.slope, 12) + " (|err| " +
             fmt(slope_err, 3) + ")";
  lit.seconds = r.seconds;
  lit.pass = err_lit <= 1e-6;
  lit.detail = "max deviation " + fmt(err_lit, 10);
  if (!lit.pass)
    lit.unattainable = "the exact value is 2t coth(2t) - 1; the stated form omits the reference term "
                       "-int log(1+|z|^2) = -1 (offset " + fmt(err_lit, 7) + ")";
  return {r, lit};
}

// ---- criteria 3 and 4 --------------------------------------------------------------------------

struct TwoStepCase {
  SectionBasis basis;
  OnePS ps;
  FiltrationSpec filt;
  QuadratureGrid grid;
};

TwoStepCase o_o2_case(double t_end) {
  TwoStepCase c{section_basis(CatalogBundle::split_p1({0, 2}), 3), {}, {}, {}};
  c.ps = OnePS::from_generator(build_generator(ZetaSpec::parse("two_step:O(2):2/3,-1"), c.basis));
  c.filt = two_step_filtration(line_bundle(Space::P1, 2), split_sum(Space::P1, {0, 2}), 3, Rat(2, 3), Rat(-1));
  c.grid = widen_for_path(p1_default(), c.ps.width(), t_end);
  return c;
}

CriterionResult criterion3(SeriesLog& log) {
  CriterionResult r{"3", "Gieseker slope of M2 on O+O(2), k = 3"};
  const auto t0 = Clock::now();
  const TwoStepCase c = o_o2_case(15);
  const Rat pred = m2_slope_prediction(c.filt, grading_of(c.filt));
  PathIntegrator pi(c.basis, c.grid, c.ps);
  std::vector<double> t, v;
  for (int j = 0; j <= 30; ++j) {
    t.push_back(0.5 * j);
    v.push_back(pi.m2(t.back()));
  }
  log.m2.push_back({"O+O(2) k=3 two-step", v});
  const SlopeFit fit = tail_slope_fit(t, v, pred);
  r.seconds = seconds_since(t0);
  r.pass = fit.rel_error < 0.01 && r.seconds < 30;
  r.detail = "fitted " + fmt(fit.slope, 8) + " vs predicted " + rat_str(pred) + " (rel err " + fmt(fit.rel_error, 3) + ")";
  return r;
}

double logistic(double x) { return 1 / (1 + std::exp(-x)); }

// O on P1, k = 1, zeta = diag(1,-1): M1(t) = (1/2) int (u(x) - u(x - 4t))^2 dx with u logistic.
double m1_line_oracle(double t) {
  const double dx = 1e-3;
  double s = 0;
  for (double x = -120; x <= 120; x += dx) s += std::pow(logistic(x) - logistic(x - 4 * t), 2);
  return 0.5 * s * dx;
}

std::vector<CriterionResult> criterion4(SeriesLog& log) {
  CriterionResult r{"4", "Donaldson slope M^Don -> M^NA on O+O(2), k = 3"};
  const auto t0 = Clock::now();
  const TwoStepCase c = o_o2_case(15);
  const Rat mna = m_na(c.filt);
  const auto s = donaldson_series(c.basis, c.grid, c.ps, 15, 16);
  std::vector<double> t, md, m2;
  for (const auto& x : s) {
    t.push_back(x.t);
    md.push_back(x.m_don);
    m2.push_back(x.m2);
  }
  log.m2.push_back({"O+O(2) k=3 Donaldson series", m2});
  const SlopeFit fit = tail_slope_fit(t, md, mna);
  r.seconds = seconds_since(t0);
  r.pass = fit.rel_error < 0.02 && r.seconds < 120;
  r.detail = "fitted " + fmt(fit.slope, 8) + " vs M^NA " + rat_str(mna) + " (rel err " + fmt(fit.rel_error, 3) + ")";

  CriterionResult zb{"4b", "O with trivial-saturation zeta: M^Don matches the Dirichlet-energy closed form"};
  CriterionResult lit{"4b-literal", "O with trivial-saturation zeta: |M^Don| <= 1 on [0, 20]"};
  lit.gating = false;
  const auto t1 = Clock::now();
  const SectionBasis b = section_basis(CatalogBundle::split_p1({0}), 1);
  const OnePS ps = diag_ps({1, -1});
  const auto z = donaldson_series(b, widen_for_path(p1_default(), ps.width(), 20), ps, 20, 21);
  double worst = 0, max_abs = 0;
  std::vector<double> zm2;
  for (const auto& x : z) {
    worst = std::max(worst, std::abs(x.m_don - m1_line_oracle(x.t)));
    max_abs = std::max(max_abs, std::abs(x.m_don));
    zm2.push_back(x.m2);
  }
  log.m2.push_back({"O k=1 Donaldson series", zm2});
  zb.seconds = lit.seconds = seconds_since(t1);
  zb.pass = worst <= 1e-6;
  zb.detail = "max |M^Don - (1/2) int (u(x) - u(x-4t))^2| = " + fmt(worst, 3) + " over t = 0..20";
  lit.pass = max_abs <= 1;
  lit.detail = "max |M^Don| = " + fmt(max_abs, 8);
  if (!lit.pass)
    lit.unattainable = "M^Don equals the Dirichlet energy of a moving front and grows like 2t - 1 (M^Don(20) = " +
                       fmt(z.back().m_don, 8) + "); the zero slope of the saturated filtration does not bound it";
  return {r, zb, lit};
}

// ---- criterion 5 -------------------------------------------------------------------------------

struct DrawCase {
  std::vector<int> degrees;
  int k;
};

const std::vector<DrawCase>& draw_cases() {
  static const std::vector<DrawCase> c{{{0, 2}, 1}, {{0, 2}, 2}, {{0, 2}, 3}, {{1, 3}, 1}, {{0}, 2}, {{1, 1}, 1}, {{0, 1, 3}, 1}};
  return c;
}

std::vector<CriterionResult> criterion5() {
  CriterionResult r{"5", "subgeodesic property over 200 draws"};
  CriterionResult lit{"5-literal", "d/dt(h^-1 dh/dt) = F*F entrywise"};
  lit.gating = false;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(5150);
  std::vector<SectionBasis> bases;
  for (const auto& c : draw_cases()) bases.push_back(section_basis(CatalogBundle::split_p1(c.degrees), c.k));
  std::uniform_real_distribution<double> tu(0.0, 3.0);
  double worst_fd = 0, worst_conj = 0, worst_lit = 0, min_eig = INFINITY;
  int richardson_ok = 0;
  const int draws = 200;
  for (int d = 0; d < draws; ++d) {
    const SectionBasis& b = bases[std::size_t(rng() % bases.size())];
    const OnePS ps = OnePS::from_generator(random_generator(b.dim, rng));
    const ChartPoint x = random_chart_points(Space::P1, 1, rng)[0];
    const double t = tu(rng);
    const SubgeodesicResult s = subgeodesic_residual(b, ps, t, x, 1e-3);
    const double sc = std::max(1.0, s.scale);
    worst_fd = std::max(worst_fd, s.residual_fd / sc);
    worst_conj = std::max(worst_conj, s.residual_conjugated / sc);
    worst_lit = std::max(worst_lit, s.residual_literal / sc);
    min_eig = std::min(min_eig, s.min_eig_rhs / sc);
    if ((s.richardson_ratio > 3 && s.richardson_ratio < 5) || s.residual_fd <= 1e-9 * sc) ++richardson_ok;
  }
  r.seconds = lit.seconds = seconds_since(t0);
  r.pass = worst_fd <= 1e-5 && worst_conj <= 1e-5 && richardson_ok == draws && min_eig >= -1e-12 && r.seconds < 60;
  r.detail = "max FD-analytic residual " + fmt(worst_fd, 3) + ", max conjugated-identity residual " +
             fmt(worst_conj, 3) + ", Richardson O(step^2) confirmed " + std::to_string(richardson_ok) + "/" +
             std::to_string(draws) + ", min eig F*F " + fmt(min_eig, 3) + " (relative to max(1, |lhs|))";
  lit.pass = worst_lit <= 1e-5;
  lit.detail = "max literal residual " + fmt(worst_lit, 3);
  if (!lit.pass)
    lit.unattainable = "d/dt(h^-1 dh/dt) is similar to F*F (conjugation by h^{1/2}) but not equal for non-commuting "
                       "compressions; both sides have the same spectrum";
  return {r, lit};
}

// ---- criterion 6 -------------------------------------------------------------------------------

// Trace-free hermitian generator preserving the summand splitting, operator norm 1.
MatC block_generator(const SectionBasis& b, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  const long n = b.dim;
  MatC z = MatC::Zero(n, n);
  for (long i = 0; i < n; ++i)
    for (long j = i; j < n; ++j) {
      if (b.raw[std::size_t(i)].component != b.raw[std::size_t(j)].component) continue;
      const cd v = i == j ? cd(nd(rng), 0) : cd(nd(rng), nd(rng));
      z(i, j) = v;
      z(j, i) = std::conj(v);
    }
  z -= (z.trace() / double(n)) * MatC::Identity(n, n);
  const double op = Eigen::SelfAdjointEigenSolver<MatC>(z).eigenvalues().cwiseAbs().maxCoeff();
  return z / op;
}

std::vector<CriterionResult> criterion6() {
  CriterionResult r{"6", "commutation lemma for splitting-compatible zeta, 1000 draws"};
  CriterionResult lit{"6-literal", "commutation lemma for arbitrary zeta, 1000 draws"};
  lit.gating = false;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(6006);
  std::vector<SectionBasis> bases;
  for (const auto& c : draw_cases()) bases.push_back(section_basis(CatalogBundle::split_p1(c.degrees), c.k));
  std::uniform_real_distribution<double> tu(0.0, 3.0);
  double worst = 0, worst_lit = 0;
  for (int d = 0; d < 1000; ++d) {
    const SectionBasis& b = bases[std::size_t(rng() % bases.size())];
    const ChartPoint x = random_chart_points(Space::P1, 1, rng)[0];
    const double t = tu(rng);
    const OnePS ps = OnePS::from_generator(block_generator(b, rng));
    worst = std::max(worst, commutator_residual(b, ps.exp_zeta(t), 2 * ps.zeta, x));
    const OnePS g = OnePS::from_generator(random_generator(b.dim, rng));
    worst_lit = std::max(worst_lit, commutator_residual(b, g.exp_zeta(t), 2 * g.zeta, x));
  }
  r.seconds = lit.seconds = seconds_since(t0);
  r.pass = worst <= 1e-10 && r.seconds < 30;
  r.detail = "max normalized commutator " + fmt(worst, 3);
  lit.pass = worst_lit <= 1e-10;
  lit.detail = "max normalized commutator " + fmt(worst_lit, 3);
  if (!lit.pass)
    lit.unattainable = "the three matrices are compressions of commuting N x N matrices to a rank-r range and "
                       "commute only when zeta preserves the splitting";
  return {r, lit};
}

// ---- criterion 7 -------------------------------------------------------------------------------

HermitianForm random_form(long n, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  const MatC z = random_generator(n, rng);
  Eigen::SelfAdjointEigenSolver<MatC> es(z);
  const Eigen::VectorXd e = (2 * scale * es.eigenvalues()).array().exp();
  return HermitianForm::from_matrix(es.eigenvectors() * e.asDiagonal() * es.eigenvectors().adjoint(), "random");
}

bool m2_monotone(const BalanceRun& run) {
  for (std::size_t i = 1; i < run.history.size(); ++i)
    if (!(run.history[i].m2 < run.history[i - 1].m2)) return false;
  return true;
}

CriterionResult criterion7(HermitianForm& o_balanced) {
  CriterionResult r{"7", "balanced existence and non-existence"};
  const auto t0 = Clock::now();
  std::ostringstream d;
  bool ok = true;
  struct Stable {
    std::vector<int> deg;
    int k;
    bool unique;
  };
  for (const Stable& c : {Stable{{2}, 0, true}, Stable{{3}, 2, true}, Stable{{1, 1}, 2, false}}) {
    const SectionBasis b = section_basis(CatalogBundle::split_p1(c.deg), c.k);
    const HermitianForm h0 = random_form(b.dim, 700 + std::uint64_t(b.dim), 0.5);
    const BalanceRun t = t_iterate(b, p1_default(), h0);
    const BalanceRun l = lm_minimize(b, p1_default(), h0);
    const double dist = (t.final.H.H - l.final.H.H).norm();
    const double dm2 = std::abs(t.final.m2 - l.final.m2);
    const bool good = t.final.residual < 1e-10 && l.final.residual < 1e-10 && t.verdict == Verdict::Converged &&
                      l.verdict == Verdict::Converged && (c.unique ? dist < 1e-6 : dm2 < 1e-9);
    ok = ok && good;
    d << b.bundle.label() << " k=" << c.k << ": T " << t.final.iteration << " it res " << fmt(t.final.residual, 2)
      << ", LM " << l.final.iteration << " it res " << fmt(l.final.residual, 2) << ", "
      << (c.unique ? "|H_T - H_LM| " + fmt(dist, 2) : "|M2_T - M2_LM| " + fmt(dm2, 2)) << "; ";
  }
  {
    const SectionBasis b = section_basis(CatalogBundle::split_p1({0, 2}), 3);
    const QuadratureGrid grid = build_grid_p1_step(0.25, 32, 60);
    const HermitianForm h0 = random_form(b.dim, 721, 0.3);
    const BalanceRun t = t_iterate(b, grid, h0);
    const BalanceRun l = lm_minimize(b, grid, h0);
    const Rat pred = m2_slope_prediction(o_o2_case(1).filt, grading_of(o_o2_case(1).filt));
    const SlopeFit ft = iterate_path_slope(t.history, 0.4, pred);
    const SlopeFit fl = iterate_path_slope(l.history, 0.4, pred);
    const bool good = t.verdict == Verdict::UnstableLike && l.verdict == Verdict::UnstableLike &&
                      t.final.spread > 1e3 && l.final.spread > 1e3 && m2_monotone(t) && m2_monotone(l) &&
                      ft.slope < 0 && fl.slope < 0 && ft.rel_error < 0.1 && fl.rel_error < 0.1;
    ok = ok && good;
    d << "O+O(2) k=3: T " << verdict_name(t.verdict) << " spread " << fmt(t.final.spread, 3) << " tail slope "
      << fmt(ft.slope, 5) << ", LM " << verdict_name(l.verdict) << " spread " << fmt(l.final.spread, 3)
      << " tail slope " << fmt(fl.slope, 5) << " (predicted " << rat_str(pred) << ")";
  }
  {
    const SectionBasis b = section_basis(CatalogBundle::split_p1({0}), 1);
    o_balanced = t_iterate(b, p1_default(), random_form(b.dim, 77, 0.5)).final.H;
  }
  r.seconds = seconds_since(t0);
  r.pass = ok && r.seconds < 120;
  r.detail = d.str();
  return r;
}

// ---- criterion 8 -------------------------------------------------------------------------------

CriterionResult criterion8(SeriesLog& log) {
  CriterionResult r{"8", "convexity of M2 along executed 1-PS runs"};
  const auto t0 = Clock::now();
  const SectionBasis b = section_basis(CatalogBundle::split_p1({0, 2}), 3);
  for (std::uint64_t seed : {81u, 82u, 83u}) {
    std::mt19937_64 rng(seed);
    const OnePS ps = OnePS::from_generator(random_generator(b.dim, rng));
    PathIntegrator pi(b, widen_for_path(p1_default(), ps.width(), 8), ps);
    std::vector<double> v;
    for (int j = 0; j <= 32; ++j) v.push_back(pi.m2(0.25 * j));
    log.m2.push_back({"O+O(2) k=3 random seed " + std::to_string(seed), v});
  }
  double worst = INFINITY;
  for (const auto& [name, v] : log.m2) worst = std::min(worst, convexity_monitor(v).min_second_difference);
  r.seconds = seconds_since(t0);
  r.pass = worst >= -1e-8;
  r.detail = std::to_string(log.m2.size()) + " runs, min second difference " + fmt(worst, 3);
  return r;
}

// ---- criterion 9 -------------------------------------------------------------------------------

CriterionResult criterion9(const HermitianForm& balanced) {
  CriterionResult r{"9", "delta diagnostic on O, k = 1"};
  const auto t0 = Clock::now();
  const SectionBasis b = section_basis(CatalogBundle::split_p1({0}), 1);
  const QuadratureGrid& g = p1_default();
  const double C = laplace_constant_p1(g);
  const double c_err = std::abs(C / (4 * std::numbers::pi) - 1);
  const MetricField he = he_metric(b, g);
  double worst_margin = INFINITY;
  std::ostringstream d;
  d << "C = " << fmt(C, 10) << " (4 pi rel err " << fmt(c_err, 2) << ")";
  std::vector<std::pair<std::string, HermitianForm>> forms{{"balanced", balanced}};
  for (std::uint64_t seed : {91u, 92u, 93u}) forms.push_back({"random", random_form(b.dim, seed, 0.7)});
  for (const auto& [name, H] : forms) {
    const DeltaDiagnostic dd = delta_diagnostic(fs_metric(b, g, H), he, g, C);
    const double value = donaldson_energy_line(b, g, H);
    const double margin = value - dd.lower_bound;
    worst_margin = std::min(worst_margin, margin);
    d << "; " << name << ": delta " << fmt(dd.delta, 6) << " M^Don " << fmt(value, 6) << " bound "
      << fmt(dd.lower_bound, 6);
  }
  r.seconds = seconds_since(t0);
  r.pass = worst_margin >= -1e-9 && c_err < 0.02;
  r.detail = d.str() + "; min margin " + fmt(worst_margin, 3);
  return r;
}

// ---- criterion 10 ------------------------------------------------------------------------------

CriterionResult criterion10() {
  CriterionResult r{"10", "stretch: T_P2 balanced metrics at k = 1, 2"};
  r.gating = false;
  const auto t0 = Clock::now();
  const QuadratureGrid g = build_grid_p2(6, 8);
  std::ostringstream d;
  bool ok = true;
  for (int k : {1, 2}) {
    const SectionBasis b = section_basis(CatalogBundle::euler_tp2(), k);
    BalanceOptions o;
    o.tol = 1e-6;
    o.max_iter = 60;
    const BalanceRun l = lm_minimize(b, g, random_form(b.dim, 1000 + std::uint64_t(k), 0.3), o);
    ok = ok && l.final.residual < 1e-6;
    d << "k=" << k << " N=" << b.dim << ": LM " << l.final.iteration << " it, residual " << fmt(l.final.residual, 3)
      << "; ";
  }
  r.seconds = seconds_since(t0);
  r.pass = ok && r.seconds < 900;
  d << "P2 grid " << g.nodes.size() << " nodes";
  r.detail = d.str();
  return r;
}

void run_guarded(std::vector<CriterionResult>& out, const std::string& id, const std::string& title,
                 const std::function<std::vector<CriterionResult>()>& f, std::ostream* log) {
  const auto t0 = Clock::now();
  std::vector<CriterionResult> rs;
  try {
    rs = f();
  } catch (const std::exception& e) {
    CriterionResult r{id, title};
    r.pass = false;
    r.detail = std::string("error: ") + e.what();
    r.seconds = seconds_since(t0);
    rs = {r};
  }
  for (auto& r : rs) {
    if (log) *log << format_line(r) << std::endl;
    out.push_back(std::move(r));
  }
}

}  // namespace

bool AcceptanceReport::gating_pass() const {
  for (const auto& r : results)
    if (r.gating && !r.pass) return false;
  return true;
}

nlohmann::json AcceptanceReport::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : results) {
    nlohmann::json j{{"id", r.id}, {"title", r.title}, {"pass", r.pass}, {"gating", r.gating}, {"detail", r.detail}};
    if (!r.unattainable.empty()) j["unattainable"] = r.unattainable;
    arr.push_back(j);
  }
  return {{"criteria", arr}, {"gating_pass", gating_pass()}};
}

std::string format_line(const CriterionResult& r) {
  std::ostringstream os;
  os << "criterion " << r.id << ": " << (r.pass ? "PASS" : "FAIL");
  if (!r.pass && !r.unattainable.empty()) os << " (unattainable: " << r.unattainable << ")";
  else if (!r.gating) os << " (not gating)";
  os << " - " << r.title << " [" << std::fixed << std::setprecision(2) << r.seconds << " s] " << r.detail;
  return os.str();
}

AcceptanceReport run_acceptance(const AcceptanceOptions& opts) {
  AcceptanceReport rep;
  SeriesLog series;
  HermitianForm o_balanced = HermitianForm::identity(2);
  auto& out = rep.results;
  std::ostream* log = opts.log;
  run_guarded(out, "1", "exact identity suite", [] { return std::vector{criterion1()}; }, log);
  run_guarded(out, "2", "closed-form M2", [&] { return criterion2(series); }, log);
  run_guarded(out, "3", "Gieseker slope of M2", [&] { return std::vector{criterion3(series)}; }, log);
  run_guarded(out, "4", "Donaldson slope", [&] { return criterion4(series); }, log);
  run_guarded(out, "5", "subgeodesic property", [] { return criterion5(); }, log);
  run_guarded(out, "6", "commutation lemma", [] { return criterion6(); }, log);
  run_guarded(out, "7", "balanced existence", [&] { return std::vector{criterion7(o_balanced)}; }, log);
  run_guarded(out, "8", "convexity", [&] { return std::vector{criterion8(series)}; }, log);
  run_guarded(out, "9", "delta diagnostic", [&] { return std::vector{criterion9(o_balanced)}; }, log);
  if (opts.stretch) {
    run_guarded(out, "10", "stretch: T_P2", [] { return std::vector{criterion10()}; }, log);
    out.back().gating = false;
  }
  return rep;
}

}  // namespace bml
