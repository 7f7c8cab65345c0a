#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "bml/errors.hpp"
#include "bml/stability.hpp"

using namespace bml;

namespace {

SheafData O(int d) { return line_bundle(Space::P1, d); }

FiltrationSpec two_step_o_o2() {
  SheafData e = split_sum(Space::P1, {0, 2});
  return two_step_filtration(O(2), e, 3, Rat(2, 3), Rat(-1));
}

// Oracle: M^NA = 2 sum_i w_i (rk_i mu(E) - deg_i) over graded pieces.
Rat m_na_graded(const FiltrationSpec& f) {
  auto w = f.raw_weights();
  Rat mu_e = *f.ambient.degree / Rat(f.ambient.rank);
  Rat total = 0, prev_deg = 0;
  long prev_rk = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    Rat deg = i + 1 == w.size() ? *f.ambient.degree : *f.steps[i].degree;
    long rk = f.steps[i].rank;
    total += w[i] * (Rat(rk - prev_rk) * mu_e - (deg - prev_deg));
    prev_rk = rk;
    prev_deg = deg;
  }
  Rat out = 2 * total;
  out.canonicalize();
  return out;
}

struct RandomFilt {
  FiltrationSpec spec;
};

FiltrationSpec random_filtration(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> nu_d(1, 4), r_d(1, 4), dv_d(1, 3), w_d(-20, 20), deg_d(-6, 6), j_d(1, 6);
  for (;;) {
    int nu = nu_d(rng);
    int R = r_d(rng);
    std::vector<long> ranks(nu), dv(nu), v(nu);
    std::vector<long> wbar(nu);
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
    if (!dec) continue;
    if (nu == 1 && wbar[0] != 0) continue;
    int j = j_d(rng);
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

}  // namespace

TEST(Mu, CatalogSlopes) {
  EXPECT_EQ(mu(O(0)), 0);
  EXPECT_EQ(mu(split_sum(Space::P1, {0, 2})), 1);
  EXPECT_EQ(mu(tangent_p2()), Rat(3, 2));
}

TEST(SheafData, ClosedFormH0) {
  EXPECT_EQ(O(-3).h0_at(1), 0);
  EXPECT_EQ(O(2).h0_at(3), 6);
  EXPECT_EQ(line_bundle(Space::P2, 2).h0_at(0), 6);
  EXPECT_EQ(tangent_p2().h0_at(0), 8);
  for (int k = -1; k < 10; ++k) EXPECT_EQ(tangent_p2().h0_at(k), long(k + 2) * (k + 4));
  EXPECT_EQ(split_sum(Space::P1, {0, 2}).h0_at(3), 10);
}

TEST(MNA, TwoStepExample) {
  auto f = two_step_o_o2();
  EXPECT_EQ(m_na(f), Rat(-10, 3));
  auto g = grading_of(f);
  EXPECT_EQ(g.j, 3);
  EXPECT_EQ(g.integer_weights[0], 2);
  EXPECT_EQ(g.integer_weights[1], -3);
}

TEST(MNA, DoubledWeightsScaleLinearly) {
  SheafData e = split_sum(Space::P1, {0, 2});
  auto f = two_step_filtration(O(2), e, 3, Rat(4, 3), Rat(-2));
  EXPECT_EQ(f.scale, 2);
  EXPECT_EQ(f.weights[0], Rat(2, 3));
  EXPECT_EQ(m_na(f), Rat(-20, 3));
}

TEST(MNA, TrivialFiltrationIsZero) {
  SheafData e = split_sum(Space::P1, {0, 2});
  auto f = FiltrationSpec::create({Rat(0)}, {e}, {10}, e, 3);
  EXPECT_EQ(m_na(f), 0);
  auto g = grading_of(f);
  EXPECT_EQ(j_na(g, f.raw_weights()), 0);
  EXPECT_EQ(m2_slope_prediction(f, g), 0);
  auto [l, r] = weight_sum_identity(f, g);
  EXPECT_EQ(l, 0);
  EXPECT_EQ(r, 0);
}

TEST(MNA, MissingDegree) {
  SheafData sub;
  sub.rank = 1;
  sub.label = "abstract";
  SheafData e = split_sum(Space::P1, {0, 2});
  auto f = FiltrationSpec::create({Rat(2, 3), Rat(-1)}, {sub, e}, {6, 10}, e, 3);
  EXPECT_THROW(m_na(f), Error);
  auto g = grading_of(f);
  EXPECT_EQ(m2_slope_prediction(f, g), Rat(-2, 3));
}

TEST(MNA, RandomAgainstGradedOracleAndTwoStepClosedForm) {
  std::mt19937_64 rng(11);
  for (int it = 0; it < 1000; ++it) {
    auto f = random_filtration(rng);
    EXPECT_EQ(m_na(f), m_na_graded(f));
  }
  for (int a = -3; a <= 4; ++a)
    for (int b = -3; b <= 4; ++b) {
      if (a == b) continue;
      SheafData e = split_sum(Space::P1, {a, b});
      int k = std::max(0, std::max(-a, -b)) + 1;
      auto [wa, wb] = two_step_weights(O(a).h0_at(k), e.h0_at(k));
      auto f = two_step_filtration(O(a), e, k, wa, wb);
      Rat closed = 2 * (wa - wb) * (mu(e) - mu(O(a)));
      closed.canonicalize();
      EXPECT_EQ(m_na(f), closed);
    }
}

TEST(MNA, Homogeneity) {
  std::mt19937_64 rng(5);
  for (int it = 0; it < 200; ++it) {
    auto f = random_filtration(rng);
    Rat c(1 + int(rng() % 7), 1 + int(rng() % 5));
    std::vector<Rat> w;
    for (auto& x : f.raw_weights()) w.push_back(c * x);
    auto g = FiltrationSpec::create(w, f.steps, f.v_dims, f.ambient, f.level);
    Rat expect = c * m_na(f);
    expect.canonicalize();
    EXPECT_EQ(m_na(g), expect);
    Rat jexp = c * j_na(grading_of(f), f.raw_weights());
    jexp.canonicalize();
    EXPECT_EQ(j_na(grading_of(g), g.raw_weights()), jexp);
  }
}

TEST(JNA, Examples) {
  auto f = two_step_o_o2();
  EXPECT_EQ(j_na(grading_of(f), f.raw_weights()), Rat(5, 3));
  SheafData e = split_sum(Space::P1, {0, 0});
  SheafData one = O(0);
  auto f3 = FiltrationSpec::create({Rat(1), Rat(0), Rat(-1)}, {one, one, e}, {1, 3, 4}, e, 1);
  auto g3 = grading_of(f3);
  ASSERT_EQ(g3.surviving.size(), 2u);
  EXPECT_EQ(j_na(g3, f3.raw_weights()), 2);
  EXPECT_EQ(g3.surviving.front(), 0u);
}

TEST(M2Slope, Examples) {
  SheafData o = O(0);
  auto f = FiltrationSpec::create({Rat(1), Rat(-1)}, {o, o}, {1, 2}, o, 1);
  EXPECT_EQ(m2_slope_prediction(f, grading_of(f)), 2);
  auto f2 = two_step_o_o2();
  EXPECT_EQ(m2_slope_prediction(f2, grading_of(f2)), Rat(-2, 3));
}

TEST(WeightSum, ExampleAndRandom) {
  auto f = two_step_o_o2();
  auto [l, r] = weight_sum_identity(f, grading_of(f));
  EXPECT_EQ(l, Rat(-1, 3));
  EXPECT_EQ(2 * l, r);
  std::mt19937_64 rng(2024);
  for (int it = 0; it < 1000; ++it) {
    auto g = random_filtration(rng);
    auto gr = grading_of(g);
    auto [lhs, rhs] = weight_sum_identity(g, gr);
    // Brute force over the integer grades, independent of the library q-sum.
    Rat brute = 0;
    const auto& wb = gr.integer_weights;
    long R = g.ambient.rank, N = g.v_dims.back();
    for (long q = -400; q <= 400; ++q) {
      long rk = 0, dv = 0;
      for (std::size_t i = 0; i < wb.size(); ++i)
        if (-wb[i] <= q) {
          rk = g.steps[i].rank;
          dv = g.v_dims[i];
        }
      if (rk == 0) continue;
      brute += Rat(rk) * (Rat(N, R) - Rat(dv, rk));
    }
    Rat pred = Rat(2) / Rat(gr.j) * Rat(R, N) * brute;
    pred.canonicalize();
    EXPECT_EQ(rhs, pred);
    EXPECT_EQ(2 * lhs, rhs);
  }
}

TEST(LePotier, Examples) {
  SheafData e = split_sum(Space::P1, {0, 2});
  EXPECT_EQ(le_potier_verdict(O(2), e, 3), Ordering::Destabilizing);
  EXPECT_EQ(le_potier_verdict(O(0), e, 3), Ordering::NonDestabilizing);
  SheafData e11 = split_sum(Space::P1, {1, 1});
  for (int k = 0; k < 6; ++k) EXPECT_EQ(le_potier_verdict(O(1), e11, k), Ordering::Equal);
}

TEST(LePotier, StabilizesToSlopeSign) {
  for (int a = -2; a <= 3; ++a)
    for (int b = -2; b <= 3; ++b) {
      if (a == b) continue;
      auto cat = CatalogBundle::split_p1({a, b});
      SheafData e = sheaf_of(cat);
      int k0 = k0_level(cat);
      Ordering want = mu(O(a)) > mu(e) ? Ordering::Destabilizing : Ordering::NonDestabilizing;
      for (int k = k0; k < k0 + 30; ++k) EXPECT_EQ(le_potier_verdict(O(a), e, k), want);
    }
}

TEST(Stability, Verdicts) {
  auto v = slope_stability_verdict(split_sum(Space::P1, {0, 2}), {O(0), O(2)});
  EXPECT_EQ(v.verdict, Stability::Unstable);
  EXPECT_EQ(v.witness.label, "O(2)");
  EXPECT_EQ(slope_stability_verdict(split_sum(Space::P1, {1, 1}), {O(1)}).verdict, Stability::Semistable);
  EXPECT_EQ(slope_stability_verdict(tangent_p2(), {line_bundle(Space::P2, 1)}).verdict, Stability::Stable);
  EXPECT_THROW(slope_stability_verdict(tangent_p2(), {}), Error);
}

TEST(Stability, SignLawOnSplitBundles) {
  for (int a = -2; a <= 3; ++a)
    for (int b = a; b <= 3; ++b) {
      SheafData e = split_sum(Space::P1, {a, b});
      std::vector<SheafData> cands{O(a), O(b)};
      int k = std::max(-a, 0) + 1;
      bool neg = false, zero_nontrivial = false;
      for (auto& c : cands) {
        auto [wa, wb] = two_step_weights(c.h0_at(k), e.h0_at(k));
        Rat m = m_na(two_step_filtration(c, e, k, wa, wb));
        neg = neg || m < 0;
        zero_nontrivial = zero_nontrivial || m == 0;
      }
      auto v = slope_stability_verdict(e, cands).verdict;
      EXPECT_EQ(neg, v == Stability::Unstable);
      EXPECT_EQ(!neg && zero_nontrivial, v == Stability::Semistable);
    }
}

TEST(FMax, Split) {
  EXPECT_EQ(f_max_split({0, 2}).label, "O(2)");
  auto f = f_max_split({1, 1});
  EXPECT_EQ(f.rank, 2);
  EXPECT_EQ(*f.degree, 2);
  EXPECT_EQ(f_max_split({3}).label, "O(3)");
}

TEST(Regularity, Catalog) {
  EXPECT_EQ(regularity_catalog(CatalogBundle::split_p1({0, 2})), 0);
  EXPECT_EQ(regularity_catalog(CatalogBundle::split_p1({2})), -2);
  EXPECT_EQ(k0_level(CatalogBundle::split_p1({0, 2})), 0);
  for (int d = -4; d <= 5; ++d) EXPECT_EQ(regularity_catalog(CatalogBundle::split_p1({d})), -d);
  EXPECT_EQ(regularity_catalog(CatalogBundle::split_p2({1})), -1);
  // Euler sequence chase: only H^1(T(-3)) and H^2(T(m <= -5)) are nonzero.
  auto t = CatalogBundle::euler_tp2();
  EXPECT_EQ(cohomology(t, 1, -3), 1);
  EXPECT_EQ(cohomology(t, 1, -2), 0);
  EXPECT_EQ(cohomology(t, 2, -4), 0);
  EXPECT_EQ(cohomology(t, 2, -5), 3);  // h^0(Omega(2)) = 3 by Serre duality
  EXPECT_EQ(cohomology(t, 0, 0), 8);
  EXPECT_EQ(regularity_catalog(t), -1);
}

TEST(Regularity, EulerCharacteristicMatchesRiemannRoch) {
  auto t = CatalogBundle::euler_tp2();
  for (int m = -12; m <= 12; ++m) {
    long chi = cohomology(t, 0, m) - cohomology(t, 1, m) + cohomology(t, 2, m);
    // chi(T(m)) = 3 chi(O(m+1)) - chi(O(m)), chi(O(d)) = (d+1)(d+2)/2 for all d
    long c = 3 * long(m + 2) * (m + 3) / 2 - long(m + 1) * (m + 2) / 2;
    EXPECT_EQ(chi, c);
  }
}

TEST(Rationalize, Examples) {
  auto w = rationalize_weights({std::sqrt(2.0), -std::sqrt(2.0)}, 5);
  ASSERT_EQ(w.size(), 2u);
  EXPECT_EQ(w[0], Rat(7, 5));
  EXPECT_EQ(w[1], Rat(-7, 5));
  auto id = rationalize_weights({1.0, 0.0, -1.0}, 10);
  EXPECT_EQ(id[0], 1);
  EXPECT_EQ(id[1], 0);
  EXPECT_EQ(id[2], -1);
  auto h = rationalize_weights({0.5, -0.25}, 4);
  EXPECT_EQ(h[0], Rat(1, 2));
  EXPECT_EQ(h[1], Rat(-1, 4));
}

TEST(Rationalize, ConditionsHoldOnRandomInput) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int it = 0; it < 200; ++it) {
    std::vector<double> w(2 + it % 3);
    w[0] = u(rng);
    for (std::size_t i = 1; i < w.size(); ++i) w[i] = w[i - 1] - 0.05 - 0.5 * (u(rng) + 1);
    auto q = rationalize_weights(w, 50);
    for (std::size_t i = 1; i < w.size(); ++i) {
      EXPECT_LT(q[i], q[i - 1]);
      EXPECT_LT(Rat(w[i]) - q[i], Rat(w[i - 1]) - q[i - 1]);
    }
    for (auto& x : q) EXPECT_LE(x.get_den(), 50);
  }
}

TEST(Rationalize, BoundTooSmall) {
  EXPECT_THROW(rationalize_weights({0.3, 0.2, 0.1, 0.05}, 1), Error);
}

TEST(JOfZeta, Examples) {
  EXPECT_EQ(j_of_zeta({Rat(2, 3), Rat(-1)}), 3);
  EXPECT_EQ(j_of_zeta({Rat(1), Rat(-1)}), 1);
  EXPECT_EQ(j_of_zeta({Rat(1, 2), Rat(1, 3), Rat(-5, 6)}), 6);
}

TEST(Serialization, RoundTripAndFormat) {
  auto f = two_step_o_o2();
  auto j = to_json(f);
  EXPECT_EQ(j["weights"][0], "2/3");
  EXPECT_EQ(j["weights"][1], "-1");
  auto g = filtration_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(m_na(g), m_na(f));
  EXPECT_EQ(to_json(g).dump(), j.dump());
  EXPECT_EQ(rat_str(Rat(6, -4)), "-3/2");
}

TEST(FiltrationSpec, RejectsInvalid) {
  SheafData e = split_sum(Space::P1, {0, 2});
  EXPECT_THROW(FiltrationSpec::create({Rat(1), Rat(-1)}, {O(2), e}, {6, 10}, e, 3), Error);  // not trace-free
  EXPECT_THROW(FiltrationSpec::create({Rat(-1), Rat(1)}, {O(2), e}, {6, 10}, e, 3), Error);
  EXPECT_THROW(FiltrationSpec::create({Rat(2, 3), Rat(-1)}, {O(2), e}, {6, 11}, e, 3), Error);
}
