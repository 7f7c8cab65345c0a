#include "bml/stability.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "bml/errors.hpp"

namespace bml {

namespace {

constexpr int kTableLo = -40;
constexpr int kTableHi = 160;

Rat rat_abs(const Rat& q) { return q < 0 ? Rat(-q) : q; }

void fill_table(SheafData& s, const std::function<long(int)>& h0) {
  for (int k = kTableLo; k <= kTableHi; ++k) s.h0_table[k] = h0(k);
}

std::string degree_label(int d) { return "O(" + std::to_string(d) + ")"; }

}  // namespace

const char* space_name(Space s) { return s == Space::P1 ? "P1" : "P2"; }
int space_dim(Space s) { return s == Space::P1 ? 1 : 2; }

long SheafData::h0_at(int k) const {
  auto it = h0_table.find(k);
  if (it == h0_table.end())
    throw Error(ErrorKind::InvalidInput, "no h0 data for " + label + " at level " + std::to_string(k));
  return it->second;
}

long h0_line(Space s, long d) {
  if (s == Space::P1) return std::max(d + 1, 0L);
  if (d < 0) return 0;
  return (d + 1) * (d + 2) / 2;
}

SheafData line_bundle(Space s, int d) {
  SheafData out;
  out.rank = 1;
  out.degree = Rat(d);
  out.space = s;
  out.label = degree_label(d);
  fill_table(out, [s, d](int k) { return h0_line(s, long(d) + k); });
  return out;
}

SheafData split_sum(Space s, const std::vector<int>& degrees) {
  if (degrees.empty()) throw Error(ErrorKind::InvalidInput, "empty degree list");
  SheafData out;
  out.rank = long(degrees.size());
  out.degree = Rat(std::accumulate(degrees.begin(), degrees.end(), 0L));
  out.space = s;
  for (std::size_t i = 0; i < degrees.size(); ++i) out.label += (i ? "+" : "") + degree_label(degrees[i]);
  fill_table(out, [s, degrees](int k) {
    long n = 0;
    for (int d : degrees) n += h0_line(s, long(d) + k);
    return n;
  });
  return out;
}

SheafData tangent_p2() {
  SheafData out;
  out.rank = 2;
  out.degree = Rat(3);
  out.space = Space::P2;
  out.label = "T_P2";
  fill_table(out, [](int k) { return 3 * h0_line(Space::P2, k + 1) - h0_line(Space::P2, k); });
  return out;
}

int CatalogBundle::rank() const { return kind == Kind::EulerTP2 ? 2 : int(degrees.size()); }

Rat CatalogBundle::degree() const {
  if (kind == Kind::EulerTP2) return Rat(3);
  return Rat(std::accumulate(degrees.begin(), degrees.end(), 0L));
}

std::string CatalogBundle::label() const { return sheaf_of(*this).label; }

SheafData sheaf_of(const CatalogBundle& b) {
  if (b.kind == CatalogBundle::Kind::EulerTP2) return tangent_p2();
  if (b.degrees.size() == 1) return line_bundle(b.space, b.degrees[0]);
  return split_sum(b.space, b.degrees);
}

namespace {

long h_line(Space s, int i, long d) {
  if (s == Space::P1) {
    if (i == 0) return std::max(d + 1, 0L);
    if (i == 1) return std::max(-d - 1, 0L);
    return 0;
  }
  if (i == 0) return h0_line(Space::P2, d);
  if (i == 2) return h0_line(Space::P2, -d - 3);
  return 0;
}

// Rank of H^2(O(m)) -> H^2(O(m+1))^3 on P2: Serre dual to multiplication
// S_{d-1}^3 -> S_d by (Z0, Z1, Z2), d = -m-3, which is onto for d >= 1.
long euler_h2_rank(int m) {
  long d = -long(m) - 3;
  return d >= 1 ? h0_line(Space::P2, d) : 0;
}

}  // namespace

long cohomology(const CatalogBundle& b, int i, int m) {
  if (b.kind == CatalogBundle::Kind::Split) {
    long n = 0;
    for (int d : b.degrees) n += h_line(b.space, i, long(d) + m);
    return n;
  }
  long r = euler_h2_rank(m);
  if (i == 0) return 3 * h0_line(Space::P2, m + 1) - h0_line(Space::P2, m);
  if (i == 1) return h_line(Space::P2, 2, m) - r;
  if (i == 2) return 3 * h_line(Space::P2, 2, m + 1) - r;
  return 0;
}

Rat mu(const SheafData& sheaf) {
  if (sheaf.rank < 1) throw Error(ErrorKind::InvalidInput, "rank must be positive");
  if (!sheaf.degree) throw Error(ErrorKind::MissingDegree, sheaf.label);
  Rat q = *sheaf.degree / Rat(sheaf.rank);
  q.canonicalize();
  return q;
}

FiltrationSpec FiltrationSpec::create(std::vector<Rat> raw_weights, std::vector<SheafData> steps,
                                      std::vector<long> v_dims, SheafData ambient, int level) {
  const std::size_t nu = raw_weights.size();
  if (nu == 0 || steps.size() != nu || v_dims.size() != nu)
    throw Error(ErrorKind::InvalidInput, "weights, steps and v_dims must have equal nonzero length");
  for (std::size_t i = 1; i < nu; ++i)
    if (!(raw_weights[i] < raw_weights[i - 1]))
      throw Error(ErrorKind::InvalidInput, "weights must be strictly decreasing");
  if (steps[0].rank < 1) throw Error(ErrorKind::InvalidInput, "first step must have positive rank");
  for (std::size_t i = 1; i < nu; ++i) {
    if (steps[i].rank < steps[i - 1].rank) throw Error(ErrorKind::InvalidInput, "step ranks must increase");
    if (v_dims[i] <= v_dims[i - 1]) throw Error(ErrorKind::InvalidInput, "v_dims must strictly increase");
  }
  if (v_dims[0] < 1) throw Error(ErrorKind::InvalidInput, "v_dims must be positive");
  if (steps.back().rank != ambient.rank)
    throw Error(ErrorKind::InvalidInput, "last step must have the ambient rank");
  if (ambient.has_h0(level) && ambient.h0_at(level) != v_dims.back())
    throw Error(ErrorKind::InvalidInput, "v_dims must end at h0(E(k))");
  Rat trace = 0;
  for (std::size_t i = 0; i < nu; ++i) trace += raw_weights[i] * Rat(v_dims[i] - (i ? v_dims[i - 1] : 0));
  if (trace != 0) throw Error(ErrorKind::InvalidInput, "weights are not trace-free");

  FiltrationSpec f;
  Rat norm = 0;
  for (const Rat& w : raw_weights) norm = std::max(norm, rat_abs(w));
  f.scale = norm > 1 ? norm : Rat(1);
  for (const Rat& w : raw_weights) {
    Rat q = w / f.scale;
    q.canonicalize();
    f.weights.push_back(q);
  }
  f.steps = std::move(steps);
  f.v_dims = std::move(v_dims);
  f.ambient = std::move(ambient);
  f.level = level;
  return f;
}

std::vector<Rat> FiltrationSpec::raw_weights() const {
  std::vector<Rat> out;
  for (const Rat& w : weights) {
    Rat q = w * scale;
    q.canonicalize();
    out.push_back(q);
  }
  return out;
}

Int j_of_zeta(const std::vector<Rat>& weights) {
  Int j = 1;
  for (Rat w : weights) {
    w.canonicalize();
    mpz_lcm(j.get_mpz_t(), j.get_mpz_t(), w.get_den_mpz_t());
  }
  return j;
}

WeightGrading grading_of(const FiltrationSpec& filt) {
  WeightGrading g;
  auto w = filt.raw_weights();
  g.j = j_of_zeta(w);
  for (const Rat& x : w) {
    Rat q = x * Rat(g.j);
    q.canonicalize();
    g.integer_weights.push_back(q.get_num());
  }
  long prev = 0;
  for (std::size_t i = 0; i < filt.steps.size(); ++i) {
    if (filt.steps[i].rank - prev > 0) g.surviving.push_back(i);
    prev = filt.steps[i].rank;
  }
  return g;
}

namespace {

// Index of the largest step with -wbar_i <= q, or -1 when E_{<=q} = 0.
long step_at(const std::vector<Int>& wbar, const Int& q) {
  long idx = -1;
  for (std::size_t i = 0; i < wbar.size(); ++i)
    if (-wbar[i] <= q) idx = long(i);
  return idx;
}

template <class F>
Rat q_sum(const std::vector<Int>& wbar, F term) {
  Rat total = 0;
  for (Int q = -wbar.front(); q < -wbar.back(); ++q) {
    long i = step_at(wbar, q);
    if (i >= 0) total += term(std::size_t(i));
  }
  return total;
}

}  // namespace

Rat m_na(const FiltrationSpec& filt) {
  WeightGrading g = grading_of(filt);
  Rat mu_e = mu(filt.ambient);
  for (std::size_t i = 0; i + 1 < filt.steps.size(); ++i)
    if (!filt.steps[i].degree) throw Error(ErrorKind::MissingDegree, "step " + std::to_string(i));
  Rat s = q_sum(g.integer_weights, [&](std::size_t i) -> Rat {
    if (i + 1 == filt.steps.size()) return 0;
    const SheafData& f = filt.steps[i];
    return Rat(f.rank) * mu_e - *f.degree;
  });
  Rat out = Rat(2) * s / Rat(g.j);
  out.canonicalize();
  return out;
}

Rat j_na(const WeightGrading& grading, const std::vector<Rat>& weights) {
  if (grading.surviving.empty()) throw Error(ErrorKind::InvalidInput, "no surviving indices");
  Rat hi = weights[grading.surviving.front()], lo = hi;
  for (std::size_t i : grading.surviving) {
    hi = std::max(hi, weights[i]);
    lo = std::min(lo, weights[i]);
  }
  Rat out = hi - lo;
  out.canonicalize();
  return out;
}

Rat m2_slope_prediction(const FiltrationSpec& filt, const WeightGrading& grading) {
  const Rat R(filt.ambient.rank);
  const Rat h0(filt.v_dims.back());
  Rat s = q_sum(grading.integer_weights, [&](std::size_t i) -> Rat {
    Rat rk(filt.steps[i].rank);
    Rat dv(filt.v_dims[i]);
    return rk * (h0 / R - dv / rk);
  });
  Rat out = Rat(2) / Rat(grading.j) * (R / h0) * s;
  out.canonicalize();
  return out;
}

std::pair<Rat, Rat> weight_sum_identity(const FiltrationSpec& filt, const WeightGrading& grading) {
  auto w = filt.raw_weights();
  Rat lhs = 0;
  long prev = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    lhs += w[i] * Rat(filt.steps[i].rank - prev);
    prev = filt.steps[i].rank;
  }
  lhs.canonicalize();
  return {lhs, m2_slope_prediction(filt, grading)};
}

std::pair<Rat, Rat> two_step_weights(long sub_dim, long total_dim) {
  Rat a(total_dim - sub_dim), b(-sub_dim);
  Rat n = std::max(rat_abs(a), rat_abs(b));
  a /= n;
  b /= n;
  a.canonicalize();
  b.canonicalize();
  return {a, b};
}

FiltrationSpec two_step_filtration(const SheafData& sub, const SheafData& ambient, int k, const Rat& a,
                                   const Rat& b) {
  return FiltrationSpec::create({a, b}, {sub, ambient}, {sub.h0_at(k), ambient.h0_at(k)}, ambient, k);
}

Ordering le_potier_verdict(const SheafData& sub, const SheafData& ambient, int k) {
  if (!(0 < sub.rank && sub.rank < ambient.rank))
    throw Error(ErrorKind::InvalidInput, "subsheaf rank must be intermediate");
  Rat d = Rat(sub.h0_at(k), sub.rank) - Rat(ambient.h0_at(k), ambient.rank);
  int s = sgn(d);
  return s > 0 ? Ordering::Destabilizing : (s < 0 ? Ordering::NonDestabilizing : Ordering::Equal);
}

const char* stability_name(Stability s) {
  switch (s) {
    case Stability::Stable: return "stable";
    case Stability::Semistable: return "semistable";
    case Stability::Unstable: return "unstable";
  }
  return "?";
}

StabilityVerdict slope_stability_verdict(const SheafData& ambient, const std::vector<SheafData>& candidates) {
  if (candidates.empty()) throw Error(ErrorKind::EmptyCandidates, ambient.label);
  Rat mu_e = mu(ambient);
  std::size_t best = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const SheafData& c = candidates[i];
    if (!(0 < c.rank && c.rank < ambient.rank))
      throw Error(ErrorKind::InvalidInput, "candidate " + c.label + " has non-intermediate rank");
    if (i == 0) continue;
    Rat m = mu(c), mb = mu(candidates[best]);
    if (m > mb || (m == mb && c.rank > candidates[best].rank)) best = i;
  }
  Rat mb = mu(candidates[best]);
  Stability v = mb < mu_e ? Stability::Stable : (mb == mu_e ? Stability::Semistable : Stability::Unstable);
  return {v, best, candidates[best]};
}

SheafData f_max_split(const std::vector<int>& degrees) {
  if (degrees.empty()) throw Error(ErrorKind::InvalidInput, "empty degree list");
  int top = *std::max_element(degrees.begin(), degrees.end());
  std::vector<int> sub;
  for (int d : degrees)
    if (d == top) sub.push_back(d);
  return sub.size() == 1 ? line_bundle(Space::P1, top) : split_sum(Space::P1, sub);
}

int regularity_catalog(const CatalogBundle& b) {
  if (b.kind == CatalogBundle::Kind::Split && b.degrees.empty())
    throw Error(ErrorKind::UnsupportedBundle, "empty split bundle");
  const int n = space_dim(b.space);
  auto regular = [&](int k) {
    for (int i = 1; i <= n; ++i)
      if (cohomology(b, i, k - i) != 0) return false;
    return true;
  };
  // Mumford: k-regular implies (k+1)-regular; the window guards the chase.
  for (int k = -60; k <= 60; ++k) {
    bool ok = true;
    for (int l = k; l <= k + 8 && ok; ++l) ok = regular(l);
    if (ok) return k;
  }
  throw Error(ErrorKind::UnsupportedBundle, "regularity outside the search window");
}

int k0_level(const CatalogBundle& b) {
  int reg = regularity_catalog(b);
  if (b.kind == CatalogBundle::Kind::EulerTP2) return reg;  // T_P2 is stable: F_max = E
  if (b.space != Space::P1) throw Error(ErrorKind::UnsupportedBundle, "F_max only catalogued on P1");
  SheafData fmax = f_max_split(b.degrees);
  int top = *std::max_element(b.degrees.begin(), b.degrees.end());
  std::vector<int> sub(std::size_t(fmax.rank), top);
  return std::max(reg, regularity_catalog(CatalogBundle::split_p1(sub)));
}

std::vector<Rat> rationalize_weights(const std::vector<double>& real_weights, long denominator_bound) {
  const std::size_t nu = real_weights.size();
  if (denominator_bound < 1) throw Error(ErrorKind::BoundTooSmall, "bound must be positive");
  for (std::size_t i = 0; i < nu; ++i) {
    if (!std::isfinite(real_weights[i])) throw Error(ErrorKind::InvalidInput, "non-finite weight");
    if (i && !(real_weights[i] < real_weights[i - 1]))
      throw Error(ErrorKind::InvalidInput, "weights must be strictly decreasing");
  }
  std::vector<Rat> exact;
  for (double w : real_weights) exact.emplace_back(w);

  struct Cand {
    Rat value;
    Rat err;  // w - value
  };
  constexpr std::size_t kKeep = 16;
  std::vector<std::vector<Cand>> cands(nu);
  bool all_exact = true;
  for (std::size_t i = 0; i < nu; ++i) {
    std::vector<Cand> c;
    for (long q = 1; q <= denominator_bound; ++q) {
      Rat scaled = exact[i] * Rat(q);
      Int fl;
      mpz_fdiv_q(fl.get_mpz_t(), scaled.get_num_mpz_t(), scaled.get_den_mpz_t());
      for (Int p : {Int(fl - 1), fl, Int(fl + 1), Int(fl + 2)}) {
        Rat v(p, Int(q));
        v.canonicalize();
        bool dup = false;
        for (const Cand& x : c) dup = dup || x.value == v;
        if (!dup) c.push_back({v, exact[i] - v});
      }
    }
    std::sort(c.begin(), c.end(), [](const Cand& a, const Cand& b) {
      Rat ea = rat_abs(a.err), eb = rat_abs(b.err);
      if (ea != eb) return ea < eb;
      if (a.value.get_den() != b.value.get_den()) return a.value.get_den() < b.value.get_den();
      return a.value < b.value;
    });
    if (c.size() > kKeep) c.resize(kKeep);
    all_exact = all_exact && c.front().err == 0;
    cands[i] = std::move(c);
  }
  if (all_exact) {
    std::vector<Rat> out;
    for (auto& c : cands) out.push_back(c.front().value);
    return out;
  }

  // Later levels: rationals in (w_i - e_{i-1}, wt_{i-1}), nearest to w_i first.
  auto interval_cands = [&](std::size_t i, const Rat& lo, const Rat& hi) {
    std::vector<Cand> c;
    for (long q = 1; q <= denominator_bound; ++q) {
      Rat a = lo * Rat(q), b = hi * Rat(q);
      Int p0, p1;
      mpz_fdiv_q(p0.get_mpz_t(), a.get_num_mpz_t(), a.get_den_mpz_t());
      mpz_cdiv_q(p1.get_mpz_t(), b.get_num_mpz_t(), b.get_den_mpz_t());
      Rat centre = exact[i] * Rat(q);
      Int pc;
      mpz_fdiv_q(pc.get_mpz_t(), centre.get_num_mpz_t(), centre.get_den_mpz_t());
      Int from = std::max(Int(p0 + 1), Int(pc - kKeep)), to = std::min(Int(p1 - 1), Int(pc + kKeep));
      for (Int p = from; p <= to; ++p) {
        Rat v(p, Int(q));
        v.canonicalize();
        if (!(lo < v && v < hi)) continue;
        bool dup = false;
        for (const Cand& x : c) dup = dup || x.value == v;
        if (!dup) c.push_back({v, exact[i] - v});
      }
    }
    std::sort(c.begin(), c.end(), [](const Cand& a, const Cand& b) {
      Rat ea = rat_abs(a.err), eb = rat_abs(b.err);
      if (ea != eb) return ea < eb;
      return a.value < b.value;
    });
    if (c.size() > 4 * kKeep) c.resize(4 * kKeep);
    return c;
  };

  std::vector<Rat> chosen(nu);
  std::vector<Rat> errs(nu);
  std::function<bool(std::size_t)> dfs = [&](std::size_t i) -> bool {
    if (i == nu) return true;
    const std::vector<Cand> level = i == 0 ? cands[0] : interval_cands(i, exact[i] - errs[i - 1], chosen[i - 1]);
    for (const Cand& c : level) {
      chosen[i] = c.value;
      errs[i] = c.err;
      if (dfs(i + 1)) return true;
    }
    return false;
  };
  if (!dfs(0)) throw Error(ErrorKind::BoundTooSmall, "no admissible rationals within the denominator bound");
  return chosen;
}

std::string rat_str(const Rat& q) {
  Rat c = q;
  c.canonicalize();
  if (c.get_den() == 1) return c.get_num().get_str();
  return c.get_num().get_str() + "/" + c.get_den().get_str();
}

Rat parse_rat(const std::string& s) {
  try {
    Rat q(s);
    if (q.get_den() == 0) throw Error(ErrorKind::InvalidInput, "zero denominator in " + s);
    q.canonicalize();
    return q;
  } catch (const std::invalid_argument&) {
    throw Error(ErrorKind::InvalidInput, "not a rational: '" + s + "'");
  }
}

nlohmann::json to_json(const SheafData& s) {
  nlohmann::json j;
  j["rank"] = s.rank;
  j["degree"] = s.degree ? nlohmann::json(rat_str(*s.degree)) : nlohmann::json(nullptr);
  nlohmann::json table = nlohmann::json::object();
  for (auto& [k, v] : s.h0_table) table[std::to_string(k)] = v;
  j["h0_table"] = table;
  j["space"] = space_name(s.space);
  j["label"] = s.label;
  return j;
}

SheafData sheaf_from_json(const nlohmann::json& j) {
  SheafData s;
  s.rank = j.at("rank").get<long>();
  if (j.contains("degree") && !j["degree"].is_null()) s.degree = parse_rat(j["degree"].get<std::string>());
  if (j.contains("h0_table"))
    for (auto& [k, v] : j["h0_table"].items()) s.h0_table[std::stoi(k)] = v.get<long>();
  s.space = j.value("space", std::string("P1")) == "P2" ? Space::P2 : Space::P1;
  s.label = j.value("label", std::string());
  return s;
}

nlohmann::json to_json(const FiltrationSpec& f) {
  nlohmann::json j;
  j["weights"] = nlohmann::json::array();
  for (const Rat& w : f.raw_weights()) j["weights"].push_back(rat_str(w));
  j["steps"] = nlohmann::json::array();
  for (const SheafData& s : f.steps) j["steps"].push_back(to_json(s));
  j["v_dims"] = f.v_dims;
  j["level"] = f.level;
  j["ambient"] = to_json(f.ambient);
  return j;
}

FiltrationSpec filtration_from_json(const nlohmann::json& j) {
  std::vector<Rat> w;
  for (auto& x : j.at("weights")) w.push_back(parse_rat(x.get<std::string>()));
  std::vector<SheafData> steps;
  for (auto& x : j.at("steps")) steps.push_back(sheaf_from_json(x));
  auto v = j.at("v_dims").get<std::vector<long>>();
  SheafData amb = j.contains("ambient") ? sheaf_from_json(j["ambient"]) : steps.back();
  return FiltrationSpec::create(std::move(w), std::move(steps), std::move(v), std::move(amb), j.at("level").get<int>());
}

}  // namespace bml
