#include "bml/bundle.hpp"

#include <algorithm>
#include <sstream>

#include "bml/errors.hpp"

namespace bml {

namespace {

std::vector<std::array<int, 3>> monomials(int n, int d) {
  std::vector<std::array<int, 3>> out;
  if (d < 0) return out;
  if (n == 1) {
    for (int e0 = d; e0 >= 0; --e0) out.push_back({e0, d - e0, 0});
  } else {
    for (int e0 = d; e0 >= 0; --e0)
      for (int e1 = d - e0; e1 >= 0; --e1) out.push_back({e0, e1, d - e0 - e1});
  }
  return out;
}

Int factorial(long n) {
  Int f;
  mpz_fac_ui(f.get_mpz_t(), static_cast<unsigned long>(n));
  return f;
}

// int Z^g conj(Z^g) / |Z|^(2|g|) dmu over P^n = g! / (|g| + n)!.
Rat moment(const std::array<int, 3>& g, int n) {
  Int num = 1;
  long d = 0;
  for (int j = 0; j <= n; ++j) {
    num *= factorial(g[j]);
    d += g[j];
  }
  Rat q(num, factorial(d + n));
  q.canonicalize();
  return q;
}

std::array<int, 3> plus_unit(std::array<int, 3> a, int j) {
  a[j] += 1;
  return a;
}

// Quotient basis of H0(O(k+1))^3 / Z * H0(O(k)) as the non-pivot slots of the
// reduced relation matrix.
std::vector<RawSection> euler_raw(int k) {
  const auto top = monomials(2, k + 1);
  const auto low = monomials(2, k);
  std::vector<RawSection> slots;
  for (int j = 0; j < 3; ++j)
    for (const auto& a : top) slots.push_back({j, a});
  auto slot_of = [&](int j, const std::array<int, 3>& a) {
    for (std::size_t s = 0; s < slots.size(); ++s)
      if (slots[s].component == j && slots[s].exp == a) return s;
    throw Error(ErrorKind::InvalidInput, "missing slot");
  };
  std::vector<std::vector<Rat>> rows;
  for (const auto& b : low) {
    std::vector<Rat> row(slots.size(), Rat(0));
    for (int j = 0; j < 3; ++j) row[slot_of(j, plus_unit(b, j))] = 1;
    rows.push_back(row);
  }
  std::vector<bool> pivot(slots.size(), false);
  std::size_t r = 0;
  for (std::size_t c = 0; c < slots.size() && r < rows.size(); ++c) {
    std::size_t p = r;
    while (p < rows.size() && rows[p][c] == 0) ++p;
    if (p == rows.size()) continue;
    std::swap(rows[p], rows[r]);
    for (std::size_t q = 0; q < rows.size(); ++q) {
      if (q == r || rows[q][c] == 0) continue;
      Rat f = rows[q][c] / rows[r][c];
      for (std::size_t cc = c; cc < slots.size(); ++cc) rows[q][cc] -= f * rows[r][cc];
    }
    pivot[c] = true;
    ++r;
  }
  std::vector<RawSection> out;
  for (std::size_t s = 0; s < slots.size(); ++s)
    if (!pivot[s]) out.push_back(slots[s]);
  return out;
}

}  // namespace

Rat raw_l2_pairing(const SectionBasis& basis, std::size_t i, std::size_t j) {
  const RawSection& s = basis.raw[i];
  const RawSection& t = basis.raw[j];
  const int n = space_dim(basis.bundle.space);
  if (basis.bundle.kind == CatalogBundle::Kind::Split) {
    if (s.component != t.component || s.exp != t.exp) return 0;
    return moment(s.exp, n);
  }
  // Quotient metric of O(1)^3 / O twisted by O(k): (|F|^2 |Z|^2 - |<F, Z>|^2) / |Z|^(2(k+2)).
  Rat out = 0;
  if (s.component == t.component && s.exp == t.exp)
    for (int p = 0; p <= n; ++p) out += moment(plus_unit(s.exp, p), n);
  if (plus_unit(s.exp, t.component) == plus_unit(t.exp, s.component))
    out -= moment(plus_unit(s.exp, t.component), n);
  out.canonicalize();
  return out;
}

SectionBasis section_basis(const CatalogBundle& bundle, int k, bool orthonormalize) {
  const int reg = regularity_catalog(bundle);
  if (k < reg)
    throw Error(ErrorKind::LevelBelowRegularity,
                "level " + std::to_string(k) + " below regularity " + std::to_string(reg));
  SectionBasis b;
  b.bundle = bundle;
  b.level = k;
  b.rank = bundle.rank();
  const int n = space_dim(bundle.space);
  if (bundle.kind == CatalogBundle::Kind::Split) {
    for (std::size_t c = 0; c < bundle.degrees.size(); ++c)
      for (const auto& a : monomials(n, bundle.degrees[c] + k)) b.raw.push_back({int(c), a});
  } else {
    b.raw = euler_raw(k);
  }
  b.dim = long(b.raw.size());
  if (b.dim != cohomology(bundle, 0, k))
    throw Error(ErrorKind::InvalidInput, "section count disagrees with h0");
  b.gram_exact.assign(b.dim, std::vector<Rat>(b.dim));
  Eigen::MatrixXd gram(b.dim, b.dim);
  for (long i = 0; i < b.dim; ++i)
    for (long j = 0; j < b.dim; ++j) {
      b.gram_exact[i][j] = raw_l2_pairing(b, i, j);
      gram(i, j) = b.gram_exact[i][j].get_d();
    }
  b.transform = MatC::Identity(b.dim, b.dim);
  if (orthonormalize) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    if (es.eigenvalues().minCoeff() <= 0) throw Error(ErrorKind::SingularGram, "section Gram matrix is singular");
    b.transform = (es.eigenvectors() * es.eigenvalues().cwiseInverse().cwiseSqrt().asDiagonal() *
                   es.eigenvectors().transpose())
                      .cast<cd>();
    b.orthonormal = true;
  }
  return b;
}

namespace {

// Values (da < 0) or log-derivatives d/dw_a, w_a = log y_a, of the raw sections.
// Every entry is a monomial in the chart coordinates, so d/dw_a multiplies it by
// its exponent in homogeneous index ja.
MatC q_raw_impl(const SectionBasis& basis, const ChartPoint& pt, int da) {
  const int n = space_dim(pt.space);
  const auto z = pt.homogeneous();
  const int ja = da < 0 ? -1 : (da < pt.chart ? da : da + 1);
  int maxd = 0;
  for (const auto& s : basis.raw) maxd = std::max(maxd, *std::max_element(s.exp.begin(), s.exp.end()));
  std::vector<std::array<cd, 3>> pw(maxd + 1);
  pw[0] = {cd(1), cd(1), cd(1)};
  for (int d = 1; d <= maxd; ++d)
    for (int j = 0; j <= n; ++j) pw[d][j] = pw[d - 1][j] * z[j];
  MatC q = MatC::Zero(basis.dim, basis.rank);
  for (long i = 0; i < basis.dim; ++i) {
    const RawSection& s = basis.raw[i];
    cd v = 1;
    for (int j = 0; j <= n; ++j) v *= pw[s.exp[j]][j];
    const double e = ja < 0 ? 1.0 : double(s.exp[ja]);
    if (basis.bundle.kind == CatalogBundle::Kind::Split) {
      q(i, s.component) = e * v;
      continue;
    }
    // Euler frame at chart c: classes of e_b, b != c; F = e_j Z^a maps to F_b - F_c Z_b.
    const int c = pt.chart;
    for (int bb = 0; bb <= 2; ++bb) {
      if (bb == c) continue;
      const int col = bb < c ? bb : bb - 1;
      if (s.component == bb) q(i, col) += e * v;
      if (s.component == c) q(i, col) -= (ja < 0 ? 1.0 : e + (bb == ja ? 1 : 0)) * v * z[bb];
    }
  }
  return q;
}

}  // namespace

MatC evaluate_q_raw(const SectionBasis& basis, const ChartPoint& pt) { return q_raw_impl(basis, pt, -1); }

MatC evaluate_q_dlog(const SectionBasis& basis, const ChartPoint& pt, int a) {
  if (a < 0 || a >= space_dim(pt.space)) throw Error(ErrorKind::InvalidInput, "log-derivative index out of range");
  MatC raw = q_raw_impl(basis, pt, a);
  if (!basis.orthonormal) return raw;
  return basis.transform * raw;
}

MatC evaluate_q(const SectionBasis& basis, const ChartPoint& pt) {
  MatC raw = evaluate_q_raw(basis, pt);
  if (!basis.orthonormal) return raw;
  return basis.transform * raw;
}

int q_rank(const MatC& q, double rel_tol) {
  Eigen::JacobiSVD<MatC> svd(q);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) == 0) return 0;
  int r = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) > rel_tol * sv(0)) ++r;
  return r;
}

double MetricField::min_eigenvalue() const {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& x : h) m = std::min(m, Eigen::SelfAdjointEigenSolver<MatC>(x).eigenvalues().minCoeff());
  return m;
}

MetricField h_ref(const SectionBasis& basis, const QuadratureGrid& grid) {
  MetricField f;
  f.grid = &grid;
  f.h.reserve(grid.nodes.size());
  for (std::size_t i = 0; i < grid.nodes.size(); ++i) {
    MatC q = evaluate_q(basis, grid.nodes[i].pt);
    MatC h = q.adjoint() * q;
    const double lmin = Eigen::SelfAdjointEigenSolver<MatC>(h).eigenvalues().minCoeff();
    if (!(lmin > 1e-14 * h.norm()))
      throw Error(ErrorKind::RankDeficient, "Q(x) is rank deficient at node " + std::to_string(i));
    f.h.push_back(std::move(h));
  }
  return f;
}

CatalogBundle bundle_from_string(const std::string& s) {
  if (s == "euler_tp2" || s == "T_P2") return CatalogBundle::euler_tp2();
  const auto colon = s.find(':');
  const std::string kind = s.substr(0, colon);
  if ((kind != "split_p1" && kind != "split_p2") || colon == std::string::npos)
    throw Error(ErrorKind::ConfigError, "bundle: expected split_p1:<degrees>, split_p2:<degrees> or euler_tp2, got '" +
                                            s + "'");
  std::vector<int> d;
  std::stringstream ss(s.substr(colon + 1));
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      d.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorKind::ConfigError, "bundle: bad degree '" + item + "'");
    }
  }
  if (d.empty()) throw Error(ErrorKind::ConfigError, "bundle: empty degree list");
  return kind == "split_p1" ? CatalogBundle::split_p1(d) : CatalogBundle::split_p2(d);
}

std::string bundle_to_string(const CatalogBundle& b) {
  if (b.kind == CatalogBundle::Kind::EulerTP2) return "euler_tp2";
  std::string s = b.space == Space::P1 ? "split_p1:" : "split_p2:";
  for (std::size_t i = 0; i < b.degrees.size(); ++i) s += (i ? "," : "") + std::to_string(b.degrees[i]);
  return s;
}

nlohmann::json to_json(const CatalogBundle& b) {
  if (b.kind == CatalogBundle::Kind::EulerTP2) return {{"kind", "euler_tp2"}};
  return {{"kind", b.space == Space::P1 ? "split_p1" : "split_p2"}, {"degrees", b.degrees}};
}

CatalogBundle bundle_from_json(const nlohmann::json& j) {
  if (j.is_string()) return bundle_from_string(j.get<std::string>());
  if (!j.is_object() || !j.contains("kind")) throw Error(ErrorKind::ConfigError, "bundle.kind missing");
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "euler_tp2") return CatalogBundle::euler_tp2();
  if (kind != "split_p1" && kind != "split_p2") throw Error(ErrorKind::ConfigError, "bundle.kind: unknown '" + kind + "'");
  if (!j.contains("degrees") || !j.at("degrees").is_array() || j.at("degrees").empty())
    throw Error(ErrorKind::ConfigError, "bundle.degrees must be a nonempty integer array");
  auto d = j.at("degrees").get<std::vector<int>>();
  return kind == "split_p1" ? CatalogBundle::split_p1(d) : CatalogBundle::split_p2(d);
}

}  // namespace bml
