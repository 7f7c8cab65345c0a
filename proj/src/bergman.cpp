#include "bml/bergman.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "bml/errors.hpp"

namespace bml {

namespace {

using EigC = Eigen::SelfAdjointEigenSolver<MatC>;

MatC hermitian_function(const MatC& h, double (*f)(double)) {
  EigC es(h);
  Eigen::VectorXd v = es.eigenvalues().unaryExpr(f);
  return es.eigenvectors() * v.asDiagonal() * es.eigenvectors().adjoint();
}

double inv_sqrt(double x) { return 1.0 / std::sqrt(x); }
double sqrt_fn(double x) { return std::sqrt(std::max(x, 0.0)); }

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  if (!s.empty() && s.back() == sep) out.push_back("");
  return out;
}

std::vector<Rat> parse_rat_list(const std::string& s) {
  std::vector<Rat> out;
  for (const auto& item : split(s, ',')) {
    try {
      out.push_back(parse_rat(item));
    } catch (const std::exception&) {
      throw Error(ErrorKind::ConfigError, "ps: bad rational '" + item + "'");
    }
  }
  return out;
}

std::string rat_list(const std::vector<Rat>& w) {
  std::string s;
  for (std::size_t i = 0; i < w.size(); ++i) s += (i ? "," : "") + rat_str(w[i]);
  return s;
}

}  // namespace

HermitianForm HermitianForm::identity(long n) { return {MatC::Identity(n, n), "identity"}; }

HermitianForm HermitianForm::from_matrix(const MatC& h, std::string provenance) {
  if (h.rows() != h.cols() || h.rows() == 0) throw Error(ErrorKind::InvalidInput, "hermitian form must be square");
  if ((h - h.adjoint()).norm() > 1e-13 * std::max(1.0, h.norm()))
    throw Error(ErrorKind::InvalidInput, "form is not hermitian");
  MatC s = 0.5 * (h + h.adjoint());
  if (!(EigC(s).eigenvalues().minCoeff() > 0)) throw Error(ErrorKind::InvalidInput, "form is not positive definite");
  return {s, std::move(provenance)};
}

double HermitianForm::log_det() const { return EigC(H).eigenvalues().array().log().sum(); }

HermitianForm HermitianForm::det_normalized() const {
  HermitianForm out = *this;
  out.H *= std::exp(-log_det() / double(H.rows()));
  return out;
}

MatC HermitianForm::sqrt() const { return hermitian_function(H, sqrt_fn); }

OnePS OnePS::from_generator(const MatC& zeta, double cluster_tol) {
  const long n = zeta.rows();
  if (n == 0 || zeta.cols() != n) throw Error(ErrorKind::InvalidInput, "generator must be square");
  const double scale = std::max(1.0, zeta.norm());
  if ((zeta - zeta.adjoint()).norm() > 1e-12 * scale) throw Error(ErrorKind::InvalidInput, "generator is not hermitian");
  if (std::abs(zeta.trace()) > 1e-12 * double(n) * scale)
    throw Error(ErrorKind::InvalidInput, "generator is not trace-free");
  OnePS ps;
  ps.zeta = 0.5 * (zeta + zeta.adjoint());
  EigC es(ps.zeta);
  ps.lambda = es.eigenvalues().reverse();
  ps.U = es.eigenvectors().rowwise().reverse();
  if (ps.lambda.cwiseAbs().maxCoeff() > 1 + 1e-9)
    throw Error(ErrorKind::InvalidInput, "generator operator norm exceeds 1");
  ps.cluster.assign(n, 0);
  std::vector<double> sum{ps.lambda(0)};
  ps.multiplicity = {1};
  for (long k = 1; k < n; ++k) {
    if (ps.lambda(k - 1) - ps.lambda(k) > cluster_tol) {
      sum.push_back(0);
      ps.multiplicity.push_back(0);
    }
    ps.cluster[k] = int(sum.size()) - 1;
    sum.back() += ps.lambda(k);
    ps.multiplicity.back() += 1;
  }
  for (std::size_t c = 0; c < sum.size(); ++c) ps.weights.push_back(sum[c] / ps.multiplicity[c]);
  return ps;
}

MatC OnePS::exp_zeta(double t) const {
  Eigen::VectorXd e = (lambda * t).array().exp();
  return U * e.asDiagonal() * U.adjoint();
}

HermitianForm OnePS::form_at(double t) const {
  Eigen::VectorXd e = (lambda * (2 * t)).array().exp();
  HermitianForm f;
  f.H = U * e.asDiagonal() * U.adjoint();
  f.H = 0.5 * (f.H + f.H.adjoint());
  f.provenance = "exp(2 zeta t), t = " + std::to_string(t);
  return f;
}

MatC OnePS::projector_upto(std::size_t i) const {
  MatC p = MatC::Zero(dim(), dim());
  for (long k = 0; k < dim(); ++k)
    if (std::size_t(cluster[k]) <= i) p += U.col(k) * U.col(k).adjoint();
  return p;
}

std::string ZetaSpec::to_string() const {
  switch (kind) {
    case Kind::TwoStep: return "two_step:" + subsheaf + (weights.empty() ? "" : ":" + rat_list(weights));
    case Kind::Diag: return "diag:" + rat_list(weights);
    case Kind::File: return "file:" + path;
    case Kind::Random: return "random:" + std::to_string(seed);
    case Kind::Matrix: return "matrix";
  }
  return "";
}

ZetaSpec ZetaSpec::parse(const std::string& s) {
  ZetaSpec z;
  const auto parts = split(s, ':');
  if (parts.empty()) throw Error(ErrorKind::ConfigError, "ps: empty generator spec");
  const std::string& kind = parts[0];
  if (kind == "two_step") {
    if (parts.size() < 2 || parts.size() > 3 || parts[1].empty())
      throw Error(ErrorKind::ConfigError, "ps: expected two_step:<subsheaf>[:a,b]");
    z.kind = Kind::TwoStep;
    z.subsheaf = parts[1];
    if (parts.size() == 3) z.weights = parse_rat_list(parts[2]);
    if (!z.weights.empty() && z.weights.size() != 2) throw Error(ErrorKind::ConfigError, "ps: two_step needs 2 weights");
  } else if (kind == "diag") {
    if (parts.size() != 2) throw Error(ErrorKind::ConfigError, "ps: expected diag:w1,...,wN");
    z.kind = Kind::Diag;
    z.weights = parse_rat_list(parts[1]);
  } else if (kind == "file") {
    if (parts.size() < 2) throw Error(ErrorKind::ConfigError, "ps: expected file:<path>");
    z.kind = Kind::File;
    z.path = s.substr(5);
  } else if (kind == "random") {
    z.kind = Kind::Random;
    if (parts.size() == 2) {
      try {
        z.seed = std::stoull(parts[1]);
      } catch (const std::exception&) {
        throw Error(ErrorKind::ConfigError, "ps: bad random seed '" + parts[1] + "'");
      }
    } else if (parts.size() > 2) {
      throw Error(ErrorKind::ConfigError, "ps: expected random[:seed]");
    }
  } else {
    throw Error(ErrorKind::ConfigError, "ps: unknown generator kind '" + kind + "'");
  }
  return z;
}

nlohmann::json to_json(const ZetaSpec& z) {
  nlohmann::json j;
  std::vector<std::string> w;
  for (const Rat& q : z.weights) w.push_back(rat_str(q));
  switch (z.kind) {
    case ZetaSpec::Kind::TwoStep:
      j = {{"type", "two_step"}, {"subsheaf", z.subsheaf}};
      if (!w.empty()) j["weights"] = w;
      break;
    case ZetaSpec::Kind::Diag: j = {{"type", "diag"}, {"weights", w}}; break;
    case ZetaSpec::Kind::File: j = {{"type", "file"}, {"path", z.path}}; break;
    case ZetaSpec::Kind::Random: j = {{"type", "random"}, {"seed", z.seed}}; break;
    case ZetaSpec::Kind::Matrix: throw Error(ErrorKind::ConfigError, "explicit matrices are not serializable");
  }
  return j;
}

ZetaSpec zeta_spec_from_json(const nlohmann::json& j) {
  if (j.is_string()) return ZetaSpec::parse(j.get<std::string>());
  if (!j.is_object() || !j.contains("type")) throw Error(ErrorKind::ConfigError, "ps.type missing");
  const std::string t = j.at("type").get<std::string>();
  ZetaSpec z;
  auto weights = [&]() {
    std::vector<Rat> w;
    if (!j.contains("weights")) return w;
    for (const auto& x : j.at("weights")) {
      try {
        w.push_back(x.is_string() ? parse_rat(x.get<std::string>()) : Rat(x.get<long>()));
      } catch (const std::exception&) {
        throw Error(ErrorKind::ConfigError, "ps.weights: bad entry");
      }
    }
    return w;
  };
  if (t == "two_step") {
    z.kind = ZetaSpec::Kind::TwoStep;
    if (!j.contains("subsheaf")) throw Error(ErrorKind::ConfigError, "ps.subsheaf missing");
    z.subsheaf = j.at("subsheaf").get<std::string>();
    z.weights = weights();
    if (!z.weights.empty() && z.weights.size() != 2) throw Error(ErrorKind::ConfigError, "ps.weights: need 2 entries");
  } else if (t == "diag") {
    z.kind = ZetaSpec::Kind::Diag;
    z.weights = weights();
  } else if (t == "file") {
    z.kind = ZetaSpec::Kind::File;
    if (!j.contains("path")) throw Error(ErrorKind::ConfigError, "ps.path missing");
    z.path = j.at("path").get<std::string>();
  } else if (t == "random") {
    z.kind = ZetaSpec::Kind::Random;
    z.seed = j.value("seed", std::uint64_t(0));
  } else {
    throw Error(ErrorKind::ConfigError, "ps.type: unknown '" + t + "'");
  }
  return z;
}

MatC read_matrix_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IOError, "cannot open matrix file " + path);
  long n = 0;
  if (!(in >> n) || n <= 0) throw Error(ErrorKind::InvalidInput, "matrix file: bad dimension");
  MatC m(n, n);
  for (long i = 0; i < n; ++i)
    for (long j = 0; j < n; ++j) {
      double re = 0, im = 0;
      if (!(in >> re >> im)) throw Error(ErrorKind::InvalidInput, "matrix file: truncated data");
      m(i, j) = {re, im};
    }
  return m;
}

void write_matrix_file(const std::string& path, const MatC& m) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IOError, "cannot write " + path);
  out << m.rows() << "\n" << std::setprecision(17);
  for (long i = 0; i < m.rows(); ++i) {
    for (long j = 0; j < m.cols(); ++j) out << (j ? " " : "") << m(i, j).real() << " " << m(i, j).imag();
    out << "\n";
  }
}

MatC random_generator(long n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  MatC a(n, n);
  for (long i = 0; i < n; ++i)
    for (long j = 0; j < n; ++j) a(i, j) = {g(rng), g(rng)};
  MatC z = 0.5 * (a + a.adjoint());
  z -= (z.trace() / double(n)) * MatC::Identity(n, n);
  const double op = EigC(z).eigenvalues().cwiseAbs().maxCoeff();
  return z / op;
}

std::vector<int> two_step_summands(const SectionBasis& basis, const std::string& subsheaf) {
  if (basis.bundle.kind != CatalogBundle::Kind::Split)
    throw Error(ErrorKind::UnsupportedBundle, "two-step generators need a split bundle");
  std::string id = subsheaf;
  int pick = -1;
  if (auto at = id.find('@'); at != std::string::npos) {
    pick = std::stoi(id.substr(at + 1));
    id = id.substr(0, at);
  }
  if (id.size() < 4 || id.rfind("O(", 0) != 0 || id.back() != ')')
    throw Error(ErrorKind::ConfigError, "ps.subsheaf: expected O(d), got '" + subsheaf + "'");
  int d = 0;
  try {
    d = std::stoi(id.substr(2, id.size() - 3));
  } catch (const std::exception&) {
    throw Error(ErrorKind::ConfigError, "ps.subsheaf: bad degree in '" + subsheaf + "'");
  }
  const auto& deg = basis.bundle.degrees;
  if (pick >= 0) {
    if (pick >= int(deg.size()) || deg[pick] != d)
      throw Error(ErrorKind::ConfigError, "ps.subsheaf: summand " + std::to_string(pick) + " is not " + id);
    return {pick};
  }
  for (int c = 0; c < int(deg.size()); ++c)
    if (deg[c] == d) return {c};
  throw Error(ErrorKind::ConfigError, "ps.subsheaf: " + id + " is not a summand");
}

std::pair<Rat, Rat> two_step_exact_weights(const ZetaSpec& spec, const SectionBasis& basis) {
  const auto summ = two_step_summands(basis, spec.subsheaf);
  long nf = 0;
  for (const auto& s : basis.raw)
    if (std::find(summ.begin(), summ.end(), s.component) != summ.end()) ++nf;
  if (nf == 0 || nf == basis.dim) throw Error(ErrorKind::InvalidInput, "two-step subspace must be proper");
  if (spec.weights.empty()) return two_step_weights(nf, basis.dim);
  const Rat a = spec.weights[0], b = spec.weights[1];
  if (!(a > b)) throw Error(ErrorKind::InvalidInput, "two-step weights must satisfy a > b");
  if (a * Rat(nf) + b * Rat(basis.dim - nf) != 0) throw Error(ErrorKind::InvalidInput, "two-step weights are not trace-free");
  return {a, b};
}

MatC build_generator(const ZetaSpec& spec, const SectionBasis& basis) {
  const long n = basis.dim;
  switch (spec.kind) {
    case ZetaSpec::Kind::TwoStep: {
      const auto summ = two_step_summands(basis, spec.subsheaf);
      const auto [a, b] = two_step_exact_weights(spec, basis);
      MatC z = MatC::Zero(n, n);
      for (long i = 0; i < n; ++i) {
        const bool in_f = std::find(summ.begin(), summ.end(), basis.raw[i].component) != summ.end();
        z(i, i) = (in_f ? a : b).get_d();
      }
      return z;
    }
    case ZetaSpec::Kind::Diag: {
      if (long(spec.weights.size()) != n)
        throw Error(ErrorKind::ConfigError, "ps: diag needs " + std::to_string(n) + " weights");
      Rat tr = 0;
      MatC z = MatC::Zero(n, n);
      for (long i = 0; i < n; ++i) {
        tr += spec.weights[i];
        z(i, i) = spec.weights[i].get_d();
      }
      if (tr != 0) throw Error(ErrorKind::InvalidInput, "diag generator is not trace-free");
      return z;
    }
    case ZetaSpec::Kind::File: {
      MatC z = read_matrix_file(spec.path);
      if (z.rows() != n) throw Error(ErrorKind::InvalidInput, "matrix file dimension differs from h0(E(k))");
      return z;
    }
    case ZetaSpec::Kind::Random: {
      std::mt19937_64 rng(spec.seed);
      return random_generator(n, rng);
    }
    case ZetaSpec::Kind::Matrix:
      if (spec.matrix.rows() != n) throw Error(ErrorKind::InvalidInput, "generator dimension differs from h0(E(k))");
      return spec.matrix;
  }
  return {};
}

MetricField fs_metric(const SectionBasis& basis, const QuadratureGrid& grid, const HermitianForm& H) {
  if (H.H.rows() != basis.dim) throw Error(ErrorKind::InvalidInput, "form dimension differs from h0(E(k))");
  MetricField f;
  f.grid = &grid;
  f.h.reserve(grid.nodes.size());
  for (std::size_t i = 0; i < grid.nodes.size(); ++i) {
    MatC q = evaluate_q(basis, grid.nodes[i].pt);
    MatC h = q.adjoint() * H.H * q;
    h = 0.5 * (h + h.adjoint());
    if (!(EigC(h).eigenvalues().minCoeff() >= 1e-300))
      throw Error(ErrorKind::DegenerateMetric, "metric degenerates at node " + std::to_string(i));
    f.h.push_back(std::move(h));
  }
  return f;
}

MetricField bergman_path(const SectionBasis& basis, const QuadratureGrid& grid, const OnePS& ps, double t) {
  if (t < 0) throw Error(ErrorKind::InvalidInput, "Bergman path time must be nonnegative");
  return fs_metric(basis, grid, ps.form_at(t));
}

PathCache::PathCache(const SectionBasis& b, const QuadratureGrid& g, OnePS p,
                     const std::vector<std::array<cd, 2>>& offsets)
    : basis(&b), grid(&g), ps(std::move(p)) {
  std::vector<std::array<cd, 2>> offs = offsets;
  if (offs.empty()) offs.push_back({cd(0), cd(0)});
  points_per_node = offs.size();
  rows.reserve(g.nodes.size() * points_per_node);
  log_det_ref.reserve(g.nodes.size());
  const MatC uh = ps.U.adjoint();
  for (const auto& node : g.nodes) {
    for (std::size_t o = 0; o < offs.size(); ++o) {
      const MatC q = evaluate_q(b, node.pt.shifted(offs[o]));
      const MatC pm = uh * q;
      SplitMatrix sm(pm.rows(), pm.cols());
      for (long i = 0; i < pm.rows(); ++i)
        for (long a = 0; a < pm.cols(); ++a) sm.set(i, a, pm(i, a));
      rows.push_back(std::move(sm));
      if (o == 0) {
        // From the same rows as log_det, so that log_det(node, 0) cancels exactly.
        Eigen::HouseholderQR<MatC> qr(pm);
        double ld = 0;
        for (long a = 0; a < pm.cols(); ++a) ld += 2 * std::log(std::abs(qr.matrixQR()(a, a)));
        log_det_ref.push_back(ld);
      }
    }
  }
}

MatC PathCache::gram(std::size_t node, std::size_t point, const std::vector<double>& d) const {
  const SplitMatrix& p = rows[node * points_per_node + point];
  MatC out(p.cols, p.cols);
  weighted_gram(p, d.data(), out.data());
  return out;
}

MatC PathCache::metric(std::size_t node, double t, std::size_t point) const {
  std::vector<double> d(ps.lambda.size());
  for (long k = 0; k < ps.lambda.size(); ++k) d[k] = std::exp(2 * ps.lambda(k) * t);
  return gram(node, point, d);
}

MatC PathCache::metric_dot(std::size_t node, double t) const {
  std::vector<double> d(ps.lambda.size());
  for (long k = 0; k < ps.lambda.size(); ++k) d[k] = 2 * ps.lambda(k) * std::exp(2 * ps.lambda(k) * t);
  return gram(node, 0, d);
}

double PathCache::log_det(std::size_t node, double t) const {
  const SplitMatrix& p = rows[node * points_per_node];
  MatC a(p.rows, p.cols);
  for (std::size_t k = 0; k < p.rows; ++k) {
    const double s = std::exp(ps.lambda(long(k)) * t);
    for (std::size_t c = 0; c < p.cols; ++c) a(long(k), long(c)) = s * p.get(k, c);
  }
  Eigen::HouseholderQR<MatC> qr(a);
  double ld = 0;
  for (long c = 0; c < a.cols(); ++c) ld += 2 * std::log(std::abs(qr.matrixQR()(c, c)));
  return ld;
}

std::vector<ChartPoint> random_chart_points(Space s, std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::vector<ChartPoint> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::array<cd, 3> z{cd(g(rng), g(rng)), cd(g(rng), g(rng)), space_dim(s) == 2 ? cd(g(rng), g(rng)) : cd(0)};
    out.push_back(ChartPoint::from_homogeneous(s, z));
  }
  return out;
}

namespace {

// Rank of the rows of P belonging to weight clusters <= i, for each i.
std::vector<long> cluster_ranks(const MatC& p, const OnePS& ps, double tol) {
  std::vector<long> out;
  const std::size_t nu = ps.weights.size();
  for (std::size_t i = 0; i < nu; ++i) {
    long count = 0;
    for (long k = 0; k < ps.dim(); ++k)
      if (std::size_t(ps.cluster[k]) <= i) ++count;
    MatC sub(count, p.cols());
    long r = 0;
    for (long k = 0; k < ps.dim(); ++k)
      if (std::size_t(ps.cluster[k]) <= i) sub.row(r++) = p.row(k);
    out.push_back(q_rank(sub, tol));
  }
  return out;
}

}  // namespace

FiltrationResult weight_filtration(const SectionBasis& basis, const OnePS& ps, const std::vector<ChartPoint>& samples,
                                   double rank_tol) {
  if (samples.size() < 20) throw Error(ErrorKind::InsufficientSamples, "weight filtration needs >= 20 sample points");
  if (ps.dim() != basis.dim) throw Error(ErrorKind::InvalidInput, "generator dimension differs from h0(E(k))");
  FiltrationResult res;
  res.weights = ps.weights;
  const std::size_t nu = ps.weights.size();
  res.ranks.assign(nu, 0);
  std::vector<std::vector<long>> per;
  for (const auto& x : samples) {
    per.push_back(cluster_ranks(ps.U.adjoint() * evaluate_q(basis, x), ps, rank_tol));
    for (std::size_t i = 0; i < nu; ++i) res.ranks[i] = std::max(res.ranks[i], per.back()[i]);
  }
  for (const auto& r : per)
    if (r == res.ranks) ++res.samples_at_max;
  if (2 * res.samples_at_max < long(samples.size()))
    throw Error(ErrorKind::DegenerateSamples, "filtration ranks vary across samples; draw generic points");
  long acc = 0;
  for (std::size_t i = 0; i < nu; ++i) {
    acc += ps.multiplicity[i];
    res.v_dims.push_back(acc);
    if (res.ranks[i] - (i ? res.ranks[i - 1] : 0) > 0) res.surviving.push_back(i);
  }
  return res;
}

std::size_t RenormalizedField::masked_count() const {
  return std::size_t(std::count(masked.begin(), masked.end(), true));
}

RenormalizedField renormalized_metric(const SectionBasis& basis, const std::vector<ChartPoint>& points,
                                      const OnePS& ps, const FiltrationResult& filt, double t, double pivot_tol) {
  const int r = basis.rank;
  const std::size_t nu = ps.weights.size();
  RenormalizedField out;
  for (const auto& x : points) {
    const MatC q = evaluate_q(basis, x);
    const MatC p = ps.U.adjoint() * q;
    const MatC href = q.adjoint() * q;
    auto ip = [&](const VecC& a, const VecC& b) { return b.dot(href * a); };  // b^* h_ref a
    bool bad = false;
    // Kernels K_i of the evaluation of the first i+1 weight spaces.
    std::vector<MatC> kernels;
    kernels.push_back(MatC::Identity(r, r));
    const double scale = std::max(p.squaredNorm(), 1e-300);
    for (std::size_t i = 0; i < nu; ++i) {
      MatC m = MatC::Zero(r, r);
      for (long k = 0; k < ps.dim(); ++k)
        if (std::size_t(ps.cluster[k]) <= i) m += p.row(k).adjoint() * p.row(k);
      EigC es(m / scale);
      const long want = r - filt.ranks[i];
      long got = 0;
      for (long a = 0; a < r; ++a) got += es.eigenvalues()(a) < pivot_tol ? 1 : 0;
      if (got != want) bad = true;
      kernels.push_back(es.eigenvectors().leftCols(want));
    }
    MatC frame(r, r);
    std::vector<double> wcol;
    long col = 0;
    for (std::size_t a = 0; a < nu && !bad; ++a) {
      const long need = filt.ranks[a] - (a ? filt.ranks[a - 1] : 0);
      if (need == 0) continue;
      // Orthonormal basis (h_ref) of K_{a+1}, then complete inside K_a.
      std::vector<VecC> ortho;
      for (long c = 0; c < kernels[a + 1].cols(); ++c) {
        VecC v = kernels[a + 1].col(c);
        for (const auto& e : ortho) v -= ip(v, e) * e;
        const double nv = std::sqrt(std::abs(ip(v, v)));
        if (nv < pivot_tol) {
          bad = true;
          break;
        }
        ortho.push_back(v / nv);
      }
      long added = 0;
      for (long c = 0; c < kernels[a].cols() && added < need && !bad; ++c) {
        VecC v = kernels[a].col(c);
        const double n0 = std::sqrt(std::abs(ip(v, v)));
        for (const auto& e : ortho) v -= ip(v, e) * e;
        const double nv = std::sqrt(std::abs(ip(v, v)));
        if (nv < pivot_tol * n0) continue;
        v /= nv;
        ortho.push_back(v);
        frame.col(col++) = v;
        wcol.push_back(ps.weights[a]);
        ++added;
      }
      if (added < need) bad = true;
    }
    if (col != r) bad = true;
    out.masked.push_back(bad);
    if (bad) {
      out.h_hat.emplace_back();
      out.frame.emplace_back();
      continue;
    }
    MatC g(ps.dim(), r);
    for (long k = 0; k < ps.dim(); ++k) g.row(k) = std::exp(ps.lambda(k) * t) * (p.row(k) * frame);
    for (long c = 0; c < r; ++c) g.col(c) *= std::exp(-wcol[c] * t);
    out.h_hat.push_back(g.adjoint() * g);
    out.frame.push_back(frame);
  }
  return out;
}

double commutator_residual(const SectionBasis& basis, const MatC& sigma, const MatC& u, const ChartPoint& x) {
  const MatC q = evaluate_q(basis, x);
  const MatC sq = sigma * q;
  const MatC a0 = sq.adjoint() * sq, a1 = sq.adjoint() * u * sq, a2 = sq.adjoint() * u * u * sq;
  const MatC* m[3] = {&a0, &a1, &a2};
  double worst = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j) {
      const double den = m[i]->norm() * m[j]->norm();
      if (den == 0) continue;
      worst = std::max(worst, ((*m[i]) * (*m[j]) - (*m[j]) * (*m[i])).norm() / den);
    }
  return worst;
}

SubgeodesicResult subgeodesic_residual(const SectionBasis& basis, const OnePS& ps, double t, const ChartPoint& x,
                                       double fd_step) {
  if (!(fd_step > 0)) throw Error(ErrorKind::InvalidInput, "fd_step must be positive");
  const MatC q = evaluate_q(basis, x);
  Eigen::LLT<MatC> llt(q.adjoint() * q);
  // h_ref-orthonormal frame: Qhat = Q L^{-*}.
  const MatC qhat = llt.matrixU().solve<Eigen::OnTheRight>(q);
  const MatC u = 2 * ps.zeta;
  auto a_of = [&](double s) {
    const MatC sq = ps.exp_zeta(s) * qhat;
    const MatC b0 = sq.adjoint() * sq, b1 = sq.adjoint() * u * sq;
    return MatC(b0.ldlt().solve(b1));
  };
  auto central = [&](double d) { return MatC((a_of(t + d) - a_of(t - d)) / (2 * d)); };
  SubgeodesicResult res;
  const MatC sq = ps.exp_zeta(t) * qhat;
  const MatC b0 = sq.adjoint() * sq, b1 = sq.adjoint() * u * sq, b2 = sq.adjoint() * u * u * sq;
  const MatC a = b0.ldlt().solve(b1);
  res.lhs_exact = b0.ldlt().solve(b2) - a * a;
  res.scale = res.lhs_exact.norm();
  res.lhs = central(fd_step);
  const MatC l2 = central(fd_step / 2), l4 = central(fd_step / 4);
  const double d1 = (res.lhs - l2).norm(), d2 = (l2 - l4).norm();
  res.richardson_ratio = d2 > 0 ? d1 / d2 : 4.0;
  const double floor = 1e-9 * std::max(1.0, res.scale);
  if (d1 > floor && (res.richardson_ratio < 3.0 || res.richardson_ratio > 5.0))
    throw Error(ErrorKind::StepTooLarge, "finite-difference step fails the Richardson check (ratio " +
                                             std::to_string(res.richardson_ratio) + ")");
  res.residual_fd = (res.lhs - res.lhs_exact).norm();
  const MatC xm = u * sq - sq * a;
  const MatC hi = hermitian_function(b0, inv_sqrt);
  const MatC hs = hermitian_function(b0, sqrt_fn);
  const MatC f = xm * hi;
  res.rhs = f.adjoint() * f;
  res.residual_literal = (res.lhs - res.rhs).norm();
  res.residual_conjugated = (hs * res.lhs * hi - res.rhs).norm();
  res.min_eig_rhs = EigC(0.5 * (res.rhs + res.rhs.adjoint())).eigenvalues().minCoeff();
  return res;
}

}  // namespace bml
