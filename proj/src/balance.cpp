#include "bml/balance.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <mutex>
#include <numbers>
#include <sstream>

#include "bml/errors.hpp"

namespace bml {

namespace {

constexpr std::size_t kBatchNodes = 64;

MatC hermitian_apply(const MatC& h, double (*f)(double)) {
  Eigen::SelfAdjointEigenSolver<MatC> es(h);
  Eigen::VectorXd d = es.eigenvalues();
  for (long i = 0; i < d.size(); ++i) d(i) = f(d(i));
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().adjoint();
}

double exp_fn(double x) { return std::exp(x); }

HermitianForm make_form(const MatC& h, const char* prov) {
  HermitianForm f;
  f.H = 0.5 * (h + h.adjoint());
  f.provenance = prov;
  return f.det_normalized();
}

// Section values and reference log-determinants per node, reused across iterations.
struct SectionCache {
  const QuadratureGrid* grid;
  long n;
  int r;
  std::vector<MatC> q;
  std::vector<double> log_det_ref;

  SectionCache(const SectionBasis& basis, const QuadratureGrid& g) : grid(&g), n(basis.dim), r(basis.rank) {
    q.reserve(g.nodes.size());
    for (const auto& node : g.nodes) {
      q.push_back(evaluate_q(basis, node.pt));
      Eigen::HouseholderQR<MatC> qr(q.back());
      double s = 0;
      for (long c = 0; c < r; ++c) s += 2 * std::log(std::abs(qr.matrixQR()(c, c)));
      log_det_ref.push_back(s);
    }
  }
};

// Orthonormal frame of range(sigma Q) at one node, and log det of (sigma Q)^*(sigma Q).
void range_frame(const MatC& a, MatC& frame, double& log_det) {
  Eigen::HouseholderQR<MatC> qr(a);
  frame = qr.householderQ() * MatC::Identity(a.rows(), a.cols());
  log_det = 0;
  for (long c = 0; c < a.cols(); ++c) log_det += 2 * std::log(std::abs(qr.matrixQR()(c, c)));
}

struct ComResult {
  MatC M;
  double m2 = 0;
};

// Accumulates conj(G) from batches of split rows; G(a,b) = sum_i d_i conj(P(i,a)) P(i,b).
class GramAccumulator {
 public:
  GramAccumulator(long cols, std::size_t max_rows) : p_(max_rows, std::size_t(cols)), d_(max_rows, 0.0),
                                                     out_(std::size_t(cols * cols)), acc_(MatC::Zero(cols, cols)) {}
  void push(const cd* row, double w) {
    const std::size_t c = p_.cols;
    for (std::size_t a = 0; a < c; ++a) p_.set(used_, a, row[a]);
    d_[used_] = w;
    if (++used_ == p_.rows) flush();
  }
  MatC finish() {
    flush();
    return acc_.conjugate();
  }

 private:
  void flush() {
    if (used_ == 0) return;
    for (std::size_t i = used_; i < p_.rows; ++i) d_[i] = 0.0;
    weighted_gram(p_, d_.data(), out_.data());
    const long c = acc_.rows();
    for (long b = 0; b < c; ++b)
      for (long a = 0; a < c; ++a) acc_(a, b) += out_[std::size_t(a + b * c)];
    used_ = 0;
  }

  SplitMatrix p_;
  std::vector<double> d_;
  std::vector<cd> out_;
  MatC acc_;
  std::size_t used_ = 0;
};

ComResult com_impl(const SectionCache& c, const MatC& sigma) {
  const auto& nodes = c.grid->nodes;
  GramAccumulator acc(c.n, kBatchNodes * std::size_t(c.r));
  std::vector<double> ld(nodes.size());
  std::vector<cd> row(std::size_t(c.n));
  MatC frame;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    double l = 0;
    range_frame(sigma * c.q[i], frame, l);
    ld[i] = l - c.log_det_ref[i];
    for (long k = 0; k < frame.cols(); ++k) {
      for (long a = 0; a < c.n; ++a) row[std::size_t(a)] = frame(a, k);
      acc.push(row.data(), nodes[i].weight);
    }
  }
  ComResult out;
  out.M = acc.finish() / c.grid->vol;
  out.M = 0.5 * (out.M + out.M.adjoint());
  out.m2 = integrate_values(*c.grid, ld) / c.grid->vol;
  return out;
}

BalanceState state_from(const SectionCache& c, const HermitianForm& H, int iteration) {
  BalanceState s;
  s.H = H;
  s.iteration = iteration;
  const ComResult cr = com_impl(c, H.sqrt());
  s.M = cr.M;
  s.m2 = cr.m2;
  const double tr = s.M.trace().real();
  if (std::abs(tr - c.r) > 1e-9 * c.r)
    throw Error(ErrorKind::NonFiniteIntegrand, "center of mass trace " + std::to_string(tr) + " differs from rank");
  s.residual = (s.M - (double(c.r) / double(c.n)) * MatC::Identity(c.n, c.n)).norm();
  Eigen::SelfAdjointEigenSolver<MatC> es(H.H);
  s.spread = es.eigenvalues().maxCoeff() / es.eigenvalues().minCoeff();
  s.log_spread = std::log(s.spread);
  return s;
}

double path_time(const HermitianForm& H) {
  Eigen::SelfAdjointEigenSolver<MatC> es(H.H);
  return 0.5 * es.eigenvalues().array().log().abs().maxCoeff();
}

HermitianForm t_step(const HermitianForm& H, const MatC& M) {
  Eigen::LLT<MatC> llt(M);
  Eigen::SelfAdjointEigenSolver<MatC> es(M, Eigen::EigenvaluesOnly);
  if (llt.info() != Eigen::Success || !(es.eigenvalues().minCoeff() > 1e-300))
    throw Error(ErrorKind::SingularGram, "center of mass is singular");
  const MatC s = H.sqrt();
  return make_form(s * llt.solve(s), "t_operator");
}

Eigen::MatrixXd jacobian_impl(const SectionCache& c, const MatC& sigma, const MatC& M, const std::vector<MatC>& basis) {
  const long n = c.n, n2 = n * n;
  const auto& nodes = c.grid->nodes;
  GramAccumulator acc(n2, kBatchNodes * std::size_t(c.r * c.r));
  std::vector<cd> row(static_cast<std::size_t>(n2));
  MatC frame;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    double l = 0;
    range_frame(sigma * c.q[i], frame, l);
    for (long k = 0; k < c.r; ++k)
      for (long m = 0; m < c.r; ++m) {
        // vec(b_k b_m^*), column-major
        for (long bcol = 0; bcol < n; ++bcol) {
          const cd cm = std::conj(frame(bcol, m));
          for (long a = 0; a < n; ++a) row[std::size_t(a + bcol * n)] = frame(a, k) * cm;
        }
        acc.push(row.data(), nodes[i].weight);
      }
  }
  const MatC S = acc.finish() / c.grid->vol;
  const long dim = long(basis.size());
  MatC V(n2, dim);
  for (long j = 0; j < dim; ++j) V.col(j) = Eigen::Map<const VecC>(basis[std::size_t(j)].data(), n2);
  const MatC js = V.adjoint() * S * V;
  Eigen::MatrixXd J(dim, dim);
  for (long j = 0; j < dim; ++j) {
    const MatC& ej = basis[std::size_t(j)];
    const MatC anti = 0.5 * (ej * M + M * ej);
    for (long i = 0; i < dim; ++i) {
      const cd t = (basis[std::size_t(i)].adjoint() * anti).trace();
      J(i, j) = t.real() - js(i, j).real();
    }
  }
  return 0.5 * (J + J.transpose());
}

BalanceRecord record_of(const BalanceState& s, double ms) {
  return {s.iteration, s.residual, s.m2, s.spread, path_time(s.H), ms};
}

void finish_run(BalanceRun& run, const BalanceOptions& opts) {
  run.final.converged = run.final.residual < opts.tol;
  const auto& h = run.history;
  for (std::size_t i = 1; i < h.size() && i <= 5; ++i)
    if (h[i].residual > h[i - 1].residual) run.residual_monotone_first5 = false;
  DivergenceThresholds th;
  th.converged_tol = opts.tol;
  try {
    run.verdict = divergence_detect(h, th);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::Inconclusive) throw;
    run.verdict = Verdict::Inconclusive;
  }
}

std::once_flag g_self_test;

void ensure_self_test() {
  std::call_once(g_self_test, balance_self_test);
}

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

MatC center_of_mass(const SectionBasis& basis, const QuadratureGrid& grid, const HermitianForm& H) {
  if (H.H.rows() != basis.dim) throw Error(ErrorKind::InvalidInput, "form dimension differs from h0(E(k))");
  SectionCache c(basis, grid);
  return com_impl(c, H.sqrt()).M;
}

BalanceState balance_state(const SectionBasis& basis, const QuadratureGrid& grid, const HermitianForm& H,
                           int iteration) {
  if (H.H.rows() != basis.dim) throw Error(ErrorKind::InvalidInput, "form dimension differs from h0(E(k))");
  SectionCache c(basis, grid);
  return state_from(c, H.det_normalized(), iteration);
}

HermitianForm t_operator(const SectionBasis& basis, const QuadratureGrid& grid, const HermitianForm& H) {
  if (H.H.rows() != basis.dim) throw Error(ErrorKind::InvalidInput, "form dimension differs from h0(E(k))");
  SectionCache c(basis, grid);
  return t_step(H, com_impl(c, H.sqrt()).M);
}

void balance_self_test() {
  const SectionBasis basis = section_basis(CatalogBundle::split_p1({2}), 0);
  const QuadratureGrid grid = build_grid_p1(161, 16);
  SectionCache c(basis, grid);
  const HermitianForm id = HermitianForm::identity(basis.dim);
  const BalanceState s0 = state_from(c, id, 0);
  if (s0.residual > 1e-9) throw Error(ErrorKind::InvalidInput, "self-test: identity is not balanced for O(2)");
  const HermitianForm t0 = t_step(id, s0.M);
  if ((t0.H - id.H).norm() > 1e-9) throw Error(ErrorKind::InvalidInput, "self-test: identity is not a T fixed point");
  MatC z = MatC::Zero(3, 3);
  z(0, 0) = 1;
  z(2, 2) = -1;
  z(0, 1) = z(1, 0) = 0.3;
  if (std::abs(2.0 * (z * s0.M).trace().real()) > 1e-9)
    throw Error(ErrorKind::InvalidInput, "self-test: gradient does not vanish at the fixed point");
  const HermitianForm h1 = make_form(hermitian_apply(0.4 * z, exp_fn), "self-test");
  const BalanceState s1 = state_from(c, h1, 0);
  const BalanceState s2 = state_from(c, t_step(h1, s1.M), 1);
  if (!(s2.residual < s1.residual)) throw Error(ErrorKind::InvalidInput, "self-test: T step increases the residual");
}

double m2_gradient(const SectionBasis& basis, const QuadratureGrid& grid, const HermitianForm& H, const MatC& zeta) {
  if (zeta.rows() != basis.dim) throw Error(ErrorKind::InvalidInput, "direction dimension differs from h0(E(k))");
  return 2.0 * (zeta * center_of_mass(basis, grid, H)).trace().real();
}

double m2_gradient_fd(const SectionBasis& basis, const QuadratureGrid& grid, const HermitianForm& H,
                      const MatC& zeta, double step) {
  SectionCache c(basis, grid);
  const MatC s = H.sqrt();
  auto m2_at = [&](double t) {
    const MatC e = hermitian_apply(t * zeta, exp_fn);
    return com_impl(c, e * s).m2;
  };
  return (m2_at(-2 * step) - 8 * m2_at(-step) + 8 * m2_at(step) - m2_at(2 * step)) / (12 * step);
}

std::vector<MatC> traceless_hermitian_basis(long n) {
  std::vector<MatC> out;
  const double r2 = std::sqrt(0.5);
  for (long i = 0; i < n; ++i)
    for (long j = i + 1; j < n; ++j) {
      MatC a = MatC::Zero(n, n), b = MatC::Zero(n, n);
      a(i, j) = a(j, i) = r2;
      b(i, j) = cd(0, -r2);
      b(j, i) = cd(0, r2);
      out.push_back(a);
      out.push_back(b);
    }
  for (long l = 1; l < n; ++l) {
    MatC d = MatC::Zero(n, n);
    const double s = 1.0 / std::sqrt(double(l) * double(l + 1));
    for (long i = 0; i < l; ++i) d(i, i) = s;
    d(l, l) = -double(l) * s;
    out.push_back(d);
  }
  return out;
}

Eigen::MatrixXd center_of_mass_jacobian(const SectionBasis& basis, const QuadratureGrid& grid,
                                        const HermitianForm& H) {
  SectionCache c(basis, grid);
  const MatC s = H.sqrt();
  return jacobian_impl(c, s, com_impl(c, s).M, traceless_hermitian_basis(basis.dim));
}

const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::Converged: return "converged";
    case Verdict::UnstableLike: return "unstable_like";
    case Verdict::SemistableLike: return "semistable_like";
    case Verdict::Inconclusive: return "inconclusive";
  }
  return "?";
}

BalanceRun t_iterate(const SectionBasis& basis, const QuadratureGrid& grid, const HermitianForm& H0,
                     const BalanceOptions& opts) {
  if (H0.H.rows() != basis.dim) throw Error(ErrorKind::InvalidInput, "form dimension differs from h0(E(k))");
  ensure_self_test();
  const auto t0 = std::chrono::steady_clock::now();
  SectionCache c(basis, grid);
  BalanceRun run;
  run.method = "t_operator";
  BalanceState s = state_from(c, H0.det_normalized(), 0);
  run.history.push_back(record_of(s, elapsed_ms(t0)));
  for (int it = 1; it <= opts.max_iter && s.residual >= opts.tol && s.spread <= opts.spread_stop; ++it) {
    s = state_from(c, t_step(s.H, s.M), it);
    run.history.push_back(record_of(s, elapsed_ms(t0)));
  }
  run.final = s;
  finish_run(run, opts);
  return run;
}

BalanceRun lm_minimize(const SectionBasis& basis, const QuadratureGrid& grid, const HermitianForm& H0,
                       const BalanceOptions& opts) {
  if (H0.H.rows() != basis.dim) throw Error(ErrorKind::InvalidInput, "form dimension differs from h0(E(k))");
  ensure_self_test();
  const auto t0 = std::chrono::steady_clock::now();
  SectionCache c(basis, grid);
  const std::vector<MatC> eb = traceless_hermitian_basis(basis.dim);
  const long dim = long(eb.size());
  const MatC target = (double(c.r) / double(c.n)) * MatC::Identity(c.n, c.n);
  BalanceRun run;
  run.method = "lm";
  BalanceState s = state_from(c, H0.det_normalized(), 0);
  run.history.push_back(record_of(s, elapsed_ms(t0)));
  double lambda = opts.lambda0;
  for (int it = 1; it <= opts.max_iter && s.residual >= opts.tol && s.spread <= opts.spread_stop; ++it) {
    const MatC sigma = s.H.sqrt();
    const Eigen::MatrixXd J = jacobian_impl(c, sigma, s.M, eb);
    Eigen::VectorXd res(dim);
    const MatC R = s.M - target;
    for (long i = 0; i < dim; ++i) res(i) = (eb[std::size_t(i)] * R).trace().real();
    const double scale = std::max(1e-12, J.diagonal().cwiseAbs().maxCoeff());
    bool accepted = false;
    for (int attempt = 0; attempt < 40 && !accepted; ++attempt) {
      Eigen::MatrixXd A = J;
      A.diagonal().array() += lambda * scale;
      const Eigen::VectorXd x = A.ldlt().solve(-res);
      MatC D = MatC::Zero(c.n, c.n);
      for (long i = 0; i < dim; ++i) D += x(i) * eb[std::size_t(i)];
      Eigen::SelfAdjointEigenSolver<MatC> es(D, Eigen::EigenvaluesOnly);
      const double op = es.eigenvalues().cwiseAbs().maxCoeff();
      if (op > opts.max_step) D *= opts.max_step / op;
      const HermitianForm h_try = make_form(sigma * hermitian_apply(D, exp_fn) * sigma, "lm");
      BalanceState st = state_from(c, h_try, it);
      const bool m2_down = st.m2 < s.m2;
      const bool res_down = st.residual < s.residual && st.m2 <= s.m2 + 1e-12 * std::max(1.0, std::abs(s.m2));
      if (m2_down || res_down) {
        s = std::move(st);
        lambda = std::max(lambda / 4, 1e-15);
        accepted = true;
      } else {
        lambda *= 16;
      }
    }
    if (!accepted) break;
    run.history.push_back(record_of(s, elapsed_ms(t0)));
  }
  run.final = s;
  finish_run(run, opts);
  return run;
}

Verdict divergence_detect(const std::vector<BalanceRecord>& h, const DivergenceThresholds& th) {
  if (h.empty()) throw Error(ErrorKind::Inconclusive, "empty history");
  if (h.back().residual < th.converged_tol) return Verdict::Converged;
  if (int(h.size()) < th.min_history)
    throw Error(ErrorKind::Inconclusive, "history has " + std::to_string(h.size()) + " iterations");
  double max_spread = 0;
  for (const auto& r : h) max_spread = std::max(max_spread, r.spread);
  int decreases = 0;
  for (std::size_t i = h.size() - 1; i > 0 && h[i].m2 < h[i - 1].m2; --i) ++decreases;
  if (max_spread > th.spread && decreases >= th.monotone_decreases) return Verdict::UnstableLike;
  if (max_spread > th.spread && int(h.size()) > th.plateau_len) {
    bool flat = true;
    for (std::size_t i = h.size() - std::size_t(th.plateau_len); i < h.size(); ++i)
      if (std::abs(h[i].m2 - h[i - 1].m2) > th.plateau_tol) flat = false;
    if (flat) return Verdict::SemistableLike;
  }
  throw Error(ErrorKind::Inconclusive, "spread " + std::to_string(max_spread) + ", " + std::to_string(decreases) +
                                           " trailing decreases of M2");
}

ConvexityReport convexity_monitor(const std::vector<double>& values, double tol) {
  if (values.size() < 3) throw Error(ErrorKind::InsufficientSamples, "convexity needs at least 3 samples");
  ConvexityReport r;
  r.samples = values.size();
  r.min_second_difference = min_second_difference(values);
  r.convex = r.min_second_difference >= -tol;
  return r;
}

SlopeFit iterate_path_slope(const std::vector<BalanceRecord>& history, double tail_fraction,
                            std::optional<Rat> predicted) {
  std::vector<double> t, v;
  for (const auto& r : history) {
    t.push_back(r.t_path);
    v.push_back(r.m2);
  }
  if (t.empty()) throw Error(ErrorKind::InsufficientSamples, "empty history");
  const std::size_t first = std::size_t(double(t.size()) * (1.0 - tail_fraction));
  const double t_min = t[std::min(first, t.size() - 1)];
  return asymptotic_slope_fit(t, v, t_min, predicted);
}

std::string run_log_csv(const BalanceRun& run) {
  std::ostringstream os;
  os.precision(17);
  os << "iter,residual,m2,spread,wallclock_ms\n";
  for (const auto& r : run.history)
    os << r.iter << ',' << r.residual << ',' << r.m2 << ',' << r.spread << ',' << r.wallclock_ms << '\n';
  return os.str();
}

nlohmann::json to_json(const BalanceRun& run) {
  nlohmann::json j;
  j["method"] = run.method;
  j["verdict"] = verdict_name(run.verdict);
  j["iterations"] = run.final.iteration;
  j["converged"] = run.final.converged;
  j["residual"] = run.final.residual;
  j["m2"] = run.final.m2;
  j["spread"] = run.final.spread;
  j["residual_monotone_first5"] = run.residual_monotone_first5;
  nlohmann::json re = nlohmann::json::array(), im = nlohmann::json::array();
  const MatC& H = run.final.H.H;
  for (long i = 0; i < H.rows(); ++i) {
    nlohmann::json rr = nlohmann::json::array(), ri = nlohmann::json::array();
    for (long k = 0; k < H.cols(); ++k) {
      rr.push_back(H(i, k).real());
      ri.push_back(H(i, k).imag());
    }
    re.push_back(rr);
    im.push_back(ri);
  }
  j["H"] = {{"re", re}, {"im", im}};
  return j;
}

double laplace_constant_p1(const QuadratureGrid& grid, int p) {
  if (grid.space != Space::P1) throw Error(ErrorKind::InvalidInput, "Laplace constant is implemented on P1");
  if (p < 1) throw Error(ErrorKind::InvalidInput, "Galerkin degree must be positive");
  const int m = (p + 1) * (p + 1);
  MatC K = MatC::Zero(m, m), G = MatC::Zero(m, m);
  VecC f(m);
  Eigen::VectorXd dfac(m);
  for (const auto& node : grid.nodes) {
    const auto z = node.pt.homogeneous();
    const double s = std::norm(z[0]) + std::norm(z[1]);
    const double u = node.moment[1];
    const double g = u * (1 - u);
    for (int a = 0; a <= p; ++a)
      for (int b = 0; b <= p; ++b) {
        const int i = a * (p + 1) + b;
        f(i) = std::pow(z[1], a) * std::pow(std::conj(z[1]), b) * std::pow(z[0], p - a) *
               std::pow(std::conj(z[0]), p - b) / std::pow(s, p);
        dfac(i) = a - p * u;
      }
    const VecC df = dfac.cast<cd>().cwiseProduct(f);
    G += node.weight * f.conjugate() * f.transpose();
    if (g > 0) K += (node.weight * 2 * std::numbers::pi / g) * df.conjugate() * df.transpose();
  }
  K = 0.5 * (K + K.adjoint());
  G = 0.5 * (G + G.adjoint());
  Eigen::GeneralizedSelfAdjointEigenSolver<MatC> es(K, G);
  if (es.info() != Eigen::Success) throw Error(ErrorKind::SingularGram, "Galerkin mass matrix is singular");
  const Eigen::VectorXd ev = es.eigenvalues();
  const double top = ev.cwiseAbs().maxCoeff();
  for (long i = 0; i < ev.size(); ++i)
    if (ev(i) > 1e-8 * top) return ev(i);
  throw Error(ErrorKind::SingularGram, "no nonzero Galerkin eigenvalue");
}

namespace {

int line_degree_p1(const SectionBasis& basis) {
  const auto& b = basis.bundle;
  if (b.kind != CatalogBundle::Kind::Split || b.space != Space::P1 || b.degrees.size() != 1)
    throw Error(ErrorKind::MissingHE, "no catalog Hermitian-Einstein metric for " + b.label());
  return b.degrees[0];
}

}  // namespace

MetricField he_metric(const SectionBasis& basis, const QuadratureGrid& grid) {
  const int m = line_degree_p1(basis) + basis.level;
  MetricField f;
  f.grid = &grid;
  for (const auto& node : grid.nodes) f.h.push_back(MatC::Constant(1, 1, std::pow(1 + std::norm(node.pt.y[0]), m)));
  return f;
}

DeltaDiagnostic delta_diagnostic(const MetricField& h_min, const MetricField& h_he, const QuadratureGrid& grid,
                                 double C) {
  if (h_min.h.size() != grid.nodes.size() || h_he.h.size() != grid.nodes.size())
    throw Error(ErrorKind::InvalidInput, "metric fields do not match the grid");
  if (!(C > 0)) throw Error(ErrorKind::InvalidInput, "spectral constant must be positive");
  DeltaDiagnostic d;
  d.C = C;
  const long r = h_min.h.front().rows();
  double lo = INFINITY, hi = -INFINITY, spread_pt = 0;
  std::vector<double> tr(grid.nodes.size());
  for (std::size_t i = 0; i < grid.nodes.size(); ++i) {
    const MatC is = hermitian_apply(h_he.h[i], [](double x) { return 1.0 / std::sqrt(x); });
    Eigen::SelfAdjointEigenSolver<MatC> es(is * h_min.h[i] * is);
    const Eigen::VectorXd l = es.eigenvalues().array().log();
    lo = std::min(lo, l.minCoeff());
    hi = std::max(hi, l.maxCoeff());
    spread_pt = std::max(spread_pt, l.maxCoeff() - l.minCoeff());
    d.v.push_back(es.eigenvectors() * l.cast<cd>().asDiagonal() * es.eigenvectors().adjoint());
    tr[i] = l.sum();
  }
  d.v_bar = integrate_values(grid, tr) / (double(r) * grid.vol);
  std::vector<double> dev(grid.nodes.size());
  for (std::size_t i = 0; i < grid.nodes.size(); ++i)
    dev[i] = (d.v[i] - d.v_bar * MatC::Identity(r, r)).squaredNorm();
  d.v_norm2 = integrate_values(grid, dev) / grid.vol;
  const double L = lo - hi;
  d.delta = std::exp(L);
  d.delta_pointwise = std::exp(-spread_pt);
  d.f_delta = std::abs(L) < 1e-4 ? 0.5 + L / 6 + L * L / 24 : (std::expm1(L) - L) / (L * L);
  d.lower_bound = d.f_delta * d.v_norm2 / C;
  d.sup_inequality = d.v_norm2 >= L * L / double(r) - 1e-12;
  return d;
}

double donaldson_energy_line(const SectionBasis& basis, const QuadratureGrid& grid, const HermitianForm& H) {
  const int m = line_degree_p1(basis) + basis.level;
  if (H.H.rows() != basis.dim) throw Error(ErrorKind::InvalidInput, "form dimension differs from h0(E(k))");
  const MatC s = H.sqrt();
  std::vector<double> e(grid.nodes.size());
  for (std::size_t i = 0; i < grid.nodes.size(); ++i) {
    const auto& pt = grid.nodes[i].pt;
    const VecC a = s * evaluate_q(basis, pt).col(0);
    const VecC da = s * evaluate_q_dlog(basis, pt, 0).col(0);
    const double p = chart_moments(pt)[0];
    const double g = p * (1 - p);
    const cd dv = a.dot(da) / a.squaredNorm() - double(m) * p;
    e[i] = g > 0 ? 0.5 * std::norm(dv) / g : 0.0;
  }
  return integrate_values(grid, e) / grid.vol;
}

}  // namespace bml
