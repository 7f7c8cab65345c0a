#include "bml/functionals.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "bml/errors.hpp"

namespace bml {

namespace {

// ---- fourth-order stencils in affine chart coordinates ----------------------------------

constexpr int kSteps[4] = {-2, -1, 1, 2};
constexpr double kD1[4] = {1.0 / 12, -8.0 / 12, 8.0 / 12, -1.0 / 12};
constexpr double kD2[4] = {-1.0 / 12, 16.0 / 12, 16.0 / 12, -1.0 / 12};
constexpr double kD2Centre = -30.0 / 12;

// Offsets: centre; per coordinate a and direction (0 = Re y, 1 = Im y) four axis points;
// on P2 four mixed 4x4 blocks (Re0 Re1), (Im0 Im1), (Re0 Im1), (Im0 Re1).
struct Stencil {
  int n = 1;
  double step = 0;
  std::vector<std::array<cd, 2>> offsets;

  Stencil(int dim, double d) : n(dim), step(d) {
    offsets.push_back({cd(0), cd(0)});
    for (int a = 0; a < n; ++a)
      for (int dir = 0; dir < 2; ++dir)
        for (int m : kSteps) {
          std::array<cd, 2> o{cd(0), cd(0)};
          o[a] = dir == 0 ? cd(m * d, 0) : cd(0, m * d);
          offsets.push_back(o);
        }
    if (n == 2)
      for (int type = 0; type < 4; ++type)
        for (int i : kSteps)
          for (int j : kSteps) {
            const auto [d0, d1] = mixed_dirs(type);
            offsets.push_back({d0 == 0 ? cd(i * d, 0) : cd(0, i * d), d1 == 0 ? cd(j * d, 0) : cd(0, j * d)});
          }
  }
  static std::pair<int, int> mixed_dirs(int type) {
    static constexpr int t[4][2] = {{0, 0}, {1, 1}, {0, 1}, {1, 0}};
    return {t[type][0], t[type][1]};
  }
  std::size_t axis(int a, int dir, int k) const { return 1 + std::size_t((a * 2 + dir) * 4 + k); }
  std::size_t mixed(int type, int i, int j) const { return 1 + std::size_t(n * 8 + type * 16 + i * 4 + j); }

  // Lambda F of the metric h (on E(k)^dual) from its values on the stencil.
  MatC lambda_f(const std::vector<MatC>& h, const MatC& ginv) const {
    const long r = h[0].rows();
    std::array<std::array<MatC, 2>, 2> d1;  // [a][dir]
    std::array<std::array<MatC, 2>, 2> d2;  // pure second derivative [a][dir]
    for (int a = 0; a < n; ++a)
      for (int dir = 0; dir < 2; ++dir) {
        MatC f = MatC::Zero(r, r), s = kD2Centre * h[0];
        for (int k = 0; k < 4; ++k) {
          f += kD1[k] * h[axis(a, dir, k)];
          s += kD2[k] * h[axis(a, dir, k)];
        }
        d1[a][dir] = f / step;
        d2[a][dir] = s / (step * step);
      }
    std::array<MatC, 4> mx;
    if (n == 2)
      for (int type = 0; type < 4; ++type) {
        MatC s = MatC::Zero(r, r);
        for (int i = 0; i < 4; ++i)
          for (int j = 0; j < 4; ++j) s += kD1[i] * kD1[j] * h[mixed(type, i, j)];
        mx[type] = s / (step * step);
      }
    const cd I(0, 1);
    auto ldlt = h[0].ldlt();
    MatC out = MatC::Zero(r, r);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        const MatC ha = 0.5 * (d1[a][0] - I * d1[a][1]);
        const MatC hb = 0.5 * (d1[b][0] + I * d1[b][1]);
        MatC hab;
        if (a == b) {
          hab = 0.25 * (d2[a][0] + d2[a][1]);
        } else {
          // d_{y0} d_{ybar1} = (1/4)(Re0 Re1 + Im0 Im1 + i Re0 Im1 - i Im0 Re1); conjugate for (1,0).
          const MatC cross = a == 0 ? MatC(mx[2] - mx[3]) : MatC(mx[3] - mx[2]);
          hab = 0.25 * (mx[0] + mx[1] + I * cross);
        }
        const MatC k = ldlt.solve(hab) - ldlt.solve(hb) * ldlt.solve(ha);
        out -= ginv(b, a) * k;
      }
    return out;
  }
};

// ---- analytic curvature through a QR of A = sigma Q -------------------------------------

struct AnalyticNode {
  MatC qa;   // N x r orthonormal basis of range(A)
  MatC r;    // r x r upper triangular, A = qa r
  MatC lam;  // Lambda F_h in the frame qa: Lambda F_h = r^-1 lam r
};

AnalyticNode analytic_node(const MatC& a, const std::vector<MatC>& da, const MatC& ginv) {
  const long nr = a.rows(), r = a.cols();
  Eigen::HouseholderQR<MatC> qr(a);
  AnalyticNode out;
  out.qa = qr.householderQ() * MatC::Identity(nr, r);
  out.r = qr.matrixQR().topRows(r).triangularView<Eigen::Upper>();
  std::vector<MatC> y;
  for (const MatC& d : da) {
    MatC x = d - out.qa * (out.qa.adjoint() * d);
    y.push_back(out.r.triangularView<Eigen::Upper>().solve<Eigen::OnTheRight>(x));
  }
  out.lam = MatC::Zero(r, r);
  for (std::size_t i = 0; i < da.size(); ++i)
    for (std::size_t j = 0; j < da.size(); ++j) out.lam -= ginv(long(j), long(i)) * (y[j].adjoint() * y[i]);
  return out;
}

double log_det_qr(const MatC& a) {
  Eigen::HouseholderQR<MatC> qr(a);
  double s = 0;
  for (long c = 0; c < a.cols(); ++c) s += 2 * std::log(std::abs(qr.matrixQR()(c, c)));
  return s;
}

MatC log_metric_inverse(const ChartPoint& pt) { return fs_log_metric(pt).inverse().cast<cd>(); }

// Inverse of d_a dbar_b log(1 + |y|^2) in the affine chart coordinates.
MatC affine_metric_inverse(const ChartPoint& pt) {
  const int n = space_dim(pt.space);
  double s = 1;
  for (int a = 0; a < n; ++a) s += std::norm(pt.y[a]);
  MatC g(n, n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) g(a, b) = (a == b ? 1.0 / s : 0.0) - std::conj(pt.y[a]) * pt.y[b] / (s * s);
  return g.inverse();
}

// Lambda F_E = -(Lambda F_h)^T - k n.
MatC bundle_curvature(const MatC& lf_h, int k, int n) {
  return -lf_h.transpose() - double(k * n) * MatC::Identity(lf_h.rows(), lf_h.cols());
}

}  // namespace

const char* curvature_method_name(CurvatureMethod m) {
  return m == CurvatureMethod::Analytic ? "analytic" : "finite_difference";
}

CurvatureMethod curvature_method_from_string(const std::string& s) {
  if (s == "analytic") return CurvatureMethod::Analytic;
  if (s == "finite_difference" || s == "fd") return CurvatureMethod::FiniteDifference;
  throw Error(ErrorKind::ConfigError, "unknown curvature method '" + s + "'");
}

double CurvatureField::degree() const {
  std::vector<double> v;
  v.reserve(lambda_f.size());
  for (const auto& f : lambda_f) v.push_back(f.trace().real());
  return integrate_values(*grid, v);
}

CurvatureField curvature_field(const SectionBasis& basis, const QuadratureGrid& grid, const HermitianForm& H,
                               const CurvatureOptions& opts) {
  if (H.H.rows() != basis.dim) throw Error(ErrorKind::InvalidInput, "form dimension differs from h0(E(k))");
  const int n = space_dim(grid.space);
  CurvatureField out;
  out.grid = &grid;
  out.lambda_f.reserve(grid.nodes.size());
  const MatC sigma = H.sqrt();
  if (opts.method == CurvatureMethod::Analytic) {
    for (const auto& node : grid.nodes) {
      std::vector<MatC> da;
      for (int a = 0; a < n; ++a) da.push_back(sigma * evaluate_q_dlog(basis, node.pt, a));
      const auto an = analytic_node(sigma * evaluate_q(basis, node.pt), da, log_metric_inverse(node.pt));
      const MatC lf = an.r.triangularView<Eigen::Upper>().solve(an.lam * an.r);
      out.lambda_f.push_back(bundle_curvature(lf, basis.level, n));
    }
    return out;
  }
  if (!(opts.fd_step > 0)) throw Error(ErrorKind::InvalidInput, "fd_step must be positive");
  const Stencil coarse(n, opts.fd_step), fine(n, opts.fd_step / 2);
  auto eval = [&](const Stencil& st, const ChartPoint& pt) {
    std::vector<MatC> hs;
    hs.reserve(st.offsets.size());
    for (const auto& o : st.offsets) {
      const MatC a = sigma * evaluate_q(basis, pt.shifted(o));
      hs.push_back(a.adjoint() * a);
    }
    return st.lambda_f(hs, affine_metric_inverse(pt));
  };
  for (std::size_t i = 0; i < grid.nodes.size(); ++i) {
    const auto& pt = grid.nodes[i].pt;
    MatC lf = eval(coarse, pt);
    if (opts.richardson) {
      const MatC lf2 = eval(fine, pt);
      if ((lf - lf2).norm() > opts.richardson_tol * std::max(1.0, lf2.norm()))
        throw Error(ErrorKind::StepTooLarge, "curvature step " + std::to_string(opts.fd_step) +
                                                 " fails the Richardson check at node " + std::to_string(i));
      lf = lf2;
    }
    out.lambda_f.push_back(bundle_curvature(lf, basis.level, n));
  }
  return out;
}

double m2_don(const SectionBasis& basis, const QuadratureGrid& grid, const HermitianForm& H) {
  if (H.H.rows() != basis.dim) throw Error(ErrorKind::InvalidInput, "form dimension differs from h0(E(k))");
  Eigen::SelfAdjointEigenSolver<MatC> es(H.H);
  if (!(es.eigenvalues().minCoeff() > 0)) throw Error(ErrorKind::InvalidInput, "form is not positive definite");
  const MatC s = es.eigenvalues().cwiseSqrt().asDiagonal() * es.eigenvectors().adjoint();
  std::vector<double> v;
  v.reserve(grid.nodes.size());
  for (const auto& node : grid.nodes) {
    const MatC q = evaluate_q(basis, node.pt);
    v.push_back(log_det_qr(s * q) - log_det_qr(q));
  }
  return integrate_values(grid, v) / grid.vol;
}

PathIntegrator::PathIntegrator(const SectionBasis& basis, const QuadratureGrid& grid, const OnePS& ps,
                               const CurvatureOptions& opts)
    : level_(basis.level), grid_(grid), ps_(ps), opts_(opts), n_(space_dim(grid.space)) {
  if (ps.dim() != basis.dim) throw Error(ErrorKind::InvalidInput, "generator dimension differs from h0(E(k))");
  const MatC uh = ps.U.adjoint();
  p_.reserve(grid.nodes.size());
  for (const auto& node : grid.nodes) {
    const MatC q = evaluate_q(basis, node.pt);
    p_.push_back(uh * q);
    log_det_ref_.push_back(log_det_qr(p_.back()));
    if (opts.method == CurvatureMethod::Analytic) {
      ginv_.push_back(log_metric_inverse(node.pt));
      std::vector<MatC> d;
      for (int a = 0; a < n_; ++a) d.push_back(uh * evaluate_q_dlog(basis, node.pt, a));
      dp_.push_back(std::move(d));
    } else {
      ginv_.push_back(affine_metric_inverse(node.pt));
    }
  }
  if (opts.method == CurvatureMethod::FiniteDifference) {
    if (!(opts.fd_step > 0)) throw Error(ErrorKind::InvalidInput, "fd_step must be positive");
    fd_cache_.emplace(basis, grid_, ps, Stencil(n_, opts.fd_step).offsets);
  }
}

double PathIntegrator::m2(double t) const {
  Eigen::VectorXd e = (ps_.lambda * t).array().exp();
  std::vector<double> v(p_.size());
  for (std::size_t i = 0; i < p_.size(); ++i) v[i] = log_det_qr(e.asDiagonal() * p_[i]) - log_det_ref_[i];
  return integrate_values(grid_, v) / grid_.vol;
}

double PathIntegrator::m1_rate(double t, double speed) const {
  if (opts_.method == CurvatureMethod::FiniteDifference) return m1_rate_fd(t, speed);
  const Eigen::VectorXd e = (ps_.lambda * t).array().exp();
  const Eigen::VectorXd u = 2 * ps_.lambda;
  const double kn = double(level_ * n_);
  std::vector<double> v(p_.size());
  std::vector<MatC> da(n_);
  for (std::size_t i = 0; i < p_.size(); ++i) {
    for (int a = 0; a < n_; ++a) da[a] = e.asDiagonal() * dp_[i][a];
    const auto an = analytic_node(e.asDiagonal() * p_[i], da, ginv_[i]);
    const MatC m = an.qa.adjoint() * u.asDiagonal() * an.qa;
    v[i] = (m * an.lam).trace().real() + kn * m.trace().real();
  }
  return speed * integrate_values(grid_, v);
}

double PathIntegrator::m1_rate_fd(double t, double speed) const {
  const Stencil st(n_, opts_.fd_step);
  const double kn = double(level_ * n_);
  std::vector<double> v(p_.size());
  std::vector<MatC> hs(st.offsets.size());
  for (std::size_t i = 0; i < p_.size(); ++i) {
    for (std::size_t j = 0; j < hs.size(); ++j) hs[j] = fd_cache_->metric(i, t, j);
    const MatC lf = st.lambda_f(hs, ginv_[i]);
    const MatC a = hs[0].ldlt().solve(fd_cache_->metric_dot(i, t));
    v[i] = (a * lf).trace().real() + kn * a.trace().real();
  }
  return speed * integrate_values(grid_, v);
}

double PathIntegrator::m1(double t_end, int n_path) const {
  return m1_reparam([](double s) { return s; }, [](double) { return 1.0; }, t_end, n_path);
}

double PathIntegrator::m1_reparam(const std::function<double(double)>& phi, const std::function<double(double)>& dphi,
                                  double s_end, int n_path) const {
  if (n_path < 1) throw Error(ErrorKind::InvalidInput, "n_path must be positive");
  if (s_end == 0) return 0;
  std::vector<double> x, w;
  gauss_legendre01(n_path, x, w);
  double s = 0;
  for (int i = 0; i < n_path; ++i) s += w[i] * m1_rate(phi(x[i] * s_end), dphi(x[i] * s_end));
  return s * s_end;
}

double m1_don(const SectionBasis& basis, const QuadratureGrid& grid, const OnePS& ps, double t_end, int n_path,
              const CurvatureOptions& opts) {
  return PathIntegrator(basis, grid, ps, opts).m1(t_end, n_path);
}

double m_don(const SectionBasis& basis, const QuadratureGrid& grid, const OnePS& ps, double t, int n_path,
             const CurvatureOptions& opts) {
  const PathIntegrator pi(basis, grid, ps, opts);
  return pi.m1(t, n_path) + mu(sheaf_of(basis.bundle)).get_d() * pi.m2(t);
}

std::vector<DonaldsonSample> donaldson_series(const SectionBasis& basis, const QuadratureGrid& grid, const OnePS& ps,
                                              double t_end, int n_samples, int gl_per_interval,
                                              const CurvatureOptions& opts) {
  if (n_samples < 2) throw Error(ErrorKind::InvalidInput, "need at least two samples");
  if (!(t_end > 0)) throw Error(ErrorKind::InvalidInput, "t_end must be positive");
  const PathIntegrator pi(basis, grid, ps, opts);
  const double mu_e = mu(sheaf_of(basis.bundle)).get_d();
  std::vector<double> x, w;
  gauss_legendre01(gl_per_interval, x, w);
  std::vector<DonaldsonSample> out;
  double m1 = 0;
  for (int j = 0; j < n_samples; ++j) {
    const double t = t_end * j / (n_samples - 1);
    if (j > 0) {
      const double t0 = out.back().t, h = t - t0;
      for (int i = 0; i < gl_per_interval; ++i) m1 += h * w[i] * pi.m1_rate(t0 + h * x[i]);
    }
    DonaldsonSample s;
    s.t = t;
    s.m1 = m1;
    s.m2 = pi.m2(t);
    s.m_don = m1 + mu_e * s.m2;
    out.push_back(s);
  }
  return out;
}

std::string series_csv(const std::vector<DonaldsonSample>& s, const std::optional<Rat>& predicted_slope) {
  std::ostringstream os;
  os.precision(12);
  os << "t,M1,M2,MDon,predicted_slope_num,predicted_slope_den\n";
  std::string num, den;
  if (predicted_slope) {
    num = predicted_slope->get_num().get_str();
    den = predicted_slope->get_den().get_str();
  }
  for (const auto& x : s) os << x.t << "," << x.m1 << "," << x.m2 << "," << x.m_don << "," << num << "," << den << "\n";
  return os.str();
}

SlopeFit asymptotic_slope_fit(const std::vector<double>& t, const std::vector<double>& values, double t_min,
                              std::optional<Rat> predicted) {
  if (t.size() != values.size()) throw Error(ErrorKind::InvalidInput, "times and values differ in length");
  SlopeFit f;
  f.t = t;
  f.values = values;
  f.t_min = t_min;
  f.predicted = predicted;
  std::vector<double> tt, vv;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (t[i] >= t_min - 1e-12) {
      tt.push_back(t[i]);
      vv.push_back(values[i]);
    }
  f.tail_count = tt.size();
  if (tt.size() < 5) throw Error(ErrorKind::InsufficientSamples, "slope fit needs >= 5 tail samples");
  const double n = double(tt.size());
  double tm = 0, vm = 0;
  for (std::size_t i = 0; i < tt.size(); ++i) {
    tm += tt[i] / n;
    vm += vv[i] / n;
  }
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < tt.size(); ++i) {
    sxy += (tt[i] - tm) * (vv[i] - vm);
    sxx += (tt[i] - tm) * (tt[i] - tm);
  }
  if (!(sxx > 0)) throw Error(ErrorKind::InsufficientSamples, "tail samples share one time");
  f.slope = sxy / sxx;
  f.intercept = vm - f.slope * tm;
  double rss = 0;
  for (std::size_t i = 0; i < tt.size(); ++i) rss += std::pow(vv[i] - f.slope * tt[i] - f.intercept, 2);
  f.residual = std::sqrt(rss / n);
  if (predicted) {
    const double p = predicted->get_d();
    f.rel_error = p != 0 ? std::abs(f.slope - p) / std::abs(p) : std::abs(f.slope);
  }
  return f;
}

SlopeFit tail_slope_fit(const std::vector<double>& t, const std::vector<double>& values, std::optional<Rat> predicted) {
  if (t.empty()) throw Error(ErrorKind::InsufficientSamples, "no samples");
  return asymptotic_slope_fit(t, values, 0.6 * *std::max_element(t.begin(), t.end()), predicted);
}

double min_second_difference(const std::vector<double>& values) {
  if (values.size() < 3) throw Error(ErrorKind::InsufficientSamples, "need >= 3 samples for second differences");
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t j = 1; j + 1 < values.size(); ++j) m = std::min(m, values[j - 1] - 2 * values[j] + values[j + 1]);
  return m;
}

double coercivity_constant(const std::vector<DonaldsonSample>& s, double slope) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& x : s) m = std::min(m, x.m_don - slope * x.t);
  return -m;
}

}  // namespace bml
