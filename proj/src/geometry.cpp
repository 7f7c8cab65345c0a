#include "bml/geometry.hpp"

#include <cmath>
#include <numbers>

#include "bml/errors.hpp"

namespace bml {

std::array<cd, 3> ChartPoint::homogeneous() const {
  std::array<cd, 3> z{};
  const int n = space_dim(space);
  int a = 0;
  for (int j = 0; j <= n; ++j) z[j] = j == chart ? cd(1) : y[a++];
  return z;
}

ChartPoint ChartPoint::shifted_log(const std::array<cd, 2>& dw) const {
  ChartPoint p = *this;
  for (int a = 0; a < space_dim(space); ++a) p.y[a] *= std::exp(dw[a]);
  return p;
}

ChartPoint ChartPoint::shifted(const std::array<cd, 2>& dy) const {
  ChartPoint p = *this;
  for (int a = 0; a < space_dim(space); ++a) p.y[a] += dy[a];
  return p;
}

ChartPoint ChartPoint::from_homogeneous(Space s, const std::array<cd, 3>& z) {
  const int n = space_dim(s);
  int c = 0;
  for (int j = 1; j <= n; ++j)
    if (std::abs(z[j]) > std::abs(z[c])) c = j;
  if (std::abs(z[c]) == 0) throw Error(ErrorKind::InvalidInput, "zero homogeneous coordinates");
  ChartPoint p;
  p.space = s;
  p.chart = c;
  int a = 0;
  for (int j = 0; j <= n; ++j)
    if (j != c) p.y[a++] = z[j] / z[c];
  return p;
}

double vol_l(Space s) { return s == Space::P1 ? 1.0 : 0.5; }

namespace {

void normalize_weights(QuadratureGrid& g) {
  std::vector<double> w;
  w.reserve(g.nodes.size());
  for (const auto& n : g.nodes) w.push_back(n.weight);
  const double s = pairwise_sum(w);
  for (auto& n : g.nodes) n.weight *= g.vol / s;
}

std::vector<double> angles(int n) {
  std::vector<double> t(n);
  for (int j = 0; j < n; ++j) t[j] = 2.0 * std::numbers::pi * j / n;
  return t;
}

}  // namespace

QuadratureGrid build_grid_p1(int n_radial, int n_angular, double x_max) {
  if (n_radial < 2 || n_angular < 4 || !(x_max > 0))
    throw Error(ErrorKind::InvalidResolution, "P1 grid needs n_radial >= 2, n_angular >= 4, x_max > 0");
  QuadratureGrid g;
  g.space = Space::P1;
  g.vol = 1.0;
  g.spec = {Space::P1, n_radial, n_angular, x_max, 0};
  g.step = 2.0 * x_max / (n_radial - 1);
  const auto th = angles(n_angular);
  g.nodes.reserve(std::size_t(n_radial) * n_angular);
  for (int i = 0; i < n_radial; ++i) {
    const double x = -x_max + i * g.step;
    const double c = std::cosh(0.5 * x);
    double w = g.step / (4.0 * c * c) / n_angular;
    if (i == 0 || i == n_radial - 1) w *= 0.5;
    const double u = 1.0 / (1.0 + std::exp(-x));
    const double one_minus_u = 1.0 / (1.0 + std::exp(x));
    for (double t : th) {
      GridNode node;
      node.pt.space = Space::P1;
      if (x <= 0) {
        node.pt.chart = 0;
        node.pt.y[0] = std::polar(std::exp(0.5 * x), t);
      } else {
        node.pt.chart = 1;
        node.pt.y[0] = std::polar(std::exp(-0.5 * x), -t);
      }
      node.weight = w;
      node.moment = {one_minus_u, u, 0.0};
      g.nodes.push_back(node);
    }
  }
  normalize_weights(g);
  return g;
}

QuadratureGrid build_grid_p1_step(double step, int n_angular, double x_max) {
  if (!(step > 0)) throw Error(ErrorKind::InvalidResolution, "radial step must be positive");
  const int half = int(std::ceil(x_max / step - 1e-9));
  return build_grid_p1(2 * half + 1, n_angular, half * step);
}

void gauss_legendre01(int n, std::vector<double>& x, std::vector<double>& w) {
  if (n < 1) throw Error(ErrorKind::InvalidResolution, "Gauss-Legendre order must be positive");
  x.assign(n, 0.0);
  w.assign(n, 0.0);
  // Returns P_n'(z), leaving P_n(z) in pn.
  auto legendre = [n](double z, double& pn) {
    double p0 = 1, p1 = z;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1) * z * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    pn = p1;
    return n * (z * p1 - p0) / (z * z - 1);
  };
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5)), pn = 0;
    for (int it = 0; it < 100; ++it) {
      const double dp = legendre(z, pn);
      const double dz = pn / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    const double dp = legendre(z, pn);
    const double wi = 1.0 / ((1 - z * z) * dp * dp);
    x[i] = 0.5 * (1 - z);
    x[n - 1 - i] = 0.5 * (1 + z);
    w[i] = w[n - 1 - i] = wi;
  }
}

QuadratureGrid build_grid_p2(int n_simplex, int n_angular) {
  if (n_simplex < 2 || n_angular < 4)
    throw Error(ErrorKind::InvalidResolution, "P2 grid needs n_simplex >= 2, n_angular >= 4");
  QuadratureGrid g;
  g.space = Space::P2;
  g.vol = 0.5;
  g.spec = {Space::P2, 0, n_angular, 0, n_simplex};
  std::vector<double> gx, gw;
  gauss_legendre01(n_simplex, gx, gw);
  struct SimplexPoint {
    double v1, v2, w;
  };
  std::vector<SimplexPoint> sp;
  for (int i = 0; i < n_simplex; ++i)
    for (int j = 0; j < n_simplex; ++j) {
      const double a = gx[i], b = (1 - a) * gx[j], w = 0.5 * gw[i] * gw[j] * (1 - a);
      sp.push_back({a, b, w});
      sp.push_back({b, a, w});
    }
  const auto th = angles(n_angular);
  const double ang_w = 1.0 / (double(n_angular) * n_angular);
  g.nodes.reserve(sp.size() * th.size() * th.size());
  for (const auto& s : sp) {
    const double v0 = std::max(0.0, 1.0 - s.v1 - s.v2);
    for (double t1 : th)
      for (double t2 : th) {
        GridNode node;
        node.pt = ChartPoint::from_homogeneous(
            Space::P2, {cd(std::sqrt(v0)), std::polar(std::sqrt(s.v1), t1), std::polar(std::sqrt(s.v2), t2)});
        node.weight = s.w * ang_w;
        node.moment = {v0, s.v1, s.v2};
        g.nodes.push_back(node);
      }
  }
  normalize_weights(g);
  return g;
}

GridSpec default_grid_spec(Space s) {
  GridSpec g;
  g.space = s;
  if (s == Space::P2) g.n_angular = 12;
  return g;
}

QuadratureGrid build_grid(const GridSpec& spec) {
  if (spec.space == Space::P1) return build_grid_p1(spec.n_radial, spec.n_angular, spec.x_max);
  return build_grid_p2(spec.n_simplex, spec.n_angular);
}

QuadratureGrid widen_for_path(const QuadratureGrid& grid, double width, double t_end) {
  if (grid.space != Space::P1) return grid;
  const double need = 30.0 + 2.0 * std::abs(width) * std::abs(t_end);
  if (need <= grid.spec.x_max) return grid;
  return build_grid_p1_step(grid.step, grid.spec.n_angular, need);
}

double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 16) {
    double s = 0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t h = v.size() / 2;
  return pairwise_sum(v.subspan(0, h)) + pairwise_sum(v.subspan(h));
}

double integrate_values(const QuadratureGrid& grid, std::span<const double> values) {
  if (values.size() != grid.nodes.size()) throw Error(ErrorKind::InvalidInput, "value count does not match grid");
  std::vector<double> t(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i]))
      throw Error(ErrorKind::NonFiniteIntegrand, "non-finite integrand at node " + std::to_string(i));
    t[i] = grid.nodes[i].weight * values[i];
  }
  return pairwise_sum(t);
}

double integrate(const QuadratureGrid& grid, const std::function<double(const GridNode&)>& f) {
  std::vector<double> v(grid.nodes.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(grid.nodes[i]);
  return integrate_values(grid, v);
}

std::array<double, 2> chart_moments(const ChartPoint& pt) {
  const int n = space_dim(pt.space);
  double s = 1;
  for (int a = 0; a < n; ++a) s += std::norm(pt.y[a]);
  std::array<double, 2> p{};
  for (int a = 0; a < n; ++a) p[a] = std::norm(pt.y[a]) / s;
  return p;
}

Eigen::MatrixXd fs_log_metric(const ChartPoint& pt) {
  const int n = space_dim(pt.space);
  const auto p = chart_moments(pt);
  Eigen::MatrixXd g(n, n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) g(a, b) = (a == b ? p[a] : 0.0) - p[a] * p[b];
  return g;
}

nlohmann::json to_json(const GridSpec& g) {
  nlohmann::json j;
  j["space"] = space_name(g.space);
  j["n_angular"] = g.n_angular;
  if (g.space == Space::P1) {
    j["n_radial"] = g.n_radial;
    j["x_max"] = g.x_max;
  } else {
    j["n_simplex"] = g.n_simplex;
  }
  return j;
}

GridSpec grid_spec_from_json(const nlohmann::json& j) {
  GridSpec g;
  const std::string s = j.value("space", std::string("P1"));
  if (s != "P1" && s != "P2") throw Error(ErrorKind::ConfigError, "grid.space must be P1 or P2");
  g = default_grid_spec(s == "P1" ? Space::P1 : Space::P2);
  g.n_radial = j.value("n_radial", g.n_radial);
  g.n_angular = j.value("n_angular", g.n_angular);
  g.x_max = j.value("x_max", g.x_max);
  g.n_simplex = j.value("n_simplex", g.n_simplex);
  return g;
}

}  // namespace bml
