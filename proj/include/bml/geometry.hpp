#pragma once

#include <Eigen/Dense>

#include <array>
#include <complex>
#include <functional>
#include <span>
#include <vector>

#include "bml/stability.hpp"

namespace bml {

using cd = std::complex<double>;

// A point of P^n in a standard affine chart: Z_chart = 1, y lists the other
// homogeneous coordinates in increasing index order. P1 uses y[0] only.
struct ChartPoint {
  Space space = Space::P1;
  int chart = 0;
  std::array<cd, 2> y{};

  std::array<cd, 3> homogeneous() const;
  // Multiply each affine coordinate by exp(dw_a) (a shift in log coordinates).
  ChartPoint shifted_log(const std::array<cd, 2>& dw) const;
  ChartPoint shifted(const std::array<cd, 2>& dy) const;  // y_a + dy_a, same chart
  static ChartPoint from_homogeneous(Space s, const std::array<cd, 3>& z);
};

struct GridNode {
  ChartPoint pt;
  double weight = 0;
  std::array<double, 3> moment{};  // |Z_j|^2 / |Z|^2
};

struct GridSpec {
  Space space = Space::P1;
  int n_radial = 321;
  int n_angular = 32;
  double x_max = 40.0;
  int n_simplex = 10;
};

struct QuadratureGrid {
  Space space = Space::P1;
  std::vector<GridNode> nodes;
  double vol = 1.0;
  GridSpec spec;
  double step = 0;  // P1 radial step in x = log|z|^2
};

double vol_l(Space s);

// P1: trapezoid in x = log|z|^2 on [-x_max, x_max] times trapezoid in arg z.
QuadratureGrid build_grid_p1(int n_radial, int n_angular, double x_max = 40.0);
// P1 grid with a fixed radial step, widened to cover [-x_max, x_max].
QuadratureGrid build_grid_p1_step(double step, int n_angular, double x_max);
// P2: collapsed Gauss-Legendre rule on the moment simplex, symmetrized under
// v1 <-> v2, times a trapezoid on the torus.
QuadratureGrid build_grid_p2(int n_simplex, int n_angular);
GridSpec default_grid_spec(Space s);
QuadratureGrid build_grid(const GridSpec& spec);
// P1 grid whose window covers a Bergman path with weight range `width` up to time t_end.
QuadratureGrid widen_for_path(const QuadratureGrid& grid, double width, double t_end);

// Gauss-Legendre nodes and weights on [0, 1].
void gauss_legendre01(int n, std::vector<double>& x, std::vector<double>& w);

// Fixed-order pairwise summation.
double pairwise_sum(std::span<const double> v);

double integrate(const QuadratureGrid& grid, const std::function<double(const GridNode&)>& f);
// Weighted sum of per-node values (values.size() == nodes.size()).
double integrate_values(const QuadratureGrid& grid, std::span<const double> values);

// FS Kaehler metric g_{a bbar} in the log coordinates w_a = log y_a of the node's chart.
Eigen::MatrixXd fs_log_metric(const ChartPoint& pt);
// The node's moment coordinates for the affine indices of its chart.
std::array<double, 2> chart_moments(const ChartPoint& pt);

nlohmann::json to_json(const GridSpec& g);
GridSpec grid_spec_from_json(const nlohmann::json& j);

}  // namespace bml
