#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bml/bergman.hpp"

namespace bml {

// How spatial derivatives of h enter the curvature.
//  Analytic: h = A^*A with A = sigma Q holomorphic, so dbar(h^-1 dh) = h^-1 (dA)^*(1 - P_A) dA,
//            evaluated through a QR of A (stable for badly conditioned h along long paths).
//  FiniteDifference: fourth-order central differences of h in affine chart coordinates.
enum class CurvatureMethod { Analytic, FiniteDifference };
const char* curvature_method_name(CurvatureMethod m);
CurvatureMethod curvature_method_from_string(const std::string& s);

struct CurvatureOptions {
  CurvatureMethod method = CurvatureMethod::Analytic;
  double fd_step = 1e-3;        // in affine chart coordinates
  bool richardson = true;       // FD only: compare with half step
  double richardson_tol = 1e-6; // relative, per node
};

// Contracted curvature Lambda F of E (not E(k)) at each node, in the chart frame of E(k)^dual
// transposed; integrating its trace against omega^n/n! gives deg E.
struct CurvatureField {
  const QuadratureGrid* grid = nullptr;
  std::vector<MatC> lambda_f;
  double degree() const;
};
CurvatureField curvature_field(const SectionBasis& basis, const QuadratureGrid& grid, const HermitianForm& H,
                               const CurvatureOptions& opts = {});

double m2_don(const SectionBasis& basis, const QuadratureGrid& grid, const HermitianForm& H);

// Per-node rows P = U^*Q and their log-derivatives in the eigenbasis of zeta. Keeps its own
// copy of the grid (the finite-difference cache points into it), hence not copyable.
class PathIntegrator {
 public:
  PathIntegrator(const SectionBasis& basis, const QuadratureGrid& grid, const OnePS& ps,
                 const CurvatureOptions& opts = {});
  PathIntegrator(const PathIntegrator&) = delete;
  PathIntegrator& operator=(const PathIntegrator&) = delete;
  const OnePS& ps() const { return ps_; }
  const QuadratureGrid& grid() const { return grid_; }
  // (1/Vol) int log det(h_t h_ref^-1).
  double m2(double t) const;
  // d/dt M1 at time t along h_{phi(t)} scaled by phi'(t) = speed.
  double m1_rate(double t, double speed = 1.0) const;
  // Gauss-Legendre integral of m1_rate over [0, t_end] along s -> phi(s).
  double m1(double t_end, int n_path = 64) const;
  double m1_reparam(const std::function<double(double)>& phi, const std::function<double(double)>& dphi,
                    double s_end, int n_path = 64) const;

 private:
  double m1_rate_fd(double t, double speed) const;

  int level_ = 0;
  QuadratureGrid grid_;
  OnePS ps_;
  CurvatureOptions opts_;
  int n_ = 1;
  std::vector<MatC> p_;                // N x r per node
  std::vector<std::vector<MatC>> dp_;  // n entries per node
  std::vector<double> log_det_ref_;
  std::vector<MatC> ginv_;  // inverse FS metric per node (log coordinates, or affine for FD)
  std::optional<PathCache> fd_cache_;
};

double m1_don(const SectionBasis& basis, const QuadratureGrid& grid, const OnePS& ps, double t_end, int n_path = 64,
              const CurvatureOptions& opts = {});
// M1 + mu(E) m2_don: the Donaldson functional of the metric induced on E.
double m_don(const SectionBasis& basis, const QuadratureGrid& grid, const OnePS& ps, double t, int n_path = 64,
             const CurvatureOptions& opts = {});

struct DonaldsonSample {
  double t = 0, m1 = 0, m2 = 0, m_don = 0;
};
// Samples at t_j = j t_end/(n_samples-1); M1 accumulated by Gauss-Legendre on each sub-interval.
std::vector<DonaldsonSample> donaldson_series(const SectionBasis& basis, const QuadratureGrid& grid, const OnePS& ps,
                                              double t_end, int n_samples, int gl_per_interval = 8,
                                              const CurvatureOptions& opts = {});
std::string series_csv(const std::vector<DonaldsonSample>& s, const std::optional<Rat>& predicted_slope);

struct SlopeFit {
  std::vector<double> t, values;
  double t_min = 0;
  std::size_t tail_count = 0;
  double slope = 0, intercept = 0;
  double residual = 0;  // rms of the tail fit
  std::optional<Rat> predicted;
  double rel_error = 0;  // |slope - predicted| / |predicted| (absolute when predicted = 0)
};
SlopeFit asymptotic_slope_fit(const std::vector<double>& t, const std::vector<double>& values, double t_min,
                              std::optional<Rat> predicted = std::nullopt);
// Tail window t >= 0.6 t_end.
SlopeFit tail_slope_fit(const std::vector<double>& t, const std::vector<double>& values,
                        std::optional<Rat> predicted = std::nullopt);

// Minimum centered second difference f(t-d) - 2 f(t) + f(t+d) over a uniform sample.
double min_second_difference(const std::vector<double>& values);
// Empirical coercivity constant c_k = -min_j (M^Don(t_j) - slope * t_j).
double coercivity_constant(const std::vector<DonaldsonSample>& s, double slope);

}  // namespace bml
