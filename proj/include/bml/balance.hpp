#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bml/functionals.hpp"

namespace bml {

// Center of mass M(H) = (1/Vol) int sigma Q h^-1 Q^* sigma^* with sigma = H^{1/2}; pointwise this is
// the orthogonal projector onto the range of sigma Q, so tr M(H) = r.
MatC center_of_mass(const SectionBasis& basis, const QuadratureGrid& grid, const HermitianForm& H);

struct BalanceState {
  HermitianForm H;  // det-normalized
  int iteration = 0;
  MatC M;
  double residual = 0;    // |M(H) - (r/N) I|_F
  double m2 = 0;
  double spread = 1;      // lambda_max / lambda_min of H
  double log_spread = 0;
  bool converged = false;
};
BalanceState balance_state(const SectionBasis& basis, const QuadratureGrid& grid, const HermitianForm& H,
                           int iteration = 0);

// H' = ((N/r) B)^-1 det-normalized, B = (1/Vol) int Q h_H^-1 Q^* (Gram of the sections in the
// metric induced by H). Fixed points are exactly the H with M(H) proportional to I.
HermitianForm t_operator(const SectionBasis& basis, const QuadratureGrid& grid, const HermitianForm& H);
// Checks on O(2), k = 0 that the identity is a fixed point of t_operator, that M(I) = (r/N) I and
// that the gradient vanishes there, and that one step from a perturbed form reduces the residual.
// Throws InvalidInput if the convention is broken. Runs once per process from the solvers.
void balance_self_test();

// d/dt|0 M2(e^{zeta t} sigma) = 2 tr(zeta M(H)).
double m2_gradient(const SectionBasis& basis, const QuadratureGrid& grid, const HermitianForm& H, const MatC& zeta);
// Central-difference version of the same derivative (oracle).
double m2_gradient_fd(const SectionBasis& basis, const QuadratureGrid& grid, const HermitianForm& H,
                      const MatC& zeta, double step = 1e-4);

// Orthonormal basis (Frobenius) of the trace-free hermitian N x N matrices.
std::vector<MatC> traceless_hermitian_basis(long n);
// Jacobian of D -> M(e^{D/2} sigma) at D = 0 in the basis above (real symmetric, (N^2-1)^2).
Eigen::MatrixXd center_of_mass_jacobian(const SectionBasis& basis, const QuadratureGrid& grid,
                                        const HermitianForm& H);

enum class Verdict { Converged, UnstableLike, SemistableLike, Inconclusive };
const char* verdict_name(Verdict v);

struct BalanceRecord {
  int iter = 0;
  double residual = 0, m2 = 0, spread = 1;
  double t_path = 0;  // (1/2) |log H|_op
  double wallclock_ms = 0;
};

struct BalanceOptions {
  double tol = 1e-10;
  int max_iter = 200;
  double spread_stop = 1e14;  // stop once H is this badly conditioned
  // Levenberg-Marquardt only.
  double lambda0 = 1e-3;
  // Operator-norm cap on the update exponent D. Bounds the growth of log(spread) to 2 max_step per
  // iteration, so a diverging run stays observable for enough iterations to be classified.
  double max_step = 0.25;
};

struct BalanceRun {
  std::string method;
  std::vector<BalanceRecord> history;
  BalanceState final;
  Verdict verdict = Verdict::Inconclusive;
  bool residual_monotone_first5 = true;  // empirical flag, not asserted
};

BalanceRun t_iterate(const SectionBasis& basis, const QuadratureGrid& grid, const HermitianForm& H0,
                     const BalanceOptions& opts = {});
// Local coordinates H = sigma^* e^D sigma, D trace-free hermitian. The residual vector (components of
// M(H) - (r/N) I) is the gradient of M2 in D and the Jacobian is its Hessian; each step solves
// (J + lambda s I) x = -residual and is accepted when M2 decreases (or, near the minimum, when the
// residual does). Least squares on the residual alone would stall on unstable bundles: it has a
// finite minimizer (the summand-wise balanced point) while M2 keeps decreasing.
BalanceRun lm_minimize(const SectionBasis& basis, const QuadratureGrid& grid, const HermitianForm& H0,
                       const BalanceOptions& opts = {});

struct DivergenceThresholds {
  double spread = 1e3;
  int monotone_decreases = 50;
  int min_history = 20;
  double plateau_tol = 1e-8;  // |M2 change| per iteration counted as a plateau
  int plateau_len = 20;
  double converged_tol = 1e-10;
};
// Throws Inconclusive when the history is too short to call.
Verdict divergence_detect(const std::vector<BalanceRecord>& history, const DivergenceThresholds& th = {});

struct ConvexityReport {
  std::size_t samples = 0;
  double min_second_difference = 0;
  bool convex = true;  // min second difference >= -tol
};
ConvexityReport convexity_monitor(const std::vector<double>& values, double tol = 1e-8);

// Slope of M2 against iterate-path time over the last `tail_fraction` of a run.
SlopeFit iterate_path_slope(const std::vector<BalanceRecord>& history, double tail_fraction = 0.4,
                            std::optional<Rat> predicted = std::nullopt);

std::string run_log_csv(const BalanceRun& run);
nlohmann::json to_json(const BalanceRun& run);

// First nonzero eigenvalue of sqrt(-1) Lambda dbar d on functions of P1 with the area-one FS form,
// from a Galerkin eigensolve on z^a zbar^b / (1+|z|^2)^p, 0 <= a, b <= p.
double laplace_constant_p1(const QuadratureGrid& grid, int p = 2);

// Hermitian-Einstein metric on E(k)^dual from the catalog: FS powers (1+|y|^2)^{a+k} for line
// bundles on P1. Throws MissingHE otherwise.
MetricField he_metric(const SectionBasis& basis, const QuadratureGrid& grid);

struct DeltaDiagnostic {
  double delta = 1;            // min_x lambda_min / max_x lambda_max of h_min h_HE^-1
  double delta_pointwise = 1;  // min_x of the pointwise ratio
  std::vector<MatC> v;         // log(h_min h_HE^-1) per node
  double v_bar = 0;
  double v_norm2 = 0;          // int |v - v_bar I|^2
  double C = 0;
  double f_delta = 0.5;        // (delta - 1 - log delta) / (log delta)^2
  double lower_bound = 0;
  bool sup_inequality = true;  // |v - v_bar|^2 >= (log delta)^2 / r
};
DeltaDiagnostic delta_diagnostic(const MetricField& h_min, const MetricField& h_he, const QuadratureGrid& grid,
                                 double C);

// M^Don(h_H, h_HE) for a line bundle on P1, evaluated as the Dirichlet energy (1/2) int |dv|^2_g of
// v = log(h_H / h_HE). Throws MissingHE for other bundles.
double donaldson_energy_line(const SectionBasis& basis, const QuadratureGrid& grid, const HermitianForm& H);

}  // namespace bml
