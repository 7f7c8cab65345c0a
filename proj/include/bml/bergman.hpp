#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "bml/bundle.hpp"
#include "bml/kernels.hpp"

namespace bml {

struct HermitianForm {
  MatC H;
  std::string provenance = "identity";

  static HermitianForm identity(long n);
  // Validates hermiticity (1e-13 relative) and positivity; symmetrizes.
  static HermitianForm from_matrix(const MatC& h, std::string provenance = "explicit");
  double log_det() const;
  HermitianForm det_normalized() const;
  MatC sqrt() const;  // positive square root sigma, H = sigma^* sigma
};

struct OnePS {
  MatC zeta;
  Eigen::VectorXd lambda;  // eigenvalues, descending
  MatC U;                  // matching orthonormal eigenvectors (columns)
  std::vector<double> weights;  // clustered distinct weights w_1 > ... > w_nu
  std::vector<int> multiplicity;
  std::vector<int> cluster;  // cluster index of each eigenvalue

  static OnePS from_generator(const MatC& zeta, double cluster_tol = 1e-9);
  long dim() const { return long(lambda.size()); }
  double width() const { return weights.front() - weights.back(); }
  MatC exp_zeta(double t) const;  // sigma_t = e^{zeta t}
  HermitianForm form_at(double t) const;  // e^{2 zeta t}
  // Orthogonal projector onto the span of the first i+1 weight spaces.
  MatC projector_upto(std::size_t i) const;
};

// Generator specification as given in configs and on the command line.
struct ZetaSpec {
  enum class Kind { TwoStep, Diag, File, Random, Matrix };
  Kind kind = Kind::TwoStep;
  std::string subsheaf;       // two_step: catalog id such as "O(2)"; "@j" selects the summand index
  std::vector<Rat> weights;   // two_step (optional) or diag
  std::string path;           // file
  std::uint64_t seed = 0;     // random
  MatC matrix;                // explicit (not serialized)

  std::string to_string() const;
  static ZetaSpec parse(const std::string& s);
};
nlohmann::json to_json(const ZetaSpec& z);
ZetaSpec zeta_spec_from_json(const nlohmann::json& j);

MatC read_matrix_file(const std::string& path);
void write_matrix_file(const std::string& path, const MatC& m);
// Hermitian trace-free generator with operator norm 1.
MatC random_generator(long n, std::mt19937_64& rng);
// Summand indices of `basis` that carry the two-step subsheaf, and the resulting weights.
std::vector<int> two_step_summands(const SectionBasis& basis, const std::string& subsheaf);
MatC build_generator(const ZetaSpec& spec, const SectionBasis& basis);
// Exact weights (a, b) of a two-step spec, filling in normalized trace-free defaults.
std::pair<Rat, Rat> two_step_exact_weights(const ZetaSpec& spec, const SectionBasis& basis);

MetricField fs_metric(const SectionBasis& basis, const QuadratureGrid& grid, const HermitianForm& H);
MetricField bergman_path(const SectionBasis& basis, const QuadratureGrid& grid, const OnePS& ps, double t);

// Per-node rows P = U^* Q(x) in the eigenbasis of zeta, for fast evaluation of
// h_t = P^* e^{2 Lambda t} P along the 1-PS. Optional extra points per node, given as
// additive chart-coordinate offsets (finite-difference stencils).
struct PathCache {
  const SectionBasis* basis = nullptr;
  const QuadratureGrid* grid = nullptr;
  OnePS ps;
  std::size_t points_per_node = 1;
  std::vector<SplitMatrix> rows;  // node-major, points_per_node entries per node
  std::vector<double> log_det_ref;

  PathCache(const SectionBasis& basis, const QuadratureGrid& grid, OnePS ps,
            const std::vector<std::array<cd, 2>>& offsets = {});
  // Weighted Gram with d_k = f(lambda_k) at the given node/point.
  MatC gram(std::size_t node, std::size_t point, const std::vector<double>& d) const;
  MatC metric(std::size_t node, double t, std::size_t point = 0) const;
  MatC metric_dot(std::size_t node, double t) const;
  // log det h_t at a node, computed from a QR of e^{Lambda t} P (stable for large t).
  double log_det(std::size_t node, double t) const;
};

struct FiltrationResult {
  std::vector<double> weights;
  std::vector<long> ranks;   // rk E_{<= -w_i}
  std::vector<long> v_dims;  // dim V_{<= -w_i}
  std::vector<std::size_t> surviving;
  long samples_at_max = 0;
};
FiltrationResult weight_filtration(const SectionBasis& basis, const OnePS& ps,
                                   const std::vector<ChartPoint>& samples, double rank_tol = 1e-8);
std::vector<ChartPoint> random_chart_points(Space s, std::size_t n, std::mt19937_64& rng);

struct RenormalizedField {
  std::vector<MatC> h_hat;   // empty matrix at masked nodes
  std::vector<bool> masked;
  std::vector<MatC> frame;   // adapted frame (columns), h_ref-orthonormal
  std::size_t masked_count() const;
};
RenormalizedField renormalized_metric(const SectionBasis& basis, const std::vector<ChartPoint>& points,
                                      const OnePS& ps, const FiltrationResult& filt, double t,
                                      double pivot_tol = 1e-8);

// Max normalized commutator among Q^* s^* s Q, Q^* s^* u s Q, Q^* s^* u^2 s Q.
double commutator_residual(const SectionBasis& basis, const MatC& sigma, const MatC& u, const ChartPoint& x);

struct SubgeodesicResult {
  MatC lhs;          // central difference of h^-1 dh/dt in t
  MatC lhs_exact;    // analytic d/dt (h^-1 dh/dt)
  MatC rhs;          // F^* F
  double residual_literal = 0;      // |lhs - F^*F|
  double residual_conjugated = 0;   // |h^{1/2} lhs h^{-1/2} - F^*F|
  double residual_fd = 0;           // |lhs - lhs_exact|
  double min_eig_rhs = 0;
  double richardson_ratio = 0;      // successive FD differences at step, step/2, step/4
  double scale = 0;                 // |lhs_exact|
};
SubgeodesicResult subgeodesic_residual(const SectionBasis& basis, const OnePS& ps, double t, const ChartPoint& x,
                                       double fd_step);

}  // namespace bml
